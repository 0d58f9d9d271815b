"""Acceptance gate: eight end-to-end checks, one verdict line each.

Every test prints ``ACCEPTANCE <k> <name>: PASS|FAIL (<evidence>)``
before asserting, so ``pytest -v -s`` yields one line per criterion with
the measured numbers next to the bounds they are held to.
"""

import json

import numpy as np

from pdnoma.aar import exact_aar, mc_aar, optimal_load, success_level_mask
from pdnoma.cli import main
from pdnoma.config import parse_config
from pdnoma.grid import COLLISION_LIMITED, DECODE_MODES, PowerGrid, SicEntry, sic_decode
from pdnoma.powermap import (
    ChannelModel,
    Rect,
    build_power_map,
    partition_area,
    refine_power_map,
    trivial_map,
)
from pdnoma.sim import compare_schemes, run_simulation


def _report(num, name, ok, evidence):
    print(f"ACCEPTANCE {num} {name}: {'PASS' if ok else 'FAIL'} ({evidence})")


def _grid(N, M, margin=1.0):
    return PowerGrid.build(num_levels=N, num_rbs=M, target_sinr=1.0,
                           noise_power=1.0, margin=margin)


class TestCriterion1OracleEquivalence:
    """Monte Carlo and the slot engine agree with exact enumeration."""

    def test_criterion_1_oracle_equivalence(self):
        worst_mc = worst_sim = 0.0
        failures = []
        combos = 0
        for N in (1, 2, 3):
            for M in (1, 2, 3):
                grid = _grid(N, M)
                for mode in DECODE_MODES:
                    for n in range(7):
                        combos += 1
                        exact = exact_aar(n, grid, decode_mode=mode)
                        expected = exact.expected_successes_per_slot

                        mc = mc_aar(n, grid, decode_mode=mode,
                                    trials=10**6, seed=combos)
                        dev = abs(mc.expected_successes_per_slot - expected)
                        if dev > 4 * mc.stderr + 1e-12:
                            failures.append(f"mc n={n} N={N} M={M} {mode}: "
                                            f"|{mc.expected_successes_per_slot}-{expected}| "
                                            f"> 4*{mc.stderr}")
                        if mc.stderr > 0:
                            worst_mc = max(worst_mc, dev / mc.stderr)

                        cfg = parse_config({"N": N, "M": M, "decode_mode": mode,
                                            "scheme": "gf", "total_devices": n,
                                            "slots": 50_000, "seed": combos})
                        summary = run_simulation(cfg).summary()
                        dev = abs(summary["aar"] - expected)
                        if dev > 4 * summary["aar_stderr"] + 1e-12:
                            failures.append(f"sim n={n} N={N} M={M} {mode}: "
                                            f"|{summary['aar']}-{expected}| "
                                            f"> 4*{summary['aar_stderr']}")
                        if summary["aar_stderr"] > 0:
                            worst_sim = max(worst_sim, dev / summary["aar_stderr"])
        ok = not failures
        _report(1, "oracle-equivalence", ok,
                f"{combos} (n,N,M,mode) combos; worst mc dev {worst_mc:.2f}σ, "
                f"worst sim dev {worst_sim:.2f}σ vs 4σ bound")
        assert ok, failures


class TestCriterion2StrongSingletonDecodes:
    """One device two levels above a pairwise collision still gets through."""

    def test_criterion_2_decode_example(self):
        grid = _grid(3, 1)
        entries = [
            SicEntry(device=0, power=grid.level_power(3), target_sinr=1.0),
            SicEntry(device=1, power=grid.level_power(1), target_sinr=1.0),
            SicEntry(device=2, power=grid.level_power(1), target_sinr=1.0),
        ]
        outcome = sic_decode(entries, noise_power=1.0, mode=COLLISION_LIMITED)
        mask = success_level_mask(np.array([2, 0, 1]), grid.levels,
                                  1.0, 1.0, COLLISION_LIMITED)
        ok = (outcome.succeeded == {0} and outcome.failed == {1, 2}
              and mask.tolist() == [False, False, True])
        _report(2, "decode-example", ok,
                f"occupancy {{1@P3, 2@P1}} on {list(grid.levels)} -> "
                f"succeeded={sorted(outcome.succeeded)} failed={sorted(outcome.failed)}")
        assert ok


class TestCriterion3TwoLevelsDominateSublinearly:
    """Adding a second power level never hurts but gains less than 2x."""

    def test_criterion_3_dominance_and_sublinearity(self):
        failures = []
        ratios = {}
        for M in (1, 2, 5):
            g1, g2 = _grid(1, M), _grid(2, M)
            for n in range(21):
                a1 = exact_aar(n, g1).expected_successes_per_slot
                a2 = exact_aar(n, g2).expected_successes_per_slot
                if a2 < a1 - 1e-12:
                    failures.append(f"N=2 below N=1 at n={n} M={M}: {a2} < {a1}")
            at_m = (exact_aar(M, g2).expected_successes_per_slot
                    / exact_aar(M, g1).expected_successes_per_slot)
            ratios[M] = at_m
            if not at_m < 2:
                failures.append(f"gain ratio {at_m} >= 2 at n=M={M}")
        ok = not failures
        _report(3, "two-level-dominance", ok,
                "n<=20, M in {1,2,5}; gain ratio at n=M: "
                + ", ".join(f"M={m}: {r:.3f}" for m, r in ratios.items()))
        assert ok, failures


class TestCriterion4SchemeOrdering:
    """Hybrid access beats both pure schemes across the load range."""

    DEFAULTS = ("margin=9 violation_prob=0.6 fading_severity=0.0905 "
                "gb_average_power=1000 qos_sinr=1 estimation_window=100 "
                "slots=2500 seed=11")

    def test_criterion_4_ordering_and_gain_bands(self):
        cfg = parse_config({
            "grid": {"N": 2, "M": 10, "margin": 9.0},
            "scheme": "semi_gf",
            "semi_gf": {"protocol": "dynamic"},
            "power_map": {"source": "trivial"},
            "total_devices": 1,
            "slots": 2500,
            "seed": 11,
        })
        rows = compare_schemes(cfg, range(1, 61), workers=8)

        below_gb = [r["n"] for r in rows if r["semi_dynamic"] < r["gb"] - 1e-9]
        gf_not_below = [r["n"] for r in rows if not r["gf"] < r["semi_dynamic"]]
        open_above = [r["n"] for r in rows
                      if r["semi_dynamic"] < r["semi_open_loop"] - 1e-9]
        max_gain = max(r["semi_dynamic"] / r["gb"] for r in rows) - 1
        max_ratio = max(r["semi_dynamic"] / r["gf"] for r in rows)

        failures = []
        if below_gb:
            failures.append(f"semi below gb at n={below_gb}")
        if gf_not_below:
            failures.append(f"gf not strictly below semi at n={gf_not_below}")
        if open_above:
            failures.append(f"open-loop above dynamic at n={open_above}")
        if not 0.20 <= max_gain <= 0.60:
            failures.append(f"max semi/gb gain {max_gain:.3f} outside [0.20, 0.60]")
        if not max_ratio >= 3:
            failures.append(f"max semi/gf ratio {max_ratio:.2f} < 3")
        ok = not failures
        _report(4, "scheme-ordering", ok,
                f"n in [1,60]; max semi/gb gain {max_gain:.3f} in [0.20,0.60]; "
                f"max semi/gf ratio {max_ratio:.2f} >= 3; defaults: {self.DEFAULTS}")
        assert ok, failures


class TestCriterion5BarringStabilization:
    """The barring loop pins throughput and load at the optimum."""

    WARM_PERIODS = 10

    def _run(self, n, enabled):
        doc = {"grid": {"N": 4, "M": 10}, "scheme": "gf",
               "barring": {"enabled": enabled, "period": 100},
               "total_devices": n, "slots": 3000, "seed": 9}
        return run_simulation(parse_config(doc))

    def test_criterion_5_stabilization(self):
        grid = _grid(4, 10)
        n_star, aar_max = optimal_load(grid)
        failures = []
        worst_aar_rel = worst_load_rel = 0.0
        steady_aar_200 = None
        for n in (20, 50, 100, 150, 200):
            series = self._run(n, True)
            start = self.WARM_PERIODS * 100
            windows = series.windowed_aar()[self.WARM_PERIODS:]
            aar_rel = float(np.abs(windows - aar_max).max() / aar_max)
            load = float(series.system_load[start:].mean())
            load_rel = abs(load - n_star) / n_star
            worst_aar_rel = max(worst_aar_rel, aar_rel)
            worst_load_rel = max(worst_load_rel, load_rel)
            if aar_rel > 0.15:
                failures.append(f"n={n}: window AAR off aar_max by {aar_rel:.3f}")
            if load_rel > 0.25:
                failures.append(f"n={n}: mean load {load:.2f} off n*={n_star} "
                                f"by {load_rel:.3f}")
            if n == 200:
                steady_aar_200 = float(series.successes[start:].mean())

        collapsed = self._run(200, False).aar
        if not collapsed < aar_max / 5:
            failures.append(f"unbarred AAR at n=200 did not collapse: {collapsed}")
        ratio = steady_aar_200 / collapsed
        if not ratio >= 10:
            failures.append(f"with/without ratio {ratio:.1f} < 10")
        ok = not failures
        _report(5, "barring-stabilization", ok,
                f"n*={n_star} aar_max={aar_max:.4f}; worst window-AAR rel dev "
                f"{worst_aar_rel:.3f} (<=0.15), worst load rel dev {worst_load_rel:.3f} "
                f"(<=0.25), unbarred AAR(200)={collapsed:.3f}, ratio {ratio:.1f}x "
                f"(>=10); saturated traffic, period=100, seed=9")
        assert ok, failures


class TestCriterion6ControllerComplexity:
    """Estimator+update cost per period is flat in the population size."""

    def test_criterion_6_ops_independent_of_device_count(self):
        per_n = {}
        for n in (100, 1_000, 10_000):
            cfg = parse_config({"grid": {"N": 4, "M": 10}, "scheme": "gf",
                                "barring": {"enabled": True, "period": 100},
                                "total_devices": n, "slots": 300, "seed": 2})
            trace = run_simulation(cfg).barring_trace
            per_n[n] = {row["ops"] for row in trace}
        all_counts = set().union(*per_n.values())
        ok = all_counts == {100 * 10 + 8}
        _report(6, "controller-complexity", ok,
                f"ops per period across n={{100,1000,10000}}: {sorted(all_counts)} "
                f"(period*M + 8 = 1008)")
        assert ok, per_n


class TestCriterion7PowerMapProperties:
    """Pool ordering, TPL reconstruction, and refinement safety."""

    def test_criterion_7_power_map_properties(self):
        grid = _grid(3, 4)
        regions = partition_area(Rect(0.0, 0.0, 400.0, 100.0), rows=1, cols=4)
        pmap = build_power_map(regions, grid, model=ChannelModel(), bs=(0.0, 50.0))

        averages = [pool.average_tpl() for pool in pmap.pools]
        ordered = all(a < b for a, b in zip(averages, averages[1:]))

        worst_recon = 0.0
        for pool in pmap.pools:
            gain = pmap.region_for(pool.region_id).mean_gain
            for entry in pool.entries:
                target = grid.level_power(entry.level)
                worst_recon = max(worst_recon,
                                  abs(entry.tpl * gain - target) / target)

        refined = refine_power_map(pmap, episodes=40, exploration=0.3, seed=7)
        invented = any(
            not set(pool.entries) <= set(pmap.pool_for(pool.region_id).entries)
            for pool in refined.pools)

        rewards, deltas = [], []
        refine_power_map(trivial_map(grid), episodes=50, exploration=0.0,
                         on_step=lambda r, p, d: (rewards.append(r),
                                                  deltas.append(d)))
        fixed_point = (set(rewards) == {0.0} and max(deltas) == 0.0
                       and len(rewards) == 32)

        ok = ordered and worst_recon <= 1e-9 and not invented and fixed_point
        _report(7, "power-map-properties", ok,
                f"pool avg TPLs {['%.3g' % a for a in averages]} increasing with "
                f"distance; worst reconstruction {worst_recon:.2e} (<=1e-9); "
                f"refinement invented entries: {invented}; zero-reward fixed point "
                f"after one episode: {fixed_point}")
        assert ok


class TestCriterion8ByteIdenticalOutputs:
    """Same config and seed give the same bytes, whatever the worker count."""

    def test_criterion_8_determinism(self, tmp_path, monkeypatch):
        monkeypatch.setenv("PDNOMA_OUTDIR", str(tmp_path))
        cfg = tmp_path / "c.yaml"
        cfg.write_text(json.dumps({"N": 2, "M": 10, "scheme": "gf",
                                   "total_devices": 30, "slots": 400, "seed": 12}))

        for name in ("s1.csv", "s2.csv"):
            assert main(["simulate", "--config", str(cfg), "-o", name]) == 0
        sim_same = (tmp_path / "s1.csv").read_bytes() == (tmp_path / "s2.csv").read_bytes()

        for workers, name in ((1, "w1.csv"), (8, "w8.csv")):
            assert main(["sweep", "--config", str(cfg), "--axis", "total_devices",
                         "--values", "5,15,25", "--replications", "3",
                         "--workers", str(workers), "-o", name]) == 0
        sweep_same = (tmp_path / "w1.csv").read_bytes() == (tmp_path / "w8.csv").read_bytes()

        ok = sim_same and sweep_same
        _report(8, "byte-identical-outputs", ok,
                f"simulate rerun identical: {sim_same}; sweep workers 1 vs 8 "
                f"identical: {sweep_same}")
        assert ok
