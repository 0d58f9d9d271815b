"""Slot-driven simulation engine for the three uplink access modes.

``run_simulation`` turns a :class:`~pdnoma.config.RunConfig` into a
:class:`MetricsSeries`.  Four independent RNG streams (traffic, cell
selection, fading, barring) are derived from the config seed so that
changing, say, the barring period never perturbs the traffic process.

Saturated grant-free runs without barring take a vectorized fast path
that evaluates whole blocks of slots at once; everything else walks the
slots one by one.  The fast path does not track per-packet lifecycles
(under saturation a dropped packet is replaced immediately, so the air
interface cannot tell the difference) and therefore reports zero drops.
"""

import math
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .aar import exact_aar, optimal_load, success_level_mask
from .barring import BarringController, BarringState
from .config import ConfigError, RunConfig, parse_config, resolve_power_map
from .grid import InvalidParameterError, PowerGrid
from .powermap import PowerMap
from .protocols import GbState, slot_semi_gf, two_point_fading

_FAST_CHUNK = 1 << 14

_TRAFFIC_STREAM = 0
_SELECTION_STREAM = 1
_FADING_STREAM = 2
_BARRING_STREAM = 3


@dataclass
class MetricsSeries:
    """Per-slot counters plus run-level aggregates.

    Every array has one entry per slot.  ``backlog`` counts devices
    holding a packet after arrivals, ``system_load`` those additionally
    allowed to contend (backlog minus barred), so per slot

        successes + failures + silent == backlog.
    """

    successes: np.ndarray
    backlog: np.ndarray
    system_load: np.ndarray
    collisions: np.ndarray
    gb_outages: np.ndarray
    silent: np.ndarray
    failures: np.ndarray
    energy: np.ndarray
    drops: int = 0
    gb_count: int = 0
    window: int = 100
    barring_trace: list = field(default_factory=list)
    n_star: int | None = None
    aar_max: float | None = None

    @property
    def slots(self) -> int:
        return len(self.successes)

    @property
    def aar(self) -> float:
        return float(self.successes.mean())

    def windowed(self, values) -> np.ndarray:
        """Means over consecutive windows; a short tail window counts too."""
        arr = np.asarray(values, dtype=float)
        return np.array(
            [arr[i : i + self.window].mean() for i in range(0, len(arr), self.window)]
        )

    def windowed_aar(self) -> np.ndarray:
        return self.windowed(self.successes)

    def summary(self) -> dict:
        slots = self.slots
        total_success = int(self.successes.sum())
        gb_slots = self.gb_count * slots
        return {
            "slots": slots,
            "aar": self.aar,
            "aar_stderr": float(self.successes.std(ddof=1) / math.sqrt(slots))
            if slots > 1
            else 0.0,
            "mean_backlog": float(self.backlog.mean()),
            "mean_load": float(self.system_load.mean()),
            "collision_rate": float(self.collisions.mean()),
            "outage_rate": float(self.gb_outages.sum()) / gb_slots if gb_slots else 0.0,
            "drops": self.drops,
            "energy_per_slot": float(self.energy.mean()),
            "energy_per_success": float(self.energy.sum()) / total_success
            if total_success
            else math.inf,
        }


def _streams(seed: int):
    return [
        np.random.default_rng(np.random.SeedSequence([seed, k]))
        for k in (_TRAFFIC_STREAM, _SELECTION_STREAM, _FADING_STREAM, _BARRING_STREAM)
    ]


def _blank_series(slots: int, window: int) -> MetricsSeries:
    def zeros():
        return np.zeros(slots, dtype=np.int64)

    return MetricsSeries(
        successes=zeros(),
        backlog=zeros(),
        system_load=zeros(),
        collisions=zeros(),
        gb_outages=zeros(),
        silent=zeros(),
        failures=zeros(),
        energy=np.zeros(slots, dtype=float),
        window=window,
    )


def _fast_eligible(config: RunConfig) -> bool:
    return (
        config.scheme in ("gf", "gb")
        and config.traffic.kind == "bernoulli"
        and config.traffic.activation_prob == 1.0
        and not config.barring.enabled
        and config.total_devices > 0
    )


def run_simulation(
    config: RunConfig,
    power_map: PowerMap | None = None,
    *,
    force_slow: bool = False,
) -> MetricsSeries:
    """Simulate ``config.slots`` slots; same config ⇒ same series.

    ``power_map`` overrides the configured map source (useful when the
    caller already holds a refined map).  ``force_slow`` disables the
    vectorized saturation path, which is mainly a testing hook.
    """
    grid = config.grid.build()
    window = config.barring.period if config.barring.enabled else 100
    window = min(window, config.slots)
    series = _blank_series(config.slots, max(window, 1))
    if config.total_devices == 0:
        series.silent[:] = 0
        return series
    if not force_slow and _fast_eligible(config):
        return _run_fast(config, grid, series)
    if config.scheme == "semi_gf":
        if power_map is None:
            power_map = resolve_power_map(config)
        if power_map is None or power_map.grid != grid:
            raise InvalidParameterError("semi_gf needs a power map built for this grid")
    return _run_slow(config, grid, series, power_map)


def _run_fast(config: RunConfig, grid: PowerGrid, series: MetricsSeries) -> MetricsSeries:
    n = config.total_devices
    slots = config.slots
    series.backlog[:] = n
    series.system_load[:] = n
    if config.scheme == "gb":
        served = min(n, grid.num_rbs)
        series.successes[:] = served
        series.silent[:] = n - served
        return series

    _, rng_select, _, _ = _streams(config.seed)
    levels = grid.levels
    for start in range(0, slots, _FAST_CHUNK):
        m = min(_FAST_CHUNK, slots - start)
        cells = rng_select.integers(0, grid.num_cells, size=(m, n))
        offsets = np.arange(m)[:, None] * grid.num_cells
        counts = np.bincount(
            (cells + offsets).ravel(), minlength=m * grid.num_cells
        ).reshape(m, grid.num_rbs, grid.num_levels)
        mask = success_level_mask(
            counts, levels, grid.target_sinr, grid.noise_power, config.decode_mode
        )
        sl = slice(start, start + m)
        series.successes[sl] = mask.sum(axis=(1, 2))
        series.collisions[sl] = (counts >= 2).sum(axis=(1, 2))
        series.energy[sl] = (counts * levels).sum(axis=(1, 2))
    series.failures[:] = n - series.successes
    return series


def _deliver(series, has_packet, attempts, transmitted, succeeded, max_attempts, t):
    """Close the transmission bookkeeping for one slot."""
    for dev in succeeded:
        has_packet[dev] = False
        attempts[dev] = 0
    for dev in transmitted:
        if dev in succeeded:
            continue
        attempts[dev] += 1
        if attempts[dev] >= max_attempts:
            has_packet[dev] = False
            attempts[dev] = 0
            series.drops += 1
    series.failures[t] = len(transmitted) - len(succeeded)


def _run_slow(
    config: RunConfig,
    grid: PowerGrid,
    series: MetricsSeries,
    power_map: PowerMap | None,
) -> MetricsSeries:
    rng_traffic, rng_select, rng_fading, rng_barring = _streams(config.seed)
    n = config.total_devices
    traffic = config.traffic
    semi = config.semi_gf
    burst_size = int(round(traffic.burst_fraction * n))

    has_packet = np.zeros(n, dtype=bool)
    attempts = np.zeros(n, dtype=np.int64)

    gb_count = min(n, grid.num_rbs) if config.scheme == "semi_gf" else 0
    series.gb_count = gb_count
    gf_regions: list[tuple[int, int]] = []
    history: dict[int, deque] = {}
    if config.scheme == "semi_gf":
        live = sorted(
            pool.region_id for pool in power_map.pools if not pool.void
        )
        gf_regions = [
            (dev, live[i % len(live)]) for i, dev in enumerate(range(gb_count, n))
        ] if live else []
        history = {rb: deque(maxlen=semi.estimation_window) for rb in range(1, gb_count + 1)}

    controller = None
    if config.barring.enabled:
        n_star, aar_max = optimal_load(grid, config.decode_mode)
        cap = config.barring.load_cap or 100 * n_star
        controller = BarringController(
            BarringState(
                rate=1.0,
                period=config.barring.period,
                optimal_load=n_star,
                max_aar=aar_max,
                load_cap=max(cap, n_star),
            ),
            num_rbs=grid.num_rbs,
        )
        series.n_star, series.aar_max = n_star, aar_max

    for t in range(config.slots):
        if controller is not None and t > 0 and t % config.barring.period == 0:
            _close_period(controller, series)

        u = rng_traffic.random(n)
        if traffic.kind == "bernoulli":
            has_packet |= u < traffic.activation_prob
        else:
            has_packet |= u < traffic.background_prob
            if t == traffic.burst_slot:
                has_packet[:burst_size] = True
        if gb_count:
            has_packet[:gb_count] = True  # granted devices are saturated streams

        if controller is not None:
            # the rate is a per-slot participation probability, held
            # constant within the period; per-RB idle odds then invert
            # exactly to the backlog the estimator assumes
            contenders = has_packet & (rng_barring.random(n) <= controller.state.rate)
        else:
            contenders = has_packet.copy()
        if gb_count:
            contenders[:gb_count] = has_packet[:gb_count]  # grants bypass barring
        backlog = int(has_packet.sum())
        series.backlog[t] = backlog
        series.system_load[t] = int(contenders.sum())

        if config.scheme == "gb":
            idle = _slot_gb_scheme(series, contenders, grid, t, backlog, has_packet)
        elif config.scheme == "gf":
            idle = _slot_gf_scheme(
                series, config, grid, contenders, has_packet, attempts, t, backlog, rng_select
            )
        else:
            idle = _slot_semi_scheme(
                series, config, grid, power_map, contenders, has_packet, attempts,
                gb_count, gf_regions, history, t, backlog, rng_select, rng_fading,
            )

        if controller is not None:
            controller.observe_slot(idle, int(series.successes[t]))

    if controller is not None and controller._slots_seen:
        _close_period(controller, series)
    return series


def _close_period(controller: BarringController, series: MetricsSeries):
    controller.end_period()
    row = dict(controller.trace[-1])
    row["period"] = len(series.barring_trace)
    row["ops"] = controller.ops_last_period
    series.barring_trace.append(row)


def _slot_gb_scheme(series, contenders, grid, t, backlog, has_packet) -> int:
    ids = np.nonzero(contenders)[0]
    served = ids[: grid.num_rbs]
    series.successes[t] = len(served)
    series.silent[t] = backlog - len(served)
    has_packet[served] = False
    return grid.num_rbs - len(served)


def _slot_gf_scheme(
    series, config, grid, contenders, has_packet, attempts, t, backlog, rng_select
) -> int:
    ids = np.nonzero(contenders)[0]
    c = len(ids)
    series.silent[t] = backlog - c
    if c == 0:
        return grid.num_rbs
    cells = rng_select.integers(0, grid.num_cells, size=c)
    counts = np.bincount(cells, minlength=grid.num_cells).reshape(
        grid.num_rbs, grid.num_levels
    )
    mask = success_level_mask(
        counts, grid.levels, grid.target_sinr, grid.noise_power, config.decode_mode
    )
    dev_ok = mask.ravel()[cells]
    series.successes[t] = int(dev_ok.sum())
    series.collisions[t] = int((counts >= 2).sum())
    series.energy[t] = float((counts * grid.levels).sum())
    _deliver(
        series, has_packet, attempts, ids, set(ids[dev_ok]), config.traffic.max_attempts, t
    )
    return int((counts.sum(axis=1) == 0).sum())


def _slot_semi_scheme(
    series, config, grid, power_map, contenders, has_packet, attempts,
    gb_count, gf_regions, history, t, backlog, rng_select, rng_fading,
) -> int:
    semi = config.semi_gf
    gb_states = []
    inst_by_rb = {}
    for rb in range(1, gb_count + 1):
        factor = two_point_fading(rng_fading, semi.violation_prob, semi.fading_severity)
        inst = semi.gb_average_power * factor
        hist = history[rb]
        average = sum(hist) / len(hist) if hist else semi.gb_average_power
        inst_by_rb[rb] = inst
        gb_states.append(
            GbState(
                rb=rb,
                instantaneous_power=inst,
                average_power=average,
                qos_sinr=semi.qos_sinr,
            )
        )
    gf_pairs = [(dev, region) for dev, region in gf_regions if contenders[dev]]
    result = slot_semi_gf(
        gb_states,
        gf_pairs,
        power_map,
        semi.threshold(),
        semi.semi_protocol(),
        grid,
        decode_mode=config.decode_mode,
        rng=rng_select,
    )
    for rb, inst in inst_by_rb.items():
        history[rb].append(inst)

    series.successes[t] = result.successes
    series.collisions[t] = result.collisions
    series.gb_outages[t] = sum(result.gb_outage.values())
    series.energy[t] = result.gf_energy
    series.silent[t] = backlog - gb_count - result.admitted_gf
    gb_failures = gb_count - sum(result.gb_success.values())
    _deliver(
        series, has_packet, attempts,
        list(result.gf_transmitters), result.gf_successes,
        config.traffic.max_attempts, t,
    )
    series.failures[t] += gb_failures
    occupied = set(range(1, gb_count + 1)) | set(result.gf_transmitters.values())
    return grid.num_rbs - len(occupied)


def _child_seed(base_seed: int, axis_index: int, rep: int) -> int:
    return int(np.random.SeedSequence([base_seed, axis_index, rep]).generate_state(1)[0])


def _with_value(config: RunConfig, axis: str, value, seed: int) -> RunConfig:
    doc = config.to_dict()
    target = doc
    *parents, leaf = axis.split(".")
    for part in parents:
        target = target.setdefault(part, {})
        if not isinstance(target, dict):
            raise ConfigError(f"sweep axis {axis!r} does not name a config field")
    target[leaf] = value
    doc["seed"] = seed
    return parse_config(doc)


def sweep(
    config: RunConfig,
    axis: str,
    values,
    replications: int = 1,
    base_seed: int | None = None,
    workers: int = 1,
    power_map: PowerMap | None = None,
) -> list[dict]:
    """Run the config once per (axis value, replication); rows in order.

    Every run gets an independent seed derived from (base_seed, value
    index, replication), so the same call is reproducible regardless of
    ``workers``, and paired sweeps over two configs see identical draws.
    """
    if replications < 1:
        raise InvalidParameterError("replications must be >= 1")
    if workers < 1:
        raise InvalidParameterError("workers must be >= 1")
    base = config.seed if base_seed is None else base_seed
    jobs = [
        (ai, value, rep, _child_seed(base, ai, rep))
        for ai, value in enumerate(values)
        for rep in range(replications)
    ]

    def run(job):
        ai, value, rep, seed = job
        cfg = _with_value(config, axis, value, seed)
        summary = run_simulation(cfg, power_map=power_map).summary()
        return {"axis": axis, "value": value, "replication": rep, "seed": seed, **summary}

    if workers == 1:
        return [run(job) for job in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run, jobs))


def aggregate_sweep(rows: list[dict]) -> list[dict]:
    """Collapse replications: one row per axis value with mean/std AAR."""
    by_value: dict = {}
    order = []
    for row in rows:
        key = row["value"]
        if key not in by_value:
            by_value[key] = []
            order.append(key)
        by_value[key].append(row)
    out = []
    for key in order:
        group = by_value[key]
        aars = np.array([r["aar"] for r in group], dtype=float)
        loads = np.array([r["mean_load"] for r in group], dtype=float)
        out.append(
            {
                "value": key,
                "replications": len(group),
                "aar": float(aars.mean()),
                "aar_std": float(aars.std(ddof=1)) if len(group) > 1 else 0.0,
                "mean_load": float(loads.mean()),
                "outage_rate": float(np.mean([r["outage_rate"] for r in group])),
            }
        )
    return out


def _protocol_variant(config: RunConfig, protocol: str) -> RunConfig:
    doc = config.to_dict()
    doc.setdefault("semi_gf", {})["protocol"] = protocol
    return parse_config(doc)


def compare_schemes(
    config: RunConfig,
    n_values,
    replications: int = 1,
    workers: int = 1,
    power_map: PowerMap | None = None,
) -> list[dict]:
    """AAR of GB / GF / both semi-GF variants across device counts.

    ``config`` must describe the semi-GF scenario; the GB column is the
    scheduler bound min(n, M) and the GF column is the exact contention
    AAR on the same grid, so all four share one operating point.  Both
    semi-GF variants reuse identical per-n seeds (paired comparison).
    """
    if config.scheme != "semi_gf" or config.semi_gf is None:
        raise InvalidParameterError("compare_schemes needs a semi_gf config")
    grid = config.grid.build()
    rows_dyn = sweep(
        _protocol_variant(config, "dynamic"), "total_devices", n_values,
        replications=replications, base_seed=config.seed, workers=workers,
        power_map=power_map,
    )
    rows_open = sweep(
        _protocol_variant(config, "open_loop"), "total_devices", n_values,
        replications=replications, base_seed=config.seed, workers=workers,
        power_map=power_map,
    )
    dyn = aggregate_sweep(rows_dyn)
    opn = aggregate_sweep(rows_open)
    table = []
    for i, n in enumerate(n_values):
        table.append(
            {
                "n": n,
                "gb": float(min(n, grid.num_rbs)),
                "gf": exact_aar(n, grid, decode_mode=config.decode_mode).expected_successes_per_slot,
                "semi_dynamic": dyn[i]["aar"],
                "semi_open_loop": opn[i]["aar"],
                "outage_dynamic": dyn[i]["outage_rate"],
                "outage_open_loop": opn[i]["outage_rate"],
            }
        )
    return table


def barring_demo(
    config: RunConfig,
    n_values,
    replications: int = 1,
    workers: int = 1,
    measure_periods: int = 10,
) -> dict:
    """Barred vs unbarred sweep plus one burst-drain trace.

    AAR columns are measured over the final ``measure_periods`` control
    periods so the barred system is compared after its rate has had
    time to settle.  The burst trace drains a backlog of the full load
    cap with barring on, recording per-period load, AAR and rate.
    """
    if not config.barring.enabled:
        raise InvalidParameterError("barring_demo needs barring.enabled: true")
    grid = config.grid.build()
    n_star, aar_max = optimal_load(grid, config.decode_mode)
    period = config.barring.period
    tail = max(1, measure_periods) * period

    def steady(cfg: RunConfig) -> dict:
        series = run_simulation(cfg)
        cut = max(0, series.slots - tail)
        return {
            "aar": float(series.successes[cut:].mean()),
            "mean_load": float(series.system_load[cut:].mean()),
            "trace": series.barring_trace,
        }

    rows = []
    for ai, n in enumerate(n_values):
        per_rep = []
        for rep in range(replications):
            seed = _child_seed(config.seed, ai, rep)
            barred_cfg = _with_value(config, "total_devices", n, seed)
            unbarred_cfg = _with_value(barred_cfg, "barring.enabled", False, seed)
            per_rep.append((steady(barred_cfg), steady(unbarred_cfg)))
        rows.append(
            {
                "n": n,
                "aar_barred": float(np.mean([b["aar"] for b, _ in per_rep])),
                "aar_unbarred": float(np.mean([u["aar"] for _, u in per_rep])),
                "load_barred": float(np.mean([b["mean_load"] for b, _ in per_rep])),
                "load_unbarred": float(np.mean([u["mean_load"] for _, u in per_rep])),
                "final_rate": float(
                    np.mean([b["trace"][-1]["rate"] for b, _ in per_rep if b["trace"]])
                )
                if any(b["trace"] for b, _ in per_rep)
                else 1.0,
            }
        )

    cap = config.barring.load_cap or 100 * n_star
    burst_doc = config.to_dict()
    burst_doc["total_devices"] = cap
    # unlimited retries: the backlog must leave by delivery, not by
    # hitting the attempt cap while the rate is still settling
    burst_doc["traffic"] = {"kind": "burst", "burst_slot": 0, "burst_fraction": 1.0,
                            "background_prob": 0.0, "max_attempts": 1_000_000}
    burst_doc["seed"] = _child_seed(config.seed, len(list(n_values)), 0)
    burst_series = run_simulation(parse_config(burst_doc))
    burst = {
        "load_per_period": burst_series.windowed(burst_series.system_load).tolist(),
        "aar_per_period": burst_series.windowed_aar().tolist(),
        "rate_per_period": [row["rate"] for row in burst_series.barring_trace],
        "n_star": n_star,
        "aar_max": aar_max,
    }
    return {"rows": rows, "burst": burst, "n_star": n_star, "aar_max": aar_max}
