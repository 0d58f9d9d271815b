"""Thresholds, pool pruning, and the three per-slot access modes."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pdnoma.grid import (
    COLLISION_LIMITED,
    SINR,
    InvalidInputError,
    InvalidParameterError,
    PowerGrid,
)
from pdnoma.aar import SelectionModel, exact_aar
from pdnoma.powermap import PoolEntry, PowerPool, Region, build_power_map, trivial_map
from pdnoma.protocols import (
    ALL_LEVELS,
    NO_FLOOR,
    GbState,
    ProtocolKind,
    SemiGfProtocol,
    SlotResult,
    ThresholdType,
    allowed_levels,
    compute_threshold,
    prune_power_map,
    slot_gb,
    slot_gf,
    slot_semi_gf,
    two_point_fading,
)

GRID_124 = PowerGrid.build(num_levels=3, num_rbs=2, target_sinr=1.0, noise_power=1.0)
DYNAMIC = SemiGfProtocol(kind=ProtocolKind.DYNAMIC)
OPEN = SemiGfProtocol(kind=ProtocolKind.OPEN_LOOP, estimation_window=100, violation_prob=0.6)


class TestComputeThreshold:
    def test_upper_limit_rounds_down_to_budget(self):
        # I_max = 3.5/1 - 1 = 2.5: level 2 fits, level 3 does not
        assert compute_threshold(3.5, 1.0, 1.0, [1, 2, 4], ThresholdType.UPPER) == 2

    def test_upper_limit_budget_below_first_level(self):
        # I_max = 0.2 < P_1
        assert compute_threshold(1.2, 1.0, 1.0, [1, 2, 4], ThresholdType.UPPER) is None

    def test_upper_limit_nonpositive_budget(self):
        assert compute_threshold(0.5, 1.0, 1.0, [1, 2, 4], ThresholdType.UPPER) is None

    def test_upper_limit_budget_exactly_on_level(self):
        # I_max = 2.0 exactly: the level itself is still affordable
        assert compute_threshold(3.0, 1.0, 1.0, [1, 2, 4], ThresholdType.UPPER) == 2

    def test_lower_limit_rounds_up_to_gb_power(self):
        assert compute_threshold(1.5, 1.0, 1.0, [1, 2, 4], ThresholdType.LOWER) == 2
        assert compute_threshold(0.5, 1.0, 1.0, [1, 2, 4], ThresholdType.LOWER) == 1

    def test_lower_limit_exact_power_is_inclusive(self):
        assert compute_threshold(4.0, 1.0, 1.0, [1, 2, 4], ThresholdType.LOWER) == 3

    def test_lower_limit_above_top_level(self):
        assert compute_threshold(4.1, 1.0, 1.0, [1, 2, 4], ThresholdType.LOWER) is None

    def test_no_gb_device_allows_everything(self):
        assert compute_threshold(None, 1.0, 1.0, [1, 2, 4], ThresholdType.UPPER) == ALL_LEVELS
        assert compute_threshold(None, 1.0, 1.0, [1, 2, 4], ThresholdType.LOWER) == NO_FLOOR

    def test_qos_scales_budget(self):
        # θ_GB = 2 halves the tolerable interference: I_max = 3.5/2 - 1 = 0.75
        assert compute_threshold(3.5, 2.0, 1.0, [1, 2, 4], ThresholdType.UPPER) is None

    @given(gb=st.floats(0.1, 50.0))
    def test_upper_never_admits_above_budget(self, gb):
        t = compute_threshold(gb, 1.0, 1.0, [1, 2, 4], ThresholdType.UPPER)
        i_max = gb - 1.0
        for level in allowed_levels(t, ThresholdType.UPPER, 3):
            assert [1, 2, 4][level - 1] <= i_max

    @given(gb=st.floats(0.1, 50.0))
    def test_lower_never_admits_below_gb(self, gb):
        t = compute_threshold(gb, 1.0, 1.0, [1, 2, 4], ThresholdType.LOWER)
        for level in allowed_levels(t, ThresholdType.LOWER, 3):
            assert [1, 2, 4][level - 1] > gb or [1, 2, 4][level - 1] >= gb


class TestPrune:
    def _map(self):
        return trivial_map(GRID_124)

    def levels_of(self, pm):
        return pm.pool_for(0).levels

    def test_upper_keeps_levels_at_or_below(self):
        assert self.levels_of(prune_power_map(self._map(), 2, ThresholdType.UPPER)) == (1, 2)

    def test_lower_keeps_levels_strictly_above(self):
        assert self.levels_of(prune_power_map(self._map(), 2, ThresholdType.LOWER)) == (3,)

    def test_none_threshold_voids_all_pools(self):
        pm = prune_power_map(self._map(), None, ThresholdType.UPPER)
        assert all(p.void for p in pm.pools)

    def test_no_gb_sentinels_keep_everything(self):
        assert self.levels_of(prune_power_map(self._map(), ALL_LEVELS, ThresholdType.UPPER)) == (1, 2, 3)
        assert self.levels_of(prune_power_map(self._map(), NO_FLOOR, ThresholdType.LOWER)) == (1, 2, 3)

    @given(t1=st.integers(0, 4), t2=st.integers(0, 4))
    def test_pruning_monotone_in_threshold(self, t1, t2):
        lo, hi = min(t1, t2), max(t1, t2)
        up_lo = set(allowed_levels(lo, ThresholdType.UPPER, 3))
        up_hi = set(allowed_levels(hi, ThresholdType.UPPER, 3))
        assert up_lo <= up_hi  # a higher upper threshold never shrinks a pool
        low_lo = set(allowed_levels(lo, ThresholdType.LOWER, 3))
        low_hi = set(allowed_levels(hi, ThresholdType.LOWER, 3))
        assert low_hi <= low_lo  # a higher lower threshold never grows one


class TestSlotGb:
    def test_below_capacity(self):
        assert slot_gb(3, 10) == 3

    def test_at_capacity(self):
        assert slot_gb(10, 10) == 10

    def test_saturated(self):
        assert slot_gb(50, 10) == 10

    def test_invalid(self):
        with pytest.raises(InvalidParameterError):
            slot_gb(-1, 10)


class TestSlotGf:
    def test_single_contender_always_succeeds(self):
        rng = np.random.default_rng(0)
        res = slot_gf(["a"], GRID_124, rng=rng)
        assert res.gf_successes == {"a"}
        assert res.successes == 1
        assert res.collisions == 0
        assert res.admitted_gf == 1

    def test_no_contenders(self):
        res = slot_gf([], GRID_124, rng=np.random.default_rng(0))
        assert res.successes == 0 and res.admitted_gf == 0

    def test_forced_collision_in_single_cell_pool(self):
        selection = SelectionModel.shared_pool([(1, 1)])
        res = slot_gf(["a", "b"], GRID_124, selection, rng=np.random.default_rng(0))
        assert res.gf_successes == set()
        assert res.collisions == 1
        assert res.admitted_gf == 2

    def test_sample_mean_matches_exact_aar(self):
        grid = PowerGrid.build(num_levels=2, num_rbs=1, target_sinr=1.0, noise_power=1.0)
        rng = np.random.default_rng(42)
        slots = 30_000
        totals = np.array(
            [slot_gf([0, 1], grid, rng=rng).successes for _ in range(slots)], dtype=float
        )
        exact = exact_aar(2, grid).expected_successes_per_slot
        assert exact == pytest.approx(1.0)
        stderr = totals.std(ddof=1) / np.sqrt(slots)
        assert abs(totals.mean() - exact) < 4 * stderr

    def test_gf_successes_subset_of_contenders(self):
        rng = np.random.default_rng(3)
        contenders = list(range(12))
        for _ in range(50):
            res = slot_gf(contenders, GRID_124, rng=rng)
            assert res.gf_successes <= set(contenders)
            assert res.successes <= len(contenders)


def _gb(rb, inst, avg=None, qos=1.0):
    return GbState(rb=rb, instantaneous_power=inst, average_power=avg or inst, qos_sinr=qos)


class TestSlotSemiGf:
    def test_no_gf_contenders_gb_always_succeeds(self):
        pm = trivial_map(GRID_124)
        res = slot_semi_gf(
            [_gb(1, 3.5), _gb(2, 3.5)],
            [],
            pm,
            ThresholdType.UPPER,
            DYNAMIC,
            GRID_124,
            rng=np.random.default_rng(0),
        )
        assert res.gb_success == {1: True, 2: True}
        assert res.gb_outage == {1: False, 2: False}
        assert res.successes == 2

    def test_admitted_gf_joins_cluster_and_both_decode(self):
        # I_max = 2.5 admits levels {1, 2}; whichever the contender draws,
        # the GB signal at 3.5 clears its QoS check and the GF decodes after
        grid = PowerGrid.build(num_levels=3, num_rbs=1, target_sinr=1.0, noise_power=1.0)
        pm = trivial_map(grid)
        for seed in range(10):
            res = slot_semi_gf(
                [_gb(1, 3.5)],
                [("d", 0)],
                pm,
                ThresholdType.UPPER,
                DYNAMIC,
                grid,
                rng=np.random.default_rng(seed),
            )
            assert res.gb_success[1] and res.gf_successes == {"d"}
            assert res.successes == 2
            assert res.admitted_gf == 1

    def test_tight_budget_silences_gf(self):
        grid = PowerGrid.build(num_levels=3, num_rbs=1, target_sinr=1.0, noise_power=1.0)
        pm = trivial_map(grid)
        res = slot_semi_gf(
            [_gb(1, 1.2)],
            [("d", 0)],
            pm,
            ThresholdType.UPPER,
            DYNAMIC,
            grid,
            rng=np.random.default_rng(0),
        )
        assert res.admitted_gf == 0
        assert res.gf_successes == set()
        assert res.gb_success[1]  # 1.2/1.0 still clears θ_GB alone

    def test_lower_limit_gf_decodes_first(self):
        grid = PowerGrid.build(num_levels=3, num_rbs=1, target_sinr=1.0, noise_power=1.0)
        pm = trivial_map(grid)
        res = slot_semi_gf(
            [_gb(1, 0.9, qos=0.8)],
            [("d", 0)],
            pm,
            ThresholdType.LOWER,
            DYNAMIC,
            grid,
            rng=np.random.default_rng(1),
        )
        # GF forced to level 2 or 3 (above 0.9), cancelled before the GB
        assert res.gf_successes == {"d"}
        assert res.gb_success[1]  # 0.9/1.0 >= 0.8 after cancellation
        assert res.successes == 2

    def test_rb_without_gb_is_unrestricted(self):
        grid = PowerGrid.build(num_levels=2, num_rbs=2, target_sinr=1.0, noise_power=1.0)
        pm = trivial_map(grid)
        # GB only on RB 1 with a prohibitive budget; contenders landing on
        # RB 2 keep the full pool
        admitted = 0
        for seed in range(40):
            res = slot_semi_gf(
                [_gb(1, 1.2)],
                [("d", 0)],
                pm,
                ThresholdType.UPPER,
                DYNAMIC,
                grid,
                rng=np.random.default_rng(seed),
            )
            admitted += res.admitted_gf
        assert 0 < admitted < 40  # admitted exactly when it drew RB 2

    def test_mismatched_grid_rejected(self):
        pm = trivial_map(GRID_124)
        other = PowerGrid.build(num_levels=2, num_rbs=2, target_sinr=1.0, noise_power=1.0)
        with pytest.raises(InvalidInputError):
            slot_semi_gf([], [], pm, ThresholdType.UPPER, DYNAMIC, other,
                         rng=np.random.default_rng(0))

    def test_duplicate_gb_rb_rejected(self):
        pm = trivial_map(GRID_124)
        with pytest.raises(InvalidInputError):
            slot_semi_gf(
                [_gb(1, 3.5), _gb(1, 2.0)],
                [],
                pm,
                ThresholdType.UPPER,
                DYNAMIC,
                GRID_124,
                rng=np.random.default_rng(0),
            )

    @given(gb_power=st.floats(1.5, 12.0), seed=st.integers(0, 100))
    @settings(max_examples=60, deadline=None)
    def test_qos_guarantee_single_admitted_gf(self, gb_power, seed):
        # whenever one GF is admitted under the dynamic upper limit, the
        # admitted level is within the budget and the GB survives
        grid = PowerGrid.build(num_levels=3, num_rbs=1, target_sinr=1.0, noise_power=1.0)
        pm = trivial_map(grid)
        res = slot_semi_gf(
            [_gb(1, gb_power)],
            [("d", 0)],
            pm,
            ThresholdType.UPPER,
            DYNAMIC,
            grid,
            decode_mode=SINR,
            rng=np.random.default_rng(seed),
        )
        assert res.gb_success[1]
        assert res.gb_outage[1] is False  # dynamic: no outage by definition


class TestTwoPointFading:
    def test_draw_values(self):
        rng = np.random.default_rng(0)
        draws = {two_point_fading(rng, 0.6, 0.0905) for _ in range(200)}
        assert draws == {1.0, 0.0905}

    def test_extreme_probabilities(self):
        rng = np.random.default_rng(0)
        assert two_point_fading(rng, 0.0, 0.5) == 1.0
        assert two_point_fading(rng, 1.0, 0.5) == 0.5

    def test_rate_matches_epsilon(self):
        rng = np.random.default_rng(7)
        n = 20_000
        bad = sum(two_point_fading(rng, 0.6, 0.5) != 1.0 for _ in range(n))
        assert abs(bad / n - 0.6) < 4 * np.sqrt(0.6 * 0.4 / n)


class TestOpenLoopVersusDynamic:
    """The calibrated hybrid scenario: levels [9, 90], GB average 1000.

    Bad fades (probability ε) drop the GB power to 90.5, where the true
    budget admits only the base level.  The open-loop threshold keeps
    working from the average, so it over-admits the top level and loses
    the whole RB whenever a contender draws it.
    """

    GRID = PowerGrid.build(num_levels=2, num_rbs=1, target_sinr=1.0,
                           noise_power=1.0, margin=9.0)

    def _run(self, protocol, slots=4000, seed=5):
        pm = trivial_map(self.GRID)
        fade_rng = np.random.default_rng(seed)
        slot_rng = np.random.default_rng(seed + 1)
        successes = 0
        outages = 0
        for _ in range(slots):
            factor = two_point_fading(fade_rng, 0.6, 0.0905)
            state = GbState(
                rb=1,
                instantaneous_power=1000.0 * factor,
                average_power=1000.0,
                qos_sinr=1.0,
            )
            res = slot_semi_gf(
                [state], [("d", 0)], pm, ThresholdType.UPPER, protocol,
                self.GRID, rng=slot_rng,
            )
            successes += res.successes
            outages += sum(res.gb_outage.values())
        return successes, outages

    def test_levels_are_9_and_90(self):
        assert self.GRID.levels == (9.0, 90.0)

    def test_dynamic_never_reports_outage_and_dominates(self):
        dyn_succ, dyn_out = self._run(DYNAMIC)
        open_succ, open_out = self._run(OPEN)
        assert dyn_out == 0
        assert open_out > 0
        assert dyn_succ > open_succ

    def test_dynamic_bad_fade_pairs_on_base_level(self):
        # instantaneous 90.5: budget 89.5 admits level 1 only; GB at 90.5
        # absorbs the 9.0 interferer (SINR 9.05) and both always decode
        dyn_succ, _ = self._run(DYNAMIC, slots=1500, seed=9)
        assert dyn_succ == 2 * 1500

    def test_open_loop_outage_rate_bounded_by_epsilon(self):
        _, outages = self._run(OPEN, slots=6000)
        rate = outages / 6000
        # outage requires a bad fade (ε = 0.6) AND a top-level draw (half)
        assert 0.2 < rate < 0.4
        assert rate <= 0.6
