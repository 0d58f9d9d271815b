"""Load-adaptive user barring for the grant-free uplink.

Once per barring period of Λ slots the BS estimates the backlog from
the fraction of idle RBs it observed, then retunes the barring rate so
the expected number of transmitters per slot sits at the AAR-optimal
load.  Everything the controller touches is O(Λ·M) per period — its
cost never depends on how many devices exist.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .grid import InvalidParameterError

# fixed arithmetic cost charged per estimate+update, for the complexity audit
_UPDATE_OPS = 8


@dataclass
class BarringState:
    rate: float
    period: int
    optimal_load: int
    max_aar: float
    load_cap: int

    def __post_init__(self):
        if not 0.0 <= self.rate <= 1.0:
            raise InvalidParameterError("rate must lie in [0, 1]")
        if self.period < 1:
            raise InvalidParameterError("period must be >= 1 slot")
        if self.optimal_load < 1:
            raise InvalidParameterError("optimal_load must be >= 1")
        if self.load_cap < self.optimal_load:
            raise InvalidParameterError("load_cap must be >= optimal_load")


@dataclass(frozen=True)
class PeriodObservation:
    idle_rb_fraction: float
    successes_per_slot: float
    slots: int

    def __post_init__(self):
        if not 0.0 <= self.idle_rb_fraction <= 1.0:
            raise InvalidParameterError("idle_rb_fraction must lie in [0, 1]")


def estimate_load(obs: PeriodObservation, rate: float, num_rbs: int, load_cap: int) -> float:
    """Invert the idle-RB statistic into a backlog estimate.

    Each backlogged device hits a given RB with probability q/M, so an
    RB idles with probability (1 − q/M)^B and B = ln f / ln(1 − q/M).
    A fully idle period means no backlog; a fully busy one is pinned to
    the cap, as is the degenerate q = 0 case where nothing transmits.
    The fraction is floored at 1/(Λ·M), one busy observation short of
    saturation, before taking logarithms.
    """
    if rate <= 0.0:
        return float(load_cap)
    f = obs.idle_rb_fraction
    if f <= 0.0:
        return float(load_cap)
    if f >= 1.0:
        return 0.0
    f = max(f, 1.0 / (obs.slots * num_rbs))
    estimate = math.log(f) / math.log(1.0 - rate / num_rbs)
    return min(max(estimate, 0.0), float(load_cap))


def update_rate(load_estimate: float, state: BarringState) -> float:
    """Steer the expected transmitter count to the optimal load."""
    if load_estimate < 0:
        raise InvalidParameterError("load estimate must be >= 0")
    return min(1.0, state.optimal_load / max(load_estimate, 1.0))


def apply_barring(backlogged, rate: float, rng):
    """Split devices into this period's active and barred sets.

    Every device draws once per period; barred devices sit the whole
    period out.  Draw order is the sorted device order, so the split is
    reproducible for a given generator state.
    """
    if not 0.0 <= rate <= 1.0:
        raise InvalidParameterError("rate must lie in [0, 1]")
    devices = sorted(backlogged)
    draws = rng.random(len(devices))
    active = {d for d, u in zip(devices, draws) if u <= rate}
    return active, set(devices) - active


@dataclass
class BarringController:
    """Sequential per-period state machine with an operation audit.

    ``observe_slot`` charges M ops (reading one idle flag per RB);
    ``end_period`` charges a fixed arithmetic cost.  ``ops_last_period``
    therefore equals Λ·M + O(1) regardless of the device population.
    """

    state: BarringState
    num_rbs: int
    _idle_sum: int = 0
    _success_sum: int = 0
    _slots_seen: int = 0
    _ops: int = 0
    ops_last_period: int = 0
    trace: list = field(default_factory=list)

    def observe_slot(self, idle_rbs: int, successes: int):
        if not 0 <= idle_rbs <= self.num_rbs:
            raise InvalidParameterError("idle_rbs outside [0, M]")
        self._idle_sum += idle_rbs
        self._success_sum += successes
        self._slots_seen += 1
        self._ops += self.num_rbs

    def end_period(self) -> float:
        """Close the period: estimate the load, retune the rate."""
        slots = self._slots_seen or 1
        obs = PeriodObservation(
            idle_rb_fraction=self._idle_sum / (slots * self.num_rbs),
            successes_per_slot=self._success_sum / slots,
            slots=slots,
        )
        estimate = estimate_load(obs, self.state.rate, self.num_rbs, self.state.load_cap)
        self.state.rate = update_rate(estimate, self.state)
        self._ops += _UPDATE_OPS
        self.ops_last_period = self._ops
        self.trace.append(
            {
                "rate": self.state.rate,
                "load_estimate": estimate,
                "idle_fraction": obs.idle_rb_fraction,
                "successes_per_slot": obs.successes_per_slot,
            }
        )
        self._idle_sum = 0
        self._success_sum = 0
        self._slots_seen = 0
        self._ops = 0
        return estimate
