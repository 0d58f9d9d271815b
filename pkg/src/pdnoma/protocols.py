"""Per-slot behavior of the three uplink access modes.

Grant-based (GB) devices own dedicated RBs.  Grant-free (GF) devices
contend on the power grid.  The hybrid mode runs both on the same RBs:
each RB's GB signal defines an intra-RB threshold, the BS prunes every
region's power pool against it, and GF devices draw from the pruned
pools so the GB QoS survives their interference.

Two threshold styles exist.  The upper limit caps GF levels at the
interference the GB device can absorb (GB decoded first); the lower
limit forces GF levels above the GB power (GF decoded and cancelled
first).  Rounding is guarantee-safe in both cases: upper rounds down,
lower rounds up.

Threshold knowledge comes in two flavors: ``dynamic`` reads the GB
power fresh every slot (no outage by construction), ``open_loop`` works
from a windowed average, so a fading dip can admit GF devices the true
budget would have rejected.
"""

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Sequence

from .aar import SelectionModel
from .grid import (
    COLLISION_LIMITED,
    DECODE_MODES,
    DeviceId,
    InvalidInputError,
    InvalidParameterError,
    PowerGrid,
    SicEntry,
    sic_decode,
)
from .powermap import PoolEntry, PowerMap, PowerPool

ALL_LEVELS = math.inf  # upper-limit threshold when no GB device is present
NO_FLOOR = 0  # lower-limit threshold when no GB device is present


class ThresholdType(Enum):
    LOWER = "lower_limit"
    UPPER = "upper_limit"


class ProtocolKind(Enum):
    OPEN_LOOP = "open_loop"
    DYNAMIC = "dynamic"


@dataclass(frozen=True)
class SemiGfProtocol:
    """Hybrid-mode variant: how the BS learns the GB power.

    ``estimation_window`` and ``violation_prob`` only matter for the
    open-loop kind; ε is the per-slot probability that the stale
    average admits levels the instantaneous budget would reject.
    """

    kind: ProtocolKind
    estimation_window: int = 100
    violation_prob: float = 0.6

    def __post_init__(self):
        if self.estimation_window < 1:
            raise InvalidParameterError("estimation_window must be >= 1")
        if not 0.0 <= self.violation_prob <= 1.0:
            raise InvalidParameterError("violation_prob must lie in [0, 1]")


@dataclass(frozen=True)
class GbState:
    """One RB's grant-based occupant as the BS sees it."""

    rb: int
    instantaneous_power: float
    average_power: float
    qos_sinr: float

    def __post_init__(self):
        if self.instantaneous_power <= 0 or self.average_power <= 0:
            raise InvalidParameterError("GB powers must be > 0")
        if self.qos_sinr <= 0:
            raise InvalidParameterError("qos_sinr must be > 0")


@dataclass
class SlotResult:
    """Outcome of one slot: per-RB GB flags plus aggregate GF counts."""

    gb_success: dict
    gb_outage: dict
    gf_successes: set
    collisions: int
    admitted_gf: int
    gf_energy: float = 0.0  # sum of contender TPLs actually radiated
    gf_transmitters: dict = field(default_factory=dict)  # device -> rb

    @property
    def successes(self) -> int:
        return sum(self.gb_success.values()) + len(self.gf_successes)


def two_point_fading(rng, violation_prob: float, severity: float) -> float:
    """Multiplicative fading factor: 1 (good) or ``severity`` (bad).

    The bad draw happens with probability ``violation_prob``, tying the
    open-loop threshold-violation event directly to ε.
    """
    if not 0.0 <= violation_prob <= 1.0:
        raise InvalidParameterError("violation_prob must lie in [0, 1]")
    if severity <= 0:
        raise InvalidParameterError("severity must be > 0")
    return severity if rng.random() < violation_prob else 1.0


def compute_threshold(
    gb_power: float | None,
    qos_sinr: float,
    noise_power: float,
    levels: Sequence[float],
    threshold_type: ThresholdType,
):
    """Intra-RB threshold protecting the GB signal's QoS.

    Returns a 1-based level index, ``ALL_LEVELS``/``NO_FLOOR`` when no GB
    device restricts anything, or ``None`` when no level qualifies (GF
    must stay silent).

    Upper limit: the largest level at or below the interference budget
    I_max = gb_power/qos_sinr − noise.  Lower limit: the smallest level
    at or above the GB power, so GF signals decode (and cancel) first.
    """
    if qos_sinr <= 0 or noise_power <= 0:
        raise InvalidParameterError("qos_sinr and noise_power must be > 0")
    if not levels:
        raise InvalidParameterError("levels must be non-empty")
    if gb_power is None:
        return ALL_LEVELS if threshold_type is ThresholdType.UPPER else NO_FLOOR
    if gb_power <= 0:
        raise InvalidParameterError("gb_power must be > 0")

    if threshold_type is ThresholdType.UPPER:
        i_max = gb_power / qos_sinr - noise_power
        if i_max <= 0:
            return None
        threshold = None
        for i, p in enumerate(levels, start=1):
            if p <= i_max:
                threshold = i
        return threshold
    for i, p in enumerate(levels, start=1):
        if p >= gb_power:
            return i
    return None


def allowed_levels(threshold, threshold_type: ThresholdType, num_levels: int) -> tuple[int, ...]:
    """The 1-based grid levels a GF device may target under a threshold."""
    if threshold is None:
        return ()
    if threshold_type is ThresholdType.UPPER:
        return tuple(i for i in range(1, num_levels + 1) if i <= threshold)
    return tuple(i for i in range(1, num_levels + 1) if i > threshold)


def prune_power_map(power_map: PowerMap, threshold, threshold_type: ThresholdType) -> PowerMap:
    """Drop every pool entry whose target level breaks the threshold."""
    keep = set(allowed_levels(threshold, threshold_type, power_map.grid.num_levels))
    pools = tuple(
        PowerPool(
            region_id=p.region_id,
            entries=tuple(e for e in p.entries if e.level in keep),
        )
        for p in power_map.pools
    )
    return replace(power_map, pools=pools)


def slot_gb(n: int, num_rbs: int) -> int:
    """Scheduled uplink successes in one slot, overhead ignored."""
    if n < 0 or num_rbs < 1:
        raise InvalidParameterError("need n >= 0 and num_rbs >= 1")
    return min(n, num_rbs)


def slot_gf(
    contenders: Sequence[DeviceId],
    grid: PowerGrid,
    selection: SelectionModel | None = None,
    decode_mode: str = COLLISION_LIMITED,
    rng=None,
) -> SlotResult:
    """One contention slot: every contender picks a cell, each RB decodes."""
    if decode_mode not in DECODE_MODES:
        raise InvalidParameterError(f"unknown decode mode {decode_mode!r}")
    selection = selection or SelectionModel.uniform()
    selection.validate_against(grid, len(contenders))
    result = SlotResult(
        gb_success={}, gb_outage={}, gf_successes=set(), collisions=0, admitted_gf=len(contenders)
    )
    if not contenders:
        return result
    by_rb: dict[int, list] = {}
    for idx, device in enumerate(contenders):
        cells = selection.cells_for(idx, grid)
        level, rb = cells[int(rng.integers(len(cells)))]
        result.gf_energy += grid.level_power(level)
        result.gf_transmitters[device] = rb
        by_rb.setdefault(rb, []).append(
            SicEntry(device=device, power=grid.level_power(level), target_sinr=grid.target_sinr)
        )
    _decode_rbs(by_rb, grid.noise_power, decode_mode, result)
    return result


def slot_semi_gf(
    gb_states: Sequence[GbState],
    gf_contenders: Sequence[tuple],
    power_map: PowerMap,
    threshold_type: ThresholdType,
    protocol: SemiGfProtocol,
    grid: PowerGrid,
    decode_mode: str = COLLISION_LIMITED,
    rng=None,
) -> SlotResult:
    """One hybrid slot: threshold, prune, contend, joint SIC decode.

    ``gf_contenders`` are (device, region_id) pairs.  Each picks an RB
    uniformly, then draws a TPL uniformly from its region's pool pruned
    by that RB's threshold; a void pool means silence.  The GB signal
    decodes at its instantaneous power with an explicit SINR check (its
    outage is an SINR event even under collision-limited decoding).
    """
    if decode_mode not in DECODE_MODES:
        raise InvalidParameterError(f"unknown decode mode {decode_mode!r}")
    if power_map.grid != grid:
        raise InvalidInputError("power map was built for a different grid")
    rbs = [s.rb for s in gb_states]
    if len(set(rbs)) != len(rbs):
        raise InvalidInputError("at most one GB device per RB")
    if any(rb < 1 or rb > grid.num_rbs for rb in rbs):
        raise InvalidInputError("GB state names an RB outside the grid")

    # per-RB admitted levels; RBs without a GB device allow everything
    gb_by_rb = {s.rb: s for s in gb_states}
    admit: dict[int, frozenset] = {}
    for rb in range(1, grid.num_rbs + 1):
        state = gb_by_rb.get(rb)
        if state is None:
            power = None
        elif protocol.kind is ProtocolKind.DYNAMIC:
            power = state.instantaneous_power
        else:
            power = state.average_power
        threshold = compute_threshold(
            power,
            state.qos_sinr if state else 1.0,
            grid.noise_power,
            grid.levels,
            threshold_type,
        )
        admit[rb] = frozenset(allowed_levels(threshold, threshold_type, grid.num_levels))

    result = SlotResult(
        gb_success={}, gb_outage={}, gf_successes=set(), collisions=0, admitted_gf=0
    )
    by_rb: dict[int, list] = {}
    for state in gb_states:
        by_rb[state.rb] = [
            SicEntry(
                device=("gb", state.rb),
                power=state.instantaneous_power,
                target_sinr=state.qos_sinr,
                sinr_checked=True,
            )
        ]
    pool_cache: dict[tuple, list[PoolEntry]] = {}
    for device, region_id in gf_contenders:
        rb = int(rng.integers(grid.num_rbs)) + 1
        key = (region_id, rb)
        if key not in pool_cache:
            pool = power_map.pool_for(region_id)
            pool_cache[key] = [e for e in pool.entries if e.level in admit[rb]]
        entries = pool_cache[key]
        if not entries:
            continue  # void pool: keep silence
        entry = entries[int(rng.integers(len(entries)))]
        result.admitted_gf += 1
        result.gf_energy += entry.tpl
        result.gf_transmitters[device] = rb
        by_rb.setdefault(rb, []).append(
            SicEntry(
                device=device,
                power=grid.level_power(entry.level),
                target_sinr=grid.target_sinr,
            )
        )
    _decode_rbs(by_rb, grid.noise_power, decode_mode, result, gb_by_rb, protocol)
    return result


def _decode_rbs(by_rb, noise_power, decode_mode, result, gb_by_rb=None, protocol=None):
    for rb, entries in by_rb.items():
        out = sic_decode(entries, noise_power, decode_mode)
        groups: dict[float, int] = {}
        for e in entries:
            groups[e.power] = groups.get(e.power, 0) + 1
        result.collisions += sum(1 for c in groups.values() if c > 1)
        for e in entries:
            device = e.device
            if gb_by_rb is not None and device == ("gb", rb):
                ok = device in out.succeeded
                result.gb_success[rb] = ok
                result.gb_outage[rb] = (
                    protocol.kind is ProtocolKind.OPEN_LOOP and not ok
                )
            elif device in out.succeeded:
                result.gf_successes.add(device)
