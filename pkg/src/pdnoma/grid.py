"""Power-domain resource grid: received power levels and per-RB SIC decoding.

Each resource block (RB) of a slot is shared in the power domain by
``num_levels`` received power levels (RPLs).  A device picks one
(level, RB) cell; devices landing on the same cell collide.  The base
station decodes one RB at a time by successive interference
cancellation, strongest signal first.  A signal that cannot be decoded
stays on the air and drowns everything weaker in the same RB, so a
failure at one level floods all levels below it.
"""

from dataclasses import dataclass
from typing import Hashable, Iterable, Mapping, Sequence

DeviceId = Hashable

COLLISION_LIMITED = "collision_limited"
SINR = "sinr"
DECODE_MODES = (COLLISION_LIMITED, SINR)


class InvalidParameterError(ValueError):
    """A model parameter is out of its documented range."""


class InvalidInputError(ValueError):
    """An input structure is internally inconsistent."""


def build_levels(
    num_levels: int,
    target_sinr: float,
    noise_power: float,
    margin: float = 1.0,
) -> list[float]:
    """Construct received power levels P_1 < ... < P_N for one RB.

    Levels are built bottom-up so that a lone occupant of level i clears
    the decoding target against the worst case of every lower level
    being occupied:

        P_i = margin * target_sinr * (noise_power + sum_{j < i} P_j)

    With ``margin == 1`` a lone occupant sits exactly at the target
    SINR; ``margin > 1`` buys headroom for SINR-explicit decoding under
    extra interference.
    """
    if num_levels < 1:
        raise InvalidParameterError("num_levels must be >= 1")
    if target_sinr <= 0:
        raise InvalidParameterError("target_sinr must be > 0")
    if noise_power <= 0:
        raise InvalidParameterError("noise_power must be > 0")
    if margin < 1.0:
        raise InvalidParameterError("margin must be >= 1")
    levels = []
    total = 0.0
    for _ in range(num_levels):
        level = margin * target_sinr * (noise_power + total)
        levels.append(level)
        total += level
    return levels


@dataclass(frozen=True)
class PowerGrid:
    """An (num_levels x num_rbs) power-domain grid for one slot.

    ``levels`` holds the nominal RPLs in strictly increasing order;
    level indices are 1-based everywhere in the public API, matching
    the usual P_1..P_N naming.
    """

    num_levels: int
    num_rbs: int
    levels: tuple[float, ...]
    target_sinr: float
    noise_power: float
    margin: float = 1.0

    def __post_init__(self):
        if self.num_levels < 1:
            raise InvalidParameterError("num_levels must be >= 1")
        if self.num_rbs < 1:
            raise InvalidParameterError("num_rbs must be >= 1")
        if self.target_sinr <= 0 or self.noise_power <= 0:
            raise InvalidParameterError("target_sinr and noise_power must be > 0")
        if self.margin < 1.0:
            raise InvalidParameterError("margin must be >= 1")
        if len(self.levels) != self.num_levels:
            raise InvalidParameterError("levels length must equal num_levels")
        prev = 0.0
        total = 0.0
        for i, p in enumerate(self.levels):
            if p <= prev:
                raise InvalidParameterError("levels must be strictly increasing and positive")
            # every level must clear the target against all lower levels plus noise
            floor = self.target_sinr * (self.noise_power + total)
            if p < floor * (1.0 - 1e-12):
                raise InvalidParameterError(
                    f"level {i + 1} ({p}) violates the single-occupancy decode floor {floor}"
                )
            prev = p
            total += p

    @classmethod
    def build(
        cls,
        num_levels: int,
        num_rbs: int,
        target_sinr: float,
        noise_power: float,
        margin: float = 1.0,
    ) -> "PowerGrid":
        levels = build_levels(num_levels, target_sinr, noise_power, margin)
        return cls(
            num_levels=num_levels,
            num_rbs=num_rbs,
            levels=tuple(levels),
            target_sinr=target_sinr,
            noise_power=noise_power,
            margin=margin,
        )

    def level_power(self, level: int) -> float:
        """Nominal RPL of a 1-based level index."""
        if not 1 <= level <= self.num_levels:
            raise InvalidInputError(f"level {level} outside 1..{self.num_levels}")
        return self.levels[level - 1]

    @property
    def num_cells(self) -> int:
        return self.num_levels * self.num_rbs


@dataclass
class RbOccupancy:
    """Who sits where inside a single RB.

    ``counts[i]`` and ``device_ids[i]`` describe level i+1 (1-based
    level i+1); counts are kept explicit so that count-only decode paths
    never have to touch identities.
    """

    counts: list[int]
    device_ids: list[list[DeviceId]]

    def __post_init__(self):
        if len(self.counts) != len(self.device_ids):
            raise InvalidInputError("counts and device_ids must have equal length")
        for c, ids in zip(self.counts, self.device_ids):
            if c < 0 or c != len(ids):
                raise InvalidInputError("counts must match device_ids lengths")

    @classmethod
    def from_choices(
        cls, num_levels: int, choices: Iterable[tuple[DeviceId, int]]
    ) -> "RbOccupancy":
        """Build from (device, level) pairs with 1-based levels."""
        counts = [0] * num_levels
        ids: list[list[DeviceId]] = [[] for _ in range(num_levels)]
        for device, level in choices:
            if not 1 <= level <= num_levels:
                raise InvalidInputError(f"level {level} outside 1..{num_levels}")
            counts[level - 1] += 1
            ids[level - 1].append(device)
        return cls(counts=counts, device_ids=ids)

    @property
    def total(self) -> int:
        return sum(self.counts)

    @property
    def num_levels(self) -> int:
        return len(self.counts)


@dataclass(frozen=True)
class DecodeOutcome:
    """Result of decoding one RB: who got through, who did not."""

    succeeded: frozenset
    failed: frozenset
    decoded_levels: tuple[int, ...]  # 1-based, in decode (descending power) order


@dataclass(frozen=True)
class SicEntry:
    """One signal on an RB as seen by the SIC scan.

    ``sinr_checked`` forces the SINR test for this entry even under
    collision-limited decoding; the hybrid uplink uses it for the
    grant-based signal whose outage is an SINR event by definition.
    """

    device: DeviceId
    power: float
    target_sinr: float
    sinr_checked: bool = False


@dataclass
class SicOutcome:
    succeeded: set
    failed: set
    decoded_powers: list[float]
    sinr: dict  # device -> SINR at its evaluation point (diagnostic)


def sic_decode(entries: Sequence[SicEntry], noise_power: float, mode: str) -> SicOutcome:
    """Successive interference cancellation over arbitrary received powers.

    Entries are grouped by exact received power; equal powers collide by
    definition.  The scan walks groups strongest-first.  A lone occupant
    is decoded (collision-limited) or SINR-tested against noise plus all
    still-uncancelled weaker signals ("sinr" mode or ``sinr_checked``).
    Any failure stops the scan and fails everything at or below it.
    """
    if mode not in DECODE_MODES:
        raise InvalidParameterError(f"unknown decode mode {mode!r}")
    outcome = SicOutcome(succeeded=set(), failed=set(), decoded_powers=[], sinr={})
    if not entries:
        return outcome

    by_power: dict[float, list[SicEntry]] = {}
    for e in entries:
        if e.power <= 0:
            raise InvalidInputError("received powers must be > 0")
        by_power.setdefault(e.power, []).append(e)
    powers = sorted(by_power)  # ascending

    # interference below group k, accumulated in ascending order so the
    # float sums match build_levels() exactly in the nominal case
    below = [0.0] * len(powers)
    running = 0.0
    for k, p in enumerate(powers):
        below[k] = running
        running += p * len(by_power[p])

    for k in range(len(powers) - 1, -1, -1):
        group = by_power[powers[k]]
        interference = noise_power + below[k]
        if len(group) > 1:
            _flood_fail(outcome, by_power, powers, k, noise_power, below[k])
            break
        e = group[0]
        outcome.sinr[e.device] = e.power / interference
        checked = mode == SINR or e.sinr_checked
        if checked and not e.power >= e.target_sinr * interference:
            _flood_fail(outcome, by_power, powers, k, noise_power, below[k])
            break
        outcome.succeeded.add(e.device)
        outcome.decoded_powers.append(e.power)
    return outcome


def _flood_fail(outcome, by_power, powers, k, noise_power, below_k):
    """Fail group k and everything weaker; record diagnostic SINRs."""
    uncancelled = below_k + powers[k] * len(by_power[powers[k]])
    for p in powers[: k + 1]:
        for e in by_power[p]:
            outcome.failed.add(e.device)
            outcome.sinr[e.device] = e.power / (noise_power + uncancelled - e.power)


def _occupancy_entries(
    occupancy: RbOccupancy,
    grid: PowerGrid,
    received_powers: Mapping[DeviceId, float] | None,
) -> list[SicEntry]:
    if occupancy.num_levels != grid.num_levels:
        raise InvalidInputError("occupancy level count does not match grid")
    entries = []
    seen = set()
    for i, ids in enumerate(occupancy.device_ids):
        nominal = grid.levels[i]
        for device in ids:
            if received_powers is None:
                power = nominal
            else:
                if device not in received_powers:
                    raise InvalidInputError(f"received power missing for device {device!r}")
                power = received_powers[device]
            entries.append(SicEntry(device=device, power=power, target_sinr=grid.target_sinr))
            seen.add(device)
    if received_powers is not None:
        extra = set(received_powers) - seen
        if extra:
            raise InvalidInputError(f"received powers given for absent devices {sorted(map(str, extra))}")
    return entries


def _level_of(grid: PowerGrid, occupancy: RbOccupancy, device: DeviceId) -> int:
    for i, ids in enumerate(occupancy.device_ids):
        if device in ids:
            return i + 1
    raise InvalidInputError("device not in occupancy")


def decode_collision_limited(occupancy: RbOccupancy) -> DecodeOutcome:
    """Decode one RB where any same-level collision is fatal downward.

    The highest collided level fails together with everything below it;
    every lone occupant above it is decoded.
    """
    counts = occupancy.counts
    highest_collided = 0  # 1-based, 0 = none
    for i in range(len(counts) - 1, -1, -1):
        if counts[i] >= 2:
            highest_collided = i + 1
            break
    succeeded = set()
    failed = set()
    decoded = []
    for i in range(len(counts) - 1, highest_collided - 1, -1):
        if counts[i] == 1:
            succeeded.add(occupancy.device_ids[i][0])
            decoded.append(i + 1)
    for i in range(highest_collided):
        failed.update(occupancy.device_ids[i])
    return DecodeOutcome(
        succeeded=frozenset(succeeded), failed=frozenset(failed), decoded_levels=tuple(decoded)
    )


def decode_sinr(
    occupancy: RbOccupancy,
    grid: PowerGrid,
    received_powers: Mapping[DeviceId, float] | None = None,
) -> DecodeOutcome:
    """Decode one RB with explicit SINR tests, strongest level first.

    A lone occupant is decoded (and cancelled) when its received power
    divided by noise plus all uncancelled weaker power reaches the grid
    target; success at exactly the target counts.  ``received_powers``
    may perturb individual devices away from the nominal RPLs and must
    then cover exactly the occupants.
    """
    entries = _occupancy_entries(occupancy, grid, received_powers)
    out = sic_decode(entries, grid.noise_power, SINR)
    # decode order is descending received power; map back to grid levels
    ranked = sorted(
        out.succeeded,
        key=lambda d: -(
            received_powers[d] if received_powers is not None
            else grid.levels[_level_of(grid, occupancy, d) - 1]
        ),
    )
    decoded_levels = tuple(_level_of(grid, occupancy, d) for d in ranked)
    return DecodeOutcome(
        succeeded=frozenset(out.succeeded),
        failed=frozenset(out.failed),
        decoded_levels=decoded_levels,
    )
