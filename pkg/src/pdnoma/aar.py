"""Throughput analytics: exact and Monte Carlo average arrival rate (AAR).

AAR is the expected number of successful uplink transmissions per slot
when ``n`` contenders each pick one (level, RB) cell at random.  The
exact path integrates the per-RB decode function against the selection
distribution; the Monte Carlo path samples it.  Both share one
vectorized count-based decoder so they cannot drift apart silently,
while the tests cross-check them against an independent brute-force
enumeration.
"""

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import stats
from scipy.special import gammaln

from .grid import (
    COLLISION_LIMITED,
    DECODE_MODES,
    SINR,
    InvalidInputError,
    InvalidParameterError,
    PowerGrid,
)

_MC_CHUNK = 1 << 16  # fixed so results never depend on memory pressure
_TAIL_EPS = 1e-13  # binomial tail mass ignored by the exact fast path


class EnumerationTooLargeError(ValueError):
    """Exact enumeration would exceed the configured budget."""


@dataclass(frozen=True)
class SelectionModel:
    """How contenders pick a (level, RB) cell, levels and RBs 1-based.

    kind "uniform": every device picks uniformly over all cells.
    kind "pool": each device picks uniformly from its own allowed cell
    list; a shared list (``per_device is None``) keeps the devices
    exchangeable, which unlocks the fast exact path.
    """

    kind: str = "uniform"
    shared: tuple[tuple[int, int], ...] | None = None
    per_device: tuple[tuple[tuple[int, int], ...], ...] | None = None

    def __post_init__(self):
        if self.kind not in ("uniform", "pool"):
            raise InvalidParameterError(f"unknown selection kind {self.kind!r}")
        if self.kind == "pool":
            if self.shared is None and self.per_device is None:
                raise InvalidParameterError("pool selection needs cells")
            pools = [self.shared] if self.shared is not None else list(self.per_device)
            for cells in pools:
                if not cells:
                    raise InvalidParameterError("void pools must be excluded before analysis")

    @classmethod
    def uniform(cls) -> "SelectionModel":
        return cls(kind="uniform")

    @classmethod
    def shared_pool(cls, cells) -> "SelectionModel":
        return cls(kind="pool", shared=tuple(sorted(set(map(tuple, cells)))))

    @classmethod
    def pools(cls, per_device) -> "SelectionModel":
        return cls(
            kind="pool",
            per_device=tuple(tuple(sorted(set(map(tuple, cells)))) for cells in per_device),
        )

    def is_exchangeable(self) -> bool:
        if self.kind == "uniform" or self.shared is not None:
            return True
        return len(set(self.per_device)) == 1

    def cells_for(self, device_index: int, grid: PowerGrid) -> tuple[tuple[int, int], ...]:
        if self.kind == "uniform":
            return tuple(
                (level, rb)
                for rb in range(1, grid.num_rbs + 1)
                for level in range(1, grid.num_levels + 1)
            )
        if self.shared is not None:
            return self.shared
        return self.per_device[device_index % len(self.per_device)]

    def validate_against(self, grid: PowerGrid, n: int):
        if self.kind == "pool":
            pools = [self.shared] if self.shared is not None else list(self.per_device)
            if self.per_device is not None and len(self.per_device) != n:
                raise InvalidInputError(
                    f"pool selection lists {len(self.per_device)} devices, expected {n}"
                )
            for cells in pools:
                for level, rb in cells:
                    if not (1 <= level <= grid.num_levels and 1 <= rb <= grid.num_rbs):
                        raise InvalidInputError(f"cell {(level, rb)} outside the grid")


@dataclass(frozen=True)
class AarResult:
    expected_successes_per_slot: float
    per_rb: float
    stderr: float
    trials: int  # 0 for exact results

    def __post_init__(self):
        if self.expected_successes_per_slot < -1e-9:
            raise InvalidInputError("negative expected successes")


def success_level_mask(counts, levels, target_sinr, noise_power, mode):
    """Per-cell decode success for level-count arrays.

    counts has shape (..., N) over 1..N in ascending level order;
    returns a boolean array of the same shape that is True exactly where
    a lone occupant of that level is decoded.  Nominal received powers
    are assumed, which makes the outcome a pure function of the counts.
    """
    counts = np.asarray(counts)
    lv = np.asarray(levels, dtype=float)
    n_levels = counts.shape[-1]
    single = counts == 1
    if mode == COLLISION_LIMITED:
        idx = np.arange(n_levels)
        collided_at = np.where(counts >= 2, idx, -1)
        highest = collided_at.max(axis=-1, keepdims=True)
        return single & (idx > highest)
    if mode != SINR:
        raise InvalidParameterError(f"unknown decode mode {mode!r}")
    cell_power = counts * lv
    cum = np.cumsum(cell_power, axis=-1)
    below = noise_power + (cum - cell_power)  # uncancelled power under each level
    own_ok = single & (lv >= target_sinr * below)
    level_ok = (counts == 0) | own_ok
    # a level is reached only if every stronger level was cleared
    rev = np.flip(level_ok, axis=-1).astype(np.int8)
    reached_incl = np.flip(np.cumprod(rev, axis=-1), axis=-1)
    above_ok = np.ones_like(reached_incl)
    above_ok[..., :-1] = reached_incl[..., 1:]
    return own_ok & (above_ok == 1)


def successes_from_counts(counts, levels, target_sinr, noise_power, mode):
    """Number of decoded devices for level-count arrays of shape (..., N)."""
    mask = success_level_mask(counts, levels, target_sinr, noise_power, mode)
    return mask.sum(axis=-1)


@lru_cache(maxsize=None)
def _compositions(total: int, parts: int) -> tuple[tuple[int, ...], ...]:
    """All vectors of ``parts`` non-negative ints summing to ``total``."""
    if parts == 1:
        return ((total,),)
    out = []
    for head in range(total + 1):
        for tail in _compositions(total - head, parts - 1):
            out.append((head,) + tail)
    return tuple(out)


@lru_cache(maxsize=None)
def _rb_expected_successes(
    k: int,
    level_probs: tuple[float, ...],
    levels: tuple[float, ...],
    target_sinr: float,
    noise_power: float,
    mode: str,
) -> float:
    """E[decoded | k devices in the RB], levels drawn iid from level_probs."""
    if k == 0:
        return 0.0
    active = [i for i, p in enumerate(level_probs) if p > 0]
    comps = np.array(_compositions(k, len(active)), dtype=np.int64)
    counts = np.zeros((len(comps), len(levels)), dtype=np.int64)
    counts[:, active] = comps
    probs = np.array([level_probs[i] for i in active], dtype=float)
    log_pmf = gammaln(k + 1) - gammaln(comps + 1).sum(axis=1) + comps @ np.log(probs)
    pmf = np.exp(log_pmf)
    succ = successes_from_counts(counts, levels, target_sinr, noise_power, mode)
    return float(np.dot(pmf, succ))


def _cell_distribution(selection: SelectionModel, grid: PowerGrid):
    """(q_j, level_probs_j) per RB for one exchangeable device."""
    cells = selection.cells_for(0, grid)
    weight = 1.0 / len(cells)
    rb_prob = np.zeros(grid.num_rbs)
    level_given_rb = np.zeros((grid.num_rbs, grid.num_levels))
    for level, rb in cells:
        rb_prob[rb - 1] += weight
        level_given_rb[rb - 1][level - 1] += weight
    for j in range(grid.num_rbs):
        if rb_prob[j] > 0:
            level_given_rb[j] /= rb_prob[j]
    return rb_prob, level_given_rb


def exact_aar(
    n: int,
    grid: PowerGrid,
    selection: SelectionModel | None = None,
    decode_mode: str = COLLISION_LIMITED,
    budget: int = 1_000_000,
) -> AarResult:
    """Exact expected successes per slot for n independent contenders.

    Exchangeable selections (uniform, or one shared pool) go through a
    binomial-per-RB / multinomial-per-level decomposition whose cost is
    polynomial in n.  Heterogeneous pools fall back to labeled
    enumeration guarded by ``budget`` total assignments.
    """
    if n < 0:
        raise InvalidParameterError("n must be >= 0")
    if decode_mode not in DECODE_MODES:
        raise InvalidParameterError(f"unknown decode mode {decode_mode!r}")
    selection = selection or SelectionModel.uniform()
    selection.validate_against(grid, n)
    if n == 0:
        return AarResult(0.0, 0.0, 0.0, 0)

    if selection.is_exchangeable():
        expected = float(_exact_exchangeable(n, grid, selection, decode_mode))
    else:
        expected = float(_exact_labeled(n, grid, selection, decode_mode, budget))
    return AarResult(expected, expected / grid.num_rbs, 0.0, 0)


def _exact_exchangeable(n, grid, selection, decode_mode) -> float:
    rb_prob, level_given_rb = _cell_distribution(selection, grid)
    total = 0.0
    ks = np.arange(n + 1)
    for j in range(grid.num_rbs):
        q = rb_prob[j]
        if q == 0.0:
            continue
        pmf = stats.binom.pmf(ks, n, q)
        probs_j = tuple(level_given_rb[j])
        keep = pmf > _TAIL_EPS
        for k in ks[keep]:
            total += pmf[k] * _rb_expected_successes(
                int(k), probs_j, grid.levels, grid.target_sinr, grid.noise_power, decode_mode
            )
    return total


def _exact_labeled(n, grid, selection, decode_mode, budget) -> float:
    pools = [selection.cells_for(d, grid) for d in range(n)]
    size = math.prod(len(p) for p in pools)
    if size > budget:
        raise EnumerationTooLargeError(
            f"{size} labeled assignments exceed the budget of {budget}; "
            "use mc_aar for a sampled estimate"
        )
    shape = (grid.num_rbs, grid.num_levels)
    weight = 1.0 / size
    expected = 0.0
    counts = np.zeros(shape, dtype=np.int64)
    for assignment in itertools.product(*pools):
        counts[:] = 0
        for level, rb in assignment:
            counts[rb - 1, level - 1] += 1
        succ = successes_from_counts(
            counts, grid.levels, grid.target_sinr, grid.noise_power, decode_mode
        )
        expected += weight * float(succ.sum())
    return expected


def _draw_cells(rng, selection: SelectionModel, grid: PowerGrid, n: int, trials: int):
    """Flat cell ids (rb-major) with shape (trials, n)."""
    n_cells = grid.num_cells
    if selection.kind == "uniform":
        return rng.integers(0, n_cells, size=(trials, n))

    def flat(cells):
        return np.array([(rb - 1) * grid.num_levels + (level - 1) for level, rb in cells])

    if selection.shared is not None:
        table = flat(selection.shared)
        return table[rng.integers(0, len(table), size=(trials, n))]
    out = np.empty((trials, n), dtype=np.int64)
    for d in range(n):
        table = flat(selection.per_device[d])
        out[:, d] = table[rng.integers(0, len(table), size=trials)]
    return out


def mc_aar(
    n: int,
    grid: PowerGrid,
    selection: SelectionModel | None = None,
    decode_mode: str = COLLISION_LIMITED,
    trials: int = 100_000,
    seed: int = 0,
) -> AarResult:
    """Monte Carlo AAR estimate; same (inputs, seed) gives identical output."""
    if n < 0:
        raise InvalidParameterError("n must be >= 0")
    if trials < 1:
        raise InvalidParameterError("trials must be >= 1")
    if decode_mode not in DECODE_MODES:
        raise InvalidParameterError(f"unknown decode mode {decode_mode!r}")
    selection = selection or SelectionModel.uniform()
    selection.validate_against(grid, n)
    if n == 0:
        return AarResult(0.0, 0.0, 0.0, trials)

    rng = np.random.default_rng(seed)
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < trials:
        chunk = min(_MC_CHUNK, trials - done)
        cells = _draw_cells(rng, selection, grid, n, chunk)
        counts = _bincount_cells(cells, grid)
        succ = successes_from_counts(
            counts, grid.levels, grid.target_sinr, grid.noise_power, decode_mode
        ).sum(axis=-1)
        total += float(succ.sum())
        total_sq += float((succ.astype(float) ** 2).sum())
        done += chunk
    mean = total / trials
    if trials > 1:
        var = max(0.0, (total_sq - trials * mean * mean) / (trials - 1))
        stderr = math.sqrt(var / trials)
    else:
        stderr = 0.0
    return AarResult(mean, mean / grid.num_rbs, stderr, trials)


def _bincount_cells(cells, grid: PowerGrid):
    """(trials, n) flat cell ids -> (trials, M, N) level counts."""
    trials = cells.shape[0]
    n_cells = grid.num_cells
    offsets = np.arange(trials)[:, None] * n_cells
    flat = np.bincount((cells + offsets).ravel(), minlength=trials * n_cells)
    return flat.reshape(trials, grid.num_rbs, grid.num_levels)


def optimal_load(
    grid: PowerGrid,
    decode_mode: str = COLLISION_LIMITED,
    n_max: int = 100,
    selection: SelectionModel | None = None,
    budget: int = 1_000_000,
    mc_trials: int = 200_000,
    seed: int = 0,
) -> tuple[int, float]:
    """(n*, aar_max) over 1..n_max; ties resolve to the smaller n.

    Falls back to Monte Carlo with a shared trial budget when the exact
    path refuses; the fall-back prefers the smaller n whenever the gap
    between candidates is within one combined standard error.
    """
    if n_max < 1:
        raise InvalidParameterError("n_max must be >= 1")
    best_n, best = 0, -1.0
    try:
        for n in range(1, n_max + 1):
            aar = exact_aar(n, grid, selection, decode_mode, budget).expected_successes_per_slot
            if aar > best + 1e-12:
                best_n, best = n, aar
        return best_n, best
    except EnumerationTooLargeError:
        pass
    results = [
        (n, mc_aar(n, grid, selection, decode_mode, mc_trials, seed ^ n)) for n in range(1, n_max + 1)
    ]
    best_n, best_r = results[0]
    for n, r in results[1:]:
        margin = best_r.stderr + r.stderr
        if r.expected_successes_per_slot > best_r.expected_successes_per_slot + margin:
            best_n, best_r = n, r
    return best_n, best_r.expected_successes_per_slot
