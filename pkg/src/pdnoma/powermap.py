"""Region power maps: linking transmit power pools to grid power levels.

The served area is partitioned into regions.  Each region gets a mean
channel gain from a deterministic model (path loss, sector antenna,
polygonal blockages) and a pool of candidate transmit power levels
(TPLs), one per grid RPL, with unaffordable entries cut by a TPL cap.
A region transmitting pool entry ``tpl`` is received at
``tpl * mean_gain``, i.e. back at the RPL the entry was derived from.

A multi-agent tabular Q-learning pass can then thin the pools toward
cheaper entries using a shared min-power reward; it only ever selects
among the TPLs a region already has.
"""

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from shapely.geometry import LineString, Polygon

from .grid import (
    SINR,
    InvalidInputError,
    InvalidParameterError,
    PowerGrid,
    SicEntry,
    sic_decode,
)

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class Rect:
    x: float
    y: float
    width: float
    height: float


@dataclass(frozen=True)
class Disk:
    cx: float
    cy: float
    radius: float


@dataclass(frozen=True)
class Blockage:
    """A polygonal obstacle multiplying the gain of paths crossing it."""

    vertices: tuple[tuple[float, float], ...]
    attenuation: float

    def __post_init__(self):
        if len(self.vertices) < 3:
            raise InvalidParameterError("a blockage polygon needs at least 3 vertices")
        if not 0.0 < self.attenuation <= 1.0:
            raise InvalidParameterError("attenuation must lie in (0, 1]")


@dataclass(frozen=True)
class ChannelModel:
    """Deterministic mean-gain model evaluated at region centers.

    gain = ref_gain * (d / ref_distance)^(-path_loss_exponent)
           * sector gain of the departure azimuth
           * product of attenuations of blockages crossing the path

    ``antenna_sectors`` divides the full circle into equal azimuth
    sectors starting at angle 0; a single entry is omnidirectional.
    """

    ref_distance: float = 1.0
    ref_gain: float = 1.0
    path_loss_exponent: float = 2.0
    antenna_sectors: tuple[float, ...] = (1.0,)
    blockages: tuple[Blockage, ...] = ()

    def __post_init__(self):
        if self.ref_distance <= 0 or self.ref_gain <= 0:
            raise InvalidParameterError("ref_distance and ref_gain must be > 0")
        if self.path_loss_exponent < 0:
            raise InvalidParameterError("path_loss_exponent must be >= 0")
        if not self.antenna_sectors or any(g <= 0 for g in self.antenna_sectors):
            raise InvalidParameterError("antenna_sectors must be positive")

    def sector_gain(self, azimuth: float) -> float:
        k = len(self.antenna_sectors)
        idx = int((azimuth % (2 * math.pi)) / (2 * math.pi / k)) % k
        return self.antenna_sectors[idx]

    def gain(self, bs: tuple[float, float], point: tuple[float, float]) -> float:
        dx, dy = point[0] - bs[0], point[1] - bs[1]
        d = math.hypot(dx, dy)
        if d == 0.0:
            raise InvalidParameterError("zero distance between base station and region center")
        g = self.ref_gain * (d / self.ref_distance) ** (-self.path_loss_exponent)
        g *= self.sector_gain(math.atan2(dy, dx))
        if self.blockages:
            path = LineString([bs, point])
            for b in self.blockages:
                if path.intersects(Polygon(b.vertices)):
                    g *= b.attenuation
        return g


@dataclass(frozen=True)
class Region:
    id: int
    center: tuple[float, float]
    extent: tuple[float, float]
    mean_gain: float | None = None


@dataclass(frozen=True)
class PoolEntry:
    level: int  # 1-based grid level this TPL lands on
    tpl: float


@dataclass(frozen=True)
class PowerPool:
    region_id: int
    entries: tuple[PoolEntry, ...]

    @property
    def void(self) -> bool:
        return not self.entries

    @property
    def levels(self) -> tuple[int, ...]:
        return tuple(e.level for e in self.entries)

    def average_tpl(self) -> float:
        if self.void:
            raise InvalidInputError("void pool has no average TPL")
        return sum(e.tpl for e in self.entries) / len(self.entries)


@dataclass(frozen=True)
class PowerMap:
    grid: PowerGrid
    regions: tuple[Region, ...]
    pools: tuple[PowerPool, ...]
    channel_model: ChannelModel | None = None
    channel_model_hash: str = ""

    def __post_init__(self):
        if len(self.regions) != len(self.pools):
            raise InvalidInputError("one pool per region required")
        for region, pool in zip(self.regions, self.pools):
            if region.id != pool.region_id:
                raise InvalidInputError("regions and pools must align by id")

    def pool_for(self, region_id: int) -> PowerPool:
        for pool in self.pools:
            if pool.region_id == region_id:
                return pool
        raise InvalidInputError(f"no pool for region {region_id}")

    def region_for(self, region_id: int) -> Region:
        for region in self.regions:
            if region.id == region_id:
                return region
        raise InvalidInputError(f"no region {region_id}")

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "grid": {
                "N": self.grid.num_levels,
                "M": self.grid.num_rbs,
                "levels": list(self.grid.levels),
                "target_sinr": self.grid.target_sinr,
                "noise_power": self.grid.noise_power,
                "margin": self.grid.margin,
            },
            "channel_model": _model_to_dict(self.channel_model),
            "channel_model_hash": self.channel_model_hash,
            "regions": [
                {
                    "id": region.id,
                    "center": list(region.center),
                    "extent": list(region.extent),
                    "mean_gain": region.mean_gain,
                    "pool": [{"level": e.level, "tpl": e.tpl} for e in pool.entries],
                }
                for region, pool in zip(self.regions, self.pools)
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "PowerMap":
        if doc.get("schema") != SCHEMA_VERSION:
            raise InvalidInputError(f"unsupported power map schema {doc.get('schema')!r}")
        g = doc["grid"]
        grid = PowerGrid(
            num_levels=g["N"],
            num_rbs=g["M"],
            levels=tuple(g["levels"]),
            target_sinr=g["target_sinr"],
            noise_power=g["noise_power"],
            margin=g.get("margin", 1.0),
        )
        regions = []
        pools = []
        for r in doc["regions"]:
            regions.append(
                Region(
                    id=r["id"],
                    center=tuple(r["center"]),
                    extent=tuple(r["extent"]),
                    mean_gain=r["mean_gain"],
                )
            )
            pools.append(
                PowerPool(
                    region_id=r["id"],
                    entries=tuple(PoolEntry(e["level"], e["tpl"]) for e in r["pool"]),
                )
            )
        return cls(
            grid=grid,
            regions=tuple(regions),
            pools=tuple(pools),
            channel_model=_model_from_dict(doc.get("channel_model")),
            channel_model_hash=doc.get("channel_model_hash", ""),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "PowerMap":
        return cls.from_dict(json.loads(text))

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_json())
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "PowerMap":
        with open(path) as fh:
            return cls.from_json(fh.read())


def _model_to_dict(model: ChannelModel | None):
    if model is None:
        return None
    return {
        "ref_distance": model.ref_distance,
        "ref_gain": model.ref_gain,
        "path_loss_exponent": model.path_loss_exponent,
        "antenna_sectors": list(model.antenna_sectors),
        "blockages": [
            {"vertices": [list(v) for v in b.vertices], "attenuation": b.attenuation}
            for b in model.blockages
        ],
    }


def _model_from_dict(doc) -> ChannelModel | None:
    if doc is None:
        return None
    return ChannelModel(
        ref_distance=doc["ref_distance"],
        ref_gain=doc["ref_gain"],
        path_loss_exponent=doc["path_loss_exponent"],
        antenna_sectors=tuple(doc["antenna_sectors"]),
        blockages=tuple(
            Blockage(tuple(tuple(v) for v in b["vertices"]), b["attenuation"])
            for b in doc.get("blockages", [])
        ),
    )


def model_hash(model: ChannelModel | None) -> str:
    payload = json.dumps(_model_to_dict(model), sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def partition_area(area, rows: int, cols: int) -> list[Region]:
    """Tile the area into rows x cols regions, ids row-major from 0.

    Rectangles tile exactly.  Disks tile their bounding square and keep
    the cells whose centers fall inside the disk.
    """
    if rows < 1 or cols < 1:
        raise InvalidParameterError("rows and cols must be >= 1")
    if isinstance(area, Rect):
        if area.width <= 0 or area.height <= 0:
            raise InvalidParameterError("degenerate rectangle")
        x0, y0, w, h = area.x, area.y, area.width, area.height
        keep = None
    elif isinstance(area, Disk):
        if area.radius <= 0:
            raise InvalidParameterError("degenerate disk")
        x0, y0 = area.cx - area.radius, area.cy - area.radius
        w = h = 2 * area.radius
        keep = lambda cx, cy: math.hypot(cx - area.cx, cy - area.cy) <= area.radius
    else:
        raise InvalidParameterError(f"unsupported area {type(area).__name__}")
    cell_w, cell_h = w / cols, h / rows
    regions = []
    next_id = 0
    for row in range(rows):
        for col in range(cols):
            cx = x0 + (col + 0.5) * cell_w
            cy = y0 + (row + 0.5) * cell_h
            if keep is not None and not keep(cx, cy):
                continue
            regions.append(Region(id=next_id, center=(cx, cy), extent=(cell_w, cell_h)))
            next_id += 1
    if not regions:
        raise InvalidParameterError("partition produced no regions")
    return regions


def mean_gain(region: Region, model: ChannelModel, bs: tuple[float, float]) -> float:
    """Mean channel gain of a region, evaluated at its center."""
    return model.gain(bs, region.center)


def build_power_map(
    regions: Sequence[Region],
    grid: PowerGrid,
    model: ChannelModel | None = None,
    bs: tuple[float, float] = (0.0, 0.0),
    max_tpl: float = math.inf,
) -> PowerMap:
    """Derive one TPL candidate per RPL and region, capped at max_tpl.

    Regions whose ``mean_gain`` is unset get it from the channel model;
    entries above the cap are dropped, possibly leaving a void pool.
    """
    if max_tpl <= 0:
        raise InvalidParameterError("max_tpl must be > 0")
    resolved = []
    pools = []
    for region in regions:
        gain = region.mean_gain
        if gain is None:
            if model is None:
                raise InvalidInputError(f"region {region.id} has no mean_gain and no model given")
            gain = mean_gain(region, model, bs)
        if gain <= 0:
            raise InvalidParameterError(f"region {region.id} has non-positive gain")
        resolved.append(replace(region, mean_gain=gain))
        entries = []
        for level, power in enumerate(grid.levels, start=1):
            tpl = power / gain
            if tpl <= max_tpl:
                entries.append(PoolEntry(level=level, tpl=tpl))
        pools.append(PowerPool(region_id=region.id, entries=tuple(entries)))
    return PowerMap(
        grid=grid,
        regions=tuple(resolved),
        pools=tuple(pools),
        channel_model=model,
        channel_model_hash=model_hash(model),
    )


def trivial_map(grid: PowerGrid) -> PowerMap:
    """One unit-gain region covering everything; every level affordable."""
    region = Region(id=0, center=(0.5, 0.5), extent=(1.0, 1.0), mean_gain=1.0)
    return build_power_map([region], grid)


# ---------------------------------------------------------------------------
# Q-learning refinement


def quantize_sinr(sinr: float, target_sinr: float, bins: int) -> int:
    """Map an achieved SINR to a coarse state bin.

    Bin 0 holds failures and deep fades; the rest split the range around
    the target into 3 dB steps, clipped at both ends.
    """
    if sinr <= 0:
        return 0
    rel_db = 10.0 * math.log10(sinr / target_sinr)
    return int(np.clip(math.floor(rel_db / 3.0) + bins // 2, 0, bins - 1))


def default_power_hook(power_map: PowerMap) -> Callable:
    """Environment for refinement: every region fields one device.

    The joint action places each agent at its chosen (entry, rb); the
    hook returns per-agent decode SINRs and the total TPL spent, failed
    transmissions included.
    """
    grid = power_map.grid
    gains = {r.id: r.mean_gain for r in power_map.regions}

    def run(joint_action):
        per_rb: dict[int, list] = {}
        total_power = 0.0
        for agent_idx, (region_id, entry, rb) in enumerate(joint_action):
            rx = entry.tpl * gains[region_id]
            per_rb.setdefault(rb, []).append(SicEntry(agent_idx, rx, grid.target_sinr))
            total_power += entry.tpl
        sinrs = [0.0] * len(joint_action)
        for rb, entries in per_rb.items():
            out = sic_decode(entries, grid.noise_power, SINR)
            for e in entries:
                sinrs[e.device] = out.sinr.get(e.device, 0.0)
        return sinrs, total_power

    return run


@dataclass
class _Agent:
    region_id: int
    actions: list  # (entry, rb), sorted cheapest-first for stable tie-breaks
    q: dict = field(default_factory=dict)  # state -> np.ndarray over actions
    state: int = 0

    def values(self, state: int):
        if state not in self.q:
            self.q[state] = np.zeros(len(self.actions))
        return self.q[state]

    def greedy(self, state: int) -> int:
        return int(np.argmax(self.values(state)))  # first max = cheapest


def refine_power_map(
    initial_map: PowerMap,
    episodes: int = 200,
    *,
    sim_hook: Callable | None = None,
    reward_kind: str = "min_power",
    learning_rate: float = 0.1,
    discount: float = 0.9,
    exploration: float = 0.1,
    sinr_bins: int = 8,
    steps_per_episode: int = 32,
    tolerance: float = 1e-4,
    seed: int = 0,
    on_step: Callable | None = None,
) -> PowerMap:
    """Thin pools with independent per-region learners and a shared reward.

    One tabular agent per non-void region picks a (TPL entry, RB) action
    from a state that quantizes its previous decode SINR.  All agents
    receive the same reward: the reciprocal of the total power spent in
    the step when it improved on the previous step, else zero.  Learning
    stops when every Q-update in a full episode stays below ``tolerance``
    or the episode budget runs out; each region's pool is then rewritten
    to the entries its greedy policy uses.  No new TPL can appear.
    """
    if reward_kind != "min_power":
        raise InvalidParameterError(f"unknown reward kind {reward_kind!r}")
    if not 0.0 <= exploration <= 1.0:
        raise InvalidParameterError("exploration must lie in [0, 1]")
    if episodes < 1 or steps_per_episode < 1:
        raise InvalidParameterError("episodes and steps_per_episode must be >= 1")
    if sinr_bins < 2:
        raise InvalidParameterError("sinr_bins must be >= 2")

    grid = initial_map.grid
    hook = sim_hook or default_power_hook(initial_map)
    rng = np.random.default_rng(seed)

    agents = []
    for pool in initial_map.pools:
        if pool.void:
            continue
        actions = [
            (entry, rb)
            for entry in pool.entries
            for rb in range(1, grid.num_rbs + 1)
        ]
        actions.sort(key=lambda a: (a[0].tpl, a[1]))  # index 0 = cheapest TPL, lowest RB
        agents.append(_Agent(region_id=pool.region_id, actions=actions))

    if agents:
        prev_power = 0.0  # the very first step never earns a reward
        for _ in range(episodes):
            max_delta = 0.0
            for _ in range(steps_per_episode):
                chosen = []
                for agent in agents:
                    if exploration > 0 and rng.random() < exploration:
                        a = int(rng.integers(len(agent.actions)))
                    else:
                        a = agent.greedy(agent.state)
                    chosen.append(a)
                joint = [
                    (agent.region_id, *agent.actions[a]) for agent, a in zip(agents, chosen)
                ]
                sinrs, power = hook(joint)
                reward = 1.0 / power if 0.0 < power < prev_power else 0.0
                prev_power = power
                for agent, a, sinr in zip(agents, chosen, sinrs):
                    nxt = quantize_sinr(sinr, grid.target_sinr, sinr_bins)
                    q = agent.values(agent.state)
                    delta = learning_rate * (
                        reward + discount * float(agent.values(nxt).max()) - q[a]
                    )
                    q[a] += delta
                    max_delta = max(max_delta, abs(delta))
                    agent.state = nxt
                if on_step is not None:
                    on_step(reward, power, max_delta)
            if max_delta < tolerance:
                break

    by_region = {}
    for agent in agents:
        states = agent.q.keys() or [0]
        kept = {agent.actions[agent.greedy(s)][0] for s in states}
        by_region[agent.region_id] = tuple(sorted(kept, key=lambda e: e.level))
    new_pools = tuple(
        PowerPool(region_id=p.region_id, entries=by_region.get(p.region_id, ()))
        for p in initial_map.pools
    )
    return replace(initial_map, pools=new_pools)
