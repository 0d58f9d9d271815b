"""Run configuration: one self-describing document per simulation.

The document is YAML (JSON works too, being a YAML subset).  Grid
shorthand keys (N, M, ...) may sit at the top level; they are folded
into the ``grid`` section before validation.  Every field the parser
fills with a default is recorded in ``RunConfig.defaulted`` so outputs
can echo exactly what was assumed.
"""

import math
import os
from dataclasses import dataclass, field, fields
from typing import Any

import yaml

from .grid import COLLISION_LIMITED, DECODE_MODES, PowerGrid
from .powermap import (
    Blockage,
    ChannelModel,
    Disk,
    PowerMap,
    Rect,
    build_power_map,
    partition_area,
    trivial_map,
)
from .protocols import ProtocolKind, SemiGfProtocol, ThresholdType

SCHEMES = ("gb", "gf", "semi_gf")
TRAFFIC_KINDS = ("bernoulli", "burst")
MAP_SOURCES = ("trivial", "inline", "file", "generate")

_GRID_SHORTHAND = ("N", "M", "target_sinr", "noise_power", "margin")


class ConfigError(ValueError):
    """A config document broke a constraint; the message names the key."""


@dataclass(frozen=True)
class GridConfig:
    N: int = 2
    M: int = 10
    target_sinr: float = 1.0
    noise_power: float = 1.0
    margin: float = 1.0

    def build(self) -> PowerGrid:
        return PowerGrid.build(
            num_levels=self.N,
            num_rbs=self.M,
            target_sinr=self.target_sinr,
            noise_power=self.noise_power,
            margin=self.margin,
        )


@dataclass(frozen=True)
class SemiGfConfig:
    threshold_type: str = "upper_limit"
    protocol: str = "dynamic"
    violation_prob: float = 0.6
    estimation_window: int = 100
    qos_sinr: float = 1.0
    gb_average_power: float = 1000.0
    fading_severity: float = 0.0905

    def threshold(self) -> ThresholdType:
        return ThresholdType(self.threshold_type)

    def semi_protocol(self) -> SemiGfProtocol:
        return SemiGfProtocol(
            kind=ProtocolKind(self.protocol),
            estimation_window=self.estimation_window,
            violation_prob=self.violation_prob,
        )


@dataclass(frozen=True)
class TrafficConfig:
    kind: str = "bernoulli"
    activation_prob: float = 1.0
    burst_slot: int = 0
    burst_fraction: float = 1.0
    background_prob: float = 0.0
    max_attempts: int = 50


@dataclass(frozen=True)
class BarringConfig:
    enabled: bool = False
    period: int = 100
    load_cap: int | None = None


@dataclass(frozen=True)
class PowerMapConfig:
    source: str = "trivial"
    path: str | None = None
    map: dict | None = None
    rows: int = 1
    cols: int = 1
    area: dict | None = None
    bs: tuple[float, float] = (0.0, 0.0)
    max_tpl: float | None = None
    channel_model: dict | None = None


@dataclass(frozen=True)
class RunConfig:
    grid: GridConfig = GridConfig()
    decode_mode: str = COLLISION_LIMITED
    scheme: str = "gf"
    semi_gf: SemiGfConfig | None = None
    traffic: TrafficConfig = TrafficConfig()
    barring: BarringConfig = BarringConfig()
    power_map: PowerMapConfig | None = None
    total_devices: int = 10
    slots: int = 1000
    seed: int = 0
    defaulted: tuple[str, ...] = field(default=(), compare=False)

    def to_dict(self) -> dict:
        doc: dict[str, Any] = {
            "grid": _plain(self.grid),
            "decode_mode": self.decode_mode,
            "scheme": self.scheme,
            "traffic": _plain(self.traffic),
            "barring": _plain(self.barring),
            "total_devices": self.total_devices,
            "slots": self.slots,
            "seed": self.seed,
        }
        if self.semi_gf is not None:
            doc["semi_gf"] = _plain(self.semi_gf)
        if self.power_map is not None:
            doc["power_map"] = {
                k: (list(v) if isinstance(v, tuple) else v)
                for k, v in _plain(self.power_map).items()
                if v is not None
            }
        return doc


def _plain(dc) -> dict:
    return {f.name: getattr(dc, f.name) for f in fields(dc)}


def _require_mapping(value, where):
    if not isinstance(value, dict):
        raise ConfigError(f"{where} must be a mapping (got {type(value).__name__})")
    return dict(value)


def _pop_typed(section, doc, key, kind, default, defaulted):
    path = f"{section}.{key}" if section else key
    if key not in doc:
        defaulted.append(path)
        return default
    value = doc.pop(key)
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if kind is int and (isinstance(value, bool) or not isinstance(value, int)):
        raise ConfigError(f"{path} must be an integer (got {value!r})")
    if not isinstance(value, kind):
        raise ConfigError(f"{path} must be {kind.__name__} (got {value!r})")
    return value


def _no_leftovers(section, doc):
    if doc:
        key = sorted(doc)[0]
        where = f"'{section}'" if section else "the document root"
        raise ConfigError(f"unknown key '{key}' in {where}")


def _check(cond, message):
    if not cond:
        raise ConfigError(message)


def parse_config(document: dict) -> RunConfig:
    """Validate a config document and apply the documented defaults."""
    doc = _require_mapping(document, "config")
    defaulted: list[str] = []

    grid_doc = _require_mapping(doc.pop("grid", {}), "grid")
    for key in _GRID_SHORTHAND:  # top-level grid shorthand
        if key in doc:
            if key in grid_doc:
                raise ConfigError(f"grid.{key} given both at top level and in 'grid'")
            grid_doc[key] = doc.pop(key)
    grid = GridConfig(
        N=_pop_typed("grid", grid_doc, "N", int, 2, defaulted),
        M=_pop_typed("grid", grid_doc, "M", int, 10, defaulted),
        target_sinr=_pop_typed("grid", grid_doc, "target_sinr", float, 1.0, defaulted),
        noise_power=_pop_typed("grid", grid_doc, "noise_power", float, 1.0, defaulted),
        margin=_pop_typed("grid", grid_doc, "margin", float, 1.0, defaulted),
    )
    _no_leftovers("grid", grid_doc)
    _check(grid.N >= 1, f"grid.N ≥ 1 (got {grid.N})")
    _check(grid.M >= 1, f"grid.M ≥ 1 (got {grid.M})")
    _check(grid.target_sinr > 0, f"grid.target_sinr > 0 (got {grid.target_sinr})")
    _check(grid.noise_power > 0, f"grid.noise_power > 0 (got {grid.noise_power})")
    _check(grid.margin >= 1, f"grid.margin ≥ 1 (got {grid.margin})")

    decode_mode = _pop_typed("", doc, "decode_mode", str, COLLISION_LIMITED, defaulted)
    _check(decode_mode in DECODE_MODES, f"decode_mode must be one of {'|'.join(DECODE_MODES)}")
    scheme = _pop_typed("", doc, "scheme", str, "gf", defaulted)
    _check(scheme in SCHEMES, f"scheme must be one of {'|'.join(SCHEMES)}")

    semi = None
    if "semi_gf" in doc:
        _check(scheme == "semi_gf", "semi_gf section requires scheme: semi_gf")
        sdoc = _require_mapping(doc.pop("semi_gf"), "semi_gf")
        semi = SemiGfConfig(
            threshold_type=_pop_typed("semi_gf", sdoc, "threshold_type", str,
                                      "upper_limit", defaulted),
            protocol=_pop_typed("semi_gf", sdoc, "protocol", str, "dynamic", defaulted),
            violation_prob=_pop_typed("semi_gf", sdoc, "violation_prob", float, 0.6, defaulted),
            estimation_window=_pop_typed("semi_gf", sdoc, "estimation_window", int,
                                         100, defaulted),
            qos_sinr=_pop_typed("semi_gf", sdoc, "qos_sinr", float, 1.0, defaulted),
            gb_average_power=_pop_typed("semi_gf", sdoc, "gb_average_power", float,
                                        1000.0, defaulted),
            fading_severity=_pop_typed("semi_gf", sdoc, "fading_severity", float,
                                       0.0905, defaulted),
        )
        _no_leftovers("semi_gf", sdoc)
        _check(semi.threshold_type in ("upper_limit", "lower_limit"),
               "semi_gf.threshold_type must be upper_limit|lower_limit")
        _check(semi.protocol in ("dynamic", "open_loop"),
               "semi_gf.protocol must be dynamic|open_loop")
        _check(0.0 <= semi.violation_prob <= 1.0,
               f"semi_gf.violation_prob ∈ [0, 1] (got {semi.violation_prob})")
        _check(semi.estimation_window >= 1,
               f"semi_gf.estimation_window ≥ 1 (got {semi.estimation_window})")
        _check(semi.qos_sinr > 0, f"semi_gf.qos_sinr > 0 (got {semi.qos_sinr})")
        _check(semi.gb_average_power > 0,
               f"semi_gf.gb_average_power > 0 (got {semi.gb_average_power})")
        _check(semi.fading_severity > 0,
               f"semi_gf.fading_severity > 0 (got {semi.fading_severity})")
    elif scheme == "semi_gf":
        semi = SemiGfConfig()
        defaulted.append("semi_gf")

    tdoc = _require_mapping(doc.pop("traffic", {}), "traffic")
    if not tdoc:
        defaulted.append("traffic")
    traffic = TrafficConfig(
        kind=_pop_typed("traffic", tdoc, "kind", str, "bernoulli", defaulted),
        activation_prob=_pop_typed("traffic", tdoc, "activation_prob", float, 1.0, defaulted),
        burst_slot=_pop_typed("traffic", tdoc, "burst_slot", int, 0, defaulted),
        burst_fraction=_pop_typed("traffic", tdoc, "burst_fraction", float, 1.0, defaulted),
        background_prob=_pop_typed("traffic", tdoc, "background_prob", float, 0.0, defaulted),
        max_attempts=_pop_typed("traffic", tdoc, "max_attempts", int, 50, defaulted),
    )
    _no_leftovers("traffic", tdoc)
    _check(traffic.kind in TRAFFIC_KINDS, f"traffic.kind must be one of {'|'.join(TRAFFIC_KINDS)}")
    for key in ("activation_prob", "burst_fraction", "background_prob"):
        value = getattr(traffic, key)
        _check(0.0 <= value <= 1.0, f"traffic.{key} ∈ [0, 1] (got {value})")
    _check(traffic.burst_slot >= 0, f"traffic.burst_slot ≥ 0 (got {traffic.burst_slot})")
    _check(traffic.max_attempts >= 1, f"traffic.max_attempts ≥ 1 (got {traffic.max_attempts})")

    bdoc = _require_mapping(doc.pop("barring", {}), "barring")
    if not bdoc:
        defaulted.append("barring")
    enabled = bdoc.pop("enabled", False)
    if not isinstance(enabled, bool):
        raise ConfigError(f"barring.enabled must be a boolean (got {enabled!r})")
    load_cap = bdoc.pop("load_cap", None)
    if load_cap is not None and (isinstance(load_cap, bool) or not isinstance(load_cap, int)):
        raise ConfigError(f"barring.load_cap must be an integer (got {load_cap!r})")
    barring = BarringConfig(
        enabled=enabled,
        period=_pop_typed("barring", bdoc, "period", int, 100, defaulted),
        load_cap=load_cap,
    )
    _no_leftovers("barring", bdoc)
    _check(barring.period >= 1, f"barring.period ≥ 1 (got {barring.period})")
    _check(load_cap is None or load_cap >= 1, f"barring.load_cap ≥ 1 (got {load_cap})")

    pm = None
    if "power_map" in doc:
        pdoc = _require_mapping(doc.pop("power_map"), "power_map")
        source = _pop_typed("power_map", pdoc, "source", str, "trivial", defaulted)
        _check(source in MAP_SOURCES, f"power_map.source must be one of {'|'.join(MAP_SOURCES)}")
        bs = pdoc.pop("bs", [0.0, 0.0])
        _check(isinstance(bs, (list, tuple)) and len(bs) == 2,
               "power_map.bs must be an [x, y] pair")
        max_tpl = pdoc.pop("max_tpl", None)
        pm = PowerMapConfig(
            source=source,
            path=pdoc.pop("path", None),
            map=pdoc.pop("map", None),
            rows=_pop_typed("power_map", pdoc, "rows", int, 1, defaulted),
            cols=_pop_typed("power_map", pdoc, "cols", int, 1, defaulted),
            area=pdoc.pop("area", None),
            bs=(float(bs[0]), float(bs[1])),
            max_tpl=None if max_tpl is None else float(max_tpl),
            channel_model=pdoc.pop("channel_model", None),
        )
        _no_leftovers("power_map", pdoc)
        if source == "file":
            _check(pm.path is not None, "power_map.path required for source: file")
            _check(os.path.exists(pm.path), f"power_map.path does not exist: {pm.path}")
        if source == "inline":
            _check(pm.map is not None, "power_map.map required for source: inline")
        if source == "generate":
            _check(pm.area is not None, "power_map.area required for source: generate")
            _check(pm.rows >= 1 and pm.cols >= 1, "power_map.rows and .cols must be ≥ 1")
    _check(scheme != "semi_gf" or pm is not None,
           "scheme semi_gf requires a power_map section")
    _check(pm is None or scheme == "semi_gf",
           "power_map section requires scheme: semi_gf")

    total_devices = _pop_typed("", doc, "total_devices", int, 10, defaulted)
    slots = _pop_typed("", doc, "slots", int, 1000, defaulted)
    seed = _pop_typed("", doc, "seed", int, 0, defaulted)
    _no_leftovers("", doc)
    _check(total_devices >= 0, f"total_devices ≥ 0 (got {total_devices})")
    _check(slots >= 1, f"slots ≥ 1 (got {slots})")
    _check(seed >= 0, f"seed ≥ 0 (got {seed})")

    config = RunConfig(
        grid=grid,
        decode_mode=decode_mode,
        scheme=scheme,
        semi_gf=semi,
        traffic=traffic,
        barring=barring,
        power_map=pm,
        total_devices=total_devices,
        slots=slots,
        seed=seed,
        defaulted=tuple(defaulted),
    )
    config.grid.build()  # surfaces any remaining grid inconsistency early
    return config


def load_config(path) -> RunConfig:
    with open(path) as fh:
        document = yaml.safe_load(fh)
    if document is None:
        document = {}
    return parse_config(document)


def resolve_power_map(config: RunConfig) -> PowerMap | None:
    """Materialize the configured power map, if any."""
    pm = config.power_map
    if pm is None:
        return None
    grid = config.grid.build()
    if pm.source == "trivial":
        return trivial_map(grid)
    if pm.source == "file":
        return PowerMap.load(pm.path)
    if pm.source == "inline":
        return PowerMap.from_dict(pm.map)
    area_doc = dict(pm.area or {})
    if "radius" in area_doc:
        area = Disk(
            cx=float(area_doc.get("cx", 0.0)),
            cy=float(area_doc.get("cy", 0.0)),
            radius=float(area_doc["radius"]),
        )
    else:
        area = Rect(
            x=float(area_doc.get("x", 0.0)),
            y=float(area_doc.get("y", 0.0)),
            width=float(area_doc["width"]),
            height=float(area_doc["height"]),
        )
    model = channel_model_from_dict(pm.channel_model or {})
    regions = partition_area(area, pm.rows, pm.cols)
    return build_power_map(
        regions, grid, model=model, bs=pm.bs,
        max_tpl=math.inf if pm.max_tpl is None else pm.max_tpl,
    )


def channel_model_from_dict(doc: dict) -> ChannelModel:
    blockages = tuple(
        Blockage(
            vertices=tuple(tuple(float(x) for x in v) for v in b["vertices"]),
            attenuation=float(b["attenuation"]),
        )
        for b in doc.get("blockages", [])
    )
    return ChannelModel(
        ref_distance=float(doc.get("ref_distance", 1.0)),
        ref_gain=float(doc.get("ref_gain", 1.0)),
        path_loss_exponent=float(doc.get("path_loss_exponent", 2.0)),
        antenna_sectors=tuple(float(g) for g in doc.get("antenna_sectors", [1.0])),
        blockages=blockages,
    )
