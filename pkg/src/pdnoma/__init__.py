"""Multi-power-level NOMA random access: exact analytics and simulation.

The package models an uplink where each resource block carries several
superposed received power levels resolved by successive interference
cancellation.  It provides exact and Monte Carlo arrival-rate
analytics, geography-driven transmit-power maps with Q-learning
refinement, per-slot protocol models for grant-based, grant-free and
semi-grant-free access, a load-stabilizing barring controller, and a
deterministic slot-driven simulator behind a CLI.
"""

from ._version import __version__
from .aar import (
    AarResult,
    SelectionModel,
    exact_aar,
    mc_aar,
    optimal_load,
    success_level_mask,
)
from .barring import (
    BarringController,
    BarringState,
    PeriodObservation,
    apply_barring,
    estimate_load,
    update_rate,
)
from .config import (
    ConfigError,
    RunConfig,
    load_config,
    parse_config,
    resolve_power_map,
)
from .grid import (
    COLLISION_LIMITED,
    SINR,
    InvalidInputError,
    InvalidParameterError,
    PowerGrid,
    RbOccupancy,
    SicEntry,
    build_levels,
    decode_collision_limited,
    decode_sinr,
    sic_decode,
)
from .powermap import (
    Blockage,
    ChannelModel,
    Disk,
    PoolEntry,
    PowerMap,
    PowerPool,
    Rect,
    Region,
    build_power_map,
    mean_gain,
    partition_area,
    refine_power_map,
    trivial_map,
)
from .protocols import (
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
from .results import emit_results, read_results
from .sim import (
    MetricsSeries,
    aggregate_sweep,
    barring_demo,
    compare_schemes,
    run_simulation,
    sweep,
)

__all__ = [
    "__version__",
    "AarResult",
    "SelectionModel",
    "exact_aar",
    "mc_aar",
    "optimal_load",
    "success_level_mask",
    "BarringController",
    "BarringState",
    "PeriodObservation",
    "apply_barring",
    "estimate_load",
    "update_rate",
    "ConfigError",
    "RunConfig",
    "load_config",
    "parse_config",
    "resolve_power_map",
    "COLLISION_LIMITED",
    "SINR",
    "InvalidInputError",
    "InvalidParameterError",
    "PowerGrid",
    "RbOccupancy",
    "SicEntry",
    "build_levels",
    "decode_collision_limited",
    "decode_sinr",
    "sic_decode",
    "Blockage",
    "ChannelModel",
    "Disk",
    "PoolEntry",
    "PowerMap",
    "PowerPool",
    "Rect",
    "Region",
    "build_power_map",
    "mean_gain",
    "partition_area",
    "refine_power_map",
    "trivial_map",
    "GbState",
    "ProtocolKind",
    "SemiGfProtocol",
    "SlotResult",
    "ThresholdType",
    "allowed_levels",
    "compute_threshold",
    "prune_power_map",
    "slot_gb",
    "slot_gf",
    "slot_semi_gf",
    "two_point_fading",
    "emit_results",
    "read_results",
    "MetricsSeries",
    "aggregate_sweep",
    "barring_demo",
    "compare_schemes",
    "run_simulation",
    "sweep",
]
