"""Command-line surface.

One subcommand per workflow: grid inspection (``levels``), analytics
(``aar-exact``, ``aar-mc``, ``optimal-load``), power-map tooling
(``powermap generate|refine``), and the simulation reports
(``simulate``, ``sweep``, ``compare``, ``barring-demo``).  Report
commands write delimited output plus a rendered PNG next to it.

Exit codes: 0 success, 2 configuration/validation errors, 1 I/O or
unexpected runtime errors.  Relative output paths land in the
directory named by the PDNOMA_OUTDIR environment variable.
"""

import argparse
import math
import os
import sys

import yaml

from ._version import __version__
from .aar import exact_aar, mc_aar, optimal_load
from .config import ConfigError, channel_model_from_dict, parse_config
from .grid import DECODE_MODES, InvalidInputError, InvalidParameterError, PowerGrid
from .powermap import (
    Disk,
    PowerMap,
    Rect,
    build_power_map,
    partition_area,
    refine_power_map,
)
from .plots import plot_barring, plot_compare, plot_sweep
from .results import emit_results, resolve_destination
from .sim import aggregate_sweep, barring_demo, compare_schemes, run_simulation, sweep


def _add_grid_args(parser: argparse.ArgumentParser):
    parser.add_argument("-N", "--levels", type=int, default=2,
                        help="received power levels per RB (default 2)")
    parser.add_argument("-M", "--rbs", type=int, default=10,
                        help="resource blocks (default 10)")
    parser.add_argument("--target-sinr", type=float, default=1.0)
    parser.add_argument("--noise-power", type=float, default=1.0)
    parser.add_argument("--margin", type=float, default=1.0)
    parser.add_argument("--decode-mode", choices=DECODE_MODES, default=DECODE_MODES[0])


def _grid_from_args(args) -> PowerGrid:
    return PowerGrid.build(
        num_levels=args.levels,
        num_rbs=args.rbs,
        target_sinr=args.target_sinr,
        noise_power=args.noise_power,
        margin=args.margin,
    )


def _add_config_args(parser: argparse.ArgumentParser):
    parser.add_argument("--config", required=True, help="YAML/JSON run config")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a scalar config field (dotted keys)")


def _load_doc(args) -> dict:
    with open(args.config) as fh:
        doc = yaml.safe_load(fh) or {}
    for item in args.set:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE (got {item!r})")
        target = doc
        *parents, leaf = key.split(".")
        for part in parents:
            target = target.setdefault(part, {})
            if not isinstance(target, dict):
                raise ConfigError(f"--set key {key!r} does not name a config field")
        target[leaf] = yaml.safe_load(raw)
    return doc


def _parse_values(spec: str) -> list:
    """'1:60' / '10:60:5' inclusive int ranges, else comma-separated scalars."""
    if ":" in spec:
        parts = [int(p) for p in spec.split(":")]
        if len(parts) == 2:
            start, stop, step = parts[0], parts[1], 1
        elif len(parts) == 3:
            start, stop, step = parts
        else:
            raise ConfigError(f"value range must be START:STOP[:STEP] (got {spec!r})")
        if step < 1 or stop < start:
            raise ConfigError(f"empty value range {spec!r}")
        return list(range(start, stop + 1, step))
    return [yaml.safe_load(p) for p in spec.split(",") if p != ""]


def _parse_area(spec: str):
    kind, _, rest = spec.partition(":")
    nums = [float(x) for x in rest.split(",")] if rest else []
    if kind == "rect" and len(nums) == 2:
        return Rect(0.0, 0.0, nums[0], nums[1])
    if kind == "rect" and len(nums) == 4:
        return Rect(*nums)
    if kind == "disk" and len(nums) == 1:
        return Disk(0.0, 0.0, nums[0])
    if kind == "disk" and len(nums) == 3:
        return Disk(*nums)
    raise ConfigError(
        f"--area must be rect:W,H | rect:X,Y,W,H | disk:R | disk:CX,CY,R (got {spec!r})"
    )


def _emit(data, args, default_name, config=None, columns=None) -> str:
    fmt = getattr(args, "format", None)
    out = getattr(args, "out", None)
    if fmt is None:
        fmt = "json" if (out or "").endswith(".json") else "csv"
    dest = resolve_destination(out, f"{default_name}.{fmt}")
    emit_results(data, fmt, dest, config=config, columns=columns)
    print(f"wrote {dest}")
    return dest


def _cmd_levels(args) -> int:
    grid = _grid_from_args(args)
    print("level,received_power")
    for i, power in enumerate(grid.levels, start=1):
        print(f"{i},{power!r}")
    return 0


def _cmd_aar_exact(args) -> int:
    grid = _grid_from_args(args)
    r = exact_aar(args.n, grid, decode_mode=args.decode_mode)
    print(f"n={args.n} aar_per_slot={r.expected_successes_per_slot!r} "
          f"aar_per_rb={r.per_rb!r}")
    return 0


def _cmd_aar_mc(args) -> int:
    grid = _grid_from_args(args)
    r = mc_aar(args.n, grid, decode_mode=args.decode_mode,
               trials=args.trials, seed=args.seed)
    print(f"n={args.n} aar_per_slot={r.expected_successes_per_slot!r} "
          f"aar_per_rb={r.per_rb!r} stderr={r.stderr!r} trials={r.trials}")
    return 0


def _cmd_optimal_load(args) -> int:
    grid = _grid_from_args(args)
    n_star, aar_max = optimal_load(grid, args.decode_mode, n_max=args.n_max)
    print(f"n_star={n_star} aar_max={aar_max!r}")
    return 0


def _cmd_powermap_generate(args) -> int:
    grid = _grid_from_args(args)
    model = channel_model_from_dict(
        {
            "ref_distance": args.ref_distance,
            "ref_gain": args.ref_gain,
            "path_loss_exponent": args.path_loss_exponent,
            "antenna_sectors": [float(g) for g in args.sectors.split(",")],
        }
    )
    regions = partition_area(_parse_area(args.area), args.rows, args.cols)
    bs = tuple(float(x) for x in args.bs.split(","))
    if len(bs) != 2:
        raise ConfigError(f"--bs must be X,Y (got {args.bs!r})")
    pmap = build_power_map(
        regions, grid, model=model, bs=bs,
        max_tpl=math.inf if args.max_tpl is None else args.max_tpl,
    )
    dest = resolve_destination(args.out, "powermap.json")
    pmap.save(dest)
    void = sum(1 for pool in pmap.pools if pool.void)
    print(f"wrote {dest} ({len(pmap.regions)} regions, {void} void pools)")
    return 0


def _cmd_powermap_refine(args) -> int:
    pmap = PowerMap.load(args.map)
    refined = refine_power_map(
        pmap,
        episodes=args.episodes,
        exploration=args.exploration,
        learning_rate=args.learning_rate,
        discount=args.discount,
        seed=args.seed,
    )
    dest = resolve_destination(args.out, "powermap_refined.json")
    refined.save(dest)
    before = sum(len(p.entries) for p in pmap.pools)
    after = sum(len(p.entries) for p in refined.pools)
    print(f"wrote {dest} (pool entries {before} -> {after})")
    return 0


def _cmd_simulate(args) -> int:
    cfg = parse_config(_load_doc(args))
    series = run_simulation(cfg)
    summary = series.summary()
    for key in ("slots", "aar", "mean_load", "collision_rate", "outage_rate",
                "drops", "energy_per_success"):
        print(f"{key}={summary[key]}")
    if cfg.defaulted:
        print(f"defaulted: {', '.join(cfg.defaulted)}")
    if args.out or args.format:
        _emit(series, args, "simulate", config=cfg)
    return 0


def _cmd_sweep(args) -> int:
    cfg = parse_config(_load_doc(args))
    values = _parse_values(args.values)
    rows = sweep(cfg, args.axis, values, replications=args.replications,
                 workers=args.workers)
    agg = aggregate_sweep(rows)
    for row in agg:
        print(f"{args.axis}={row['value']} aar={row['aar']:.4f} "
              f"±{row['aar_std']:.4f} (x{row['replications']})")
    dest = _emit(rows, args, "sweep", config=cfg)
    if args.plot:
        png = os.path.splitext(dest)[0] + ".png"
        print(f"wrote {plot_sweep(agg, args.axis, png)}")
    return 0


def _cmd_compare(args) -> int:
    cfg = parse_config(_load_doc(args))
    table = compare_schemes(cfg, _parse_values(args.n_values),
                            replications=args.replications, workers=args.workers)
    header = ("n", "gb", "gf", "semi_dynamic", "semi_open_loop")
    print(",".join(header))
    for row in table:
        print(",".join(f"{row[k]:.4f}" if k != "n" else str(row[k]) for k in header))
    dest = _emit(table, args, "compare", config=cfg)
    png = os.path.splitext(dest)[0] + ".png"
    print(f"wrote {plot_compare(table, png)}")
    return 0


def _cmd_barring_demo(args) -> int:
    cfg = parse_config(_load_doc(args))
    demo = barring_demo(cfg, _parse_values(args.n_values),
                        replications=args.replications, workers=args.workers)
    print(f"n_star={demo['n_star']} aar_max={demo['aar_max']:.4f}")
    for row in demo["rows"]:
        print(f"n={row['n']} aar_barred={row['aar_barred']:.4f} "
              f"aar_unbarred={row['aar_unbarred']:.4f} load={row['load_barred']:.1f}")
    dest = _emit(demo["rows"], args, "barring_demo", config=cfg)
    stem = os.path.splitext(dest)[0]
    burst_rows = [
        {"period": i, "load": load, "aar": aar}
        for i, (load, aar) in enumerate(
            zip(demo["burst"]["load_per_period"], demo["burst"]["aar_per_period"])
        )
    ]
    emit_results(burst_rows, "csv", stem + "_burst.csv", config=cfg,
                 columns=("period", "load", "aar"))
    print(f"wrote {stem}_burst.csv")
    print(f"wrote {plot_barring(demo, stem + '.png')}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pdnoma",
        description="Multi-power-level NOMA random access: analytics and simulation",
    )
    parser.add_argument("--version", action="version", version=f"pdnoma {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("levels", help="print the constructed received power levels")
    _add_grid_args(p)
    p.set_defaults(handler=_cmd_levels)

    p = sub.add_parser("aar-exact", help="exact AAR for n contenders")
    _add_grid_args(p)
    p.add_argument("-n", type=int, required=True, help="contenders per slot")
    p.set_defaults(handler=_cmd_aar_exact)

    p = sub.add_parser("aar-mc", help="Monte Carlo AAR estimate")
    _add_grid_args(p)
    p.add_argument("-n", type=int, required=True)
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(handler=_cmd_aar_mc)

    p = sub.add_parser("optimal-load", help="device count maximizing the AAR")
    _add_grid_args(p)
    p.add_argument("--n-max", type=int, default=100)
    p.set_defaults(handler=_cmd_optimal_load)

    p = sub.add_parser("powermap", help="power map tooling")
    pm_sub = p.add_subparsers(dest="powermap_command", required=True)

    g = pm_sub.add_parser("generate", help="partition an area and assign power pools")
    _add_grid_args(g)
    g.add_argument("--area", required=True,
                   help="rect:W,H | rect:X,Y,W,H | disk:R | disk:CX,CY,R")
    g.add_argument("--rows", type=int, default=4)
    g.add_argument("--cols", type=int, default=4)
    g.add_argument("--bs", default="0,0", help="base station X,Y (default 0,0)")
    g.add_argument("--max-tpl", type=float, default=None)
    g.add_argument("--ref-distance", type=float, default=1.0)
    g.add_argument("--ref-gain", type=float, default=1.0)
    g.add_argument("--path-loss-exponent", type=float, default=2.0)
    g.add_argument("--sectors", default="1.0", help="comma-separated sector gains")
    g.add_argument("-o", "--out", default=None)
    g.set_defaults(handler=_cmd_powermap_generate)

    r = pm_sub.add_parser("refine", help="Q-learning refinement of an existing map")
    r.add_argument("--map", required=True, help="power map JSON file")
    r.add_argument("--episodes", type=int, default=200)
    r.add_argument("--exploration", type=float, default=0.1)
    r.add_argument("--learning-rate", type=float, default=0.1)
    r.add_argument("--discount", type=float, default=0.9)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("-o", "--out", default=None)
    r.set_defaults(handler=_cmd_powermap_refine)

    p = sub.add_parser("simulate", help="run one configured simulation")
    _add_config_args(p)
    p.add_argument("-o", "--out", default=None)
    p.add_argument("--format", choices=("csv", "json"), default=None)
    p.set_defaults(handler=_cmd_simulate)

    p = sub.add_parser("sweep", help="rerun a config across one axis")
    _add_config_args(p)
    p.add_argument("--axis", required=True, help="dotted config field, e.g. total_devices")
    p.add_argument("--values", required=True, help="comma list or START:STOP[:STEP]")
    p.add_argument("--replications", type=int, default=1)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("-o", "--out", default=None)
    p.add_argument("--format", choices=("csv", "json"), default=None)
    p.add_argument("--plot", action="store_true", help="also render a PNG")
    p.set_defaults(handler=_cmd_sweep)

    p = sub.add_parser("compare", help="GB/GF/semi-GF AAR table over device counts")
    _add_config_args(p)
    p.add_argument("--n-values", default="1:60")
    p.add_argument("--replications", type=int, default=1)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("-o", "--out", default=None)
    p.add_argument("--format", choices=("csv", "json"), default=None)
    p.set_defaults(handler=_cmd_compare)

    p = sub.add_parser("barring-demo", help="with/without-barring pair plus burst drain")
    _add_config_args(p)
    p.add_argument("--n-values", default="20,50,100,150,200")
    p.add_argument("--replications", type=int, default=1)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("-o", "--out", default=None)
    p.add_argument("--format", choices=("csv", "json"), default=None)
    p.set_defaults(handler=_cmd_barring_demo)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except (ConfigError, InvalidParameterError, InvalidInputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
