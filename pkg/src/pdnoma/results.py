"""Result serialization: CSV with '#' metadata lines, versioned JSON.

Both formats embed the resolved config document, the seed and the
package version, so any output file is enough to reproduce its run.
Emission is deterministic — no timestamps, sorted config keys — hence
two emissions of the same run are byte-identical.
"""

import csv
import io
import json
import os
from typing import Sequence

from ._version import __version__
from .config import RunConfig
from .grid import InvalidInputError
from .sim import MetricsSeries

RESULTS_SCHEMA = 1

_SERIES_COLUMNS = (
    "slot",
    "successes",
    "backlog",
    "system_load",
    "collisions",
    "gb_outages",
    "silent",
    "failures",
    "energy",
)


def series_rows(series: MetricsSeries) -> list[dict]:
    """One dict per slot, stable column order."""
    out = []
    for t in range(series.slots):
        out.append(
            {
                "slot": t,
                "successes": int(series.successes[t]),
                "backlog": int(series.backlog[t]),
                "system_load": int(series.system_load[t]),
                "collisions": int(series.collisions[t]),
                "gb_outages": int(series.gb_outages[t]),
                "silent": int(series.silent[t]),
                "failures": int(series.failures[t]),
                "energy": float(series.energy[t]),
            }
        )
    return out


def _columns(rows: Sequence[dict], columns) -> list[str]:
    if columns is not None:
        return list(columns)
    seen: list[str] = []
    for row in rows:
        for key in row:
            if key not in seen:
                seen.append(key)
    return seen


def _metadata(config: RunConfig | None, seed) -> dict:
    meta: dict = {"schema": "pdnoma-results", "schema_version": RESULTS_SCHEMA,
                  "version": __version__}
    if config is not None:
        meta["config"] = config.to_dict()
        meta["defaulted"] = list(config.defaulted)
        meta["seed"] = config.seed if seed is None else seed
    elif seed is not None:
        meta["seed"] = seed
    return meta


def _format_cell(value) -> str:
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return repr(value)  # shortest round-trip decimal, '.' separator
    return str(value)


def emit_results(
    data,
    fmt: str,
    destination,
    *,
    config: RunConfig | None = None,
    seed: int | None = None,
    columns: Sequence[str] | None = None,
) -> None:
    """Write a metrics series or a row table as ``csv`` or ``json``.

    ``data`` is a :class:`MetricsSeries` (one row per slot) or a list
    of dicts (one row per sweep point).  ``destination`` is a path or a
    text file object.
    """
    if isinstance(data, MetricsSeries):
        rows = series_rows(data)
        cols = list(_SERIES_COLUMNS) if columns is None else list(columns)
        kind = "slots"
    else:
        rows = list(data)
        cols = _columns(rows, columns)
        kind = "table"
    meta = _metadata(config, seed)

    if fmt == "csv":
        text = _to_csv(rows, cols, meta)
    elif fmt == "json":
        payload = dict(meta)
        payload["kind"] = kind
        payload["columns"] = cols
        payload["rows"] = rows
        text = json.dumps(payload, sort_keys=True, indent=2) + "\n"
    else:
        raise InvalidInputError(f"format must be csv or json (got {fmt!r})")

    if hasattr(destination, "write"):
        destination.write(text)
    else:
        with open(destination, "w", newline="") as fh:
            fh.write(text)


def _to_csv(rows, cols, meta) -> str:
    buf = io.StringIO()
    for key in ("schema", "schema_version", "version", "seed"):
        if key in meta:
            buf.write(f"# {key}: {meta[key]}\n")
    if "config" in meta:
        buf.write(f"# config: {json.dumps(meta['config'], sort_keys=True)}\n")
        buf.write(f"# defaulted: {json.dumps(meta['defaulted'])}\n")
    writer = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _format_cell(row.get(k, "")) for k in cols})
    return buf.getvalue()


def _parse_cell(text: str):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            continue
    if text in ("true", "false"):
        return text == "true"
    return text


def read_results(path) -> dict:
    """Load an emitted file back into {metadata keys..., rows, columns}."""
    if str(path).endswith(".json"):
        with open(path) as fh:
            return json.load(fh)
    meta: dict = {}
    rows: list[dict] = []
    with open(path, newline="") as fh:
        header: list[str] | None = None
        for line in fh:
            if line.startswith("#"):
                key, _, value = line[1:].partition(":")
                key = key.strip()
                value = value.strip()
                if key in ("config", "defaulted"):
                    meta[key] = json.loads(value)
                else:
                    meta[key] = _parse_cell(value)
                continue
            row = next(csv.reader([line]))
            if header is None:
                header = row
                continue
            rows.append({k: _parse_cell(v) for k, v in zip(header, row)})
    meta["columns"] = header or []
    meta["rows"] = rows
    return meta


def default_outdir() -> str:
    """Output directory for relative destinations (env override)."""
    return os.environ.get("PDNOMA_OUTDIR", ".")


def resolve_destination(name: str | None, default_name: str) -> str:
    """Roots relative output paths in the configured output directory."""
    target = name or default_name
    if os.path.isabs(target):
        return target
    return os.path.join(default_outdir(), target)
