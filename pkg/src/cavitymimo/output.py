"""Deterministic JSON/CSV writers.

Floats are written with ``repr`` (shortest round-trip decimal).  Files carry
no timestamps, so identical inputs give byte-identical outputs.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from . import __version__

ARTIFACT = "cavitymimo"


def to_builtin(value):
    """Recursively convert numpy scalars/arrays and non-finite floats for JSON."""
    if isinstance(value, dict):
        return {str(k): to_builtin(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_builtin(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_builtin(v) for v in value.tolist()]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def envelope(command: str, config: dict, payload: dict) -> dict:
    return {"artifact": ARTIFACT, "version": __version__, "command": command,
            "config": config, **payload}


def dumps(document: dict) -> str:
    return json.dumps(to_builtin(document), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path: Path, document: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(document), encoding="utf-8")
    return path


def format_number(x) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    return repr(x)


def write_csv(path: Path, header: list[str], columns, command: str, config: dict) -> Path:
    """Write equal-length numeric columns; ``# `` comment lines carry version and config."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cols = [np.asarray(c, dtype=float) for c in columns]
    if len({c.size for c in cols}) > 1:
        raise ValueError("CSV columns must have equal length")
    lines = [
        f"# artifact: {ARTIFACT} {__version__}",
        f"# command: {command}",
        "# config: " + json.dumps(to_builtin(config), sort_keys=True, allow_nan=False),
        ",".join(header),
    ]
    for row in zip(*cols):
        lines.append(",".join(format_number(v) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_csv(path):
    """Read a CSV written by :func:`write_csv`; returns ``(header, array)``."""
    with open(path, encoding="utf-8") as fh:
        rows = [ln.rstrip("\n") for ln in fh if not ln.startswith("#")]
    header = rows[0].split(",")
    data = np.array([[float(v) for v in r.split(",")] for r in rows[1:]], dtype=float)
    return header, data.reshape(-1, len(header))
