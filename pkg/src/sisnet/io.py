"""CSV and JSON-lines writers. Machine files print floats with 17 significant digits."""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np


def fmt_float(x) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def _json(value) -> str:
    if value is None:
        return "null"
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        x = float(value)
        return fmt_float(x) if math.isfinite(x) else f'"{fmt_float(x)}"'
    if isinstance(value, str):
        import json
        return json.dumps(value)
    if isinstance(value, dict):
        return "{" + ", ".join(f"{_json(str(k))}: {_json(v)}" for k, v in value.items()) + "}"
    if isinstance(value, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_json(v) for v in value) + "]"
    raise TypeError(f"cannot serialise {type(value).__name__}")


def dumps(record: dict) -> str:
    """One JSON object on one line, floats at full precision."""
    return _json(record)


def write_jsonl(path, records) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(dumps(rec) + "\n")
    return path


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt_float(x) if isinstance(x, (float, np.floating)) else x for x in row])
    return path


def write_trajectory(path, t, states, prefix="p") -> Path:
    """Rows ``(t, x_1 ... x_n)``."""
    states = np.asarray(states)
    header = ["t", *(f"{prefix}_{i + 1}" for i in range(states.shape[1]))]
    rows = ([float(ti), *map(float, row)] for ti, row in zip(t, states))
    return write_csv(path, header, rows)


def write_positions(path, t, positions) -> Path:
    """Rows ``(t, agent, z_1 ... z_d)``, agents numbered from 1."""
    positions = np.asarray(positions)
    d = positions.shape[2]
    header = ["t", "agent", *(f"z_{k + 1}" for k in range(d))]
    rows = ([float(ti), i + 1, *map(float, positions[k, i])]
            for k, ti in enumerate(t) for i in range(positions.shape[1]))
    return write_csv(path, header, rows)


def write_trace(path, trace) -> Path:
    """Rows ``(t, value[, block values...])`` of a spectral trace."""
    labels = sorted(trace.block_values)
    header = ["t", "value", *(f"block_{lab}" for lab in labels)]
    rows = ([float(t), float(v), *(float(trace.block_values[lab][k]) for lab in labels)]
            for k, (t, v) in enumerate(zip(trace.t, trace.values)))
    return write_csv(path, header, rows)


def presentation(x: float, digits: int = 2) -> str:
    """Human table cell: anything below 0.001 prints as 0."""
    return "0" if abs(x) < 1e-3 else f"{x:.{digits}f}"
