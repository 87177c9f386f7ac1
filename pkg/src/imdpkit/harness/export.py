"""JSON/CSV writers with stable field order and 17-significant-digit floats."""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

from .runner import RunRecord

BENCH_HEADER = [
    "benchmark",
    "variant",
    "kind",
    "horizon",
    "states",
    "actions",
    "target",
    "avoid",
    "iterations",
    "max_lower",
    "mean_lower",
    "mean_error",
    "init_lower",
    "init_upper",
    "mc_frequency",
    "mc_delta",
    "verdict",
]


def fmt_float(x: float) -> str:
    text = format(float(x), ".17g")
    if not any(c in text for c in ".en"):
        text += ".0"
    return text


def _encode(obj, indent: int, level: int) -> str:
    pad = "\n" + " " * (indent * (level + 1))
    end = "\n" + " " * (indent * level)
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return "null" if not math.isfinite(obj) else fmt_float(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{json.dumps(str(k))}: {_encode(v, indent, level + 1)}" for k, v in obj.items()]
        return "{" + pad + ("," + pad).join(items) + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in obj):
            return "[" + ", ".join(_encode(v, indent, level + 1) for v in obj) + "]"
        return "[" + pad + ("," + pad).join(_encode(v, indent, level + 1) for v in obj) + end + "]"
    raise TypeError(f"cannot encode {type(obj).__name__}")


def dumps(obj, indent: int = 2) -> str:
    """JSON text; insertion order kept, floats as %.17g, NaN/inf as null."""
    return _encode(obj, indent, 0) + "\n"


def write_json(obj, path) -> Path:
    path = Path(path)
    path.write_text(dumps(obj))
    return path


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return fmt_float(v) if math.isfinite(v) else ""
    return str(v)


def write_csv(header, rows, path) -> Path:
    path = Path(path)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_cell(v) for v in r])
    path.write_text(buf.getvalue())
    return path


def bench_row(rec: RunRecord) -> list:
    """One CSV row per record under :data:`BENCH_HEADER` (first initial point)."""
    s = rec.summary or {}
    c = rec.counts or {}
    first = rec.initial[0] if rec.initial else None
    first = first.__dict__ if first is not None and not isinstance(first, dict) else first
    mc = (first or {}).get("mc") or {}
    return [
        rec.benchmark,
        rec.variant,
        rec.kind,
        rec.horizon,
        c.get("states"),
        c.get("actions"),
        c.get("target"),
        c.get("avoid"),
        rec.iterations,
        s.get("max_lower"),
        s.get("mean_lower"),
        s.get("mean_error"),
        (first or {}).get("lower"),
        (first or {}).get("upper"),
        mc.get("frequency"),
        mc.get("delta"),
        rec.verdict,
    ]


def export_results(record: RunRecord, path, format: str = "json") -> Path:
    """Write the deterministic part of ``record``; timings go to a sibling
    ``*.timings.json`` file."""
    path = Path(path)
    if format == "json":
        write_json(record.deterministic(), path)
    elif format == "csv":
        write_csv(BENCH_HEADER, [bench_row(record)], path)
    else:
        raise ValueError(f"unknown format {format!r}")
    write_json(record.timings, path.with_suffix(".timings.json"))
    return path


def load_results(path) -> RunRecord:
    """Inverse of :func:`export_results` for JSON documents."""
    path = Path(path)
    doc = json.loads(path.read_text())
    rec = RunRecord.from_dict(doc)
    t = path.with_suffix(".timings.json")
    if t.is_file():
        rec.timings = json.loads(t.read_text())
    return rec


def read_csv(path):
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        return header, [row for row in r]
