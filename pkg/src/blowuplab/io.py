"""Deterministic CSV/JSON writers.

Floats are written with ``repr`` (shortest round-trip form), JSON keys are
sorted and non-finite floats become the strings ``"nan"``, ``"inf"`` and
``"-inf"``, so identical inputs give byte-identical files.
"""
from __future__ import annotations

import csv
import dataclasses
import enum
import json
import math
from pathlib import Path

import numpy as np

__all__ = ["OUTPUT_SCHEMA", "to_jsonable", "write_json", "read_json", "write_csv", "read_csv"]

OUTPUT_SCHEMA = 1


def _float(x: float):
    x = float(x)
    if math.isfinite(x):
        return x
    return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")


def to_jsonable(obj):
    """Recursively convert dataclasses, enums and numpy values to JSON types."""
    if hasattr(obj, "to_dict") and not isinstance(obj, type):
        return to_jsonable(obj.to_dict())
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return to_jsonable(dataclasses.asdict(obj))
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _float(obj)
    if obj is None or isinstance(obj, str):
        return obj
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def write_json(path, obj, kind: str) -> Path:
    """Write ``{"schema": 1, "kind": kind, **obj}`` with sorted keys."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    body = {"schema": OUTPUT_SCHEMA, "kind": kind, **to_jsonable(obj)}
    path.write_text(json.dumps(body, sort_keys=True, indent=2, allow_nan=False) + "\n")
    return path


def read_json(path) -> dict:
    return json.loads(Path(path).read_text())


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, columns: dict) -> Path:
    """Write equal-length columns under a ``# schema`` comment line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = list(columns)
    cols = [np.asarray(columns[n]) for n in names]
    n = {len(c) for c in cols}
    if len(n) > 1:
        raise ValueError(f"columns differ in length: {dict(zip(names, map(len, cols)))}")
    with path.open("w", newline="") as fh:
        fh.write(f"# schema: {OUTPUT_SCHEMA}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for row in zip(*cols):
            w.writerow([_cell(v) for v in row])
    return path


def read_csv(path) -> dict:
    """Columns of a file written by :func:`write_csv`, as float arrays."""
    with Path(path).open() as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    head, body = rows[0], rows[1:]
    return {h: np.array([float(r[i]) for r in body]) for i, h in enumerate(head)}
