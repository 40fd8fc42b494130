"""File formats: a binary matrix container and CSV writers.

The container is the 8 magic bytes ``RPCSMAT1`` followed by two little-endian
u32 values (rows, cols) and the entries as row-major little-endian f64.
"""

from __future__ import annotations

import csv
import json
import os
import struct

import numpy as np

__all__ = [
    "MAGIC",
    "save_matrix",
    "load_matrix",
    "write_csv",
    "read_csv",
    "write_metrics_csv",
    "write_json",
    "fmt_float",
]

MAGIC = b"RPCSMAT1"
_HEADER = struct.Struct("<8sII")


def _atomic_path(path):
    return f"{path}.tmp{os.getpid()}"


def save_matrix(path, A):
    A = np.asarray(A, dtype="<f8")
    if A.ndim == 1:
        A = A[:, None]
    if A.ndim != 2:
        raise ValueError("only 2-d arrays can be stored")
    rows, cols = A.shape
    if rows >= 2**32 or cols >= 2**32:
        raise ValueError("matrix too large for u32 dimensions")
    tmp = _atomic_path(path)
    with open(tmp, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, rows, cols))
        fh.write(np.ascontiguousarray(A).tobytes())
    os.replace(tmp, path)


def load_matrix(path):
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) != _HEADER.size:
            raise ValueError(f"{path}: truncated header")
        magic, rows, cols = _HEADER.unpack(head)
        if magic != MAGIC:
            raise ValueError(f"{path}: not a matrix container (bad magic {magic!r})")
        payload = fh.read()
    if len(payload) != 8 * rows * cols:
        raise ValueError(f"{path}: expected {rows}x{cols} entries, found {len(payload) // 8}")
    return np.frombuffer(payload, dtype="<f8").reshape(rows, cols).astype(float)


def fmt_float(x):
    """17 significant digits; ``nan``/``inf`` spelled out."""
    x = float(x)
    if np.isnan(x):
        return "nan"
    if np.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return fmt_float(v)
    return str(v)


def write_csv(path, header, rows):
    """RFC-4180 CSV with a header row; floats at 17 significant digits."""
    tmp = _atomic_path(path)
    with open(tmp, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    os.replace(tmp, path)


def read_csv(path):
    """Header and rows (strings) of a CSV file."""
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        return header, list(r)


def write_metrics_csv(path, metrics):
    from .metrics import METRIC_COLUMNS

    write_csv(path, METRIC_COLUMNS, metrics.rows())


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    raise TypeError(f"cannot serialise {type(o).__name__}")


def write_json(path, obj):
    tmp = _atomic_path(path)
    with open(tmp, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")
    os.replace(tmp, path)
