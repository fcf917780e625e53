"""CSV/JSON writers shared by the analysis modules."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np


def write_dense_csv(path, row_axis, col_axis, matrix, corner: str = "row\\col") -> None:
    """Dense matrix with one header row of column-axis values.

    Each following line starts with its row-axis value.
    """
    matrix = np.asarray(matrix)
    if matrix.shape != (len(row_axis), len(col_axis)):
        raise ValueError("matrix shape does not match the axes")
    header = ",".join([corner] + ["%.17g" % c for c in np.asarray(col_axis, dtype=float)])
    body = np.column_stack([np.asarray(row_axis, dtype=float), matrix.astype(float)])
    np.savetxt(path, body, fmt="%.17g", delimiter=",", header=header, comments="")


def read_dense_csv(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    cols = np.array([float(c) for c in rows[0][1:]])
    body = np.array([[float(v) for v in r] for r in rows[1:]])
    return body[:, 0], cols, body[:, 1:]


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, complex):
        return {"re": value.real, "im": value.imag}
    return value


def write_json(path, payload) -> None:
    Path(path).write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")
