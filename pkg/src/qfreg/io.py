"""File formats: count tables, parameter tables, JSON reports and density grids.

CSV files are comma separated, UTF-8, with a mandatory header row.  Reports
are JSON with sorted keys and a ``schema_version`` field.  Floats in CSV are
written with 17 significant digits, and JSON uses Python's shortest
round-trip form, so re-reading any output reproduces the values bitwise.
"""

from __future__ import annotations

import csv
import json
import math
from importlib import resources
from pathlib import Path

import numpy as np

from .density import DensityGrid
from .encoding import HUHistogram
from .errors import DataFormatError, DomainError, InputOutputError
from .qlm import QuantilePairDataset

__all__ = [
    "SCHEMA_VERSION",
    "PARAM_COLUMNS",
    "read_count_table",
    "read_param_table",
    "write_param_table",
    "format_float",
    "dumps_report",
    "write_report",
    "read_report",
    "write_grid",
    "load_lung_params",
    "lung_params_path",
]

SCHEMA_VERSION = 1
PARAM_COLUMNS = ("id", "mu_x", "sigma_x", "mu_y", "sigma_y")


def format_float(v: float) -> str:
    return format(float(v), ".17g")


def _open(path, mode="r"):
    try:
        return open(path, mode, encoding="utf-8", newline="")
    except OSError as exc:
        raise InputOutputError(f"cannot open {path}: {exc.strerror or exc}") from exc


def _read_rows(path) -> list[list[str]]:
    try:
        with _open(path) as fh:
            rows = [r for r in csv.reader(fh)]
    except UnicodeDecodeError as exc:
        raise DataFormatError(f"{path}: not valid UTF-8 ({exc.reason})") from exc
    except csv.Error as exc:
        raise DataFormatError(f"{path}: {exc}") from exc
    # tolerate trailing blank lines
    while rows and not any(c.strip() for c in rows[-1]):
        rows.pop()
    if not rows:
        raise DataFormatError(f"{path}: file is empty (a header row is required)")
    return rows


def _number(text: str, path, row: int, col: int, what: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise DataFormatError(f"{path}: row {row}, column {col}: {what} {text!r} is not a number") from None
    if not math.isfinite(v):
        raise DataFormatError(f"{path}: row {row}, column {col}: {what} must be finite")
    return v


def read_count_table(path, validate_hu: bool = False) -> dict[str, HUHistogram]:
    """Histograms keyed by subject id, in header order.

    Row and column numbers in error messages are 1-based and count the
    header as row 1.  Zero counts are dropped.
    """
    rows = _read_rows(path)
    header = [h.strip() for h in rows[0]]
    if len(header) < 2:
        raise DataFormatError(f"{path}: row 1: need a value column and at least one subject column")
    ids = header[1:]
    if len(set(ids)) != len(ids):
        raise DataFormatError(f"{path}: row 1: duplicate subject identifiers")
    values = []
    counts = [[] for _ in ids]
    prev = -math.inf
    for r, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise DataFormatError(f"{path}: row {r}: expected {len(header)} fields, found {len(row)}")
        v = _number(row[0], path, r, 1, "value")
        if v <= prev:
            raise DataFormatError(f"{path}: row {r}, column 1: values must be strictly increasing")
        prev = v
        values.append(v)
        for c, cell in enumerate(row[1:], start=2):
            x = _number(cell, path, r, c, "count")
            if x < 0 or x != int(x):
                raise DataFormatError(f"{path}: row {r}, column {c}: count {cell!r} is not a nonnegative integer")
            counts[c - 2].append(int(x))
    if not values:
        raise DataFormatError(f"{path}: no data rows")
    out = {}
    for c, sid in enumerate(ids):
        if not any(counts[c]):
            raise DataFormatError(f"{path}: column {c + 2} ({sid}): subject has no positive counts")
        try:
            out[sid] = HUHistogram.from_pairs(values, counts[c], validate_hu=validate_hu)
        except DomainError as exc:
            raise DataFormatError(f"{path}: column {c + 2} ({sid}): {exc}") from exc
    return out


def read_param_table(path) -> QuantilePairDataset:
    rows = _read_rows(path)
    header = tuple(h.strip() for h in rows[0])
    if header != PARAM_COLUMNS:
        raise DataFormatError(f"{path}: row 1: header must be {','.join(PARAM_COLUMNS)}, got {','.join(header)}")
    ids, cols = [], [[] for _ in range(4)]
    for r, row in enumerate(rows[1:], start=2):
        if len(row) != len(PARAM_COLUMNS):
            raise DataFormatError(f"{path}: row {r}: expected {len(PARAM_COLUMNS)} fields, found {len(row)}")
        ids.append(row[0].strip())
        for c in range(4):
            v = _number(row[c + 1], path, r, c + 2, PARAM_COLUMNS[c + 1])
            if c in (1, 3) and not v > 0:
                raise DataFormatError(f"{path}: row {r}, column {c + 2}: {PARAM_COLUMNS[c + 1]} must be positive")
            cols[c].append(v)
    if len(set(ids)) != len(ids):
        raise DataFormatError(f"{path}: duplicate subject identifiers")
    return QuantilePairDataset.from_arrays(*cols, ids=ids)


def write_param_table(path, ids, x, y) -> None:
    """Write one row per subject from aligned Gaussian quantile sequences."""
    with _open(path, "w") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PARAM_COLUMNS)
        for sid, qx, qy in zip(ids, x, y, strict=True):
            w.writerow([sid, format_float(qx.mu), format_float(qx.sigma),
                        format_float(qy.mu), format_float(qy.sigma)])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isnan(v):
            return None
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def dumps_report(doc: dict) -> str:
    body = {"schema_version": SCHEMA_VERSION, **_jsonable(doc)}
    return json.dumps(body, sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_report(path, doc: dict) -> None:
    text = dumps_report(doc)
    with _open(path, "w") as fh:
        fh.write(text)


def read_report(path) -> dict:
    try:
        with _open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc


def write_grid(path, grid: DensityGrid) -> Path:
    """Long-form ``s,t,density`` CSV plus a ``<path>.json`` metadata sidecar."""
    path = Path(path)
    with _open(path, "w") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("s", "t", "density", "weight"))
        for i, s in enumerate(grid.s_axis):
            for j, t in enumerate(grid.t_axis):
                w.writerow((format_float(s), format_float(t), format_float(grid.values[i, j]),
                            format_float(grid.cell_mass[i, j])))
    sidecar = path.with_name(path.name + ".json")
    write_report(sidecar, {"kind": "density_grid", "columns": ["s", "t", "density", "weight"],
                           "shape": list(grid.values.shape), **grid.metadata})
    return sidecar


def lung_params_path():
    return resources.files("qfreg").joinpath("data", "lung_params.csv")


def load_lung_params() -> QuantilePairDataset:
    """The bundled 44-subject lung parameter table."""
    with resources.as_file(lung_params_path()) as p:
        return read_param_table(p)
