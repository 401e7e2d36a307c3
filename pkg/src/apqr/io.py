"""File formats: CSV curves and tables, JSON model documents.

Curves are stored one per row under a header row holding the grid. Numbers
are written with 17 significant digits so that a save/load cycle returns
the same doubles.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .basis import BasisMatrix, CurveSet
from .errors import MissingSourceError, ParseError, ShapeError, VersionError
from .model import FittedQuantileModel

SCHEMA_VERSION = 1
FLOAT_FORMAT = "%.17g"


def _fmt(x) -> str:
    return FLOAT_FORMAT % x


def _require(path) -> Path:
    path = Path(path)
    if not path.is_file():
        raise MissingSourceError(f"no such file: {path}")
    return path


def _parse_row(cells, line):
    out = []
    for col, cell in enumerate(cells, start=1):
        try:
            v = float(cell)
        except ValueError:
            raise ParseError(f"non-numeric cell {cell.strip()!r}", line, col) from None
        if not math.isfinite(v):
            raise ParseError(f"non-finite cell {cell.strip()!r}", line, col)
        out.append(v)
    return out


def _read_table(path):
    """Numeric rows of a CSV file after its header, with ragged-row checks."""
    path = _require(path)
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh)]
    if not rows:
        raise ParseError(f"{path} is empty", 1)
    header = rows[0]
    width = len(header)
    data = []
    for i, cells in enumerate(rows[1:], start=2):
        if not cells or all(not c.strip() for c in cells):
            continue
        if len(cells) != width:
            raise ParseError(f"row has {len(cells)} cells, header has {width}", i, len(cells))
        data.append(_parse_row(cells, i))
    return header, np.array(data, dtype=float).reshape(len(data), width)


def parse_grid(cells, line=1):
    """Grid values from a header row, rescaled onto ``[0, 1]`` if needed.

    Returns ``(grid, (t_first, t_last))`` with the original endpoints.
    """
    raw = np.array(_parse_row(cells, line), dtype=float)
    if raw.size < 2:
        raise ParseError("grid header needs at least 2 points", line)
    for j in range(1, raw.size):
        if raw[j] <= raw[j - 1]:
            raise ParseError("grid is not strictly increasing", line, j + 1)
    lo, hi = float(raw[0]), float(raw[-1])
    if lo == 0.0 and hi == 1.0:
        return raw, (lo, hi)
    grid = (raw - lo) / (hi - lo)
    grid[0], grid[-1] = 0.0, 1.0
    return grid, (lo, hi)


def load_curves(path) -> CurveSet:
    header, data = _read_table(path)
    grid, rng = parse_grid(header)
    if data.shape[0] == 0:
        raise ParseError(f"{path} holds a grid but no curves", 2)
    return CurveSet(grid, data, grid_range=rng)


def save_curves(path, Z: CurveSet) -> None:
    lo, hi = Z.grid_range
    grid = Z.grid if (lo, hi) == (0.0, 1.0) else lo + Z.grid * (hi - lo)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([_fmt(t) for t in grid])
        for row in Z.curves:
            w.writerow([_fmt(v) for v in row])


def load_matrix(path) -> tuple[list, np.ndarray]:
    """Named numeric columns, e.g. scalar covariates."""
    header, data = _read_table(path)
    return [h.strip() for h in header], data


def load_vector(path) -> np.ndarray:
    header, data = _read_table(path)
    if data.shape[1] != 1:
        raise ParseError(f"{path} should hold a single column, found {data.shape[1]}", 1)
    return data[:, 0]


def save_vector(path, values, name: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(name + "\n")
        for v in np.asarray(values, dtype=float).ravel():
            fh.write(_fmt(v) + "\n")


def save_table(path, rows, columns) -> None:
    """Write dict rows; floats use the round-trip format."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) if isinstance(r[c], float) else r[c] for c in columns])


def _floats(a):
    return [float(v) for v in np.asarray(a, dtype=float).ravel(order="F")]


def model_to_dict(model: FittedQuantileModel) -> dict:
    C = model.basis.vectors
    return {
        "schema_version": SCHEMA_VERSION,
        "tau": float(model.tau),
        "method": model.method,
        "basis_kind": model.basis.kind,
        "seed": model.seed,
        "K": int(C.shape[1]),
        "d": int(C.shape[0]),
        "alpha": float(model.alpha),
        "beta": _floats(model.beta),
        "gamma": _floats(model.gamma),
        "C": _floats(C),
        "grid": _floats(model.grid),
        "grid_range": [float(v) for v in model.grid_range],
        "center": _floats(model.center),
        "scale": _floats(model.scale),
    }


def model_from_dict(doc: dict) -> FittedQuantileModel:
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise VersionError(f"model schema version {version!r}, this build reads {SCHEMA_VERSION}")
    try:
        K, d = int(doc["K"]), int(doc["d"])
        C = np.array(doc["C"], dtype=float).reshape((d, K), order="F")
        basis = BasisMatrix(C, doc["basis_kind"], np.array(doc["grid"], dtype=float))
        return FittedQuantileModel(
            tau=doc["tau"], alpha=doc["alpha"], beta=np.array(doc["beta"], dtype=float),
            basis=basis, gamma=np.array(doc["gamma"], dtype=float),
            center=np.array(doc["center"], dtype=float),
            scale=np.array(doc["scale"], dtype=float), method=doc["method"],
            seed=doc.get("seed"), grid_range=tuple(doc.get("grid_range", (0.0, 1.0))),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ShapeError):
            raise
        raise ParseError(f"malformed model document: {exc}") from None


def save_model(path, model: FittedQuantileModel) -> None:
    # json writes floats with repr, the shortest string that round-trips
    Path(path).write_text(json.dumps(model_to_dict(model), indent=1) + "\n")


def load_model(path) -> FittedQuantileModel:
    path = _require(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"model document is not JSON: {exc.msg}", exc.lineno, exc.colno) from None
    return model_from_dict(doc)


def dump_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")
