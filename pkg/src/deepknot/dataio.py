"""Reading point files and writing run artifacts."""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
import warnings
from pathlib import Path

import numpy as np

from .spline import PointSet, chord_length_params


class DataFormatError(ValueError):
    """Input data could not be parsed into a point set."""


def _is_number(tok: str) -> bool:
    try:
        float(tok)
    except ValueError:
        return False
    return True


def _read_table(text: str) -> tuple[list[str] | None, np.ndarray]:
    rows = [r for r in csv.reader(io.StringIO(text)) if r and any(c.strip() for c in r)]
    if not rows:
        raise DataFormatError("no data rows")
    header = None
    if not all(_is_number(c) for c in rows[0]):
        header = [c.strip() for c in rows[0]]
        rows = rows[1:]
    width = len(rows[0]) if rows else 0
    for i, r in enumerate(rows):
        if len(r) != width:
            raise DataFormatError(f"ragged row {i + 1}: expected {width} columns, got {len(r)}")
    try:
        data = np.array([[float(c) for c in r] for r in rows], dtype=float)
    except ValueError as e:
        raise DataFormatError(f"non-numeric entry: {e}") from None
    return header, data.reshape(len(rows), width)


def _read_json(text: str) -> tuple[np.ndarray, np.ndarray | None]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise DataFormatError(f"invalid JSON: {e}") from None
    params = None
    if isinstance(doc, dict):
        if "points" not in doc:
            raise DataFormatError('JSON document needs a "points" array')
        params = doc.get("params")
        doc = doc["points"]
    try:
        pts = np.array(doc, dtype=float)
    except (TypeError, ValueError):
        raise DataFormatError("ragged or non-numeric point array") from None
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.ndim != 2:
        raise DataFormatError("points must be a list of coordinate lists")
    return pts, None if params is None else np.asarray(params, dtype=float)


def collapse_duplicates(points: np.ndarray, params: np.ndarray | None = None):
    """Drop points equal to their predecessor."""
    keep = np.ones(points.shape[0], dtype=bool)
    keep[1:] = np.any(np.diff(points, axis=0) != 0, axis=1)
    dropped = int((~keep).sum())
    if dropped:
        warnings.warn(f"collapsed {dropped} duplicate consecutive point(s)", stacklevel=3)
    return points[keep], None if params is None else params[keep]


def load_points(path, fmt: str | None = None, params_column: int | None = None) -> PointSet:
    """Load points from comma-separated text or a JSON point array.

    A header row is detected automatically; a column named ``s`` (or the
    column index given by ``params_column``) supplies parameter values,
    which are affinely mapped to ``[0, 1]``.  Otherwise parameters follow
    accumulated chord length.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise OSError(f"cannot read {path}: {e.strerror or e}") from e
    fmt = fmt or ("json" if path.suffix.lower() == ".json" else "csv")
    params = None
    if fmt == "json":
        pts, params = _read_json(text)
    elif fmt in ("csv", "txt"):
        header, data = _read_table(text)
        if params_column is None and header is not None and "s" in header:
            params_column = header.index("s")
        if params_column is not None:
            if not 0 <= params_column < data.shape[1]:
                raise DataFormatError(f"params column {params_column} out of range")
            params = data[:, params_column]
            data = np.delete(data, params_column, axis=1)
        pts = data
    else:
        raise DataFormatError(f"unknown format {fmt!r}")
    if pts.shape[1] == 0:
        raise DataFormatError("no coordinate columns")
    if params is not None and params.shape != (pts.shape[0],):
        raise DataFormatError("params length does not match the number of points")
    pts, params = collapse_duplicates(pts, params)
    if pts.shape[0] < 2:
        raise DataFormatError("need at least two distinct points")
    if params is None:
        s = chord_length_params(pts)
    else:
        lo, hi = params[0], params[-1]
        if not hi > lo:
            raise DataFormatError("parameter column must increase")
        s = (params - lo) / (hi - lo)
        s[0], s[-1] = 0.0, 1.0
    return PointSet(pts, s, {"name": str(path)})


def atomic_write(path: Path, data: str | bytes) -> None:
    """Write through a temporary file in the same directory, then rename."""
    path = Path(path)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def coord_names(dim: int) -> list[str]:
    return ["x", "y", "z"][:dim] if dim <= 3 else [f"x{i + 1}" for i in range(dim)]


def points_csv(ps: PointSet) -> str:
    """Parameter column ``s`` followed by coordinates."""
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["s"] + coord_names(ps.dim))
    for s, p in zip(ps.params, ps.points):
        w.writerow([repr(float(s))] + [repr(float(v)) for v in p])
    return out.getvalue()


def loss_csv(counts: list[int], per_count: dict[int, list[float]], total: list[float]) -> str:
    cols = sorted(counts)
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["iter"] + [f"k{c}" for c in cols] + ["total"])
    for i, t in enumerate(total):
        w.writerow([i] + [repr(float(per_count[c][i])) for c in cols] + [repr(float(t))])
    return out.getvalue()


def curve_csv(t: np.ndarray, curve: np.ndarray) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["t"] + coord_names(curve.shape[1]))
    for ti, p in zip(t, curve):
        w.writerow([repr(float(ti))] + [repr(float(v)) for v in p])
    return out.getvalue()
