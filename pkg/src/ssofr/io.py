"""CSV and JSON file formats for the command-line surface.

All files are UTF-8 comma-separated with a mandatory header row. Floats are
written with repr so values round-trip exactly. Curves travel in long format
(id, t, value) by default; wide format has one row per curve with the grid
in the header. Writes are atomic (temp file + rename).
"""

from __future__ import annotations

import csv
import io as _io
import os

import numpy as np

from .exceptions import ValidationError


def _fmt(x) -> str:
    return repr(float(x))


def atomic_write_text(path: str, text: str) -> None:
    tmp = f"{path}.tmp-{os.getpid()}"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _read_rows(path: str):
    if not os.path.exists(path):
        raise ValidationError(f"file not found: {path}")
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        rows = [row for row in reader if row]
    if not rows:
        raise ValidationError(f"empty file: {path}")
    return rows


def _parse_float(token: str, path: str):
    try:
        return float(token)
    except ValueError as exc:
        raise ValidationError(f"{path}: cannot parse {token!r} as a number") from exc


def read_curves_long(path: str):
    """Long-format curves (id, t, value) -> (ids, grid, curves)."""
    rows = _read_rows(path)
    header = [h.strip().lower() for h in rows[0]]
    if header[:3] != ["id", "t", "value"]:
        raise ValidationError(f"{path}: expected header id,t,value")
    data: dict = {}
    order = []
    for row in rows[1:]:
        if len(row) < 3:
            raise ValidationError(f"{path}: short row {row!r}")
        cid = row[0].strip()
        t = _parse_float(row[1], path)
        v = _parse_float(row[2], path)
        if cid not in data:
            data[cid] = {}
            order.append(cid)
        data[cid][t] = v
    grids = {tuple(sorted(d.keys())) for d in data.values()}
    if len(grids) != 1:
        raise ValidationError(f"{path}: curves observed on different grids")
    grid = np.array(sorted(next(iter(grids))))
    curves = np.array([[data[cid][t] for t in grid] for cid in order])
    return order, grid, curves


def read_curves_wide(path: str):
    """Wide-format curves (id, t1, t2, ...) -> (ids, grid, curves)."""
    rows = _read_rows(path)
    header = rows[0]
    if header[0].strip().lower() != "id":
        raise ValidationError(f"{path}: first header column must be 'id'")
    grid = np.array([_parse_float(h, path) for h in header[1:]])
    ids, curves = [], []
    for row in rows[1:]:
        if len(row) != len(header):
            raise ValidationError(f"{path}: row length does not match header")
        ids.append(row[0].strip())
        curves.append([_parse_float(v, path) for v in row[1:]])
    return ids, grid, np.array(curves)


def read_response(path: str):
    """Response file (id, y) -> (ids, values)."""
    rows = _read_rows(path)
    header = [h.strip().lower() for h in rows[0]]
    if header[:2] != ["id", "y"]:
        raise ValidationError(f"{path}: expected header id,y")
    ids, vals = [], []
    for row in rows[1:]:
        ids.append(row[0].strip())
        vals.append(_parse_float(row[1], path))
    return ids, np.array(vals)


def read_coords(path: str):
    """Coordinates file (id, lat, lon) -> (ids, lat, lon)."""
    rows = _read_rows(path)
    header = [h.strip().lower() for h in rows[0]]
    if header[:3] != ["id", "lat", "lon"]:
        raise ValidationError(f"{path}: expected header id,lat,lon")
    ids, lat, lon = [], [], []
    for row in rows[1:]:
        ids.append(row[0].strip())
        lat.append(_parse_float(row[1], path))
        lon.append(_parse_float(row[2], path))
    return ids, np.array(lat), np.array(lon)


def read_weights_matrix(path: str):
    """Dense (header = id,<ids...>) or triplet (i,j,w) weight matrix."""
    rows = _read_rows(path)
    header = [h.strip().lower() for h in rows[0]]
    if header[:3] == ["i", "j", "w"]:
        entries = [(r[0].strip(), r[1].strip(), _parse_float(r[2], path)) for r in rows[1:]]
        ids = []
        seen = set()
        for i, j, _ in entries:
            for u in (i, j):
                if u not in seen:
                    seen.add(u)
                    ids.append(u)
        index = {u: k for k, u in enumerate(ids)}
        w = np.zeros((len(ids), len(ids)))
        for i, j, v in entries:
            w[index[i], index[j]] = v
        return ids, w
    if header[0] != "id":
        raise ValidationError(f"{path}: expected dense header starting with 'id' or triplet i,j,w")
    ids = [h.strip() for h in rows[0][1:]]
    mat = []
    row_ids = []
    for row in rows[1:]:
        if len(row) != len(ids) + 1:
            raise ValidationError(f"{path}: dense row length mismatch")
        row_ids.append(row[0].strip())
        mat.append([_parse_float(v, path) for v in row[1:]])
    if row_ids != ids:
        raise ValidationError(f"{path}: dense matrix row ids must match header ids")
    return ids, np.array(mat)


def align_to(ids_ref, ids_other, values: np.ndarray, what: str) -> np.ndarray:
    """Reorder values (indexed by ids_other) into the order of ids_ref."""
    if sorted(ids_ref) != sorted(ids_other):
        raise ValidationError(f"{what}: ids do not match the curves file")
    index = {u: k for k, u in enumerate(ids_other)}
    sel = [index[u] for u in ids_ref]
    return values[sel] if values.ndim == 1 else values[np.ix_(sel, sel)]


def write_csv(path: str, header, rows) -> None:
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(row)
    atomic_write_text(path, buf.getvalue())


def write_curves_long(path: str, ids, grid, curves) -> None:
    rows = [
        (cid, _fmt(t), _fmt(v))
        for cid, curve in zip(ids, curves)
        for t, v in zip(grid, curve)
    ]
    write_csv(path, ("id", "t", "value"), rows)


def write_response(path: str, ids, values) -> None:
    write_csv(path, ("id", "y"), [(i, _fmt(v)) for i, v in zip(ids, values)])


def write_coords(path: str, ids, lat, lon) -> None:
    write_csv(
        path, ("id", "lat", "lon"),
        [(i, _fmt(a), _fmt(b)) for i, a, b in zip(ids, lat, lon)],
    )


def write_weights_matrix(path: str, ids, w: np.ndarray) -> None:
    rows = [
        [ids[i]] + [_fmt(v) for v in w[i]]
        for i in range(len(ids))
    ]
    write_csv(path, ["id"] + list(ids), rows)
