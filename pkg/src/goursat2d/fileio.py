"""Lossless CSV/JSON round trips for grids, fields, and reports.

Floats are written with 17 significant digits, which reloads binary64
bit-exactly, so residual norms recomputed from an emitted grid match the
report.  Files are written atomically — a temp file in the target directory,
then ``os.replace`` — so readers never observe a partial file.  Reports are
single JSON objects with insertion-ordered keys and no timestamps: repeated
runs with the same inputs must produce byte-identical bytes.

Grid bundles are row-major in i then j with header
``i,j,x,y,g_1..g_n,z_1..z_n,zx_1..zx_n,zy_1..zy_n``; plain fields use
``i,j,x,y,v_1..v_n``.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from .errors import SchemaError, ShapeError
from .grid import GridField, StateTriple, build_grid


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _atomic_write_text(path: str | os.PathLike, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=str(path.parent), prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _component_names(prefix: str, n: int) -> list[str]:
    return [f"{prefix}_{k + 1}" for k in range(n)]


def _parse_rows(path: Path, expected_cols: list[str]):
    """Header-checked rows of floats/ints; yields (i, j, x, y, numbers)."""
    text = path.read_text(encoding="utf-8")
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise SchemaError("file is empty", path=str(path))
    header = lines[0].split(",")
    if header != expected_cols:
        raise SchemaError(
            f"header mismatch: expected {','.join(expected_cols)!r}, "
            f"got {lines[0]!r}",
            path=str(path),
        )
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != len(expected_cols):
            raise SchemaError(
                f"line {lineno}: expected {len(expected_cols)} fields, got {len(parts)}",
                path=str(path),
            )
        try:
            i, j = int(parts[0]), int(parts[1])
            numbers = [float(p) for p in parts[2:]]
        except ValueError as exc:
            raise SchemaError(f"line {lineno}: {exc}", path=str(path)) from exc
        yield i, j, numbers[0], numbers[1], numbers[2:]


def _infer_grid(path: Path, count: int):
    P = math.isqrt(count)
    if P * P != count or P < 2:
        raise SchemaError(
            f"{count} data rows do not form a square node grid", path=str(path)
        )
    return build_grid(P - 1)


def _fill(path: Path, rows, n_values: int):
    rows = list(rows)
    grid = _infer_grid(path, len(rows))
    P = grid.npoints
    data = np.full((P, P, n_values), np.nan)
    for i, j, x, y, vals in rows:
        if not (0 <= i < P and 0 <= j < P):
            raise SchemaError(f"node index ({i}, {j}) outside 0..{P - 1}", path=str(path))
        if abs(x - grid.nodes[i]) > 1e-12 or abs(y - grid.nodes[j]) > 1e-12:
            raise SchemaError(
                f"node ({i}, {j}) claims coordinates ({x}, {y}), "
                f"grid has ({grid.nodes[i]}, {grid.nodes[j]})",
                path=str(path),
            )
        data[i, j, :] = vals
    if np.isnan(data).any():
        raise SchemaError("duplicate or missing node rows", path=str(path))
    return grid, data


# -- plain fields (v on the nodes) --------------------------------------------

def write_field_csv(path: str | os.PathLike, field: GridField) -> None:
    """Emit ``i,j,x,y,v_1..v_n`` rows, row-major in i then j."""
    grid, vals, n = field.grid, field.values, field.n
    cols = ["i", "j", "x", "y", *_component_names("v", n)]
    lines = [",".join(cols)]
    for i in range(grid.npoints):
        for j in range(grid.npoints):
            cells = [str(i), str(j), _fmt(grid.nodes[i]), _fmt(grid.nodes[j])]
            cells += [_fmt(vals[i, j, k]) for k in range(n)]
            lines.append(",".join(cells))
    _atomic_write_text(path, "\n".join(lines) + "\n")


def read_field_csv(path: str | os.PathLike) -> GridField:
    path = Path(path)
    text_header = path.read_text(encoding="utf-8").splitlines()
    if not text_header:
        raise SchemaError("file is empty", path=str(path))
    names = text_header[0].split(",")
    n = sum(1 for c in names if c.startswith("v_"))
    if n < 1:
        raise SchemaError(f"no v_k columns in header {text_header[0]!r}", path=str(path))
    cols = ["i", "j", "x", "y", *_component_names("v", n)]
    grid, data = _fill(path, _parse_rows(path, cols), n)
    return GridField(grid, data)


# -- solution bundles (g plus the reconstructed state) -------------------------

def write_grid_csv(path: str | os.PathLike, g: GridField, state: StateTriple) -> None:
    """Emit the solution bundle: g = z_xy plus z, z_x, z_y per node."""
    if state.grid != g.grid:
        raise ShapeError(f"state lives on {state.grid}, g on {g.grid}")
    grid, n = g.grid, g.n
    cols = ["i", "j", "x", "y"]
    for prefix in ("g", "z", "zx", "zy"):
        cols += _component_names(prefix, n)
    parts = (g.values, state.z.values, state.zx.values, state.zy.values)
    lines = [",".join(cols)]
    for i in range(grid.npoints):
        for j in range(grid.npoints):
            cells = [str(i), str(j), _fmt(grid.nodes[i]), _fmt(grid.nodes[j])]
            for block in parts:
                cells += [_fmt(block[i, j, k]) for k in range(n)]
            lines.append(",".join(cells))
    _atomic_write_text(path, "\n".join(lines) + "\n")


def read_grid_csv(path: str | os.PathLike) -> tuple[GridField, StateTriple]:
    path = Path(path)
    first = path.read_text(encoding="utf-8").splitlines()
    if not first:
        raise SchemaError("file is empty", path=str(path))
    names = first[0].split(",")
    n = sum(1 for c in names if c.startswith("g_"))
    if n < 1:
        raise SchemaError(f"no g_k columns in header {first[0]!r}", path=str(path))
    cols = ["i", "j", "x", "y"]
    for prefix in ("g", "z", "zx", "zy"):
        cols += _component_names(prefix, n)
    grid, data = _fill(path, _parse_rows(path, cols), 4 * n)
    g = GridField(grid, data[:, :, :n])
    try:
        state = StateTriple(
            GridField(grid, data[:, :, n : 2 * n]),
            GridField(grid, data[:, :, 2 * n : 3 * n]),
            GridField(grid, data[:, :, 3 * n :]),
        )
    except ValueError as exc:
        raise SchemaError(str(exc), path=str(path)) from exc
    return g, state


# -- reports -------------------------------------------------------------------

def write_report_json(path: str | os.PathLike, report: dict) -> None:
    """Single JSON object, insertion-ordered keys, no timestamps, atomic."""
    text = json.dumps(report, indent=2, allow_nan=False) + "\n"
    _atomic_write_text(path, text)


def read_report_json(path: str | os.PathLike) -> dict:
    with open(path, encoding="utf-8") as f:
        return json.load(f)
