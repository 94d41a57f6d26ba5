"""Uniform discretization of the unit square and causal Volterra quadrature.

The computational domain is Q = [0, 1]^2, meshed by a uniform tensor grid
with ``cells`` intervals per axis (nodes x_i = i * h, h = 1 / cells).  All
integrals are composite trapezoid sums; cumulative (Volterra) integrals are
prefix sums of per-cell contributions, where each cell contributes

    h^2 / 4 * (f[i, j] + f[i+1, j] + f[i, j+1] + f[i+1, j+1]),

i.e. the exact integral of the bilinear interpolant on that cell.  This makes
the cumulative maps exact for fields of per-axis degree <= 1 and keeps the
Volterra causality structure: the value at node (i, j) depends only on nodes
with indices (<= i, <= j).

State reconstruction follows the representation of absolutely continuous
functions with homogeneous edge data: given the mixed derivative g = z_xy,

    z(x, y)   = int_0^x int_0^y g(s, t) ds dt,
    z_x(x, y) = int_0^y g(x, t) dt,
    z_y(x, y) = int_0^x g(s, y) ds,

so z, z_x vanish on the edge y = 0 and z, z_y vanish on the edge x = 0
exactly (prefix sums start at zero; no rounding is involved).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidResolutionError, ShapeError


class Grid:
    """Uniform mesh of the unit square with ``cells`` intervals per axis.

    Attributes:
        cells: number of intervals per axis (>= 2).
        h: node spacing, 1 / cells.
        nodes: node coordinates, shape (cells + 1,), shared by both axes.
    """

    __slots__ = ("cells", "h", "nodes")

    def __init__(self, cells: int):
        cells = int(cells)
        if cells < 2:
            raise InvalidResolutionError(f"grid needs at least 2 cells per axis, got {cells}")
        self.cells = cells
        self.h = 1.0 / cells
        nodes = np.arange(cells + 1, dtype=float) / cells
        nodes.setflags(write=False)
        self.nodes = nodes

    @property
    def npoints(self) -> int:
        """Nodes per axis (cells + 1)."""
        return self.cells + 1

    def meshgrid(self) -> tuple[np.ndarray, np.ndarray]:
        """Node coordinate matrices X, Y with shape (cells+1, cells+1), 'ij' indexing."""
        return np.meshgrid(self.nodes, self.nodes, indexing="ij")

    def trapezoid_weights(self) -> np.ndarray:
        """1D composite-trapezoid node weights: h * [1/2, 1, ..., 1, 1/2]."""
        w = np.full(self.cells + 1, self.h)
        w[0] *= 0.5
        w[-1] *= 0.5
        return w

    def __eq__(self, other) -> bool:
        return isinstance(other, Grid) and other.cells == self.cells

    def __hash__(self) -> int:
        return hash(("Grid", self.cells))

    def __repr__(self) -> str:
        return f"Grid(cells={self.cells})"


def build_grid(cells: int) -> Grid:
    """Build the uniform grid with ``cells`` intervals per axis (cells >= 2)."""
    return Grid(cells)


class GridField:
    """An R^n-valued sample array over the grid nodes.

    Values are stored as a read-only float array of shape
    (cells+1, cells+1, n) and validated to be finite on construction.
    2D input is promoted to n = 1.
    """

    __slots__ = ("grid", "values")

    def __init__(self, grid: Grid, values: np.ndarray):
        values = np.array(values, dtype=float, copy=True)
        if values.ndim == 2:
            values = values[:, :, None]
        p = grid.npoints
        if values.ndim != 3 or values.shape[0] != p or values.shape[1] != p or values.shape[2] < 1:
            raise ShapeError(
                f"field values must have shape ({p}, {p}, n), got {values.shape}"
            )
        if not np.isfinite(values).all():
            bad = np.argwhere(~np.isfinite(values))[0]
            raise ValueError(
                f"non-finite field value at node (i={bad[0]}, j={bad[1]}), component {bad[2]}"
            )
        values.setflags(write=False)
        self.grid = grid
        self.values = values

    @property
    def n(self) -> int:
        """State dimension."""
        return self.values.shape[2]

    def component(self, k: int) -> np.ndarray:
        """Component k as a (cells+1, cells+1) array."""
        return self.values[:, :, k]

    def magnitude(self) -> "GridField":
        """Pointwise Euclidean magnitude |f| as an n = 1 field."""
        return GridField(self.grid, np.sqrt((self.values**2).sum(axis=2)))

    def __add__(self, other: "GridField") -> "GridField":
        _check_same_shape(self, other)
        return GridField(self.grid, self.values + other.values)

    def __sub__(self, other: "GridField") -> "GridField":
        _check_same_shape(self, other)
        return GridField(self.grid, self.values - other.values)

    def __mul__(self, scalar: float) -> "GridField":
        return GridField(self.grid, self.values * float(scalar))

    __rmul__ = __mul__

    def __truediv__(self, scalar: float) -> "GridField":
        return GridField(self.grid, self.values / float(scalar))

    def __neg__(self) -> "GridField":
        return GridField(self.grid, -self.values)

    def __repr__(self) -> str:
        return f"GridField(cells={self.grid.cells}, n={self.n})"


def _check_same_shape(a: GridField, b: GridField) -> None:
    if a.grid != b.grid:
        raise ShapeError(f"fields live on different grids: {a.grid} vs {b.grid}")
    if a.n != b.n:
        raise ShapeError(f"fields have different state dimensions: {a.n} vs {b.n}")


@dataclass(frozen=True)
class StateTriple:
    """A reconstructed state (z, z_x, z_y) on a common grid.

    Invariants (exact, by construction of the prefix sums): z vanishes on
    both edges x = 0 and y = 0, z_x vanishes on y = 0, z_y vanishes on x = 0.
    """

    z: GridField
    zx: GridField
    zy: GridField

    def __post_init__(self):
        _check_same_shape(self.z, self.zx)
        _check_same_shape(self.z, self.zy)
        zv = self.z.values
        if np.any(zv[0, :, :] != 0.0) or np.any(zv[:, 0, :] != 0.0):
            raise ValueError("state z must vanish exactly on the edges x = 0 and y = 0")
        if np.any(self.zx.values[:, 0, :] != 0.0):
            raise ValueError("state z_x must vanish exactly on the edge y = 0")
        if np.any(self.zy.values[0, :, :] != 0.0):
            raise ValueError("state z_y must vanish exactly on the edge x = 0")

    @property
    def grid(self) -> Grid:
        return self.z.grid

    @property
    def n(self) -> int:
        return self.z.n

    def sup_magnitude(self) -> float:
        """max over nodes of |z(x, y)| (Euclidean over components)."""
        return float(np.sqrt((self.z.values**2).sum(axis=2)).max())


# -- array-level kernels (values of shape (P, P, n)) -------------------------

def cum2d_array(values: np.ndarray, h: float) -> np.ndarray:
    """Cumulative double integral by 2D prefix sums of per-cell averages."""
    cells = (values[:-1, :-1] + values[1:, :-1] + values[:-1, 1:] + values[1:, 1:]) * (h * h / 4.0)
    out = np.zeros_like(values)
    out[1:, 1:] = cells.cumsum(axis=0).cumsum(axis=1)
    return out


def cumx_array(values: np.ndarray, h: float) -> np.ndarray:
    """Cumulative integral along x for each fixed y-row; row i = 0 is zero."""
    cells = (values[:-1, :, :] + values[1:, :, :]) * (h / 2.0)
    out = np.zeros_like(values)
    out[1:, :, :] = cells.cumsum(axis=0)
    return out


def cumy_array(values: np.ndarray, h: float) -> np.ndarray:
    """Cumulative integral along y for each fixed x-column; column j = 0 is zero."""
    cells = (values[:, :-1, :] + values[:, 1:, :]) * (h / 2.0)
    out = np.zeros_like(values)
    out[:, 1:, :] = cells.cumsum(axis=1)
    return out


# -- public quadrature and Volterra operations -------------------------------

def quad_2d(f: GridField) -> np.ndarray:
    """Composite 2D trapezoid integral of each component over Q.

    Exact for fields bilinear on each cell.  Returns an array of shape (n,).
    """
    w = f.grid.trapezoid_weights()
    return np.einsum("i,j,ijk->k", w, w, f.values)


def quad_2d_total(f: GridField) -> float:
    """Euclidean combination of the per-component integrals of ``quad_2d``."""
    return float(np.linalg.norm(quad_2d(f)))


def cum_integral_2d(g: GridField) -> GridField:
    """The Volterra map (Jg)(x, y) = int_0^x int_0^y g(s, t) ds dt."""
    return GridField(g.grid, cum2d_array(g.values, g.grid.h))


def cum_integral_x(g: GridField) -> GridField:
    """int_0^x g(s, y) ds, one prefix sum per fixed y-row."""
    return GridField(g.grid, cumx_array(g.values, g.grid.h))


def cum_integral_y(g: GridField) -> GridField:
    """int_0^y g(x, t) dt, one prefix sum per fixed x-column."""
    return GridField(g.grid, cumy_array(g.values, g.grid.h))


def reconstruct_state(g: GridField) -> StateTriple:
    """Rebuild (z, z_x, z_y) from the mixed derivative g = z_xy.

    z = Jg, z_x = int_0^y g(x, t) dt, z_y = int_0^x g(s, y) ds; the
    homogeneous edge values are exactly zero.
    """
    return StateTriple(
        z=cum_integral_2d(g),
        zx=cum_integral_y(g),
        zy=cum_integral_x(g),
    )


def restrict_to(f: GridField, coarse: Grid) -> GridField:
    """Restrict a field on a finer grid to a coarser grid with compatible cells.

    Requires f.grid.cells to be an integer multiple of coarse.cells; the
    coarse nodes are then a subset of the fine nodes and values are copied,
    not interpolated.
    """
    fine = f.grid
    if fine.cells % coarse.cells != 0:
        raise ShapeError(
            f"cannot restrict {fine.cells} cells to {coarse.cells}: not an integer refinement"
        )
    step = fine.cells // coarse.cells
    return GridField(coarse, f.values[::step, ::step, :])
