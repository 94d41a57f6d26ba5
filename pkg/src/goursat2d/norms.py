"""Classical and exponentially weighted norms on grid fields.

The solution space carries the norm ‖z‖ = ‖z_xy‖_{L²(Q)} and its weighted
variant

    ‖z‖_m = ( ∫∫_Q e^{−m(x+y)} |z_xy(x, y)|² dx dy )^{1/2},    m ≥ 0,

the classical device for turning Volterra-type integral operators into
contractions: the weight penalizes mass far from the origin corner, which is
exactly where a causal integral operator accumulates it.  Since
e^{−2m} ≤ e^{−m(x+y)} ≤ 1 on the unit square, the weighted and unweighted
norms are equivalent with explicit constants,

    e^{−2m} ‖z‖ ≤ ‖z‖_m ≤ ‖z‖,

so convergence estimates proved in one transfer to the other.

``verify_lemma31`` checks the workhorse estimate: with g = z_xy and
J the cumulative double integral,

    ‖z‖_{L²_m},  ‖J|z|‖_{L²_m},  ‖J|z_x|‖_{L²_m},  ‖J|z_y|‖_{L²_m}
        all ≤ (2/m) ‖z‖_m,

which is what makes the lower-order terms of the operator small relative to
the principal part once m is large.  The discrete check allows a slack of
10 h² times the field scale, covering the O(h²) quadrature error on both
sides.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import InvalidWeightError, ShapeError
from .grid import Grid, GridField, cum_integral_2d, reconstruct_state


@lru_cache(maxsize=64)
def _kernel(cells: int, m: float) -> np.ndarray:
    nodes = np.arange(cells + 1, dtype=float) / cells
    k = np.exp(-m * (nodes[:, None] + nodes[None, :]))
    k.setflags(write=False)
    return k


class WeightedNorms:
    """Weight kernel e^{−m(x_i + y_j)} precomputed for one (grid, m) pair."""

    __slots__ = ("grid", "m", "kernel")

    def __init__(self, grid: Grid, m: float):
        m = float(m)
        if m < 0:
            raise InvalidWeightError(f"weight exponent must be nonnegative, got {m}")
        self.grid = grid
        self.m = m
        self.kernel = _kernel(grid.cells, m)

    def norm(self, f: GridField) -> float:
        """Weighted L² norm of an R^n-valued field."""
        if f.grid != self.grid:
            raise ShapeError(f"field grid {f.grid} does not match kernel grid {self.grid}")
        w = self.grid.trapezoid_weights()
        sq = (f.values**2).sum(axis=2)
        return float(np.sqrt(np.einsum("i,j,ij->", w, w, self.kernel * sq)))


def weighted_l2_norm(f: GridField, m: float) -> float:
    """‖f‖_{L²_m} = (∫∫ e^{−m(x+y)} |f|²)^{1/2}; m = 0 is the plain L² norm."""
    return WeightedNorms(f.grid, m).norm(f)


def classical_l2_norm(f: GridField) -> float:
    """Unweighted L²(Q) norm."""
    return weighted_l2_norm(f, 0.0)


def ac_norm(g: GridField, m: float) -> float:
    """Solution-space norm ‖z‖_m of the state whose mixed derivative is g.

    Identical to the weighted L² norm of g itself; m = 0 gives the classical
    solution-space norm.
    """
    return weighted_l2_norm(g, m)


def inner_product(g1: GridField, g2: GridField) -> float:
    """Solution-space inner product ⟨z¹, z²⟩ = ∫∫ ⟨z¹_xy, z²_xy⟩."""
    if g1.grid != g2.grid:
        raise ShapeError(f"fields live on different grids: {g1.grid} vs {g2.grid}")
    if g1.n != g2.n:
        raise ShapeError(f"fields have different state dimensions: {g1.n} vs {g2.n}")
    w = g1.grid.trapezoid_weights()
    dots = (g1.values * g2.values).sum(axis=2)
    return float(np.einsum("i,j,ij->", w, w, dots))


@dataclass(frozen=True)
class NormEquivalenceReport:
    """The two-sided comparison e^{−2m}‖z‖ ≤ ‖z‖_m ≤ ‖z‖ for one field."""

    m: float
    lower: float       # e^{−2m} · classical norm
    weighted: float    # ‖z‖_m
    upper: float       # classical norm
    tolerance: float
    passed: bool


def check_norm_equivalence(g: GridField, m: float, rel_tol: float = 1e-12) -> NormEquivalenceReport:
    """Evaluate both equivalence inequalities for the state with g = z_xy."""
    if m < 0:
        raise InvalidWeightError(f"weight exponent must be nonnegative, got {m}")
    upper = ac_norm(g, 0.0)
    weighted = ac_norm(g, m)
    lower = np.exp(-2.0 * m) * upper
    tol = rel_tol * max(1.0, upper)
    passed = (lower <= weighted + tol) and (weighted <= upper + tol)
    return NormEquivalenceReport(
        m=float(m), lower=float(lower), weighted=float(weighted),
        upper=float(upper), tolerance=float(tol), passed=bool(passed),
    )


#: What the four left-hand sides of the Lemma-3.1-style report measure.
LEMMA31_SIDES = ("state", "cum_abs_state", "cum_abs_dx", "cum_abs_dy")


@dataclass(frozen=True)
class Lemma31Report:
    """Four weighted norms of derived fields against the (2/m)‖z‖_m bound.

    sides[k] is the weighted L²_m norm of: the state z; the cumulative
    integral of |z|; of |z_x|; of |z_y| (order of ``LEMMA31_SIDES``).
    """

    m: float
    bound: float
    sides: tuple[float, float, float, float]
    margins: tuple[float, float, float, float]
    tolerance: float
    flags: tuple[bool, bool, bool, bool]

    @property
    def passed(self) -> bool:
        return all(self.flags)


def verify_lemma31(g: GridField, m: float) -> Lemma31Report:
    """Check the four smallness estimates for the state built from g.

    The discrete tolerance is 10 h² ‖g‖_{L²} (both sides carry O(h²)
    quadrature error; the continuum inequalities are strict).
    """
    if m <= 0:
        raise InvalidWeightError(f"the smallness estimates need m > 0, got {m}")
    st = reconstruct_state(g)
    norms = WeightedNorms(g.grid, m)
    sides = (
        norms.norm(st.z),
        norms.norm(cum_integral_2d(st.z.magnitude())),
        norms.norm(cum_integral_2d(st.zx.magnitude())),
        norms.norm(cum_integral_2d(st.zy.magnitude())),
    )
    bound = (2.0 / m) * ac_norm(g, m)
    tol = 10.0 * g.grid.h**2 * classical_l2_norm(g)
    margins = tuple(bound - s for s in sides)
    flags = tuple(mg >= -tol for mg in margins)
    return Lemma31Report(
        m=float(m), bound=float(bound), sides=sides,
        margins=margins, tolerance=float(tol), flags=flags,
    )
