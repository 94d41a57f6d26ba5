"""The forward operator, its linearization, the merit functional, coercivity.

Everything acts on the mixed derivative g = z_xy as the fundamental unknown;
the state (z, z_x, z_y) is reconstructed by cumulative integrals whenever a
nonlinearity needs it.  With J the cumulative double integral,

    F(z) = z_xy + f1(x, y, z) + J( f2(·, ·, z) + A1 z_x + A2 z_y ),

so F = identity + (compact Volterra part) in g.  Its directional derivative
at z in a direction h (again identified with h_xy) is

    F'(z) h = h_xy + f1_z(x, y, z) h + J( f2_z(·, ·, z) h + A1 h_x + A2 h_y ),

with the z-Jacobians f1_z, f2_z supplied by forward-mode differentiation of
the component expressions.  The merit functional is φ = ½‖F(z) − v‖²_{L²}.

``coercivity_probe`` checks the lower bound that makes the problem solvable
for large weights: for m > 8B,

    ‖F(z)‖_{L²_m} ≥ (1 − 8B/m) ‖z‖_m − D,     D = 2 ‖b‖_{L²_m},

with b the declared growth majorant.  Since both sides carry O(h²)
quadrature error, margins are accepted down to −10·h²·scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError, ThresholdError
from .grid import (
    Grid,
    GridField,
    StateTriple,
    cum2d_array,
    cumx_array,
    cumy_array,
    reconstruct_state,
)
from .norms import WeightedNorms, classical_l2_norm, weighted_l2_norm
from .exprlang import eval_dual_on_grid, eval_on_grid
from .problem import AssumptionReport, ProblemSpec, _matrix_values


class OperatorContext:
    """Immutable pairing of a problem with a grid, plus node caches.

    The z-independent coefficient matrices are sampled once per (spec, grid);
    the weighted-norm kernel is attached when a weight m is chosen.  Derived
    contexts via with_weight / with_assumptions share the caches.
    """

    __slots__ = ("spec", "grid", "m", "assumptions", "X", "Y",
                 "a1_nodes", "a2_nodes", "a1x_nodes", "a2y_nodes", "_weighted")

    def __init__(
        self,
        spec: ProblemSpec,
        grid: Grid,
        m: float | None = None,
        assumptions: AssumptionReport | None = None,
        _share: "OperatorContext | None" = None,
    ):
        self.spec = spec
        self.grid = grid
        self.m = None if m is None else float(m)
        self.assumptions = assumptions
        if _share is not None:
            self.X, self.Y = _share.X, _share.Y
            self.a1_nodes = _share.a1_nodes
            self.a2_nodes = _share.a2_nodes
            self.a1x_nodes = _share.a1x_nodes
            self.a2y_nodes = _share.a2y_nodes
        else:
            self.X, self.Y = grid.meshgrid()
            self.a1_nodes = _matrix_values(spec.a1, self.X, self.Y, spec.n)
            self.a2_nodes = _matrix_values(spec.a2, self.X, self.Y, spec.n)
            self.a1x_nodes = _matrix_values(spec.a1x, self.X, self.Y, spec.n)
            self.a2y_nodes = _matrix_values(spec.a2y, self.X, self.Y, spec.n)
        self._weighted = None if self.m is None else WeightedNorms(grid, self.m)

    def with_weight(self, m: float) -> "OperatorContext":
        return OperatorContext(self.spec, self.grid, m=m, assumptions=self.assumptions, _share=self)

    def with_assumptions(self, report: AssumptionReport) -> "OperatorContext":
        return OperatorContext(self.spec, self.grid, m=self.m, assumptions=report, _share=self)

    def weighted_norms(self) -> WeightedNorms:
        if self._weighted is None:
            raise ValueError("context has no weight attached; use with_weight(m) first")
        return self._weighted

    def check_field(self, f: GridField) -> None:
        if f.grid != self.grid:
            raise ShapeError(f"field on {f.grid} does not match context grid {self.grid}")
        if f.n != self.spec.n:
            raise ShapeError(f"field has {f.n} components, problem has {self.spec.n}")

    def __repr__(self) -> str:
        return f"OperatorContext(n={self.spec.n}, cells={self.grid.cells}, m={self.m})"


def make_context(
    spec: ProblemSpec,
    grid: Grid,
    m: float | None = None,
    assumptions: AssumptionReport | None = None,
) -> OperatorContext:
    return OperatorContext(spec, grid, m=m, assumptions=assumptions)


def _matvec(mats: np.ndarray, vecs: np.ndarray) -> np.ndarray:
    """Pointwise matrix–vector products: (P,P,n,n) × (P,P,n) -> (P,P,n)."""
    return np.einsum("ijkl,ijl->ijk", mats, vecs, optimize=False)


def _components(exprs, X, Y, Z) -> np.ndarray:
    """Stack component evaluations into shape X.shape + (n,)."""
    return np.stack([eval_on_grid(e, X, Y, Z) for e in exprs], axis=-1)


def apply_F(ctx: OperatorContext, g: GridField) -> GridField:
    """Evaluate the forward operator at the state reconstructed from g."""
    ctx.check_field(g)
    st = reconstruct_state(g)
    Z = st.z.values
    f1v = _components(ctx.spec.f1, ctx.X, ctx.Y, Z)
    f2v = _components(ctx.spec.f2, ctx.X, ctx.Y, Z)
    inner = f2v + _matvec(ctx.a1_nodes, st.zx.values) + _matvec(ctx.a2_nodes, st.zy.values)
    out = g.values + f1v + cum2d_array(inner, ctx.grid.h)
    return GridField(ctx.grid, out)


@dataclass(frozen=True)
class ResidualInfo:
    """F(z) − v with its classical and weighted norms."""

    field: GridField
    classical: float
    weighted: float


def residual(ctx: OperatorContext, g: GridField, v: GridField) -> ResidualInfo:
    """The residual field F(z) − v and its norms (weighted at the context's m,
    falling back to the classical norm when no weight is attached)."""
    ctx.check_field(v)
    r = apply_F(ctx, g) - v
    classical = classical_l2_norm(r)
    weighted = ctx.weighted_norms().norm(r) if ctx.m is not None else classical
    return ResidualInfo(field=r, classical=classical, weighted=weighted)


def merit(ctx: OperatorContext, g: GridField, v: GridField) -> float:
    """φ(z) = ½‖F(z) − v‖²_{L²} — the line-search merit."""
    return 0.5 * residual(ctx, g, v).classical ** 2


class LinearizedOperator:
    """F'(z) at a frozen linearization state, cheap to apply repeatedly.

    The z-Jacobians of f1 and f2 are evaluated once at construction; each
    ``apply`` then costs a few pointwise products and prefix sums.
    """

    __slots__ = ("ctx", "j1", "j2", "kink_flagged")

    def __init__(self, ctx: OperatorContext, z_state: StateTriple):
        if z_state.grid != ctx.grid or z_state.n != ctx.spec.n:
            raise ShapeError(
                f"state on {z_state.grid} (n={z_state.n}) does not match {ctx!r}"
            )
        self.ctx = ctx
        Z = z_state.z.values
        n = ctx.spec.n
        shape = Z.shape[:2]
        kinked = False
        j1 = np.empty(shape + (n, n))
        j2 = np.empty(shape + (n, n))
        for i in range(n):
            _, d, k1 = eval_dual_on_grid(ctx.spec.f1[i], ctx.X, ctx.Y, Z)
            j1[:, :, i, :] = d
            _, d, k2 = eval_dual_on_grid(ctx.spec.f2[i], ctx.X, ctx.Y, Z)
            j2[:, :, i, :] = d
            kinked = kinked or k1 or k2
        self.j1 = j1
        self.j2 = j2
        self.kink_flagged = kinked

    def apply_array(self, hg: np.ndarray) -> np.ndarray:
        """Raw-array application for solver inner loops; hg shape (P, P, n)."""
        h = cum2d_array(hg, self.ctx.grid.h)   # the state direction itself
        hx = cumy_array(hg, self.ctx.grid.h)
        hy = cumx_array(hg, self.ctx.grid.h)
        inner = (
            np.einsum("ijkl,ijl->ijk", self.j2, h, optimize=False)
            + np.einsum("ijkl,ijl->ijk", self.ctx.a1_nodes, hx, optimize=False)
            + np.einsum("ijkl,ijl->ijk", self.ctx.a2_nodes, hy, optimize=False)
        )
        return (
            hg
            + np.einsum("ijkl,ijl->ijk", self.j1, h, optimize=False)
            + cum2d_array(inner, self.ctx.grid.h)
        )

    def apply(self, hg: GridField) -> GridField:
        self.ctx.check_field(hg)
        return GridField(self.ctx.grid, self.apply_array(hg.values))


def linearize(ctx: OperatorContext, z_state: StateTriple) -> LinearizedOperator:
    return LinearizedOperator(ctx, z_state)


def apply_Fprime(ctx: OperatorContext, z_state: StateTriple, h_g: GridField) -> GridField:
    """One-shot directional derivative F'(z)·h (h given as its mixed derivative)."""
    return linearize(ctx, z_state).apply(h_g)


@dataclass(frozen=True)
class CoercivityReport:
    """Margins of the weighted lower bound over a batch of sample fields."""

    m: float
    growth_bound: float
    offset: float              # D = 2 ‖b‖_{L²_m}
    factor: float              # 1 − 8B/m
    margins: tuple[float, ...]  # ‖F(z)‖_m − (factor·‖z‖_m − D), per sample
    tolerance: float
    ray_scales: tuple[float, ...]
    ray_values: tuple[float, ...]
    ray_ok: bool

    @property
    def passed(self) -> bool:
        return self.ray_ok and all(mg >= -self.tolerance for mg in self.margins)


def coercivity_probe(
    ctx: OperatorContext,
    g_samples: list[GridField],
    m: float,
    ray_scales: tuple[float, ...] = (1.0, 10.0, 100.0),
) -> CoercivityReport:
    """Check ‖F(z)‖_m ≥ (1 − 8B/m)‖z‖_m − D on each sample, plus a ray test.

    Requires m > 8B (the bound is vacuous otherwise).  The ray test evaluates
    ‖F(t·g)‖_m along t ∈ ray_scales for the first sample and checks growth
    wherever the certified lower bound has cleared 2D.
    """
    B = ctx.spec.growth_bound
    if m <= 8.0 * B:
        raise ThresholdError(
            f"coercivity bound needs m > 8B = {8.0 * B:g}, got m = {m:g}"
        )
    if not g_samples:
        raise ValueError("need at least one sample field")
    norms = WeightedNorms(ctx.grid, m)
    X, Y = ctx.X, ctx.Y
    b_vals = eval_on_grid(ctx.spec.majorant, X, Y, np.zeros(X.shape + (ctx.spec.n,)))
    D = 2.0 * weighted_l2_norm(GridField(ctx.grid, b_vals), m)
    factor = 1.0 - 8.0 * B / m

    margins = []
    scale = 0.0
    for g in g_samples:
        ctx.check_field(g)
        lhs = norms.norm(apply_F(ctx, g))
        gnorm = norms.norm(g)
        margins.append(lhs - (factor * gnorm - D))
        scale = max(scale, gnorm, lhs, D)
    tol = 10.0 * ctx.grid.h**2 * max(scale, 1.0)

    ray_values = []
    g0 = g_samples[0]
    g0_norm = norms.norm(g0)
    for t in ray_scales:
        ray_values.append(norms.norm(apply_F(ctx, t * g0)))
    ray_ok = True
    for k in range(len(ray_scales) - 1):
        cleared = factor * ray_scales[k] * g0_norm > 2.0 * D
        if cleared and ray_values[k + 1] <= ray_values[k]:
            ray_ok = False

    return CoercivityReport(
        m=float(m),
        growth_bound=B,
        offset=float(D),
        factor=float(factor),
        margins=tuple(float(v) for v in margins),
        tolerance=float(tol),
        ray_scales=tuple(float(t) for t in ray_scales),
        ray_values=tuple(float(v) for v in ray_values),
        ray_ok=ray_ok,
    )
