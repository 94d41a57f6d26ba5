"""Fixed-point and Newton–Kantorovich solvers in the weighted norm.

The linearized equation F'(z0)h = v becomes, in terms of the mixed
derivative g of h, a fixed-point problem for the affine map

    g  ↦  v − (H − I) g,        (H − I) g = F'(z0) g − g,

whose fixed point satisfies H g = v.  H − I is a causal Volterra sum, and in
the weighted norm its Lipschitz constant is at most 4d/m² with d bounding the
kernels (the z-Jacobian sup M_ρ and the coefficient bound B), so plain
Richardson iteration g ← g − (F'(z0)g − v) contracts once m > 2√d.  The same
machinery drives:

  * ``solve_picard``: damped fixed-point iteration g ← g − λ(F(g) − v) on the
    nonlinear equation, for problems whose nonlinear part is itself
    contractive;
  * ``solve_newton``: each step solves F'(z_k)δ = v − F(z_k) by the linear
    iteration, then backtracks on the merit φ = ½‖F(z) − v‖² until it
    decreases.

``choose_weight`` turns the two thresholds (m > 8B for coercivity, m > 2√d
for contraction) into a concrete policy: m = max(8B, 2√d) + 1, with
d = max(M_ρ, B) read from an assumption probe at the radius covering the
expected iterate size.  Iterations start from g₀ = v, which is exact for the
zero problem and aligned with the dominant identity part of the operator.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .errors import (
    DivergenceError,
    MissingProbeError,
    NoConvergenceError,
    StagnationError,
)
from .grid import GridField, StateTriple, reconstruct_state
from .norms import classical_l2_norm
from .operator import LinearizedOperator, OperatorContext, apply_F, linearize
from .problem import AssumptionReport
from .sampling import random_smooth_field

#: Consecutive non-contracting ratios before a divergence error.
_DIVERGENCE_PATIENCE = 5

#: Maximum step halvings in the Newton line search.
_MAX_BACKTRACKS = 20


@dataclass(frozen=True)
class SolverConfig:
    """Iteration controls; m = None means "choose the weight automatically"."""

    m: float | None = None
    tol: float = 1e-10
    max_iter: int = 200
    method: str = "newton"
    inner_tol: float = 1e-12
    inner_max_iter: int = 400
    damping: float = 1.0

    def __post_init__(self):
        if self.m is not None and not self.m > 0:
            raise ValueError(f"weight m must be positive, got {self.m}")
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be >= 1, got {self.max_iter}")
        if self.method not in ("picard", "newton"):
            raise ValueError(f"method must be 'picard' or 'newton', got {self.method!r}")
        if not self.inner_tol > 0:
            raise ValueError(f"inner_tol must be positive, got {self.inner_tol}")
        if self.inner_max_iter < 1:
            raise ValueError(f"inner_max_iter must be >= 1, got {self.inner_max_iter}")
        if not 0.0 < self.damping <= 1.0:
            raise ValueError(f"damping must be in (0, 1], got {self.damping}")


@dataclass(frozen=True)
class IterationRecord:
    """One solver iteration: weighted residual and the ratio to the previous one."""

    iteration: int
    residual: float
    ratio: float | None

    def as_dict(self) -> dict:
        return {"iteration": self.iteration, "residual": self.residual, "ratio": self.ratio}


@dataclass(frozen=True)
class SolveReport:
    """Outcome of a solve: the g-field, reconstructed state, and trace."""

    g: GridField
    state: StateTriple
    residual_classical: float
    residual_weighted: float
    iterations: int
    trace: tuple[IterationRecord, ...]
    m_used: float
    converged: bool
    method: str

    def as_dict(self) -> dict:
        return {
            "method": self.method,
            "m_used": self.m_used,
            "iterations": self.iterations,
            "converged": self.converged,
            "residual_classical": self.residual_classical,
            "residual_weighted": self.residual_weighted,
            "trace": [t.as_dict() for t in self.trace],
        }


@dataclass(frozen=True)
class WeightChoice:
    """The chosen weight and the numbers that produced it."""

    m: float
    growth_bound: float    # B
    kernel_bound: float    # d = max(M_ρ, B)
    radius: float          # ρ whose M_ρ entered d
    m_rho: float
    coercivity_threshold: float  # 8B
    contraction_threshold: float  # 2√d

    def as_dict(self) -> dict:
        return {
            "m": self.m,
            "growth_bound": self.growth_bound,
            "kernel_bound": self.kernel_bound,
            "radius": self.radius,
            "m_rho": self.m_rho,
            "coercivity_threshold": self.coercivity_threshold,
            "contraction_threshold": self.contraction_threshold,
        }


def choose_weight(ctx: OperatorContext, z0: StateTriple | None = None) -> WeightChoice:
    """Pick m = max(8B, 2√d) + 1 with d = max(M_ρ, B) from the probe report.

    The radius is the smallest probed ρ covering 1 + sup|z⁰| (largest probed
    radius if none does), so the Jacobian bound is valid around the expected
    iterates.  Requires assumptions to have been probed into the context.
    """
    report = ctx.assumptions
    if report is None:
        raise MissingProbeError(
            "choose_weight needs an assumption probe; build the context with "
            "probe_assumptions(...) attached (with_assumptions)"
        )
    B = ctx.spec.growth_bound
    d, rho, m_rho = _kernel_numbers(report, B, z0)
    m = max(8.0 * B, 2.0 * math.sqrt(d)) + 1.0
    return WeightChoice(
        m=m,
        growth_bound=B,
        kernel_bound=d,
        radius=rho,
        m_rho=m_rho,
        coercivity_threshold=8.0 * B,
        contraction_threshold=2.0 * math.sqrt(d),
    )


def _kernel_numbers(
    report: AssumptionReport, B: float, z0: StateTriple | None
) -> tuple[float, float, float]:
    """(d, ρ, M_ρ) at the smallest probed radius covering 1 + sup|z⁰|.

    Falls back to the largest probed radius when none covers the target, so
    the bound stays on the conservative side.
    """
    target = 1.0 + (z0.sup_magnitude() if z0 is not None else 0.0)
    rho, m_rho = report.m_rho[-1]
    for r, mr in report.m_rho:
        if r >= target:
            rho, m_rho = r, mr
            break
    return max(m_rho, B), rho, m_rho


def _resolve_m(ctx: OperatorContext, cfg: SolverConfig, z0: StateTriple | None) -> float:
    if cfg.m is not None:
        return cfg.m
    return choose_weight(ctx, z0).m


def _estimated_d(
    report: AssumptionReport | None, B: float, z0: StateTriple | None
) -> float | None:
    if report is None:
        return None
    return _kernel_numbers(report, B, z0)[0]


def _finish(
    ctx: OperatorContext,
    g_values: np.ndarray,
    r_values: np.ndarray,
    trace: list[IterationRecord],
    m: float,
    converged: bool,
    method: str,
) -> SolveReport:
    g = GridField(ctx.grid, g_values)
    r = GridField(ctx.grid, r_values)
    return SolveReport(
        g=g,
        state=reconstruct_state(g),
        residual_classical=classical_l2_norm(r),
        residual_weighted=ctx.weighted_norms().norm(r),
        iterations=len(trace),
        trace=tuple(trace),
        m_used=m,
        converged=converged,
        method=method,
    )


def _fixed_point_loop(
    ctx: OperatorContext,
    v: GridField,
    cfg: SolverConfig,
    step,
    method: str,
    g0: GridField | None,
    max_iter: int,
    tol: float,
) -> SolveReport:
    """Shared damped-Richardson loop; ``step(g_values) -> residual_values``.

    Each iteration evaluates the residual of the current iterate, records it,
    stops on tolerance, and otherwise applies g ← g − damping·residual.
    Raises DivergenceError after ``_DIVERGENCE_PATIENCE`` consecutive
    non-contracting ratios and NoConvergenceError at the iteration cap; both
    carry the partial report.
    """
    wn = ctx.weighted_norms()
    g = v.values.copy() if g0 is None else g0.values.copy()
    trace: list[IterationRecord] = []
    prev = None
    bad_streak = 0
    for k in range(1, max_iter + 1):
        r = step(g)
        rnorm = wn.norm(GridField(ctx.grid, r))
        ratio = None if prev is None or prev == 0.0 else rnorm / prev
        trace.append(IterationRecord(iteration=k, residual=rnorm, ratio=ratio))
        if rnorm <= tol:
            return _finish(ctx, g, r, trace, ctx.m, True, method)
        if ratio is not None and ratio >= 1.0:
            bad_streak += 1
            if bad_streak >= _DIVERGENCE_PATIENCE:
                report = _finish(ctx, g, r, trace, ctx.m, False, method)
                raise DivergenceError(
                    f"residual not contracting for {bad_streak} consecutive "
                    f"iterations (last ratio {ratio:.3g}); the weighted norm "
                    f"needs a larger m (contraction requires m > 2*sqrt(d))",
                    report=report,
                )
        else:
            bad_streak = 0
        prev = rnorm
        g = g - cfg.damping * r
    report = _finish(ctx, g, r, trace, ctx.m, False, method)
    raise NoConvergenceError(
        f"no convergence within {max_iter} iterations "
        f"(last weighted residual {trace[-1].residual:.3g} > tol {tol:g})",
        report=report,
    )


def solve_linearized(
    ctx: OperatorContext,
    z0: StateTriple,
    v: GridField,
    cfg: SolverConfig,
    g0: GridField | None = None,
) -> SolveReport:
    """Solve F'(z0)h = v by weighted-norm fixed-point iteration.

    Warns (and proceeds) when the configured m sits below the estimated
    contraction threshold 2√d; with an automatic m the threshold holds by
    construction.
    """
    ctx.check_field(v)
    m = _resolve_m(ctx, cfg, z0)
    ctx = ctx.with_weight(m)
    d = _estimated_d(ctx.assumptions, ctx.spec.growth_bound, z0)
    if d is not None and m <= 2.0 * math.sqrt(d):
        warnings.warn(
            f"m = {m:g} is at or below the contraction threshold 2*sqrt(d) = "
            f"{2.0 * math.sqrt(d):g}; the iteration may diverge",
            stacklevel=2,
        )
    lin = linearize(ctx, z0)

    def step(g_values: np.ndarray) -> np.ndarray:
        return lin.apply_array(g_values) - v.values

    # damping deliberately fixed at 1 here: the update g ← g − (F'g − v) is
    # exactly the fixed-point map whose contraction Lemma-style bound certifies
    undamped = replace(cfg, damping=1.0) if cfg.damping != 1.0 else cfg
    return _fixed_point_loop(
        ctx, v, undamped, step, "linearized", g0, cfg.max_iter, cfg.tol
    )


@dataclass(frozen=True)
class ContractionEstimate:
    """Measured contraction factor of the linearized fixed-point map."""

    rho_hat: float
    bound: float | None   # 4d/m² when d is known from a probe
    m: float
    trials: int
    contracting: bool

    def as_dict(self) -> dict:
        return {
            "rho_hat": self.rho_hat,
            "bound": self.bound,
            "m": self.m,
            "trials": self.trials,
            "contracting": self.contracting,
        }


def estimate_contraction(
    ctx: OperatorContext,
    z0: StateTriple,
    cfg: SolverConfig,
    trials: int = 8,
    seed: int = 0,
) -> ContractionEstimate:
    """ρ̂ = max over random directions of ‖(H − I)g‖_m / ‖g‖_m.

    (H − I) is linear, so random directions are exactly random difference
    pairs.  Deterministic for a given seed.
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    m = _resolve_m(ctx, cfg, z0)
    ctx = ctx.with_weight(m)
    wn = ctx.weighted_norms()
    lin = linearize(ctx, z0)
    rng = np.random.default_rng(seed)
    rho = 0.0
    for _ in range(trials):
        g = random_smooth_field(ctx.grid, ctx.spec.n, rng)
        gnorm = wn.norm(g)
        if gnorm == 0.0:
            continue
        hg = GridField(ctx.grid, lin.apply_array(g.values) - g.values)
        rho = max(rho, wn.norm(hg) / gnorm)
    d = _estimated_d(ctx.assumptions, ctx.spec.growth_bound, z0)
    bound = None if d is None else 4.0 * d / m**2
    return ContractionEstimate(
        rho_hat=float(rho), bound=bound, m=m, trials=trials, contracting=rho < 1.0
    )


def solve_picard(
    ctx: OperatorContext,
    v: GridField,
    cfg: SolverConfig,
    g0: GridField | None = None,
) -> SolveReport:
    """Damped fixed-point iteration g ← g − λ(F(g) − v) on the nonlinear equation."""
    ctx.check_field(v)
    m = _resolve_m(ctx, cfg, None)
    ctx = ctx.with_weight(m)

    def step(g_values: np.ndarray) -> np.ndarray:
        return apply_F(ctx, GridField(ctx.grid, g_values)).values - v.values

    return _fixed_point_loop(ctx, v, cfg, step, "picard", g0, cfg.max_iter, cfg.tol)


def solve_newton(
    ctx: OperatorContext,
    v: GridField,
    cfg: SolverConfig,
    g0: GridField | None = None,
) -> SolveReport:
    """Newton–Kantorovich: solve F'(z_k)δ = v − F(z_k), backtrack on merit.

    The inner linear solves run to min(cfg.inner_tol, 0.1·‖residual‖_m) so the
    outer convergence stays superlinear without over-solving early steps.
    """
    ctx.check_field(v)
    m = _resolve_m(ctx, cfg, None)
    ctx = ctx.with_weight(m)
    wn = ctx.weighted_norms()

    g = v.values.copy() if g0 is None else g0.values.copy()
    trace: list[IterationRecord] = []
    prev = None
    for k in range(1, cfg.max_iter + 1):
        g_field = GridField(ctx.grid, g)
        state = reconstruct_state(g_field)
        r = apply_F(ctx, g_field).values - v.values
        r_field = GridField(ctx.grid, r)
        rnorm = wn.norm(r_field)
        ratio = None if prev is None or prev == 0.0 else rnorm / prev
        trace.append(IterationRecord(iteration=k, residual=rnorm, ratio=ratio))
        if rnorm <= cfg.tol:
            return _finish(ctx, g, r, trace, m, True, "newton")
        prev = rnorm

        inner_cfg = replace(
            cfg,
            m=m,
            tol=min(cfg.inner_tol, 0.1 * rnorm),
            max_iter=cfg.inner_max_iter,
            damping=1.0,
        )
        # choose_weight already fixed m; the inner solve must keep it
        delta = solve_linearized(
            ctx, state, GridField(ctx.grid, -r), inner_cfg
        ).g.values

        phi0 = 0.5 * classical_l2_norm(r_field) ** 2
        lam = 1.0
        for _ in range(_MAX_BACKTRACKS + 1):
            trial = g + lam * delta
            r_trial = apply_F(ctx, GridField(ctx.grid, trial)).values - v.values
            phi = 0.5 * classical_l2_norm(GridField(ctx.grid, r_trial)) ** 2
            if phi < phi0:
                g = trial
                break
            lam *= 0.5
        else:
            report = _finish(ctx, g, r, trace, m, False, "newton")
            raise StagnationError(
                f"line search failed: merit did not decrease after "
                f"{_MAX_BACKTRACKS} halvings (merit {phi0:.6g})",
                report=report,
            )
    report = _finish(ctx, g, r, trace, m, False, "newton")
    raise NoConvergenceError(
        f"no convergence within {cfg.max_iter} Newton iterations "
        f"(last weighted residual {trace[-1].residual:.3g} > tol {cfg.tol:g})",
        report=report,
    )


def solve(ctx: OperatorContext, v: GridField, cfg: SolverConfig, g0: GridField | None = None) -> SolveReport:
    """Dispatch on cfg.method."""
    if cfg.method == "picard":
        return solve_picard(ctx, v, cfg, g0=g0)
    return solve_newton(ctx, v, cfg, g0=g0)
