"""Directional derivatives and stability of the solution map v ↦ z_v.

The solution map sends a right-hand side v to the solved state z_v.  Its
derivative in a direction δv is the solution h of the linearized equation
F'(z_v) h = δv — no new machinery, just the linear solver at the converged
state.  ``validate_frechet`` checks that claim against actual re-solves:

    error(ε) = ‖ (g_{v+ε·δv} − g_v)/ε − h_g ‖ / ‖h_g‖     (classical norm)

must fall linearly in ε until the solver-tolerance floor.  Comparisons run in
g-space with the classical norm so the verdict does not depend on the weight
choice.  ``stability_probe`` measures the continuity modulus
‖z₁ − z₂‖ / ‖v₁ − v₂‖ in both norms; for z-linear problems the weighted ratio
is certified by the coercivity constant (1 − 8B/m)⁻¹.

Per-ε re-solves are independent; set GOURSAT2D_THREADS > 1 to run them in a
thread pool (results are assembled in ε order either way, so reports do not
depend on scheduling).
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from .errors import ParameterError, SolverError
from .grid import GridField
from .norms import classical_l2_norm
from .operator import OperatorContext
from .solvers import SolveReport, SolverConfig, solve, solve_linearized

#: Refuse quotient steps below this multiple of the solver tolerance.
EPS_FLOOR_FACTOR = 100.0


def thread_budget() -> int:
    """Worker cap from GOURSAT2D_THREADS (default 1; must be a positive integer)."""
    raw = os.environ.get("GOURSAT2D_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ParameterError(f"GOURSAT2D_THREADS must be a positive integer, got {raw!r}")
    if n < 1:
        raise ParameterError(f"GOURSAT2D_THREADS must be a positive integer, got {raw!r}")
    return n


@dataclass(frozen=True)
class SensitivityReport:
    """Directional-derivative validation and/or stability ratios.

    fd_errors pairs each ε with the relative deviation of the difference
    quotient from the directional derivative h.  stability ratios are
    ‖z₁ − z₂‖/‖v₁ − v₂‖ in (classical, weighted) norms, None when not probed
    or degenerate.  ``valid`` is False as soon as any inner solve failed to
    converge; ``passed`` additionally requires the error criteria.
    """

    h: GridField | None
    fd_errors: tuple[tuple[float, float], ...]
    stability_classical: float | None
    stability_weighted: float | None
    stability_bound: float | None
    degenerate: bool
    converged_flags: tuple[bool, ...]
    valid: bool
    passed: bool

    def as_dict(self) -> dict:
        return {
            "fd_errors": [[e, err] for e, err in self.fd_errors],
            "stability_classical": self.stability_classical,
            "stability_weighted": self.stability_weighted,
            "stability_bound": self.stability_bound,
            "degenerate": self.degenerate,
            "converged_flags": list(self.converged_flags),
            "valid": self.valid,
            "passed": self.passed,
        }


def frechet_apply(
    ctx: OperatorContext,
    solved: SolveReport,
    deltav: GridField,
    cfg: SolverConfig,
) -> GridField:
    """h solving F'(z_v) h = δv — the solution map's derivative at v, applied to δv."""
    if not solved.converged:
        raise SolverError("frechet_apply needs a converged base solve")
    ctx.check_field(deltav)
    inner = SolverConfig(
        m=solved.m_used,
        tol=cfg.inner_tol,
        max_iter=cfg.inner_max_iter,
        method=cfg.method,
        inner_tol=cfg.inner_tol,
        inner_max_iter=cfg.inner_max_iter,
        damping=1.0,
    )
    return solve_linearized(ctx, solved.state, deltav, inner).g


def validate_frechet(
    ctx: OperatorContext,
    v: GridField,
    deltav: GridField,
    eps_list: tuple[float, ...],
    cfg: SolverConfig,
) -> SensitivityReport:
    """Compare difference quotients of re-solves against the derivative.

    eps_list must be strictly decreasing, positive, length ≥ 3, and stay
    above 100·tol so solver noise cannot masquerade as a remainder term.
    Passes when the errors decrease monotonically (or sit at the
    10·tol/ε solver floor) and the smallest error is ≤ 0.05.
    """
    eps = tuple(float(e) for e in eps_list)
    if len(eps) < 3:
        raise ParameterError(f"need at least 3 quotient steps, got {len(eps)}")
    if any(e <= 0 for e in eps) or any(a <= b for a, b in zip(eps, eps[1:])):
        raise ParameterError(f"eps_list must be strictly decreasing and positive: {eps}")
    floor = EPS_FLOOR_FACTOR * cfg.tol
    if eps[-1] < floor:
        raise ParameterError(
            f"smallest eps {eps[-1]:g} is below the noise floor {floor:g} "
            f"(= {EPS_FLOOR_FACTOR:g} * tol); raise eps or tighten tol"
        )

    flags: list[bool] = []
    base: SolveReport | None = None
    try:
        base = solve(ctx, v, cfg)
        flags.append(base.converged)
    except SolverError:
        flags.append(False)
    if base is None or not base.converged:
        return SensitivityReport(
            h=None, fd_errors=(), stability_classical=None, stability_weighted=None,
            stability_bound=None, degenerate=False,
            converged_flags=tuple(flags), valid=False, passed=False,
        )

    h = frechet_apply(ctx, base, deltav, cfg)
    hnorm = classical_l2_norm(h)
    scale = max(hnorm, 1e-300)

    def resolve(e: float) -> SolveReport | None:
        # cold start on purpose: the perturbed solve then follows the same
        # iteration path as the base solve, so the two solver errors are
        # correlated and cancel in the quotient (exactly, for affine F)
        try:
            return solve(ctx, v + e * deltav, cfg)
        except SolverError:
            return None

    workers = min(thread_budget(), len(eps))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            solves = list(pool.map(resolve, eps))
    else:
        solves = [resolve(e) for e in eps]

    errors: list[tuple[float, float]] = []
    for e, rep in zip(eps, solves):
        ok = rep is not None and rep.converged
        flags.append(bool(ok))
        if ok:
            quotient = (rep.g - base.g) / e
            errors.append((e, classical_l2_norm(quotient - h) / scale))
    valid = all(flags)
    passed = False
    if valid and errors:
        errs = [err for _, err in errors]
        monotone = all(
            errs[i + 1] <= errs[i] * 1.05 or errs[i + 1] <= 10.0 * cfg.tol / errors[i + 1][0]
            for i in range(len(errs) - 1)
        )
        passed = monotone and min(errs) <= 0.05
    return SensitivityReport(
        h=h,
        fd_errors=tuple(errors),
        stability_classical=None,
        stability_weighted=None,
        stability_bound=None,
        degenerate=False,
        converged_flags=tuple(flags),
        valid=valid,
        passed=passed,
    )


def stability_probe(
    ctx: OperatorContext,
    v1: GridField,
    v2: GridField,
    cfg: SolverConfig,
) -> SensitivityReport:
    """Continuity modulus ‖z₁ − z₂‖ / ‖v₁ − v₂‖ in both norms.

    Identical inputs are flagged degenerate (zero difference, no ratio).  The
    weighted ratio is reported next to the coercivity bound (1 − 8B/m)⁻¹,
    which certifies it for z-linear problems.
    """
    ctx.check_field(v1)
    ctx.check_field(v2)
    flags = []
    reports = []
    for v in (v1, v2):
        try:
            rep = solve(ctx, v, cfg)
        except SolverError:
            rep = None
        flags.append(rep is not None and rep.converged)
        reports.append(rep)
    if not all(flags):
        return SensitivityReport(
            h=None, fd_errors=(), stability_classical=None, stability_weighted=None,
            stability_bound=None, degenerate=False,
            converged_flags=tuple(flags), valid=False, passed=False,
        )
    r1, r2 = reports
    m = r1.m_used
    wn = ctx.with_weight(m).weighted_norms()
    dv = v1 - v2
    dz = r1.g - r2.g
    dv_c, dv_w = classical_l2_norm(dv), wn.norm(dv)
    B = ctx.spec.growth_bound
    bound = 1.0 / (1.0 - 8.0 * B / m) if m > 8.0 * B else None
    if dv_c == 0.0:
        return SensitivityReport(
            h=None, fd_errors=(),
            stability_classical=0.0 if classical_l2_norm(dz) == 0.0 else None,
            stability_weighted=None, stability_bound=bound, degenerate=True,
            converged_flags=tuple(flags), valid=True, passed=True,
        )
    return SensitivityReport(
        h=None,
        fd_errors=(),
        stability_classical=classical_l2_norm(dz) / dv_c,
        stability_weighted=wn.norm(dz) / dv_w,
        stability_bound=bound,
        degenerate=False,
        converged_flags=tuple(flags),
        valid=True,
        passed=True,
    )
