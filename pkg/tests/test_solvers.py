"""Weight choice, linearized/Picard/Newton solvers, and contraction estimates.

Oracles used here:
  * zero problem: the operator is the identity, so every solver must land in
    one iteration with g = v and z = Jv.
  * linear problems: F is affine, so manufactured data v = F'(z0)h* must be
    recovered to solver tolerance, and an independent dense-matrix elimination
    on the flattened grid gives a solver-free reference solution.
  * weight arithmetic: m = max(8B, 2*sqrt(d)) + 1 gives m = 9 for B = d = 1
    and m = 1 for the zero problem.
"""

from __future__ import annotations

import math

import numpy as np
import pytest

from goursat2d.errors import (
    DivergenceError,
    MissingProbeError,
    NoConvergenceError,
)
from goursat2d.grid import GridField, build_grid, cum2d_array, reconstruct_state
from goursat2d.norms import WeightedNorms, classical_l2_norm
from goursat2d.operator import apply_F, apply_Fprime, linearize, make_context
from goursat2d.problem import (
    XYFunction,
    builtin_example_4_6,
    load_problem,
    manufacture_problem,
    probe_assumptions,
    zero_problem,
)
from goursat2d.sampling import random_smooth_field
from goursat2d.solvers import (
    ContractionEstimate,
    SolverConfig,
    choose_weight,
    estimate_contraction,
    solve,
    solve_linearized,
    solve_newton,
    solve_picard,
)


def linear_spec(c1=0.5, c2=-0.25, a1="x*y", a2="y", B=1.0):
    return load_problem({
        "meta": {"n": 1, "B": B, "b": "1"},
        "functions": {"f1": [f"({c1!r})*z1"], "f2": [f"({c2!r})*z1"]},
        "coefficients": {"A1": [[a1]], "A2": [[a2]], "A1x": [["y"]], "A2y": [["0"]]},
    })


def pure_f1_spec(c=0.5, B=1.0):
    """Only the f¹ memory term: (H − I)g = c·Jg, the cleanest contraction probe."""
    return load_problem({
        "meta": {"n": 1, "B": B, "b": "1"},
        "functions": {"f1": [f"({c!r})*z1"], "f2": ["0"]},
        "coefficients": {"A1": [["0"]], "A2": [["0"]], "A1x": [["0"]], "A2y": [["0"]]},
    })


def probed_context(spec, cells, m=None):
    report = probe_assumptions(spec, sample_count=80)
    return make_context(spec, build_grid(cells), m=m).with_assumptions(report)


def zero_state(grid, n=1):
    return reconstruct_state(GridField(grid, np.zeros((grid.npoints, grid.npoints, n))))


class TestSolverConfig:
    @pytest.mark.parametrize("kw", [
        {"m": 0.0},
        {"m": -1.0},
        {"tol": 0.0},
        {"max_iter": 0},
        {"method": "bisection"},
        {"inner_tol": -1e-3},
        {"inner_max_iter": 0},
        {"damping": 0.0},
        {"damping": 1.5},
    ])
    def test_rejects_bad_values(self, kw):
        with pytest.raises(ValueError):
            SolverConfig(**kw)

    def test_defaults_are_valid(self):
        cfg = SolverConfig()
        assert cfg.m is None and cfg.method == "newton"


class TestChooseWeight:
    def test_unit_bounds_give_nine(self):
        # B = 1 and d = max(M_rho, B) = 1 -> m = max(8, 2) + 1 = 9
        ctx = probed_context(linear_spec(), 8)
        choice = choose_weight(ctx)
        assert choice.m == pytest.approx(9.0)
        assert choice.growth_bound == 1.0
        assert choice.kernel_bound == pytest.approx(1.0)
        assert choice.coercivity_threshold == pytest.approx(8.0)
        assert choice.contraction_threshold == pytest.approx(2.0)

    def test_zero_problem_gives_one(self):
        # B = 0 and d = 0 -> m = max(0, 0) + 1 = 1
        ctx = probed_context(zero_problem(), 8)
        choice = choose_weight(ctx)
        assert choice.m == pytest.approx(1.0)
        assert choice.kernel_bound == 0.0

    def test_radius_tracks_expected_iterate_size(self):
        ctx = probed_context(linear_spec(), 8)
        small = zero_state(ctx.grid)
        assert choose_weight(ctx, small).radius == pytest.approx(1.0)
        # sup|z| = 1.2 -> target 2.2 -> smallest probed radius >= 2.2 is 4
        big = reconstruct_state(GridField(ctx.grid, 1.2 * np.ones((9, 9, 1))))
        assert choose_weight(ctx, big).radius == pytest.approx(4.0)

    def test_requires_probe(self):
        ctx = make_context(linear_spec(), build_grid(8))
        with pytest.raises(MissingProbeError):
            choose_weight(ctx)

    def test_as_dict_round_trip(self):
        choice = choose_weight(probed_context(linear_spec(), 8))
        d = choice.as_dict()
        assert d["m"] == choice.m and d["radius"] == choice.radius


class TestLinearizedSolve:
    def test_zero_problem_one_iteration(self):
        ctx = probed_context(zero_problem(), 12)
        rng = np.random.default_rng(5)
        v = random_smooth_field(ctx.grid, 1, rng)
        rep = solve_linearized(ctx, zero_state(ctx.grid), v, SolverConfig())
        assert rep.converged and rep.iterations == 1 and len(rep.trace) == 1
        assert rep.m_used == pytest.approx(1.0)
        np.testing.assert_array_equal(rep.g.values, v.values)
        np.testing.assert_allclose(
            rep.state.z.values, cum2d_array(v.values, ctx.grid.h), atol=1e-15
        )
        assert rep.residual_classical == 0.0

    def test_recovers_manufactured_direction(self):
        ctx = probed_context(linear_spec(), 16)
        z0 = zero_state(ctx.grid)
        rng = np.random.default_rng(11)
        h_star = random_smooth_field(ctx.grid, 1, rng)
        v = apply_Fprime(ctx, z0, h_star)
        cfg = SolverConfig(tol=1e-12)
        rep = solve_linearized(ctx, z0, v, cfg)
        assert rep.converged
        wn = WeightedNorms(ctx.grid, rep.m_used)
        assert wn.norm(rep.g - h_star) <= 10 * cfg.tol
        # contraction at m = 9 with d = 1 is below 4d/m^2, so the trace decays fast
        late = [t.ratio for t in rep.trace[2:] if t.ratio is not None]
        assert late and max(late) < 0.25

    def test_recovers_direction_at_nonlinear_state(self):
        ctx = probed_context(builtin_example_4_6(), 12)
        rng = np.random.default_rng(7)
        z0 = reconstruct_state(random_smooth_field(ctx.grid, 1, rng))
        h_star = random_smooth_field(ctx.grid, 1, rng)
        v = apply_Fprime(ctx, z0, h_star)
        cfg = SolverConfig(tol=1e-12)
        rep = solve_linearized(ctx, z0, v, cfg)
        wn = WeightedNorms(ctx.grid, rep.m_used)
        assert rep.converged and wn.norm(rep.g - h_star) <= 10 * cfg.tol

    def test_matches_dense_elimination(self):
        # Independent oracle: assemble H on the flattened grid from the 1D
        # trapezoid prefix matrix W and solve by LU, no iteration involved.
        cells = 16
        spec = linear_spec()
        ctx = probed_context(spec, cells)
        grid = ctx.grid
        P = grid.npoints
        W = np.zeros((P, P))
        for i in range(1, P):
            W[i, : i + 1] = grid.h
            W[i, 0] = grid.h / 2
            W[i, i] = grid.h / 2
        eye_p = np.eye(P)
        C2 = np.kron(W, W)       # double integral, index = i*P + j
        Cy = np.kron(eye_p, W)   # integral over t in [0, y]: the z_x part
        Cx = np.kron(W, eye_p)   # integral over s in [0, x]: the z_y part
        X, Y = grid.meshgrid()
        DA1 = np.diag((X * Y).ravel())
        DA2 = np.diag(Y.ravel())
        H = (
            np.eye(P * P)
            + 0.5 * C2
            + C2 @ (-0.25 * C2 + DA1 @ Cy + DA2 @ Cx)
        )
        rng = np.random.default_rng(23)
        v = random_smooth_field(grid, 1, rng)
        g_direct = np.linalg.solve(H, v.values[:, :, 0].ravel()).reshape(P, P, 1)
        rep = solve_linearized(ctx, zero_state(grid), v, SolverConfig(tol=1e-13))
        err = classical_l2_norm(rep.g - GridField(grid, g_direct))
        assert err <= 1e-8

    def test_initial_guess_shortcut(self):
        ctx = probed_context(linear_spec(), 12)
        z0 = zero_state(ctx.grid)
        rng = np.random.default_rng(2)
        h_star = random_smooth_field(ctx.grid, 1, rng)
        v = apply_Fprime(ctx, z0, h_star)
        rep = solve_linearized(ctx, z0, v, SolverConfig(tol=1e-11), g0=h_star)
        assert rep.converged and rep.iterations == 1

    def test_warns_below_contraction_threshold(self):
        ctx = probed_context(pure_f1_spec(), 12)
        z0 = zero_state(ctx.grid)
        rng = np.random.default_rng(3)
        v = random_smooth_field(ctx.grid, 1, rng)
        # d = max(0.5, 1) = 1, threshold 2*sqrt(d) = 2, so m = 1.5 must warn;
        # the true factor is still < 1 there, so the solve itself succeeds
        with pytest.warns(UserWarning, match="contraction threshold"):
            rep = solve_linearized(ctx, z0, v, SolverConfig(m=1.5, tol=1e-9))
        assert rep.converged

    def test_divergence_raises_with_partial_report(self):
        # the Volterra part is quasi-nilpotent, so Richardson always converges
        # eventually; a large coefficient makes the transient growth long
        # enough that the divergence guard must fire first
        spec = pure_f1_spec(c=200.0, B=200.0)
        ctx = make_context(spec, build_grid(12))
        z0 = zero_state(ctx.grid)
        rng = np.random.default_rng(4)
        v = random_smooth_field(ctx.grid, 1, rng)
        with pytest.raises(DivergenceError, match="larger m") as exc_info:
            solve_linearized(ctx, z0, v, SolverConfig(m=1.0))
        report = exc_info.value.report
        assert report is not None and not report.converged
        assert report.trace[-1].ratio is not None and report.trace[-1].ratio >= 1.0

    def test_iteration_cap_raises(self):
        ctx = probed_context(pure_f1_spec(), 12)
        z0 = zero_state(ctx.grid)
        rng = np.random.default_rng(6)
        v = random_smooth_field(ctx.grid, 1, rng)
        cfg = SolverConfig(m=3.0, tol=1e-14, max_iter=4)
        with pytest.raises(NoConvergenceError) as exc_info:
            solve_linearized(ctx, z0, v, cfg)
        report = exc_info.value.report
        assert report is not None and report.iterations == 4
        assert all(t.ratio < 1.0 for t in report.trace if t.ratio is not None)


class TestContractionEstimate:
    def test_zero_problem_is_exactly_identity(self):
        ctx = probed_context(zero_problem(), 12)
        est = estimate_contraction(ctx, zero_state(ctx.grid), SolverConfig())
        assert est.rho_hat == 0.0 and est.contracting
        assert est.bound == 0.0 and est.m == pytest.approx(1.0)

    def test_chosen_weight_contracts_within_bound(self):
        ctx = probed_context(pure_f1_spec(), 16)
        est = estimate_contraction(ctx, zero_state(ctx.grid), SolverConfig())
        assert est.m == pytest.approx(9.0)
        assert 0.0 < est.rho_hat < 1.0
        assert est.rho_hat <= est.bound

    def test_doubling_m_quarters_the_factor(self):
        # the memory term scales like 1/m^2 in the weighted norm, so doubling
        # m should cut the measured factor by about 4
        ctx = probed_context(pure_f1_spec(), 16)
        z0 = zero_state(ctx.grid)
        lo = estimate_contraction(ctx, z0, SolverConfig(m=10.0), seed=42)
        hi = estimate_contraction(ctx, z0, SolverConfig(m=20.0), seed=42)
        factor = lo.rho_hat / hi.rho_hat
        assert 3.0 <= factor <= 5.0

    def test_deterministic_for_fixed_seed(self):
        ctx = probed_context(linear_spec(), 12)
        z0 = zero_state(ctx.grid)
        a = estimate_contraction(ctx, z0, SolverConfig(m=5.0), seed=9)
        b = estimate_contraction(ctx, z0, SolverConfig(m=5.0), seed=9)
        assert a == b and isinstance(a, ContractionEstimate)

    def test_rejects_no_trials(self):
        ctx = probed_context(linear_spec(), 8)
        with pytest.raises(ValueError):
            estimate_contraction(ctx, zero_state(ctx.grid), SolverConfig(m=5.0), trials=0)


class TestPicard:
    def test_zero_problem_unit_rhs(self):
        ctx = probed_context(zero_problem(), 16)
        v = GridField(ctx.grid, np.ones((17, 17, 1)))
        rep = solve_picard(ctx, v, SolverConfig(method="picard"))
        assert rep.converged and rep.iterations == 1
        np.testing.assert_array_equal(rep.g.values, np.ones((17, 17, 1)))
        X, Y = ctx.grid.meshgrid()
        np.testing.assert_allclose(rep.state.z.values[:, :, 0], X * Y, atol=1e-12)

    def test_recovers_discrete_manufactured_solution(self):
        ctx = probed_context(builtin_example_4_6(), 16)
        rng = np.random.default_rng(12)
        g_star = random_smooth_field(ctx.grid, 1, rng) * 0.5
        v = apply_F(ctx, g_star)
        cfg = SolverConfig(method="picard", tol=1e-11)
        rep = solve_picard(ctx, v, cfg)
        assert rep.converged
        wn = WeightedNorms(ctx.grid, rep.m_used)
        assert wn.norm(rep.g - g_star) <= 10 * cfg.tol

    def test_damping_slows_but_converges(self):
        ctx = probed_context(builtin_example_4_6(), 8)
        rng = np.random.default_rng(13)
        g_star = random_smooth_field(ctx.grid, 1, rng) * 0.3
        v = apply_F(ctx, g_star)
        full = solve_picard(ctx, v, SolverConfig(method="picard", tol=1e-9))
        damped = solve_picard(
            ctx, v, SolverConfig(method="picard", tol=1e-9, damping=0.5, max_iter=400)
        )
        assert damped.converged and damped.iterations > full.iterations
        wn = WeightedNorms(ctx.grid, full.m_used)
        assert wn.norm(damped.g - full.g) < 1e-8


class TestNewton:
    def test_linear_problem_needs_one_update(self):
        ctx = probed_context(linear_spec(), 12)
        rng = np.random.default_rng(14)
        g_star = random_smooth_field(ctx.grid, 1, rng)
        v = apply_F(ctx, g_star)
        rep = solve_newton(ctx, v, SolverConfig(tol=1e-10))
        assert rep.converged and rep.iterations == 2
        wn = WeightedNorms(ctx.grid, rep.m_used)
        assert wn.norm(rep.g - g_star) <= 1e-9

    def test_nonlinear_manufactured_solution(self):
        ctx = probed_context(builtin_example_4_6(k=3, l=2), 16)
        rng = np.random.default_rng(15)
        g_star = random_smooth_field(ctx.grid, 1, rng)
        v = apply_F(ctx, g_star)
        cfg = SolverConfig(tol=1e-11)
        rep = solve_newton(ctx, v, cfg)
        assert rep.converged and rep.iterations <= 10
        wn = WeightedNorms(ctx.grid, rep.m_used)
        assert wn.norm(rep.g - g_star) <= 10 * cfg.tol
        # once in the basin the trace contracts much faster than the
        # Picard-style linear rate
        assert rep.trace[-1].ratio is not None and rep.trace[-1].ratio < 0.05

    def test_matches_picard_fixed_point(self):
        ctx = probed_context(builtin_example_4_6(), 12)
        rng = np.random.default_rng(16)
        v = apply_F(ctx, random_smooth_field(ctx.grid, 1, rng) * 0.4)
        newton = solve_newton(ctx, v, SolverConfig(tol=1e-11))
        picard = solve_picard(ctx, v, SolverConfig(method="picard", tol=1e-11))
        wn = WeightedNorms(ctx.grid, newton.m_used)
        assert wn.norm(newton.g - picard.g) <= 1e-10

    def test_odd_rhs_gives_odd_solution(self):
        # f1, f2 odd in z and no memory coefficients: the discrete fixed-point
        # map commutes with negation, so z(-v) = -z(v)
        spec = load_problem({
            "meta": {"n": 1, "B": 1.0, "b": "0"},
            "functions": {"f1": ["z1^3/(1 + z1^2)"], "f2": ["sin(z1)"]},
            "coefficients": {"A1": [["0"]], "A2": [["0"]], "A1x": [["0"]], "A2y": [["0"]]},
        })
        report = probe_assumptions(spec, sample_count=80)
        ctx = make_context(spec, build_grid(12)).with_assumptions(report)
        rng = np.random.default_rng(17)
        v = random_smooth_field(ctx.grid, 1, rng)
        cfg = SolverConfig(tol=1e-11)
        plus = solve_newton(ctx, v, cfg)
        minus = solve_newton(ctx, -v, cfg)
        wn = WeightedNorms(ctx.grid, plus.m_used)
        assert wn.norm(plus.g + minus.g) <= 100 * cfg.tol

    def test_unique_limit_from_many_starts(self):
        ctx = probed_context(builtin_example_4_6(), 10)
        rng = np.random.default_rng(18)
        v = random_smooth_field(ctx.grid, 1, rng)
        cfg = SolverConfig(tol=1e-11)
        base = solve_newton(ctx, v, cfg)
        wn = WeightedNorms(ctx.grid, base.m_used)
        for trial in range(5):
            g0 = random_smooth_field(ctx.grid, 1, rng) * (0.5 + trial)
            rep = solve_newton(ctx, v, cfg, g0=g0)
            assert rep.converged
            assert wn.norm(rep.g - base.g) <= 100 * cfg.tol

    def test_iteration_cap_raises(self):
        ctx = probed_context(builtin_example_4_6(), 8)
        rng = np.random.default_rng(19)
        v = random_smooth_field(ctx.grid, 1, rng)
        with pytest.raises(NoConvergenceError) as exc_info:
            solve_newton(ctx, v, SolverConfig(tol=1e-16, max_iter=1))
        report = exc_info.value.report
        assert report is not None and report.iterations == 1 and not report.converged

    def test_mesh_refinement_halves_h_quarters_error(self):
        base = linear_spec()
        zstar = XYFunction.from_sources("1 + sin(2*x)*cos(y)")
        errors = []
        for cells in (16, 32):
            grid = build_grid(cells)
            mspec = manufacture_problem(base, zstar, grid, refine=4)
            report = probe_assumptions(mspec, sample_count=80)
            ctx = make_context(mspec, grid).with_assumptions(report)
            rep = solve_newton(ctx, mspec.sample_rhs(grid), SolverConfig(tol=1e-12))
            ref = mspec.manufactured.sample(grid)
            errors.append(classical_l2_norm(rep.g - ref))
        ratio = errors[0] / errors[1]
        assert 3.48 <= ratio <= 4.6


class TestDispatchAndReports:
    def test_solve_routes_by_method(self):
        ctx = probed_context(builtin_example_4_6(), 8)
        rng = np.random.default_rng(20)
        v = apply_F(ctx, random_smooth_field(ctx.grid, 1, rng) * 0.3)
        a = solve(ctx, v, SolverConfig(method="picard", tol=1e-10))
        b = solve(ctx, v, SolverConfig(method="newton", tol=1e-10))
        assert a.method == "picard" and b.method == "newton"
        assert classical_l2_norm(a.g - b.g) <= 1e-7

    def test_report_dict_shape(self):
        ctx = probed_context(zero_problem(), 8)
        v = GridField(ctx.grid, np.ones((9, 9, 1)))
        rep = solve_picard(ctx, v, SolverConfig(method="picard"))
        d = rep.as_dict()
        assert d["method"] == "picard" and d["converged"] is True
        assert d["trace"][0] == {"iteration": 1, "residual": 0.0, "ratio": None}

    def test_repeat_solves_bit_identical(self):
        ctx = probed_context(builtin_example_4_6(), 10)
        rng = np.random.default_rng(21)
        v = random_smooth_field(ctx.grid, 1, rng)
        a = solve_newton(ctx, v, SolverConfig(tol=1e-11))
        b = solve_newton(ctx, v, SolverConfig(tol=1e-11))
        np.testing.assert_array_equal(a.g.values, b.g.values)
        assert a.trace == b.trace
