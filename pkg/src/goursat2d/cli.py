"""Command-line front end for the solver library.

Five subcommands share one problem-description pipeline (a JSON document or a
named builtin) and one exit-code contract:

    solve      nonlinear solve of F(z) = v; writes PREFIX.grid.csv + PREFIX.report.json
    linsolve   one linearized solve F'(z0) h = w with its contraction trace
    verify     inequality suites: norms, lemma31, coercivity, assumptions, contraction
    sens       directional-derivative validation of the solution map v ↦ z_v
    mms        manufactured-solution convergence study over a resolution ladder

Exit codes:  0 success / all checks passed;  1 malformed input (bad document,
bad expression, bad flag value);  2 solver failure (divergence, iteration cap,
stalled line search);  3 a verification suite measured a violated inequality.

Everything printed to stdout is one JSON object per line, so scripts can
consume results without scraping; human-facing notes go to stderr.  Reports
and grids are written atomically and contain no timestamps: identical inputs
(including --seed) produce byte-identical artifacts.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np

from .errors import (
    EvalFaultError,
    ExprSyntaxError,
    InvalidResolutionError,
    InvalidWeightError,
    MissingProbeError,
    ParameterError,
    SchemaError,
    ShapeError,
    SolverError,
    ThresholdError,
)
from .fileio import read_field_csv, read_grid_csv, write_field_csv, write_grid_csv, write_report_json
from .grid import GridField, StateTriple, build_grid, reconstruct_state
from .norms import ac_norm, check_norm_equivalence, classical_l2_norm, verify_lemma31, LEMMA31_SIDES
from .operator import coercivity_probe, make_context
from .problem import (
    BUILTIN_PROBLEMS,
    DEFAULT_SEED,
    ProblemSpec,
    XYFunction,
    load_problem,
    manufacture_problem,
    probe_assumptions,
)
from .sampling import random_smooth_field
from .sensitivity import validate_frechet
from .solvers import (
    SolverConfig,
    choose_weight,
    estimate_contraction,
    solve,
    solve_linearized,
)

_INPUT_ERRORS = (
    SchemaError,
    ExprSyntaxError,
    EvalFaultError,
    ParameterError,
    InvalidResolutionError,
    InvalidWeightError,
    ShapeError,
    ThresholdError,
    MissingProbeError,
)

_SOLVER_FLAG_KEYS = ("m", "method", "tol", "max_iter", "damping", "inner_tol", "inner_max_iter")


class _Parser(argparse.ArgumentParser):
    """argparse reserves exit code 2 for usage errors; here 2 means a solver
    failure, so flag mistakes are remapped to the input-error code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _emit(line: dict) -> None:
    print(json.dumps(line))


def _note(message: str) -> None:
    print(message, file=sys.stderr)


# -- argument plumbing ---------------------------------------------------------

def _add_problem_args(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--problem", metavar="PATH", help="JSON problem document")
    src.add_argument("--builtin", choices=sorted(BUILTIN_PROBLEMS),
                     help="named built-in problem instead of a document")


def _add_probe_args(p: argparse.ArgumentParser, samples_default: int | None = 200) -> None:
    p.add_argument("--samples", type=int, default=samples_default,
                   help="sample count for probes / random fields")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED,
                   help=f"seed for every random draw (default {DEFAULT_SEED})")


def _add_solver_args(p: argparse.ArgumentParser, with_method: bool = True) -> None:
    p.add_argument("--m", default=None,
                   help="norm weight: 'auto' (probe-driven choice) or a positive real")
    if with_method:
        p.add_argument("--method", choices=["newton", "picard"], default=None)
    p.add_argument("--tol", type=float, default=None, help="weighted residual tolerance")
    p.add_argument("--max-iter", type=int, default=None)
    p.add_argument("--damping", type=float, default=None)
    p.add_argument("--inner-tol", type=float, default=None)
    p.add_argument("--inner-max-iter", type=int, default=None)


def _add_out_arg(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", metavar="PREFIX", default="out",
                   help="output prefix for grids/reports (default 'out')")


def _parse_float_list(text: str, what: str) -> list[float]:
    try:
        values = [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as exc:
        raise ParameterError(f"{what} must be a comma-separated list of reals: {exc}") from exc
    if not values:
        raise ParameterError(f"{what} is empty")
    return values


def _parse_int_list(text: str, what: str) -> list[int]:
    try:
        values = [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as exc:
        raise ParameterError(f"{what} must be a comma-separated list of integers: {exc}") from exc
    if not values:
        raise ParameterError(f"{what} is empty")
    return values


def _load_spec(args) -> tuple[ProblemSpec, dict]:
    """The problem plus its document's solver section (empty for builtins)."""
    if args.builtin is not None:
        return BUILTIN_PROBLEMS[args.builtin](), {}
    path = Path(args.problem)
    # read_text errors (missing file, permissions) surface as OSError -> exit 1
    text = path.read_text(encoding="utf-8")
    try:
        document = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path} is not valid JSON: {exc}") from exc
    spec = load_problem(document, base_dir=path.parent)
    solver_doc = document.get("solver", {}) if isinstance(document, dict) else {}
    return spec, dict(solver_doc)


def _solver_config(args, solver_doc: dict) -> SolverConfig:
    """Defaults < document solver section < command-line flags."""
    merged = dict(solver_doc)
    for key in _SOLVER_FLAG_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    m = merged.pop("m", None)
    if isinstance(m, str):
        if m.strip().lower() == "auto":
            m = None
        else:
            try:
                m = float(m)
            except ValueError as exc:
                raise ParameterError(f"--m must be 'auto' or a real number, got {m!r}") from exc
    try:
        return SolverConfig(m=m, **merged)
    except (TypeError, ValueError) as exc:
        raise ParameterError(f"bad solver settings: {exc}") from exc


def _xyfunction(source: str, n: int, what: str) -> XYFunction:
    """Parse ';'-separated component expressions (commas occur inside calls)."""
    parts = [part.strip() for part in source.split(";") if part.strip()]
    if not parts:
        raise ParameterError(f"{what} is empty")
    if len(parts) != n:
        raise ParameterError(f"{what} has {len(parts)} component(s), problem has {n}")
    try:
        return XYFunction.from_sources(parts)
    except ValueError as exc:
        raise ParameterError(f"{what}: {exc}") from exc


def _field(source: str, grid, n: int, what: str) -> GridField:
    """A field from either an expression or a node-value CSV path."""
    looks_like_path = source.endswith(".csv") or Path(source).is_file()
    if looks_like_path:
        f = read_field_csv(source)
        if f.grid != grid:
            raise ParameterError(f"{what}: file is sampled on {f.grid}, expected {grid}")
        if f.n != n:
            raise ParameterError(f"{what}: file has {f.n} components, problem has {n}")
        return f
    return _xyfunction(source, n, what).sample(grid)


def _rhs_field(spec: ProblemSpec, args, grid) -> GridField:
    override = getattr(args, "rhs", None)
    if override is not None:
        return _field(override, grid, spec.n, "--rhs")
    try:
        return spec.sample_rhs(grid)
    except ValueError as exc:
        raise ParameterError(str(exc)) from exc


def _zero_state(grid, n: int) -> StateTriple:
    zeros = GridField(grid, np.zeros((grid.npoints, grid.npoints, n)))
    return StateTriple(z=zeros, zx=zeros, zy=zeros)


def _probed_context(spec: ProblemSpec, cells: int, samples: int, seed: int):
    grid = build_grid(cells)
    report = probe_assumptions(spec, sample_count=samples, seed=seed)
    if not report.passed:
        _note("note: assumption probe found violations "
              f"(growth_ok={report.growth_ok}, coeff_ok={report.coeff_ok}, "
              f"deriv_ok={report.deriv_ok}); run `verify --suite assumptions` for details")
    return make_context(spec, grid).with_assumptions(report)


def _zstar_error(args, spec: ProblemSpec, ctx, rep) -> dict | None:
    source = getattr(args, "zstar", None)
    if source is None:
        return None
    ref = _xyfunction(source, spec.n, "--zstar").sample(ctx.grid)
    diff = rep.g - ref
    return {
        "classical": classical_l2_norm(diff),
        "weighted": ctx.with_weight(rep.m_used).weighted_norms().norm(diff),
    }


# -- solve ---------------------------------------------------------------------

def cmd_solve(args) -> int:
    spec, solver_doc = _load_spec(args)
    cfg = _solver_config(args, solver_doc)
    ctx = _probed_context(spec, args.n, args.samples, args.seed)
    v = _rhs_field(spec, args, ctx.grid)

    choice = None
    if cfg.m is None:
        choice = choose_weight(ctx)
        cfg = replace(cfg, m=choice.m)
    estimate = estimate_contraction(ctx, _zero_state(ctx.grid, spec.n), cfg, seed=args.seed)

    failure = None
    try:
        rep = solve(ctx, v, cfg)
    except SolverError as exc:
        if exc.report is None:
            raise
        failure, rep = str(exc), exc.report

    report = {
        "command": "solve",
        "label": spec.label,
        "cells": ctx.grid.cells,
        "seed": args.seed,
        "solver": {
            "method": rep.method,
            "m": rep.m_used,
            "tol": cfg.tol,
            "max_iter": cfg.max_iter,
            "damping": cfg.damping,
            "inner_tol": cfg.inner_tol,
            "inner_max_iter": cfg.inner_max_iter,
        },
        "weight_choice": None if choice is None else choice.as_dict(),
        "assumptions": ctx.assumptions.as_dict(),
        "contraction": estimate.as_dict(),
        "result": rep.as_dict(),
        "error_vs_reference": _zstar_error(args, spec, ctx, rep),
        "failure": failure,
        "grid_file": f"{args.out}.grid.csv",
    }
    write_grid_csv(f"{args.out}.grid.csv", rep.g, rep.state)
    write_report_json(f"{args.out}.report.json", report)
    _emit({
        "command": "solve",
        "converged": rep.converged,
        "iterations": rep.iterations,
        "m": rep.m_used,
        "residual_weighted": rep.residual_weighted,
        "grid": f"{args.out}.grid.csv",
        "report": f"{args.out}.report.json",
    })
    if failure is not None:
        _note(f"solver failure: {failure}")
        return 2
    return 0


# -- linsolve ------------------------------------------------------------------

def cmd_linsolve(args) -> int:
    spec, solver_doc = _load_spec(args)
    cfg = _solver_config(args, solver_doc)
    ctx = _probed_context(spec, args.n, args.samples, args.seed)

    if args.linearize_at is not None:
        _, state = read_grid_csv(args.linearize_at)
        if state.grid != ctx.grid:
            raise ParameterError(
                f"--linearize-at state is sampled on {state.grid}, expected {ctx.grid}")
        if state.n != spec.n:
            raise ParameterError(
                f"--linearize-at state has {state.n} components, problem has {spec.n}")
        linearized_at = args.linearize_at
    else:
        state = _zero_state(ctx.grid, spec.n)
        linearized_at = "zero"

    w = _field(args.rhs, ctx.grid, spec.n, "--rhs")
    choice = None
    if cfg.m is None:
        choice = choose_weight(ctx, state)
        cfg = replace(cfg, m=choice.m)
    estimate = estimate_contraction(ctx, state, cfg, seed=args.seed)

    failure = None
    try:
        rep = solve_linearized(ctx, state, w, cfg)
    except SolverError as exc:
        if exc.report is None:
            raise
        failure, rep = str(exc), exc.report

    report = {
        "command": "linsolve",
        "label": spec.label,
        "cells": ctx.grid.cells,
        "seed": args.seed,
        "linearized_at": linearized_at,
        "solver": {"m": rep.m_used, "tol": cfg.tol, "max_iter": cfg.max_iter},
        "weight_choice": None if choice is None else choice.as_dict(),
        "assumptions": ctx.assumptions.as_dict(),
        "contraction": estimate.as_dict(),
        "result": rep.as_dict(),
        "failure": failure,
        "grid_file": f"{args.out}.grid.csv",
    }
    write_grid_csv(f"{args.out}.grid.csv", rep.g, rep.state)
    write_report_json(f"{args.out}.report.json", report)
    _emit({
        "command": "linsolve",
        "converged": rep.converged,
        "iterations": rep.iterations,
        "m": rep.m_used,
        "rho_hat": estimate.rho_hat,
        "residual_weighted": rep.residual_weighted,
        "grid": f"{args.out}.grid.csv",
        "report": f"{args.out}.report.json",
    })
    if failure is not None:
        _note(f"solver failure: {failure}")
        return 2
    return 0


# -- verify --------------------------------------------------------------------

def _fail_artifact_field(out: str, field: GridField) -> str:
    path = f"{out}.fail.csv"
    write_field_csv(path, field)
    return path

def _fail_artifact_json(out: str, payload: dict) -> str:
    path = f"{out}.fail.json"
    write_report_json(path, payload)
    return path


def _suite_norms(args) -> int:
    cells = args.n if args.n is not None else 32
    samples = args.samples if args.samples is not None else 100
    m_list = _parse_float_list(args.m_list or "0.5,1,2,5", "--m-list")
    grid = build_grid(cells)
    rng = np.random.default_rng(args.seed)
    fields = [random_smooth_field(grid, 1, rng) for _ in range(samples)]

    all_ok = True
    worst_margin, worst_field = math.inf, None
    for m in m_list:
        min_lower = min_upper = math.inf
        ok = True
        for f in fields:
            rep = check_norm_equivalence(f, m)
            lower_margin = rep.weighted - rep.lower
            upper_margin = rep.upper - rep.weighted
            min_lower = min(min_lower, lower_margin)
            min_upper = min(min_upper, upper_margin)
            if min(lower_margin, upper_margin) < worst_margin:
                worst_margin, worst_field = min(lower_margin, upper_margin), f
            ok = ok and rep.passed
        _emit({"suite": "norms", "check": "equivalence", "m": m, "samples": samples,
               "min_lower_margin": min_lower, "min_upper_margin": min_upper, "pass": ok})
        all_ok = all_ok and ok

    # closed form: z = xy has g ≡ 1 and ‖xy‖ at m = 1 equals 1 − e⁻¹
    g64 = GridField(build_grid(64), np.ones((65, 65, 1)))
    value = ac_norm(g64, 1.0)
    expected = 1.0 - math.exp(-1.0)
    spot = abs(value - expected) <= 1e-3 and math.exp(-2.0) <= value <= 1.0
    _emit({"suite": "norms", "check": "xy_closed_form", "m": 1.0, "value": value,
           "expected": expected, "lower": math.exp(-2.0), "upper": 1.0, "pass": spot})
    all_ok = all_ok and spot

    if not all_ok:
        artifact = _fail_artifact_field(args.out, worst_field) if worst_field is not None else None
        _emit({"suite": "norms", "pass": False, "fail_artifact": artifact})
        return 3
    return 0


def _suite_lemma31(args) -> int:
    cells = args.n if args.n is not None else 32
    samples = args.samples if args.samples is not None else 200
    m_list = _parse_float_list(args.m_list or "1,5,10,20", "--m-list")
    grid = build_grid(cells)
    rng = np.random.default_rng(args.seed)
    fields = [random_smooth_field(grid, 1, rng) for _ in range(samples)]

    all_ok = True
    worst_margin, worst_field = math.inf, None
    for m in m_list:
        mins = [math.inf] * 4
        ok = True
        for f in fields:
            rep = verify_lemma31(f, m)
            for k, margin in enumerate(rep.margins):
                mins[k] = min(mins[k], margin)
                if margin < worst_margin:
                    worst_margin, worst_field = margin, f
            ok = ok and rep.passed
        _emit({"suite": "lemma31", "m": m, "samples": samples,
               "min_margins": dict(zip(LEMMA31_SIDES, mins)), "pass": ok})
        all_ok = all_ok and ok

    if not all_ok:
        artifact = _fail_artifact_field(args.out, worst_field) if worst_field is not None else None
        _emit({"suite": "lemma31", "pass": False, "fail_artifact": artifact})
        return 3
    return 0


def _suite_coercivity(args) -> int:
    if args.problem is None and args.builtin is None:
        raise ParameterError("--suite coercivity needs --problem or --builtin")
    spec, _ = _load_spec(args)
    cells = args.n if args.n is not None else 32
    samples = args.samples if args.samples is not None else 20
    B = spec.growth_bound
    m_list = (_parse_float_list(args.m_list, "--m-list") if args.m_list
              else [8.0 * B + 1.0])
    ctx = make_context(spec, build_grid(cells))
    rng = np.random.default_rng(args.seed)
    fields = [random_smooth_field(ctx.grid, spec.n, rng) for _ in range(samples)]

    all_ok = True
    worst_margin, worst_field = math.inf, None
    for m in m_list:
        rep = coercivity_probe(ctx, fields, m)
        k = int(np.argmin(rep.margins))
        if rep.margins[k] < worst_margin:
            worst_margin, worst_field = rep.margins[k], fields[k]
        _emit({"suite": "coercivity", "m": m, "samples": samples,
               "factor": rep.factor, "offset": rep.offset,
               "min_margin": min(rep.margins), "ray_ok": rep.ray_ok,
               "pass": rep.passed})
        all_ok = all_ok and rep.passed

    if not all_ok:
        artifact = _fail_artifact_field(args.out, worst_field) if worst_field is not None else None
        _emit({"suite": "coercivity", "pass": False, "fail_artifact": artifact})
        return 3
    return 0


def _suite_assumptions(args) -> int:
    if args.problem is None and args.builtin is None:
        raise ParameterError("--suite assumptions needs --problem or --builtin")
    spec, _ = _load_spec(args)
    samples = args.samples if args.samples is not None else 200
    rep = probe_assumptions(spec, sample_count=samples, seed=args.seed)

    _emit({"suite": "assumptions", "check": "growth",
           "worst_f1": rep.growth_worst_f1, "worst_f2": rep.growth_worst_f2,
           "limit": 1.0, "pass": rep.growth_ok})
    _emit({"suite": "assumptions", "check": "coefficients",
           "declared_bound": rep.declared_bound,
           "sup_a1": rep.sup_a1, "sup_a2": rep.sup_a2,
           "sup_a1x": rep.sup_a1x, "sup_a2y": rep.sup_a2y,
           "pass": rep.coeff_ok})
    _emit({"suite": "assumptions", "check": "derivatives",
           "residual_a1x": rep.deriv_residual_a1x,
           "residual_a2y": rep.deriv_residual_a2y,
           "pass": rep.deriv_ok})
    if rep.kink_flagged:
        _note("note: the nonlinearity sampled as possibly non-smooth (kink flagged); "
              "Newton may fall back to slow steps near the kink")

    if not rep.passed:
        failing = [name for name, ok in
                   (("growth", rep.growth_ok), ("coefficients", rep.coeff_ok),
                    ("derivatives", rep.deriv_ok)) if not ok]
        artifact = _fail_artifact_json(args.out, rep.as_dict())
        _emit({"suite": "assumptions", "pass": False,
               "failed_checks": failing, "fail_artifact": artifact})
        return 3
    return 0


def _suite_contraction(args) -> int:
    if args.problem is None and args.builtin is None:
        raise ParameterError("--suite contraction needs --problem or --builtin")
    spec, solver_doc = _load_spec(args)
    cells = args.n if args.n is not None else 32
    trials = args.samples if args.samples is not None else 8
    ctx = _probed_context(spec, cells, 200, args.seed)
    z0 = _zero_state(ctx.grid, spec.n)

    if args.m_list:
        m_values = _parse_float_list(args.m_list, "--m-list")
    else:
        choice = choose_weight(ctx, z0)
        _emit({"suite": "contraction", "check": "weight_choice", **choice.as_dict()})
        m_values = [choice.m]

    all_ok = True
    estimates = []
    for m in m_values:
        cfg = _solver_config(args, {**solver_doc, "m": m})
        est = estimate_contraction(ctx, z0, cfg, trials=trials, seed=args.seed)
        estimates.append(est.as_dict())
        _emit({"suite": "contraction", "m": est.m, "rho_hat": est.rho_hat,
               "bound": est.bound, "trials": est.trials, "pass": est.contracting})
        all_ok = all_ok and est.contracting

    if not all_ok:
        artifact = _fail_artifact_json(args.out, {"estimates": estimates})
        _emit({"suite": "contraction", "pass": False, "fail_artifact": artifact,
               "hint": "contraction requires m > 2*sqrt(d); raise m"})
        return 3
    return 0


_SUITES = {
    "norms": _suite_norms,
    "lemma31": _suite_lemma31,
    "coercivity": _suite_coercivity,
    "assumptions": _suite_assumptions,
    "contraction": _suite_contraction,
}


def cmd_verify(args) -> int:
    return _SUITES[args.suite](args)


# -- sens ----------------------------------------------------------------------

def cmd_sens(args) -> int:
    spec, solver_doc = _load_spec(args)
    cfg = _solver_config(args, solver_doc)
    ctx = _probed_context(spec, args.n, args.samples, args.seed)
    v = _rhs_field(spec, args, ctx.grid)
    direction = _field(args.direction, ctx.grid, spec.n, "--direction")
    eps = _parse_float_list(args.eps, "--eps")

    choice = None
    if cfg.m is None:
        choice = choose_weight(ctx)
        cfg = replace(cfg, m=choice.m)

    rep = validate_frechet(ctx, v, direction, tuple(eps), cfg)
    if not rep.valid:
        _note("sens: a base or perturbed solve failed to converge; "
              "no derivative was validated")
        return 2

    for e, err in rep.fd_errors:
        _emit({"command": "sens", "eps": e, "fd_error": err})
    _emit({"command": "sens", "passed": rep.passed,
           "grid": f"{args.out}.grid.csv", "report": f"{args.out}.report.json"})

    write_grid_csv(f"{args.out}.grid.csv", rep.h, reconstruct_state(rep.h))
    write_report_json(f"{args.out}.report.json", {
        "command": "sens",
        "label": spec.label,
        "cells": ctx.grid.cells,
        "seed": args.seed,
        "m": cfg.m,
        "tol": cfg.tol,
        "weight_choice": None if choice is None else choice.as_dict(),
        "direction": args.direction,
        "validation": rep.as_dict(),
        "grid_file": f"{args.out}.grid.csv",
    })
    return 0 if rep.passed else 3


# -- mms -----------------------------------------------------------------------

def cmd_mms(args) -> int:
    spec, solver_doc = _load_spec(args)
    cfg = _solver_config(args, solver_doc)
    zstar = _xyfunction(args.zstar, spec.n, "--zstar")
    n_list = _parse_int_list(args.n_list or "16,32,64", "--n-list")
    if len(n_list) < 2:
        raise ParameterError("--n-list needs at least two resolutions to measure an order")
    if sorted(n_list) != n_list or len(set(n_list)) != len(n_list):
        raise ParameterError("--n-list must be strictly increasing")
    probe = probe_assumptions(spec, sample_count=args.samples, seed=args.seed)

    rows = []
    errors = []
    for cells in n_list:
        grid = build_grid(cells)
        mspec = manufacture_problem(spec, zstar, grid, refine=4)
        ctx = make_context(mspec, grid).with_assumptions(probe)
        try:
            rep = solve(ctx, mspec.sample_rhs(grid), cfg)
        except SolverError as exc:
            _note(f"mms: solve at N={cells} failed: {exc}")
            return 2
        err = classical_l2_norm(rep.g - zstar.sample(grid))
        errors.append(err)
        rows.append({"cells": cells, "h": grid.h, "error": err,
                     "iterations": rep.iterations, "m": rep.m_used})
        _emit({"command": "mms", **rows[-1]})

    exact = max(errors) <= 1e-12
    if exact:
        orders: list[float] = []
        ok = True
        _emit({"command": "mms", "exact": True, "max_error": max(errors), "pass": True})
    else:
        # observed order p from e ~ C h^p between consecutive ladder rungs
        orders = [math.log(errors[k] / max(errors[k + 1], 1e-300))
                  / math.log(n_list[k + 1] / n_list[k])
                  for k in range(len(errors) - 1)]
        ok = all(1.8 <= order <= 2.2 for order in orders)
        _emit({"command": "mms", "exact": False, "orders": orders, "pass": ok})

    write_report_json(f"{args.out}.report.json", {
        "command": "mms",
        "label": spec.label,
        "seed": args.seed,
        "zstar": args.zstar,
        "resolutions": rows,
        "exact": exact,
        "orders": orders,
        "pass": ok,
    })
    return 0 if ok else 3


# -- parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="goursat2d",
                     description="Solvers and verification probes for 2D Volterra "
                                 "integro-differential systems on the unit square.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", help="nonlinear solve of F(z) = v")
    _add_problem_args(p)
    p.add_argument("--n", type=int, required=True, metavar="CELLS")
    p.add_argument("--rhs", default=None, metavar="EXPR|PATH",
                   help="right-hand side override (';' separates components)")
    p.add_argument("--zstar", default=None, metavar="EXPR",
                   help="reference mixed derivative g* = d²z*/dxdy for an error report")
    _add_solver_args(p)
    _add_probe_args(p)
    _add_out_arg(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("linsolve", help="one linearized solve with contraction trace")
    _add_problem_args(p)
    p.add_argument("--n", type=int, required=True, metavar="CELLS")
    p.add_argument("--rhs", required=True, metavar="EXPR|PATH")
    p.add_argument("--linearize-at", default=None, metavar="PATH",
                   help="grid CSV with the state to linearize at (default: zero)")
    _add_solver_args(p, with_method=False)
    _add_probe_args(p)
    _add_out_arg(p)
    p.set_defaults(func=cmd_linsolve)

    p = sub.add_parser("verify", help="inequality suites with machine-readable margins")
    p.add_argument("--suite", required=True, choices=sorted(_SUITES))
    src = p.add_mutually_exclusive_group()
    src.add_argument("--problem", metavar="PATH")
    src.add_argument("--builtin", choices=sorted(BUILTIN_PROBLEMS))
    p.add_argument("--n", type=int, default=None, metavar="CELLS")
    p.add_argument("--m-list", default=None, metavar="M1,M2,...",
                   help="weights to test (defaults depend on the suite)")
    _add_solver_args(p, with_method=False)
    _add_probe_args(p, samples_default=None)
    _add_out_arg(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sens", help="finite-difference validation of the directional derivative")
    _add_problem_args(p)
    p.add_argument("--n", type=int, required=True, metavar="CELLS")
    p.add_argument("--rhs", default=None, metavar="EXPR|PATH")
    p.add_argument("--direction", required=True, metavar="EXPR|PATH",
                   help="perturbation direction δv")
    p.add_argument("--eps", default="1e-1,1e-2,1e-3", metavar="E1,E2,...",
                   help="strictly decreasing step sizes")
    _add_solver_args(p)
    _add_probe_args(p)
    _add_out_arg(p)
    p.set_defaults(func=cmd_sens)

    p = sub.add_parser("mms", help="manufactured-solution convergence study")
    _add_problem_args(p)
    p.add_argument("--zstar", required=True, metavar="EXPR",
                   help="manufactured mixed derivative g* (';' separates components)")
    p.add_argument("--n-list", default="16,32,64", metavar="N1,N2,...")
    _add_solver_args(p)
    _add_probe_args(p)
    _add_out_arg(p)
    p.set_defaults(func=cmd_mms)

    return parser


def _show_warning(message, category, filename, lineno, file=None, line=None):
    print(f"warning: {message}", file=sys.stderr)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    with warnings.catch_warnings():
        warnings.simplefilter("always")
        warnings.showwarning = _show_warning
        try:
            return args.func(args)
        except _INPUT_ERRORS as exc:
            _note(f"error: {exc}")
            return 1
        except OSError as exc:
            _note(f"error: {exc}")
            return 1
        except SolverError as exc:
            _note(f"solver failure: {exc}")
            return 2


if __name__ == "__main__":
    sys.exit(main())
