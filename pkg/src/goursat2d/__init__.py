"""Solvers for 2D nonlinear Volterra integro-differential systems.

The library discretizes systems of the form

    z_xy(x, y) + f¹(x, y, z) + ∫₀ˣ∫₀ʸ [f²(s, t, z) + A¹(s, t) z_x + A²(s, t) z_y] ds dt = v(x, y)

on the unit square with z = 0 on the edges x = 0 and y = 0, working in the
mixed derivative g = z_xy as the fundamental unknown.  Exponentially weighted
norms make the causal integral part a contraction, which powers fixed-point
and Newton–Kantorovich solvers plus stability and sensitivity analysis of the
solution map v ↦ z_v.
"""

from .errors import (
    DivergenceError,
    EvalFaultError,
    ExprSyntaxError,
    Goursat2dError,
    InvalidResolutionError,
    InvalidWeightError,
    MissingProbeError,
    NoConvergenceError,
    ParameterError,
    SchemaError,
    ShapeError,
    SolverError,
    StagnationError,
    ThresholdError,
)
from .exprlang import evaluate, evaluate_dual, parse, to_source
from .fileio import (
    read_field_csv,
    read_grid_csv,
    read_report_json,
    write_field_csv,
    write_grid_csv,
    write_report_json,
)
from .grid import Grid, GridField, StateTriple, build_grid, reconstruct_state
from .norms import (
    Lemma31Report,
    NormEquivalenceReport,
    WeightedNorms,
    ac_norm,
    check_norm_equivalence,
    classical_l2_norm,
    verify_lemma31,
    weighted_l2_norm,
)
from .operator import (
    CoercivityReport,
    OperatorContext,
    apply_F,
    apply_Fprime,
    coercivity_probe,
    linearize,
    make_context,
    merit,
    residual,
)
from .problem import (
    AssumptionReport,
    BUILTIN_PROBLEMS,
    DEFAULT_SEED,
    ProblemSpec,
    XYFunction,
    builtin_example_4_6,
    load_problem,
    manufacture_problem,
    probe_assumptions,
    serialize_problem,
    zero_problem,
)
from .sensitivity import (
    SensitivityReport,
    frechet_apply,
    stability_probe,
    validate_frechet,
)
from .solvers import (
    ContractionEstimate,
    SolveReport,
    SolverConfig,
    WeightChoice,
    choose_weight,
    estimate_contraction,
    solve,
    solve_linearized,
    solve_newton,
    solve_picard,
)

__version__ = "1.0.0"

__all__ = [
    "AssumptionReport",
    "BUILTIN_PROBLEMS",
    "CoercivityReport",
    "ContractionEstimate",
    "DEFAULT_SEED",
    "DivergenceError",
    "EvalFaultError",
    "ExprSyntaxError",
    "Goursat2dError",
    "Grid",
    "GridField",
    "InvalidResolutionError",
    "InvalidWeightError",
    "Lemma31Report",
    "MissingProbeError",
    "NoConvergenceError",
    "NormEquivalenceReport",
    "OperatorContext",
    "ParameterError",
    "ProblemSpec",
    "SchemaError",
    "SensitivityReport",
    "ShapeError",
    "SolveReport",
    "SolverConfig",
    "SolverError",
    "StagnationError",
    "StateTriple",
    "ThresholdError",
    "WeightChoice",
    "WeightedNorms",
    "XYFunction",
    "ac_norm",
    "apply_F",
    "apply_Fprime",
    "build_grid",
    "builtin_example_4_6",
    "check_norm_equivalence",
    "choose_weight",
    "classical_l2_norm",
    "coercivity_probe",
    "estimate_contraction",
    "evaluate",
    "evaluate_dual",
    "frechet_apply",
    "linearize",
    "load_problem",
    "make_context",
    "manufacture_problem",
    "merit",
    "parse",
    "probe_assumptions",
    "read_field_csv",
    "read_grid_csv",
    "read_report_json",
    "reconstruct_state",
    "residual",
    "serialize_problem",
    "solve",
    "solve_linearized",
    "solve_newton",
    "solve_picard",
    "stability_probe",
    "to_source",
    "validate_frechet",
    "verify_lemma31",
    "weighted_l2_norm",
    "write_field_csv",
    "write_grid_csv",
    "write_report_json",
    "zero_problem",
]
