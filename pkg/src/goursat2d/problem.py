"""Problem definitions: coefficient functions, growth data, and probes.

A problem couples the mixed derivative of an unknown R^n-valued state z with
a pointwise nonlinearity, an integrated nonlinearity, and two first-order
memory terms:

    z_xy + f1(x, y, z) + ∫₀ˣ∫₀ʸ [ f2(s, t, z) + A1(s, t) z_x + A2(s, t) z_y ] ds dt = v,

with z = 0 on the edges x = 0 and y = 0.  The data contract mirrors the
classical solvability conditions:

  * growth: |f1|, |f2| ≤ B|z| + b(x, y) with a constant B and a declared
    majorant function b ≥ 0; the matrices A1, A2 and the spatial derivatives
    A1x = ∂A1/∂x, A2y = ∂A2/∂y are bounded by the same B;
  * local boundedness of the z-Jacobians of f1, f2 on balls |z| ≤ ρ, with
    observed suprema M_ρ.

None of this is taken on faith: ``probe_assumptions`` scans the inequalities
on a low-discrepancy sample and reports worst cases, including a finite
difference cross-check of the user-supplied A1x, A2y.

``manufacture_problem`` generates right-hand sides with a known exact
solution: v := F(z*) is evaluated on a refined grid and restricted to the
working grid, so the oracle's quadrature error sits an order below the
solver's.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import EvalFaultError, ParameterError, SchemaError
from .exprlang import (
    Expr,
    eval_dual_on_grid,
    eval_on_grid,
    free_z_indices,
    parse,
    to_source,
)
from .grid import Grid, GridField, build_grid, restrict_to
from .polynomials import (
    poly_dx,
    poly_dy,
    poly_from_source,
    poly_source,
    poly_sup_bound,
)
from .sampling import halton_points

#: Default seed for every randomized probe; recorded in reports.
DEFAULT_SEED = 1729

#: Default state-ball radii for local-boundedness probes.
DEFAULT_RADII = (1.0, 2.0, 4.0)


@dataclass(frozen=True)
class XYFunction:
    """An R^n-valued function of the spatial variables only, samplable on any grid."""

    exprs: tuple[Expr, ...]

    def __post_init__(self):
        for k, e in enumerate(self.exprs):
            if free_z_indices(e):
                raise ValueError(
                    f"component {k} references z-variables; expected a function of x, y only"
                )

    @property
    def n(self) -> int:
        return len(self.exprs)

    @classmethod
    def from_sources(cls, sources: list[str] | tuple[str, ...] | str) -> "XYFunction":
        if isinstance(sources, str):
            sources = [sources]
        return cls(tuple(parse(s, 1) for s in sources))

    def sample(self, grid: Grid) -> GridField:
        X, Y = grid.meshgrid()
        Z = np.zeros(X.shape + (1,))
        vals = np.stack([eval_on_grid(e, X, Y, Z) for e in self.exprs], axis=2)
        return GridField(grid, vals)

    def sources(self) -> list[str]:
        return [to_source(e) for e in self.exprs]


ExprMatrix = tuple[tuple[Expr, ...], ...]


def _check_matrix(name: str, mat: ExprMatrix, n: int) -> None:
    if len(mat) != n or any(len(row) != n for row in mat):
        raise ValueError(f"{name} must be an {n}x{n} expression matrix")
    for i, row in enumerate(mat):
        for j, e in enumerate(row):
            if free_z_indices(e):
                raise ValueError(f"{name}[{i}][{j}] may not reference z-variables")


@dataclass(frozen=True)
class ProblemSpec:
    """A fully parsed problem: nonlinearities, memory coefficients, growth data.

    f1, f2 are component expressions of (x, y, z1..zn); a1, a2 and their
    user-supplied spatial derivatives a1x, a2y are n×n matrices of (x, y)
    expressions.  growth_bound is the constant B of the growth condition and
    ``majorant`` the function b in |f^i| ≤ B|z| + b(x, y).  ``rhs`` is either
    a samplable function, a concrete grid field, or None for a problem
    awaiting a manufactured right-hand side.
    """

    n: int
    f1: tuple[Expr, ...]
    f2: tuple[Expr, ...]
    a1: ExprMatrix
    a2: ExprMatrix
    a1x: ExprMatrix
    a2y: ExprMatrix
    growth_bound: float
    majorant: Expr
    rhs: XYFunction | GridField | None = None
    manufactured: XYFunction | GridField | None = None
    label: str = ""

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"state dimension must be >= 1, got {self.n}")
        if len(self.f1) != self.n or len(self.f2) != self.n:
            raise ValueError(f"f1 and f2 need exactly {self.n} component expressions")
        for name, mat in (("A1", self.a1), ("A2", self.a2), ("A1x", self.a1x), ("A2y", self.a2y)):
            _check_matrix(name, mat, self.n)
        if not (self.growth_bound >= 0.0) or not math.isfinite(self.growth_bound):
            raise ValueError(f"growth bound B must be finite and >= 0, got {self.growth_bound}")
        if free_z_indices(self.majorant):
            raise ValueError("the majorant b must be a function of x, y only")
        if isinstance(self.rhs, XYFunction) and self.rhs.n != self.n:
            raise ValueError(f"rhs has {self.rhs.n} components, problem has {self.n}")
        if isinstance(self.rhs, GridField) and self.rhs.n != self.n:
            raise ValueError(f"rhs field has {self.rhs.n} components, problem has {self.n}")

    def sample_rhs(self, grid: Grid) -> GridField:
        """The right-hand side as a field on ``grid``."""
        if self.rhs is None:
            raise ValueError("problem has no right-hand side (manufacture one or set rhs)")
        if isinstance(self.rhs, XYFunction):
            return self.rhs.sample(grid)
        if self.rhs.grid != grid:
            raise ValueError(
                f"rhs field lives on {self.rhs.grid}, requested {grid}; "
                "re-run with a matching resolution"
            )
        return self.rhs


# -- document loading ---------------------------------------------------------

_TOP_KEYS = {"meta", "functions", "coefficients", "rhs", "solver", "label"}
_META_KEYS = {"n", "B", "b"}
_FUN_KEYS = {"f1", "f2"}
_COEF_KEYS = {"A1", "A2", "A1x", "A2y"}
_RHS_KEYS = {"v", "v_file"}
_SOLVER_KEYS = {"m", "tol", "max_iter", "method", "damping", "inner_tol", "inner_max_iter"}


def validate_solver_section(sdoc) -> dict:
    """Schema-check the optional solver section and return it as a plain dict.

    Semantics (positivity, ranges) are rechecked when the values are turned
    into an actual solver configuration; this guards the document shape with
    dotted-path diagnostics.
    """
    if not isinstance(sdoc, dict):
        raise SchemaError("must be an object", path="solver")
    _check_keys(sdoc, _SOLVER_KEYS, "solver")
    if "m" in sdoc:
        m = sdoc["m"]
        ok = m == "auto" or (
            isinstance(m, (int, float)) and not isinstance(m, bool) and m > 0
        )
        if not ok:
            raise SchemaError(
                f'm must be "auto" or a positive number, got {m!r}', path="solver.m"
            )
    for key in ("tol", "damping", "inner_tol"):
        if key in sdoc:
            val = sdoc[key]
            if not isinstance(val, (int, float)) or isinstance(val, bool) or not val > 0:
                raise SchemaError(
                    f"{key} must be a positive number, got {val!r}", path=f"solver.{key}"
                )
    for key in ("max_iter", "inner_max_iter"):
        if key in sdoc:
            val = sdoc[key]
            if not isinstance(val, int) or isinstance(val, bool) or val < 1:
                raise SchemaError(
                    f"{key} must be a positive integer, got {val!r}", path=f"solver.{key}"
                )
    if "method" in sdoc and sdoc["method"] not in ("newton", "picard"):
        raise SchemaError(
            f"method must be 'newton' or 'picard', got {sdoc['method']!r}",
            path="solver.method",
        )
    return dict(sdoc)


def _require(doc: dict, key: str, path: str):
    if key not in doc:
        raise SchemaError("missing required field", path=f"{path}.{key}" if path else key)
    return doc[key]


def _check_keys(doc: dict, allowed: set[str], path: str) -> None:
    unknown = set(doc) - allowed
    if unknown:
        name = sorted(unknown)[0]
        raise SchemaError(
            f"unknown field {name!r}", path=f"{path}.{name}" if path else name
        )


def _parse_expr(source, n: int, path: str) -> Expr:
    if not isinstance(source, str):
        raise SchemaError(f"expected an expression string, got {type(source).__name__}", path=path)
    try:
        return parse(source, n)
    except Exception as exc:
        raise SchemaError(f"bad expression: {exc}", path=path) from exc


def _parse_components(sources, n: int, path: str) -> tuple[Expr, ...]:
    if isinstance(sources, str):
        sources = [sources]
    if not isinstance(sources, list) or len(sources) != n:
        raise SchemaError(f"expected {n} component expression(s)", path=path)
    return tuple(_parse_expr(s, n, f"{path}[{i}]") for i, s in enumerate(sources))


def _parse_matrix(rows, n: int, path: str) -> ExprMatrix:
    if isinstance(rows, str) and n == 1:
        rows = [[rows]]
    if not isinstance(rows, list) or len(rows) != n:
        raise SchemaError(f"expected an {n}x{n} matrix of expressions", path=path)
    out = []
    for i, row in enumerate(rows):
        if not isinstance(row, list) or len(row) != n:
            raise SchemaError(f"expected {n} entries in row {i}", path=f"{path}[{i}]")
        entries = []
        for j, s in enumerate(row):
            e = _parse_expr(s, n, f"{path}[{i}][{j}]")
            if free_z_indices(e):
                raise SchemaError("coefficient entries may not reference z", path=f"{path}[{i}][{j}]")
            entries.append(e)
        out.append(tuple(entries))
    return tuple(out)


def load_problem(document: str | dict, base_dir: str | Path | None = None) -> ProblemSpec:
    """Parse and validate a problem document (JSON text or an already-parsed dict).

    Every error is a SchemaError carrying the dotted path of the offending
    field.  Expressions are smoke-evaluated on a small sample of the domain so
    evaluation faults surface at load time, not mid-solve.
    """
    if isinstance(document, str):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"document is not valid JSON: {exc}") from exc
    if not isinstance(document, dict):
        raise SchemaError(f"document must be a JSON object, got {type(document).__name__}")
    _check_keys(document, _TOP_KEYS, "")

    meta = _require(document, "meta", "")
    if not isinstance(meta, dict):
        raise SchemaError("must be an object", path="meta")
    _check_keys(meta, _META_KEYS, "meta")
    n = _require(meta, "n", "meta")
    if not isinstance(n, int) or n < 1:
        raise SchemaError(f"n must be a positive integer, got {n!r}", path="meta.n")
    B = _require(meta, "B", "meta")
    if not isinstance(B, (int, float)) or isinstance(B, bool) or not B >= 0:
        raise SchemaError(f"B must be a number >= 0, got {B!r}", path="meta.B")
    b_expr = _parse_expr(_require(meta, "b", "meta"), n, "meta.b")
    if free_z_indices(b_expr):
        raise SchemaError("the majorant b may not reference z", path="meta.b")

    functions = _require(document, "functions", "")
    if not isinstance(functions, dict):
        raise SchemaError("must be an object", path="functions")
    _check_keys(functions, _FUN_KEYS, "functions")
    f1 = _parse_components(_require(functions, "f1", "functions"), n, "functions.f1")
    f2 = _parse_components(_require(functions, "f2", "functions"), n, "functions.f2")

    coefficients = _require(document, "coefficients", "")
    if not isinstance(coefficients, dict):
        raise SchemaError("must be an object", path="coefficients")
    _check_keys(coefficients, _COEF_KEYS, "coefficients")
    mats = {
        name: _parse_matrix(_require(coefficients, name, "coefficients"), n, f"coefficients.{name}")
        for name in ("A1", "A2", "A1x", "A2y")
    }

    rhs: XYFunction | GridField | None = None
    if "rhs" in document:
        rhs_doc = document["rhs"]
        if not isinstance(rhs_doc, dict):
            raise SchemaError("must be an object", path="rhs")
        _check_keys(rhs_doc, _RHS_KEYS, "rhs")
        if "v" in rhs_doc and "v_file" in rhs_doc:
            raise SchemaError("give either v or v_file, not both", path="rhs")
        if "v" in rhs_doc:
            exprs = _parse_components(rhs_doc["v"], n, "rhs.v")
            for i, e in enumerate(exprs):
                if free_z_indices(e):
                    raise SchemaError("rhs may not reference z", path=f"rhs.v[{i}]")
            rhs = XYFunction(exprs)
        elif "v_file" in rhs_doc:
            from .fileio import read_field_csv

            path = Path(rhs_doc["v_file"])
            if base_dir is not None and not path.is_absolute():
                path = Path(base_dir) / path
            try:
                rhs = read_field_csv(path)
            except OSError as exc:
                raise SchemaError(f"cannot read rhs file: {exc}", path="rhs.v_file") from exc
            if rhs.n != n:
                raise SchemaError(
                    f"rhs file has {rhs.n} components, problem has {n}", path="rhs.v_file"
                )
        else:
            raise SchemaError("needs v or v_file", path="rhs")

    if "solver" in document:
        validate_solver_section(document["solver"])

    label = document.get("label", "")
    if not isinstance(label, str):
        raise SchemaError("label must be a string", path="label")

    spec = ProblemSpec(
        n=n, f1=f1, f2=f2,
        a1=mats["A1"], a2=mats["A2"], a1x=mats["A1x"], a2y=mats["A2y"],
        growth_bound=float(B), majorant=b_expr, rhs=rhs, label=label,
    )
    _smoke_check(spec)
    return spec


def _smoke_check(spec: ProblemSpec) -> None:
    """Evaluate every descriptor on a coarse domain/state sample.

    Surfaces evaluation faults (and a negative majorant) at load time with
    the document path of the offending expression.
    """
    pts = np.array([0.0, 0.5, 1.0])
    X, Y = np.meshgrid(pts, pts, indexing="ij")
    states = [np.zeros(X.shape + (spec.n,))]
    for s in (0.7, -0.7):
        states.append(np.full(X.shape + (spec.n,), s / math.sqrt(spec.n)))

    def check(e: Expr, path: str, dual: bool, nonneg: bool = False):
        try:
            for Z in states:
                if dual:
                    vals, _, _ = eval_dual_on_grid(e, X, Y, Z)
                else:
                    vals = eval_on_grid(e, X, Y, Z)
                if nonneg and np.any(vals < 0.0):
                    raise SchemaError("the majorant b must be nonnegative on Q", path=path)
        except EvalFaultError as exc:
            raise SchemaError(f"fails to evaluate: {exc}", path=path) from exc

    for i in range(spec.n):
        check(spec.f1[i], f"functions.f1[{i}]", dual=True)
        check(spec.f2[i], f"functions.f2[{i}]", dual=True)
    for name, mat in (("A1", spec.a1), ("A2", spec.a2), ("A1x", spec.a1x), ("A2y", spec.a2y)):
        for i in range(spec.n):
            for j in range(spec.n):
                check(mat[i][j], f"coefficients.{name}[{i}][{j}]", dual=False)
    check(spec.majorant, "meta.b", dual=False, nonneg=True)
    if isinstance(spec.rhs, XYFunction):
        for i, e in enumerate(spec.rhs.exprs):
            check(e, f"rhs.v[{i}]", dual=False)


def serialize_problem(spec: ProblemSpec) -> dict:
    """The document form of a spec (inverse of load_problem for expression rhs).

    A concrete grid-field rhs cannot be embedded in a document; save it with
    fileio.write_field_csv and reference it as rhs.v_file instead.
    """
    doc: dict = {
        "meta": {"n": spec.n, "B": spec.growth_bound, "b": to_source(spec.majorant)},
        "functions": {
            "f1": [to_source(e) for e in spec.f1],
            "f2": [to_source(e) for e in spec.f2],
        },
        "coefficients": {
            name: [[to_source(e) for e in row] for row in mat]
            for name, mat in (("A1", spec.a1), ("A2", spec.a2), ("A1x", spec.a1x), ("A2y", spec.a2y))
        },
    }
    if isinstance(spec.rhs, XYFunction):
        doc["rhs"] = {"v": spec.rhs.sources()}
    elif isinstance(spec.rhs, GridField):
        raise ValueError("grid-field rhs cannot be serialized inline; write it to a CSV")
    if spec.label:
        doc["label"] = spec.label
    return doc


# -- built-in problems --------------------------------------------------------

def zero_problem(label: str = "zero") -> ProblemSpec:
    """The problem with no nonlinearity and no memory: F(z) = z_xy."""
    zero = parse("0", 1)
    row = ((zero,),)
    return ProblemSpec(
        n=1, f1=(zero,), f2=(zero,),
        a1=row, a2=row, a1x=row, a2y=row,
        growth_bound=0.0, majorant=zero, label=label,
    )


#: max over t of (1 + t) / (1 + t²), attained at t = √2 − 1.
_RATIONAL_KERNEL_SUP = (1.0 + math.sqrt(2.0)) / 2.0


def builtin_example_4_6(
    k: int = 2,
    l: int = 2,
    w1: str = "1",
    w2: str = "1",
    A1: str = "0",
    A2: str = "0",
    label: str = "example46",
) -> ProblemSpec:
    """The built-in nonlinear scalar family with polynomial coefficients.

        f1 = w1(x,y) · ( z³/(1+z²) + cos(z^k) ),
        f2 = w2(x,y) · (z−1)/(1+z²) + sin(z^l),      k, l integers > 1.

    The growth data is derived, not guessed: |z³/(1+z²)| ≤ |z| and |cos| ≤ 1
    give |f1| ≤ S1·|z| + S1 with S1 = Σ|coeffs(w1)|; |(z−1)/(1+z²)| is
    maximized at |z| = √2 − 1 with value (1+√2)/2, so f2 contributes only to
    the majorant.  A1x and A2y are exact polynomial derivatives of A1, A2.
    """
    for name, val in (("k", k), ("l", l)):
        if not isinstance(val, int) or val <= 1:
            raise ParameterError(f"{name} must be an integer > 1, got {val!r}")
    try:
        polys = {name: poly_from_source(src)
                 for name, src in (("w1", w1), ("w2", w2), ("A1", A1), ("A2", A2))}
    except ValueError as exc:
        raise ParameterError(f"coefficient descriptors must be polynomials in x, y: {exc}") from exc

    s1 = poly_sup_bound(polys["w1"])
    s2 = poly_sup_bound(polys["w2"])
    growth_bound = max(
        s1,
        poly_sup_bound(polys["A1"]),
        poly_sup_bound(polys["A2"]),
        poly_sup_bound(poly_dx(polys["A1"])),
        poly_sup_bound(poly_dy(polys["A2"])),
    )
    majorant_value = s1 + s2 * _RATIONAL_KERNEL_SUP + 1.0

    f1_src = f"({w1}) * (z1^3/(1 + z1^2) + cos(z1^{k}))"
    f2_src = f"({w2}) * (z1 - 1)/(1 + z1^2) + sin(z1^{l})"
    spec = ProblemSpec(
        n=1,
        f1=(parse(f1_src, 1),),
        f2=(parse(f2_src, 1),),
        a1=((parse(A1, 1),),),
        a2=((parse(A2, 1),),),
        a1x=((parse(poly_source(poly_dx(polys["A1"])), 1),),),
        a2y=((parse(poly_source(poly_dy(polys["A2"])), 1),),),
        growth_bound=growth_bound,
        majorant=parse(repr(majorant_value), 1),
        label=label,
    )
    _smoke_check(spec)
    return spec


BUILTIN_PROBLEMS = {
    "zero": zero_problem,
    "example46": builtin_example_4_6,
}


# -- assumption probing -------------------------------------------------------

@dataclass(frozen=True)
class AssumptionReport:
    """Sampled worst cases for the growth and boundedness conditions.

    growth_worst_* are max over samples of |f^i| / (B|z| + b) (1.0 is the
    certified edge); sup_* are the largest sampled spectral norms of the
    matrix coefficients against the declared B; m_rho maps each probed
    radius to the observed sup of the f1/f2 z-Jacobian norms on |z| ≤ ρ;
    deriv_residual_* are worst relative mismatches between the declared
    spatial derivatives and centered finite differences.
    """

    samples: int
    seed: int
    declared_bound: float
    growth_worst_f1: float
    growth_worst_f2: float
    sup_a1: float
    sup_a2: float
    sup_a1x: float
    sup_a2y: float
    m_rho: tuple[tuple[float, float], ...]
    deriv_residual_a1x: float
    deriv_residual_a2y: float
    growth_ok: bool
    coeff_ok: bool
    deriv_ok: bool
    kink_flagged: bool
    radii: tuple[float, ...] = field(default=DEFAULT_RADII)

    @property
    def passed(self) -> bool:
        return self.growth_ok and self.coeff_ok and self.deriv_ok

    def as_dict(self) -> dict:
        return {
            "samples": self.samples,
            "seed": self.seed,
            "declared_bound": self.declared_bound,
            "growth_worst_f1": self.growth_worst_f1,
            "growth_worst_f2": self.growth_worst_f2,
            "sup_a1": self.sup_a1,
            "sup_a2": self.sup_a2,
            "sup_a1x": self.sup_a1x,
            "sup_a2y": self.sup_a2y,
            "m_rho": [[r, m] for r, m in self.m_rho],
            "deriv_residual_a1x": self.deriv_residual_a1x,
            "deriv_residual_a2y": self.deriv_residual_a2y,
            "growth_ok": self.growth_ok,
            "coeff_ok": self.coeff_ok,
            "deriv_ok": self.deriv_ok,
            "kink_flagged": self.kink_flagged,
            "passed": self.passed,
        }


def _matrix_values(mat: ExprMatrix, X: np.ndarray, Y: np.ndarray, n: int) -> np.ndarray:
    """Sample an n×n expression matrix at points; shape X.shape + (n, n)."""
    Z = np.zeros(X.shape + (n,))
    rows = []
    for row in mat:
        rows.append(np.stack([eval_on_grid(e, X, Y, Z) for e in row], axis=-1))
    return np.stack(rows, axis=-2)


def _spectral_sup(vals: np.ndarray) -> float:
    """Largest spectral norm over a batch of matrices (shape (..., n, n))."""
    if vals.size == 0:
        return 0.0
    flat = vals.reshape(-1, vals.shape[-2], vals.shape[-1])
    return float(np.linalg.svd(flat, compute_uv=False)[:, 0].max())


_GROWTH_TOL = 1e-9
_DERIV_TOL = 1e-4
_FD_STEP = 1e-5


def probe_assumptions(
    spec: ProblemSpec,
    sample_count: int = 200,
    radii: tuple[float, ...] = DEFAULT_RADII,
    seed: int = DEFAULT_SEED,
) -> AssumptionReport:
    """Scan the growth/boundedness conditions on a deterministic sample.

    (x, y) and a state direction come from a scrambled Halton sequence; the
    state is scaled to each probe radius and augmented with deterministic
    extreme points (zero state, axis states, diagonal state).  Evaluation
    faults propagate with the sample coordinates attached.
    """
    if sample_count < 1:
        raise ParameterError(f"sample_count must be >= 1, got {sample_count}")
    if not radii or any(r <= 0 for r in radii):
        raise ParameterError(f"radii must be positive, got {radii!r}")
    radii = tuple(sorted(float(r) for r in radii))
    n = spec.n

    pts = halton_points(sample_count, 2 + n, seed)
    xs, ys = pts[:, 0], pts[:, 1]
    dirs = 2.0 * pts[:, 2:] - 1.0  # in [-1, 1]^n, so |dir| <= sqrt(n)

    # deterministic extremes appended at fixed spatial corners + center
    corner_xy = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [0.5, 0.5]])
    extreme_dirs = [np.zeros(n)]
    for kk in range(n):
        e = np.zeros(n)
        e[kk] = 1.0
        extreme_dirs += [e * math.sqrt(n), -e * math.sqrt(n)]
    extreme_dirs.append(np.ones(n))
    ex_xy = np.repeat(corner_xy, len(extreme_dirs), axis=0)
    ex_dirs = np.tile(np.array(extreme_dirs), (len(corner_xy), 1))
    X = np.concatenate([xs, ex_xy[:, 0]])
    Y = np.concatenate([ys, ex_xy[:, 1]])
    D = np.concatenate([dirs, ex_dirs]) / math.sqrt(n)  # now |D| <= 1 rowwise
    total = X.shape[0]

    b_vals = eval_on_grid(spec.majorant, X, Y, np.zeros((total, n)))
    B = spec.growth_bound

    growth_worst = [0.0, 0.0]
    m_rho: list[tuple[float, float]] = []
    kink_any = False
    for rho in radii:
        Z = rho * D
        znorm = np.linalg.norm(Z, axis=1)
        jac_sup = 0.0
        for which, comps in ((0, spec.f1), (1, spec.f2)):
            vals = np.empty((total, n))
            jac = np.empty((total, n, n))
            for i, e in enumerate(comps):
                v, d, kinked = eval_dual_on_grid(e, X, Y, Z)
                vals[:, i] = v
                jac[:, i, :] = d
                kink_any = kink_any or kinked
            fmag = np.linalg.norm(vals, axis=1)
            allowed = B * znorm + b_vals
            with np.errstate(invalid="ignore", divide="ignore"):
                ratios = np.where(fmag == 0.0, 0.0, fmag / np.where(allowed == 0.0, np.inf, allowed))
            growth_worst[which] = max(growth_worst[which], float(ratios.max()))
            jac_sup = max(jac_sup, _spectral_sup(jac))
        m_rho.append((rho, jac_sup))

    a_sups = {}
    for name, mat in (("a1", spec.a1), ("a2", spec.a2), ("a1x", spec.a1x), ("a2y", spec.a2y)):
        a_sups[name] = _spectral_sup(_matrix_values(mat, X, Y, n))

    # finite-difference consistency of the declared spatial derivatives
    delta = _FD_STEP
    Xc = np.clip(X, delta, 1.0 - delta)
    Yc = np.clip(Y, delta, 1.0 - delta)
    a1_plus = _matrix_values(spec.a1, Xc + delta, Y, n)
    a1_minus = _matrix_values(spec.a1, Xc - delta, Y, n)
    a1x_here = _matrix_values(spec.a1x, Xc, Y, n)
    fd1 = (a1_plus - a1_minus) / (2.0 * delta)
    res1 = np.linalg.norm((fd1 - a1x_here).reshape(total, -1), axis=1)
    scale1 = 1.0 + np.linalg.norm(a1x_here.reshape(total, -1), axis=1)
    deriv_res_a1x = float((res1 / scale1).max())

    a2_plus = _matrix_values(spec.a2, X, Yc + delta, n)
    a2_minus = _matrix_values(spec.a2, X, Yc - delta, n)
    a2y_here = _matrix_values(spec.a2y, X, Yc, n)
    fd2 = (a2_plus - a2_minus) / (2.0 * delta)
    res2 = np.linalg.norm((fd2 - a2y_here).reshape(total, -1), axis=1)
    scale2 = 1.0 + np.linalg.norm(a2y_here.reshape(total, -1), axis=1)
    deriv_res_a2y = float((res2 / scale2).max())

    growth_ok = max(growth_worst) <= 1.0 + _GROWTH_TOL
    coeff_ok = all(v <= B + _GROWTH_TOL for v in a_sups.values())
    deriv_ok = max(deriv_res_a1x, deriv_res_a2y) <= _DERIV_TOL

    return AssumptionReport(
        samples=total,
        seed=seed,
        declared_bound=B,
        growth_worst_f1=growth_worst[0],
        growth_worst_f2=growth_worst[1],
        sup_a1=a_sups["a1"],
        sup_a2=a_sups["a2"],
        sup_a1x=a_sups["a1x"],
        sup_a2y=a_sups["a2y"],
        m_rho=tuple(m_rho),
        deriv_residual_a1x=deriv_res_a1x,
        deriv_residual_a2y=deriv_res_a2y,
        growth_ok=growth_ok,
        coeff_ok=coeff_ok,
        deriv_ok=deriv_ok,
        kink_flagged=kink_any,
        radii=radii,
    )


# -- manufactured right-hand sides --------------------------------------------

def manufacture_problem(
    base: ProblemSpec,
    zstar_g: XYFunction | GridField,
    grid: Grid,
    refine: int = 4,
) -> ProblemSpec:
    """Set v := F(z*) so that z* is the exact solution on ``grid``.

    When z* comes as a samplable function of (x, y) (its mixed derivative
    g* = z*_xy, component expressions), the operator is evaluated on a grid
    ``refine`` times finer and restricted to the working grid, keeping the
    oracle's quadrature error an order below the solver's.  A plain GridField
    g* can only be evaluated on its own grid (no interpolation is attempted),
    which still yields a consistent — just not refined — oracle.
    """
    from .operator import apply_F, make_context

    if refine < 1:
        raise ParameterError(f"refine must be >= 1, got {refine}")
    if isinstance(zstar_g, XYFunction):
        if zstar_g.n != base.n:
            raise ValueError(f"z* has {zstar_g.n} components, problem has {base.n}")
        fine = build_grid(grid.cells * refine) if refine > 1 else grid
        g_fine = zstar_g.sample(fine)
        v_fine = apply_F(make_context(base, fine), g_fine)
        v = restrict_to(v_fine, grid) if refine > 1 else v_fine
        reference = zstar_g
    else:
        if zstar_g.grid != grid:
            raise ValueError(f"z* field lives on {zstar_g.grid}, expected {grid}")
        v = apply_F(make_context(base, grid), zstar_g)
        reference = zstar_g
    return replace(base, rhs=v, manufactured=reference)
