"""Thin, deterministic contract layer over convex LP/QP solving.

LPs go to HiGHS (via scipy.optimize.linprog), the QP to Clarabel. Both
accept sparse input and detect infeasibility; callers depend only on the
SolveResult contract, never on the engine.

All numerical tolerances used across the allocator are centralized here.
"""

from __future__ import annotations

import math
import os
import time
from dataclasses import dataclass, field
from enum import Enum

import clarabel
import numpy as np
from scipy import sparse
from scipy.optimize import linprog
from scipy.sparse import linalg as sparse_linalg

from .constraints import ABS_TOL, REL_TOL, ConstraintSystem, Row

# Relative primal feasibility / KKT residual demanded from solver outputs.
FEASIBILITY_TOL = 1e-7
KKT_TOL = 1e-7
# Absolute slack below which a device counts as saturated (watts).
SLACK_TOL_W = 1e-6

# Optional cap on solver threads for reproducible benchmarking.
_THREAD_ENV = "NVPAX_SOLVER_THREADS"
if os.environ.get(_THREAD_ENV):
    os.environ.setdefault("OMP_NUM_THREADS", os.environ[_THREAD_ENV])


class Sense(Enum):
    MINIMIZE = "min"
    MAXIMIZE = "max"


class SolveStatus(Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    NUMERICAL_FAILURE = "numerical_failure"


@dataclass
class LinearObjective:
    """Sparse linear objective over device columns, plus an optional scalar t.

    When `t_coef` is not None the problem gains one auxiliary column t >= 0
    appended after the device columns.
    """

    sense: Sense
    coeffs: dict[int, float] = field(default_factory=dict)
    t_coef: float | None = None


@dataclass
class QuadraticObjective:
    """Minimize sum(quad_i * x_i^2) + lin . x + const with quad_i >= 0."""

    quad: np.ndarray
    lin: np.ndarray
    const: float = 0.0


@dataclass
class SolveResult:
    status: SolveStatus
    x: np.ndarray | None
    objective: float | None
    iterations: int
    wall_time: float

    @property
    def optimal(self) -> bool:
        return self.status == SolveStatus.OPTIMAL


def _bounds_arrays(system: ConstraintSystem, fixed: dict[int, float] | None):
    lo = system.lower.copy()
    hi = system.upper.copy()
    if fixed:
        for col, val in fixed.items():
            lo[col] = val
            hi[col] = val
    return lo, hi


def _stack_ub(rows: list[Row], n_cols: int):
    """Two-sided rows to A_ub x <= b_ub form (one row per finite side)."""
    data, rix, cix, rhs = [], [], [], []
    r = 0
    for row in rows:
        if math.isfinite(row.ub):
            data.extend(row.vals)
            cix.extend(row.cols)
            rix.extend([r] * len(row.cols))
            rhs.append(row.ub)
            r += 1
        if math.isfinite(row.lb):
            data.extend(-row.vals)
            cix.extend(row.cols)
            rix.extend([r] * len(row.cols))
            rhs.append(-row.lb)
            r += 1
    A = sparse.coo_matrix((data, (rix, cix)), shape=(r, n_cols)).tocsr()
    return A, np.array(rhs)


def solve_lp(objective: LinearObjective, system: ConstraintSystem,
             extra_rows: list[Row] | None = None,
             fixed: dict[int, float] | None = None,
             relax_rows: bool = False) -> SolveResult:
    """Solve an LP over the system's columns (plus t when the objective uses it).

    Extra rows may reference the t column (index n). Fixed columns are
    expressed as equal lower/upper bounds so the column structure is
    identical across phases.
    """
    t0 = time.perf_counter()
    n = system.n_vars
    has_t = objective.t_coef is not None
    n_cols = n + 1 if has_t else n

    c = np.zeros(n_cols)
    for col, v in objective.coeffs.items():
        c[col] = v
    if has_t:
        c[n] = objective.t_coef
    if objective.sense == Sense.MAXIMIZE:
        c = -c

    rows = list(system.rows) + list(extra_rows or [])
    A_ub, b_ub = _stack_ub(rows, n_cols)
    if relax_rows:
        # reference points carried from prior solves can sit ~1e-9 outside a
        # tight row; sub-tolerance slack keeps the subproblem solvable while
        # any overshoot stays inside verification bounds
        b_ub = b_ub + 0.5 * np.maximum(ABS_TOL, REL_TOL * np.abs(b_ub))

    lo, hi = _bounds_arrays(system, fixed)
    bounds = list(zip(lo, hi))
    if has_t:
        bounds.append((0.0, None))

    # Max-min epigraph rows are massively degenerate at scale; simplex cycles
    # through the ties while interior point with crossover stays near-linear.
    method = "highs-ipm" if n_cols > 2000 else "highs"
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method=method)
    wall = time.perf_counter() - t0
    if res.status == 0:
        obj = float(res.fun)
        if objective.sense == Sense.MAXIMIZE:
            obj = -obj
        return SolveResult(SolveStatus.OPTIMAL, np.asarray(res.x), obj,
                           int(res.nit), wall)
    if res.status == 2:
        return SolveResult(SolveStatus.INFEASIBLE, None, None, int(res.nit), wall)
    return SolveResult(SolveStatus.NUMERICAL_FAILURE, None, None,
                       int(getattr(res, "nit", 0) or 0), wall)


def _polish_qp(x: np.ndarray, P: sparse.spmatrix, q: np.ndarray,
               A: sparse.spmatrix, b: np.ndarray, n_eq: int) -> np.ndarray:
    """Refine an interior-point iterate by solving the KKT system on the
    apparent active set exactly.

    The x error of the returned iterate scales like sqrt(duality gap), which
    is not enough for the 1e-6 W fairness contract; pinning the (nearly)
    tight constraints and solving the resulting equality-constrained QP
    recovers the exact face. The polish is accepted only when it stays
    feasible and does not worsen the objective.
    """
    n = len(x)
    resid = b - A @ x
    tol_act = 1e-4 * np.maximum(1.0, np.abs(b))
    act = np.flatnonzero(resid <= tol_act)
    act = np.union1d(np.arange(n_eq), act)
    A_act = A.tocsr()[act]
    b_act = b[act]
    m = len(act)

    kkt = sparse.bmat([[P, A_act.T],
                       [A_act, -1e-12 * sparse.identity(m)]], format="csc")
    rhs = np.concatenate([-q, b_act])
    try:
        z = sparse_linalg.spsolve(kkt, rhs)
    except Exception:
        return x
    x_new = z[:n]
    if not np.all(np.isfinite(x_new)):
        return x
    if np.any(b - A @ x_new < -1e-7 * np.maximum(1.0, np.abs(b))):
        return x
    quad_diag = P.diagonal() / 2.0
    obj_old = float(x @ (quad_diag * x) + q @ x)
    obj_new = float(x_new @ (quad_diag * x_new) + q @ x_new)
    if obj_new > obj_old + 1e-6 * max(1.0, abs(obj_old)):
        return x
    return x_new


def solve_qp(objective: QuadraticObjective, system: ConstraintSystem,
             fixed: dict[int, float] | None = None,
             extra_rows: list[Row] | None = None,
             relax_rows: bool = False) -> SolveResult:
    """Solve min sum(quad x^2) + lin.x subject to the system rows and bounds.

    The diagonal Hessian must be >= 0 everywhere (convexity); uniqueness
    requires it positive on free columns, which the caller's construction
    guarantees.
    """
    t0 = time.perf_counter()
    n = system.n_vars
    quad = np.asarray(objective.quad, dtype=float)
    if np.any(quad < 0):
        raise ValueError("negative quadratic coefficient breaks convexity")

    P = sparse.diags(2.0 * quad, format="csc")
    q = np.asarray(objective.lin, dtype=float)

    # Fixed columns become genuine equality rows (zero cone); expressing them
    # as opposing inequalities leaves the feasible set without interior and
    # lets the interior-point method stop visibly off the pinned value.
    fixed = fixed or {}
    fix_idx = np.array(sorted(fixed), dtype=int)
    n_eq = len(fix_idx)
    eq_blocks = []
    if n_eq:
        E = sparse.coo_matrix((np.ones(n_eq), (np.arange(n_eq), fix_idx)),
                              shape=(n_eq, n))
        eq_blocks = [E]
    b_eq = np.array([fixed[int(i)] for i in fix_idx])

    # Inequality block: rows with finite sides, then free-column bounds.
    rows = list(system.rows) + list(extra_rows or [])
    A_rows, b_rows = _stack_ub(rows, n)
    if relax_rows:
        # pinned columns can leave a row exactly tight (within ~1e-12),
        # making the subproblem borderline; half the audit tolerance of
        # breathing room keeps any overshoot inside verification bounds
        b_rows = b_rows + 0.5 * np.maximum(ABS_TOL, REL_TOL * np.abs(b_rows))
    free = np.setdiff1d(np.arange(n), fix_idx)
    eye_free = sparse.identity(n, format="csr")[free]
    A = sparse.vstack(eq_blocks + [A_rows, eye_free, -eye_free], format="csc")
    b = np.concatenate([b_eq, b_rows, system.upper[free], -system.lower[free]])

    cones = []
    if n_eq:
        cones.append(clarabel.ZeroConeT(n_eq))
    cones.append(clarabel.NonnegativeConeT(A.shape[0] - n_eq))

    settings = clarabel.DefaultSettings()
    settings.verbose = False
    # default termination (~1e-8 gap) leaves per-device deviations equal only
    # to ~1e-5 W; the fairness contract asks for 1e-6, so run tighter. 1e-12
    # is unattainable on sequential solves whose pinned columns leave a row
    # exactly tight, and chasing it destabilizes the iteration.
    settings.tol_gap_abs = 1e-10
    settings.tol_gap_rel = 1e-10
    settings.tol_feas = 1e-10
    solver = clarabel.DefaultSolver(P, q, A, b, cones, settings)
    sol = solver.solve()
    wall = time.perf_counter() - t0

    status = str(sol.status)
    if status in ("Solved", "AlmostSolved"):
        x = np.asarray(sol.x)
        x = _polish_qp(x, P, q, A, b, n_eq)
        obj = float(x @ (quad * x) + q @ x + objective.const)
        return SolveResult(SolveStatus.OPTIMAL, x, obj, int(sol.iterations), wall)
    if "Infeasible" in status:
        return SolveResult(SolveStatus.INFEASIBLE, None, None, int(sol.iterations), wall)
    return SolveResult(SolveStatus.NUMERICAL_FAILURE, None, None, int(sol.iterations), wall)
