"""Conic-program contracts: linear programs and block-structured SDPs.

The synthesis stages describe their problems through these structures and
never touch a solver directly.  LMI blocks are affine maps from the decision
variables to symmetric matrices; the same block builders run on numpy values,
which makes :func:`check_feasibility` a solver-independent eigenvalue check
of any proposed assignment (used at ten times the solver tolerance).

Engines: LPs go to HiGHS through scipy; SDPs go to cvxpy (CLARABEL first,
SCS fallback).  Strict blocks are realized as ``block >= eps * I`` with
``eps = STRICT_EPS_SCALE * (1 + ||constant term||)``, the constant term being
the block evaluated at the all-zero assignment.
"""

from __future__ import annotations

import dataclasses
import time
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import linprog

import cvxpy as cp

__all__ = [
    "LinearProgram",
    "LpReport",
    "SdpVariable",
    "LmiBlock",
    "SemidefiniteProgram",
    "SolveReport",
    "solve_lp",
    "solve_sdp",
    "check_feasibility",
    "bmat",
    "as_cell",
]

STRICT_EPS_SCALE = 1e-7
SOLVER_TOL = 1e-8
#: feasibility-audit tolerance = 10x the solver tolerance
CHECK_TOL_FACTOR = 10.0
_SDP_SOLVERS = ("CLARABEL", "SCS")

Assignment = Dict[str, Union[float, np.ndarray]]
Builder = Callable[[Assignment], Union[float, np.ndarray]]


# -- linear programs --------------------------------------------------------

@dataclasses.dataclass
class LinearProgram:
    """``min c @ x`` s.t. ``A_ub x <= b_ub`` and box bounds per variable."""

    c: np.ndarray
    A_ub: np.ndarray
    b_ub: np.ndarray
    bounds: Optional[List[Tuple[Optional[float], Optional[float]]]] = None


@dataclasses.dataclass
class LpReport:
    status: str
    x: Optional[np.ndarray]
    objective: Optional[float]
    max_violation: Optional[float]
    duals: Optional[np.ndarray]
    message: str = ""


_LP_STATUS = {0: "optimal", 1: "iteration_limit", 2: "infeasible", 3: "unbounded", 4: "error"}


def solve_lp(lp: LinearProgram) -> LpReport:
    """Solve a linear program with HiGHS and report primal quality."""
    res = linprog(
        lp.c,
        A_ub=lp.A_ub,
        b_ub=lp.b_ub,
        bounds=lp.bounds if lp.bounds is not None else [(None, None)] * len(lp.c),
        method="highs",
    )
    status = _LP_STATUS.get(res.status, "error")
    if res.x is None:
        return LpReport(status, None, None, None, None, res.message)
    viol = float(np.max(lp.A_ub @ res.x - lp.b_ub)) if lp.A_ub is not None else 0.0
    duals = None
    if hasattr(res, "ineqlin") and res.ineqlin is not None:
        duals = np.asarray(res.ineqlin.marginals)
    return LpReport(status, np.asarray(res.x), float(res.fun), viol, duals, res.message)


# -- semidefinite programs --------------------------------------------------

@dataclasses.dataclass(frozen=True)
class SdpVariable:
    """Declaration of a scalar or matrix decision variable.

    ``kind`` is one of ``"scalar"``, ``"matrix"``, ``"symmetric"``;
    ``nonneg`` applies to scalars only.
    """

    name: str
    shape: Tuple[int, ...] = ()
    kind: str = "scalar"
    nonneg: bool = False


@dataclasses.dataclass(frozen=True)
class LmiBlock:
    """Affine map from the variables to a square matrix required PSD.

    ``strict`` blocks get the scaled identity shift described in the module
    docstring; builders must return the raw (unshifted) block.
    """

    name: str
    builder: Builder
    strict: bool = False


@dataclasses.dataclass
class SemidefiniteProgram:
    variables: List[SdpVariable]
    blocks: List[LmiBlock]
    cost: Builder


@dataclasses.dataclass
class SolveReport:
    status: str
    objective: Optional[float]
    assignment: Assignment
    block_margins: Dict[str, float]
    block_eps: Dict[str, float]
    solver: str
    solver_tol: float
    solve_time: float
    message: str = ""


def _is_expr(x) -> bool:
    return isinstance(x, cp.expressions.expression.Expression)


def as_cell(x) -> Union[np.ndarray, cp.Expression]:
    """Coerce a scalar-valued term to a 1x1 cell for block assembly."""
    if _is_expr(x):
        return cp.reshape(x, (1, 1), order="F")
    arr = np.asarray(x, dtype=float)
    return arr.reshape(1, 1)


def bmat(rows: Sequence[Sequence]) -> Union[np.ndarray, cp.Expression]:
    """Block-matrix assembly dispatching on numpy vs cvxpy contents."""
    if any(_is_expr(cell) for row in rows for cell in row):
        return cp.bmat([[cell for cell in row] for row in rows])
    return np.block([[np.atleast_2d(np.asarray(c, dtype=float)) for c in row] for row in rows])


def _zero_assignment(variables: Sequence[SdpVariable]) -> Assignment:
    out: Assignment = {}
    for v in variables:
        out[v.name] = 0.0 if v.kind == "scalar" else np.zeros(v.shape)
    return out


def block_eps(block: LmiBlock, variables: Sequence[SdpVariable]) -> float:
    """Identity shift applied to a strict block (zero for semidefinite ones)."""
    if not block.strict:
        return 0.0
    const = np.atleast_2d(np.asarray(block.builder(_zero_assignment(variables)), dtype=float))
    return STRICT_EPS_SCALE * (1.0 + float(np.linalg.norm(const, 2)))


def _cvxpy_variables(variables: Sequence[SdpVariable]) -> Dict[str, cp.Variable]:
    out = {}
    for v in variables:
        if v.kind == "scalar":
            out[v.name] = cp.Variable(nonneg=v.nonneg, name=v.name)
        elif v.kind == "symmetric":
            if len(v.shape) != 2 or v.shape[0] != v.shape[1]:
                raise ValueError(f"symmetric variable {v.name} must be square")
            out[v.name] = cp.Variable(v.shape, symmetric=True, name=v.name)
        elif v.kind == "matrix":
            out[v.name] = cp.Variable(v.shape, name=v.name)
        else:
            raise ValueError(f"unknown variable kind {v.kind!r}")
    return out


def solve_sdp(
    sdp: SemidefiniteProgram,
    solvers: Sequence[str] = _SDP_SOLVERS,
    tol: float = SOLVER_TOL,
    verbose: bool = False,
) -> SolveReport:
    """Solve a block SDP and report the assignment with per-block margins.

    The per-block margins in the report are computed from the numeric
    assignment with numpy (smallest eigenvalue of the symmetrized block), not
    taken from the solver.
    """
    cvars = _cvxpy_variables(sdp.variables)
    eps = {blk.name: block_eps(blk, sdp.variables) for blk in sdp.blocks}
    constraints = []
    for blk in sdp.blocks:
        expr = blk.builder(cvars)
        if not _is_expr(expr):
            raise ValueError(f"block {blk.name} does not involve any decision variable")
        expr = 0.5 * (expr + expr.T)
        dimension = expr.shape[0]
        constraints.append(expr >> eps[blk.name] * np.eye(dimension))
    problem = cp.Problem(cp.Minimize(sdp.cost(cvars)), constraints)

    last_message = ""
    for solver in solvers:
        t0 = time.perf_counter()
        try:
            if solver == "CLARABEL":
                problem.solve(
                    solver=cp.CLARABEL,
                    verbose=verbose,
                    tol_gap_abs=tol,
                    tol_gap_rel=tol,
                    tol_feas=tol,
                )
            elif solver == "SCS":
                problem.solve(solver=cp.SCS, verbose=verbose, eps=tol, max_iters=200000)
            else:
                problem.solve(solver=solver, verbose=verbose)
        except Exception as exc:  # solver backends raise assorted types
            last_message = f"{solver}: {exc}"
            continue
        elapsed = time.perf_counter() - t0
        status = _map_status(problem.status)
        if status in ("optimal", "inaccurate"):
            assignment = _extract(cvars, sdp.variables)
            margins = _numeric_margins(sdp, assignment)
            return SolveReport(
                status=status,
                objective=float(problem.value),
                assignment=assignment,
                block_margins=margins,
                block_eps=eps,
                solver=solver,
                solver_tol=tol,
                solve_time=elapsed,
            )
        if status in ("infeasible", "unbounded"):
            return SolveReport(
                status=status,
                objective=None,
                assignment={},
                block_margins={},
                block_eps=eps,
                solver=solver,
                solver_tol=tol,
                solve_time=elapsed,
                message=problem.status,
            )
        last_message = f"{solver}: {problem.status}"
    return SolveReport(
        status="error",
        objective=None,
        assignment={},
        block_margins={},
        block_eps=eps,
        solver="none",
        solver_tol=tol,
        solve_time=0.0,
        message=last_message,
    )


def _map_status(status: Optional[str]) -> str:
    if status == cp.OPTIMAL:
        return "optimal"
    if status == cp.OPTIMAL_INACCURATE:
        return "inaccurate"
    if status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
        return "infeasible"
    if status in (cp.UNBOUNDED, cp.UNBOUNDED_INACCURATE):
        return "unbounded"
    return "error"


def _extract(cvars: Dict[str, cp.Variable], variables: Sequence[SdpVariable]) -> Assignment:
    out: Assignment = {}
    for v in variables:
        val = cvars[v.name].value
        if val is None:
            raise RuntimeError(f"solver returned no value for {v.name}")
        if v.kind == "scalar":
            out[v.name] = float(val)
        else:
            arr = np.asarray(val, dtype=float)
            if v.kind == "symmetric":
                arr = 0.5 * (arr + arr.T)
            out[v.name] = arr
    return out


def _numeric_margins(sdp: SemidefiniteProgram, assignment: Assignment) -> Dict[str, float]:
    margins = {}
    for blk in sdp.blocks:
        mat = np.atleast_2d(np.asarray(blk.builder(assignment), dtype=float))
        margins[blk.name] = float(np.min(np.linalg.eigvalsh(0.5 * (mat + mat.T))))
    return margins


def check_feasibility(
    sdp: SemidefiniteProgram,
    assignment: Assignment,
    tol: float = CHECK_TOL_FACTOR * SOLVER_TOL,
) -> Tuple[bool, Dict[str, float]]:
    """Independent eigenvalue audit of an assignment against every block.

    A block passes when its smallest eigenvalue (after symmetrizing) is at
    least the block's identity shift minus ``tol``.  Nonnegative scalars are
    audited against the same tolerance.  Returns overall pass/fail plus the
    per-block margins.
    """
    margins = _numeric_margins(sdp, assignment)
    ok = True
    for blk in sdp.blocks:
        eps = block_eps(blk, sdp.variables)
        if margins[blk.name] < eps - tol:
            ok = False
    for v in sdp.variables:
        if v.kind == "scalar" and v.nonneg and float(assignment[v.name]) < -tol:
            ok = False
    return ok, margins
