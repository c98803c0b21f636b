"""Set-membership identification: error-bound estimation and the feasible set.

Given regressor pairs from one output channel, the noise floor that the data
can support is the optimal value of a linear program over the prior parameter
box; inflating it by a factor ``alpha`` yields a polytopic feasible parameter
set (FPS) described by two rows per sample plus the prior box.  Vertices are
obtained by double description after LP-based redundancy pruning, with an
outer-box fallback when the vertex count explodes.
"""

from __future__ import annotations

import dataclasses
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import polytope
from .conic import LinearProgram, solve_lp
from .lti import theta_to_state_space
from .polytope import VertexCapExceeded

__all__ = [
    "OmegaBox",
    "FeasibleParameterSet",
    "VertexCapExceeded",
    "estimate_error_bound",
    "build_fps",
    "enumerate_vertices",
    "outer_box",
    "box_fps",
    "oriented_box_fps",
    "membership",
    "vertex_matrices",
]

#: zero threshold for the optimal noise-floor value
LAMBDA_ZERO_TOL = 1e-10


@dataclasses.dataclass(frozen=True)
class OmegaBox:
    """Prior hyper-box for the parameter vector, ``lo <= theta <= hi``."""

    lo: np.ndarray
    hi: np.ndarray

    @staticmethod
    def symmetric(dim: int, radius: float = 10.0) -> "OmegaBox":
        r = float(radius)
        return OmegaBox(lo=np.full(dim, -r), hi=np.full(dim, r))

    def __post_init__(self) -> None:
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        if lo.shape != hi.shape or np.any(lo >= hi):
            raise ValueError("box bounds must satisfy lo < hi componentwise")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return self.lo.size

    def hrep(self) -> Tuple[np.ndarray, np.ndarray]:
        return polytope.box_hrep(self.lo, self.hi)

    def contains(self, theta: np.ndarray) -> bool:
        return bool(np.all(theta >= self.lo) and np.all(theta <= self.hi))


@dataclasses.dataclass
class FeasibleParameterSet:
    """Polytopic parameter set ``A theta <= b`` with optional vertex list.

    ``rows_box`` marks which rows come from the prior box rather than from
    data.  ``from_outer_box`` records that the set is the axis-aligned outer
    approximation used when exact enumeration hit the vertex cap.
    """

    A: np.ndarray
    b: np.ndarray
    alpha: float
    lam_lb: float
    dbar: float
    omega: OmegaBox
    rows_box: np.ndarray
    vertices: Optional[np.ndarray] = None
    active_counts: Optional[np.ndarray] = None
    from_outer_box: bool = False

    @property
    def dim(self) -> int:
        return self.A.shape[1]

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]


def estimate_error_bound(
    Phi: np.ndarray,
    ynext: np.ndarray,
    omega: OmegaBox,
    dbar: float,
) -> Tuple[float, np.ndarray]:
    """Smallest residual inflation consistent with the data over the prior box.

    Solves ``min lambda`` subject to ``|ynext - Phi theta| <= lambda + dbar``
    and ``theta`` in the box, ``lambda >= 0``.  Returns the optimum and the
    minimizing parameter vector.
    """
    Phi = np.asarray(Phi, dtype=float)
    ynext = np.asarray(ynext, dtype=float)
    N, dim = Phi.shape
    if dim != omega.dim:
        raise ValueError("regressor width does not match the prior box")
    ones = np.ones((N, 1))
    A_ub = np.vstack([np.hstack([Phi, -ones]), np.hstack([-Phi, -ones])])
    b_ub = np.concatenate([ynext + dbar, -ynext + dbar])
    c = np.zeros(dim + 1)
    c[-1] = 1.0
    bounds = [(float(l), float(h)) for l, h in zip(omega.lo, omega.hi)] + [(0.0, None)]
    rep = solve_lp(LinearProgram(c=c, A_ub=A_ub, b_ub=b_ub, bounds=bounds))
    if rep.status != "optimal":
        raise RuntimeError(f"error-bound LP did not solve: {rep.status}")
    lam = float(rep.x[-1])
    theta = rep.x[:-1].copy()
    return lam, theta


def build_fps(
    Phi: np.ndarray,
    ynext: np.ndarray,
    alpha: float,
    lam_lb: float,
    dbar: float,
    omega: OmegaBox,
) -> FeasibleParameterSet:
    """Assemble the inflated feasible set ``|ynext - Phi theta| <= alpha*lam_lb + dbar``.

    Rows come in the order: upper data rows, lower data rows, box rows.
    """
    if alpha < 1.0:
        raise ValueError("inflation factor must be at least 1")
    Phi = np.asarray(Phi, dtype=float)
    ynext = np.asarray(ynext, dtype=float)
    bound = alpha * lam_lb + dbar
    box_A, box_b = omega.hrep()
    A = np.vstack([Phi, -Phi, box_A])
    b = np.concatenate([ynext + bound, -ynext + bound, box_b])
    rows_box = np.zeros(A.shape[0], dtype=bool)
    rows_box[2 * Phi.shape[0] :] = True
    return FeasibleParameterSet(
        A=A, b=b, alpha=float(alpha), lam_lb=float(lam_lb), dbar=float(dbar),
        omega=omega, rows_box=rows_box,
    )


def enumerate_vertices(
    fps: FeasibleParameterSet,
    cap: int = 5000,
    prune_tol: float = polytope.PRUNE_TOL,
    merge_tol: float = polytope.MERGE_TOL,
) -> FeasibleParameterSet:
    """Attach the exact vertex list to an FPS (double description).

    Rows are pruned first (box rows are tested before data rows so the cheap
    certified-subsystem filter kicks in early).  Raises
    :class:`VertexCapExceeded` if the enumeration exceeds ``cap`` vertices;
    callers may then fall back to :func:`box_fps`.
    """
    order = np.concatenate([np.nonzero(fps.rows_box)[0], np.nonzero(~fps.rows_box)[0]])
    A_ord, b_ord = fps.A[order], fps.b[order]
    keep = polytope.prune_redundant(A_ord, b_ord, tol=prune_tol)
    A_red, b_red = A_ord[keep], b_ord[keep]
    verts, counts = polytope.dd_vertices(
        A_red, b_red, cap=cap, merge_tol=merge_tol, return_active_counts=True
    )
    fps.vertices = verts
    fps.active_counts = counts
    return fps


def outer_box(fps: FeasibleParameterSet) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Tight axis-aligned bounds of the FPS via ``2 * dim`` LPs.

    Returns ``(corners, lo, hi)`` where ``corners`` has ``2**dim`` rows.
    """
    dim = fps.dim
    lo = np.empty(dim)
    hi = np.empty(dim)
    bounds = [(None, None)] * dim
    for j in range(dim):
        c = np.zeros(dim)
        c[j] = 1.0
        rep = solve_lp(LinearProgram(c=c, A_ub=fps.A, b_ub=fps.b, bounds=bounds))
        if rep.status != "optimal":
            raise RuntimeError(f"outer-box LP failed: {rep.status}")
        lo[j] = rep.objective
        rep = solve_lp(LinearProgram(c=-c, A_ub=fps.A, b_ub=fps.b, bounds=bounds))
        if rep.status != "optimal":
            raise RuntimeError(f"outer-box LP failed: {rep.status}")
        hi[j] = -rep.objective
    return polytope.box_corners(lo, hi), lo, hi


def box_fps(fps: FeasibleParameterSet) -> FeasibleParameterSet:
    """Outer-box replacement FPS whose H-rep and vertices are the tight box."""
    corners, lo, hi = outer_box(fps)
    box = OmegaBox(lo=lo, hi=hi)
    A, b = box.hrep()
    return FeasibleParameterSet(
        A=A,
        b=b,
        alpha=fps.alpha,
        lam_lb=fps.lam_lb,
        dbar=fps.dbar,
        omega=fps.omega,
        rows_box=np.ones(A.shape[0], dtype=bool),
        vertices=corners,
        active_counts=np.full(corners.shape[0], fps.dim),
        from_outer_box=True,
    )


def oriented_box_fps(fps: FeasibleParameterSet) -> FeasibleParameterSet:
    """Bounding box of the vertex cloud in its principal-axis frame.

    Much tighter than the axis-aligned box when the set is elongated, while
    still a superset of the vertex hull, so stability certificates at its
    corners cover the whole FPS.  Requires an attached vertex list; corners
    that coincide (degenerate directions) are deduplicated.
    """
    if fps.vertices is None:
        raise ValueError("FPS has no vertex list; run enumerate_vertices first")
    V = np.asarray(fps.vertices, dtype=float)
    mean = V.mean(axis=0)
    centered = V - mean
    _, _, Ut = np.linalg.svd(centered, full_matrices=True)
    U = Ut.T
    coords = centered @ U
    lo = coords.min(axis=0)
    hi = coords.max(axis=0)
    corners = polytope.box_corners(lo, hi) @ U.T + mean
    corners = np.unique(np.round(corners, 12), axis=0)
    A = np.vstack([U.T, -U.T])
    b = np.concatenate([hi + U.T @ mean, -(lo + U.T @ mean)])
    return FeasibleParameterSet(
        A=A,
        b=b,
        alpha=fps.alpha,
        lam_lb=fps.lam_lb,
        dbar=fps.dbar,
        omega=fps.omega,
        rows_box=np.ones(A.shape[0], dtype=bool),
        vertices=corners,
        active_counts=np.full(corners.shape[0], fps.dim),
        from_outer_box=True,
    )


def membership(fps: FeasibleParameterSet, theta: Sequence[float]) -> Tuple[bool, float]:
    """Whether ``theta`` lies in the FPS, and the worst row slack.

    The margin is ``min(b - A theta)`` over rows: negative means violated.
    """
    theta = np.asarray(theta, dtype=float)
    slack = fps.b - fps.A @ theta
    margin = float(np.min(slack))
    return margin >= 0.0, margin


def vertex_matrices(fps: FeasibleParameterSet) -> List[Tuple[np.ndarray, np.ndarray]]:
    """State-space pairs ``(A_i, B_i)`` at every stored FPS vertex."""
    if fps.vertices is None:
        raise ValueError("FPS has no vertex list; run enumerate_vertices or box_fps")
    out = []
    for v in fps.vertices:
        A_i, B_i, _ = theta_to_state_space(v)
        out.append((A_i, B_i))
    return out
