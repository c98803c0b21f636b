"""Bounded-polytope geometry: vertex enumeration and redundancy removal.

All routines take H-representations ``A x <= b``.  Rows are normalized to
unit Euclidean norm internally so every tolerance is a geometric distance.
Two independent vertex enumerators are provided: the incremental double
description method (production path) and exhaustive active-set enumeration
(test oracle, exponential in the row count).
"""

from __future__ import annotations

import itertools
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import cKDTree

__all__ = [
    "VertexCapExceeded",
    "normalize_rows",
    "prune_redundant",
    "dd_vertices",
    "brute_force_vertices",
    "merge_close_points",
    "box_hrep",
    "box_corners",
]

MERGE_TOL = 1e-9
PRUNE_TOL = 1e-9
ON_TOL = 1e-9
#: relative slack added to the starting box so it never supports a vertex
_BOX_INFLATE = 0.125


class VertexCapExceeded(RuntimeError):
    """Raised when incremental enumeration would exceed the vertex budget."""

    def __init__(self, count: int, cap: int):
        super().__init__(f"vertex enumeration exceeded the cap ({count} > {cap})")
        self.count = count
        self.cap = cap


def normalize_rows(A: np.ndarray, b: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Scale rows to unit norm; trivially satisfied zero rows are dropped.

    A zero row with negative offset makes the system infeasible and raises.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).ravel()
    if A.shape[0] != b.size:
        raise ValueError("row count mismatch between A and b")
    norms = np.linalg.norm(A, axis=1)
    zero = norms == 0.0
    if np.any(zero & (b < 0.0)):
        raise ValueError("system contains an infeasible zero row")
    A, b, norms = A[~zero], b[~zero], norms[~zero]
    return A / norms[:, None], b / norms


def _solve_lp(c, A, b):
    return linprog(c, A_ub=A, b_ub=b, bounds=[(None, None)] * A.shape[1], method="highs")


def prune_redundant(
    A: np.ndarray, b: np.ndarray, tol: float = PRUNE_TOL
) -> np.ndarray:
    """Boolean mask of rows that actually support the polyhedron.

    A row is redundant when maximizing its normal over the system with that
    row relaxed stays below its offset (within ``tol``, after normalization).
    Rows certified non-redundant accumulate into a small subsystem used to
    discharge most later rows with cheap LPs before the full test runs.
    """
    An, bn = normalize_rows(A, b)
    if _solve_lp(np.zeros(An.shape[1]), An, bn).status == 2:
        raise ValueError("infeasible system passed to prune_redundant")
    # work on the normalized copy; the mask maps back to the original rows
    norms = np.linalg.norm(np.atleast_2d(np.asarray(A, dtype=float)), axis=1)
    orig_idx = np.nonzero(norms != 0.0)[0]
    m = An.shape[0]
    mask = np.ones(m, dtype=bool)
    certified: List[int] = []
    for i in range(m):
        a_i = An[i]
        if certified:
            sub = np.asarray(certified)
            res = _solve_lp(-a_i, An[sub], bn[sub])
            if res.status == 0 and -res.fun <= bn[i] + tol:
                mask[i] = False
                continue
        rows = np.nonzero(mask)[0]
        b_rel = bn[rows].copy()
        b_rel[rows == i] += 1.0
        res = _solve_lp(-a_i, An[rows], b_rel)
        if res.status == 2:
            raise ValueError("infeasible system passed to prune_redundant")
        if res.status == 0 and -res.fun <= bn[i] + tol:
            mask[i] = False
        else:
            certified.append(i)
    full = np.zeros(norms.size, dtype=bool)
    full[orig_idx[mask]] = True
    return full


def merge_close_points(
    points: np.ndarray,
    tol: float = MERGE_TOL,
    masks: Optional[List[int]] = None,
) -> Tuple[np.ndarray, Optional[List[int]]]:
    """Cluster points within ``tol`` (inf-norm) and keep one representative.

    When active-set bitmasks accompany the points the merged representative
    carries the union of its cluster's masks.  Output is lexicographically
    sorted for determinism.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[0] == 0:
        return points, ([] if masks is not None else None)
    pairs = cKDTree(points).query_pairs(r=tol, p=np.inf)
    parent = list(range(points.shape[0]))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, j in pairs:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    reps = {}
    for i in range(points.shape[0]):
        r = find(i)
        if r not in reps:
            reps[r] = [points[r], masks[r] if masks is not None else 0]
        elif masks is not None:
            reps[r][1] |= masks[i]
    keys = sorted(reps, key=lambda r: tuple(reps[r][0]))
    out = np.array([reps[r][0] for r in keys])
    out_masks = [reps[r][1] for r in keys] if masks is not None else None
    return out, out_masks


def box_hrep(lo: np.ndarray, hi: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """H-representation of an axis box: rows ``x_j <= hi_j`` then ``-x_j <= -lo_j``."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    d = lo.size
    eye = np.eye(d)
    return np.vstack([eye, -eye]), np.concatenate([hi, -lo])


def box_corners(lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """All ``2^d`` corners, last coordinate varying fastest."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    return np.array(list(itertools.product(*zip(lo, hi))))


def _coordinate_bounds(An: np.ndarray, bn: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    d = An.shape[1]
    lo = np.empty(d)
    hi = np.empty(d)
    for j in range(d):
        c = np.zeros(d)
        c[j] = 1.0
        res = _solve_lp(c, An, bn)
        if res.status == 2:
            raise ValueError("empty polytope")
        if res.status != 0:
            raise ValueError("polytope is unbounded; vertex enumeration needs a bounded set")
        lo[j] = res.fun
        res = _solve_lp(-c, An, bn)
        if res.status != 0:
            raise ValueError("polytope is unbounded; vertex enumeration needs a bounded set")
        hi[j] = -res.fun
    return lo, hi


def dd_vertices(
    A: np.ndarray,
    b: np.ndarray,
    cap: int = 5000,
    tol: float = ON_TOL,
    merge_tol: float = MERGE_TOL,
    return_active_counts: bool = False,
):
    """Vertices of a bounded polytope by incremental double description.

    Starts from a strictly enclosing box with known corners and inserts the
    normalized halfspaces one at a time; new vertices arise on edges between
    kept and cut vertices, with adjacency certified by the rank of the shared
    active set.  Raises :class:`VertexCapExceeded` when the working vertex
    count passes ``cap``.

    Returns the vertex array (lexicographically sorted); with
    ``return_active_counts`` also the number of active constraints per vertex.
    """
    An, bn = normalize_rows(A, b)
    m, d = An.shape
    lo, hi = _coordinate_bounds(An, bn)
    pad = _BOX_INFLATE * (1.0 + hi - lo)
    blo, bhi = lo - pad, hi + pad
    box_A, box_b = box_hrep(blo, bhi)
    # combined normal table: real rows first, then artificial box rows
    all_A = np.vstack([An, box_A])
    pts = box_corners(blo, bhi)
    masks: List[int] = []
    for corner in pts:
        mask = 0
        for r in range(box_A.shape[0]):
            if abs(box_A[r] @ corner - box_b[r]) <= tol:
                mask |= 1 << (m + r)
        masks.append(mask)

    rank_needed = d - 1
    for i in range(m):
        slack = pts @ An[i] - bn[i]
        out = slack > tol
        if not np.any(out):
            on = np.abs(slack) <= tol
            for idx in np.nonzero(on)[0]:
                masks[idx] |= 1 << i
            continue
        inn = slack < -tol
        on = ~out & ~inn
        new_pts: List[np.ndarray] = []
        new_masks: List[int] = []
        in_idx = np.nonzero(inn)[0]
        out_idx = np.nonzero(out)[0]
        for p in in_idx:
            for q in out_idx:
                common = masks[p] & masks[q]
                if common.bit_count() < rank_needed:
                    continue
                # rank_needed is 0 in one dimension; skip the empty rank test
                if rank_needed:
                    rows = [r for r in range(all_A.shape[0]) if common >> r & 1]
                    if np.linalg.matrix_rank(all_A[rows]) < rank_needed:
                        continue
                lam = slack[p] / (slack[p] - slack[q])
                new_pts.append(pts[p] + lam * (pts[q] - pts[p]))
                new_masks.append(common | (1 << i))
        keep = np.nonzero(~out)[0]
        kept_masks = []
        for idx in keep:
            mk = masks[idx]
            if abs(slack[idx]) <= tol:
                mk |= 1 << i
            kept_masks.append(mk)
        if new_pts:
            pts = np.vstack([pts[keep], np.array(new_pts)])
            masks = kept_masks + new_masks
        else:
            pts = pts[keep]
            masks = kept_masks
        pts, masks = merge_close_points(pts, merge_tol, masks)
        if pts.shape[0] > cap:
            raise VertexCapExceeded(pts.shape[0], cap)
        if pts.shape[0] == 0:
            raise ValueError("polytope is empty within tolerance")

    artificial = any(mask >> m != 0 for mask in masks)
    if artificial:
        raise RuntimeError("enumeration left a vertex on the artificial box; numerical failure")
    if return_active_counts:
        counts = np.array([mask.bit_count() for mask in masks])
        return pts, counts
    return pts


def brute_force_vertices(
    A: np.ndarray,
    b: np.ndarray,
    tol: float = ON_TOL,
    merge_tol: float = MERGE_TOL,
) -> np.ndarray:
    """Vertices by exhaustive active-set enumeration (test oracle).

    Solves every ``d``-subset of normalized rows as a square system and keeps
    the solutions feasible within ``tol``.  Exponential in the row count;
    intended for small instances only.
    """
    An, bn = normalize_rows(A, b)
    m, d = An.shape
    found: List[np.ndarray] = []
    for combo in itertools.combinations(range(m), d):
        sub = An[np.asarray(combo)]
        if abs(np.linalg.det(sub)) < 1e-12:
            continue
        x = np.linalg.solve(sub, bn[np.asarray(combo)])
        if np.max(An @ x - bn) <= tol:
            found.append(x)
    if not found:
        return np.empty((0, d))
    pts, _ = merge_close_points(np.array(found), merge_tol)
    return pts
