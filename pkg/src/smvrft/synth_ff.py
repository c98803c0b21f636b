"""Feedforward-plus-state-feedback synthesis from virtual-reference data.

The controller ``u(k) = f_K ybar(k) + K x(k)`` tracks a unit-gain reference
model ``M``: the data cost is the mean product, across the two experiment
channels, of the filtered mismatch between the recorded input and the input
the controller would have produced on the virtual reference.  Expanding the
product turns the cost into an exact quadratic form ``const + K Q K' - 2 K R``,
which a Schur-complement block embeds into an SDP next to per-vertex
robust-stability certificates over the feasible parameter set.  The
feedforward gain ``f_K = rho - K f`` with ``rho`` the inverse plant static
gain makes the loop static-exact when ``rho`` is exact.
"""

from __future__ import annotations

import dataclasses
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .conic import LmiBlock, SdpVariable, SemidefiniteProgram, as_cell, bmat
from .lti import TransferFunction, filter_signal
from .signals import Dataset, SpectralFactor, state_lag_matrix, virtual_reference

__all__ = [
    "VrftDataFF",
    "FFController",
    "estimate_static_gain",
    "design_filter",
    "build_ff_data",
    "assemble_ff_sdp",
    "extract_ff_controller",
    "vrft_cost_ff",
    "feedforward_vector",
    "whitening_transform",
]

DEFAULT_RELAX_WEIGHT = 1e6
COND_LIMIT = 1e12


@dataclasses.dataclass
class VrftDataFF:
    """Quadratic reduction of the feedforward virtual-reference cost."""

    R: np.ndarray       # (2n-1,)
    Q: np.ndarray       # (2n-1, 2n-1)
    const: float
    rho: float
    n: int
    N_eff: int

    @property
    def dim(self) -> int:
        return 2 * self.n - 1

    def cost_of(self, K: np.ndarray) -> float:
        """Evaluate ``const + K Q K' - 2 K R`` at a gain row."""
        K = np.asarray(K, dtype=float).ravel()
        return float(self.const + K @ self.Q @ K - 2.0 * K @ self.R)


@dataclasses.dataclass
class FFController:
    """Static feedback gain plus reference feedforward."""

    K: np.ndarray
    f_K: float
    rho: float
    n: int
    Ts: float
    diagnostics: Dict[str, float] = dataclasses.field(default_factory=dict)


def feedforward_vector(n: int, rho: float) -> np.ndarray:
    """Steady-state direction ``f``: ``n`` ones then ``n - 1`` copies of ``rho``."""
    return np.concatenate([np.ones(n), np.full(n - 1, rho)])


def estimate_static_gain(Phi: np.ndarray, ynext: np.ndarray) -> float:
    """Plant static gain from a least-squares fit of the regressor data."""
    Phi = np.asarray(Phi, dtype=float)
    theta_hat, *_ = np.linalg.lstsq(Phi, np.asarray(ynext, dtype=float), rcond=None)
    n = theta_hat.size // 2
    den = 1.0 - float(np.sum(theta_hat[:n]))
    if abs(den) < 1e-12:
        raise ValueError("estimated plant has (nearly) integrating dynamics; no static gain")
    return float(np.sum(theta_hat[n:])) / den


def design_filter(
    M: TransferFunction,
    Z: SpectralFactor | TransferFunction,
    W: Optional[TransferFunction] = None,
) -> TransferFunction:
    """Data filter ``F = M^2 W / Z`` for the virtual-reference cost.

    ``Z`` is the input spectral factor (all-pole fits divide cleanly);
    ``W`` defaults to one.  The result must be stable, which holds whenever
    ``M`` and ``W`` are stable and ``Z`` is minimum phase.
    """
    Ztf = Z.to_tf() if isinstance(Z, SpectralFactor) else Z
    F = M * M
    if W is not None:
        F = F * W
    F = F / Ztf
    if not F.is_stable():
        raise ValueError("designed filter is unstable; check W and the spectral factor")
    return F


def _window(n: int, L: int) -> slice:
    # rows k = n .. N_d-1 of the extended (k = -n+1 ..) row index
    return slice(2 * n - 1, L - 1)


def build_ff_data(
    dataset: Dataset, M: TransferFunction, F: TransferFunction, rho: float
) -> VrftDataFF:
    """Filter the experiment, subtract steady-state targets, form ``R, Q, const``.

    Each channel contributes its own virtual reference; deviations are taken
    against the steady-state input ``rho r`` and state ``f r``.  The first
    ``n`` regressor-complete rows are excluded as filter transient and sums
    are normalized by the retained row count.
    """
    n = dataset.n
    L = dataset.u.size
    fvec = feedforward_vector(n, rho)
    u_F = filter_signal(F, dataset.u)
    sl = _window(n, L)
    U: List[np.ndarray] = []
    X: List[np.ndarray] = []
    for y in dataset.channels():
        r = virtual_reference(M, y)
        y_F = filter_signal(F, y)
        r_F = filter_signal(F, r)
        x_F = state_lag_matrix(y_F, u_F, n)
        U.append(u_F[: L - 1][sl] - rho * r_F[sl])
        X.append(x_F[sl] - np.outer(r_F[sl], fvec))
    N_eff = U[0].size
    R = (X[0].T @ U[1] + X[1].T @ U[0]) / (2.0 * N_eff)
    Q = (X[0].T @ X[1] + X[1].T @ X[0]) / (2.0 * N_eff)
    const = float(U[0] @ U[1]) / N_eff
    return VrftDataFF(R=R, Q=Q, const=const, rho=float(rho), n=n, N_eff=N_eff)


#: eigenvalue floor of the whitening transform, relative to the largest
WHITEN_CLIP = 1e-6


def whitening_transform(Q: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Symmetric ``(T, T^-1)`` with ``T Q T`` near the identity.

    The synthesis SDP is assembled in the whitened state basis ``x' = T x``:
    the data Gram loses its conditioning there, and all blocks transform by
    congruence so the feasible controller set is unchanged.  ``T`` is the
    inverse square root of ``Q`` with eigenvalues floored at ``WHITEN_CLIP``
    times the largest, which bounds ``cond(T)`` when the experiment excites
    some parameter directions poorly.  Requires ``Q`` positive definite.
    """
    Q = np.asarray(Q, dtype=float)
    w, V = np.linalg.eigh(0.5 * (Q + Q.T))
    if w.min() <= 0.0:
        raise ValueError(
            "data cost matrix is not positive definite; the experiment is "
            "not informative enough for synthesis"
        )
    w = np.maximum(w, WHITEN_CLIP * w.max())
    T = V @ np.diag(w**-0.5) @ V.T
    Tinv = V @ np.diag(w**0.5) @ V.T
    return T, Tinv


def _assemble_whitened_sdp(
    Q: np.ndarray,
    R: np.ndarray,
    vertices: Sequence[Tuple[np.ndarray, np.ndarray]],
    relax_weight: float,
) -> SemidefiniteProgram:
    # shared by both controller structures; everything happens in the
    # whitened basis where the data Gram is near the identity
    m = Q.shape[0]
    T, Tinv = whitening_transform(Q)
    Qw = T @ Q @ T
    qir = np.linalg.solve(Qw, T @ R).reshape(m, 1)
    eye = np.eye(m)
    variables = [
        SdpVariable("G", (m, m), "symmetric"),
        SdpVariable("L", (1, m), "matrix"),
        SdpVariable("sigma"),
        SdpVariable("gamma"),
        SdpVariable("lam_g", nonneg=True),
    ]
    blocks = [
        LmiBlock(
            "vrft",
            lambda v: bmat(
                [
                    [as_cell(v["sigma"]) + 2.0 * (v["L"] @ qir) - qir.T @ v["G"] @ qir,
                     v["L"]],
                    [v["L"].T, v["G"]],
                ]
            ),
        ),
        LmiBlock("relax_plus", lambda v: v["G"] - v["gamma"] * Qw + v["lam_g"] * eye),
        LmiBlock("relax_minus", lambda v: -v["G"] + v["gamma"] * Qw + v["lam_g"] * eye),
        # every block is jointly homogeneous in the variables, so the scale
        # must be pinned; by homogeneity the floor is active at the optimum
        # and does not restrict the achievable gains
        LmiBlock("gamma_floor", lambda v: as_cell(v["gamma"] - 1.0)),
    ]
    for i, (A_i, B_i) in enumerate(vertices):
        name = f"P{i}"
        A_w = T @ A_i @ Tinv
        B_w = T @ B_i
        variables.append(SdpVariable(name, (m, m), "symmetric"))

        def stab(v, A_w=A_w, B_w=B_w, name=name):
            closed = A_w @ v["G"] + B_w @ v["L"]
            return bmat([[v[name], closed], [closed.T, v["G"] + v["G"].T - v[name]]])

        blocks.append(LmiBlock(f"stability_{i}", stab, strict=True))
    # hand the solver a cost with coefficients no larger than one; a raw
    # relax_weight of 1e6 overwhelms solver equilibration and destroys the
    # returned accuracy
    scale = 1.0 / max(1.0, relax_weight)
    cost = lambda v: scale * v["sigma"] + (relax_weight * scale) * v["lam_g"]
    return SemidefiniteProgram(variables=variables, blocks=blocks, cost=cost)


def _extract_whitened_gain(
    assignment: Dict[str, np.ndarray], Q: np.ndarray
) -> Tuple[np.ndarray, Dict[str, float]]:
    # map L G^-1 from the whitened basis back to original state coordinates
    G = np.asarray(assignment["G"], dtype=float)
    L = np.asarray(assignment["L"], dtype=float).reshape(1, -1)
    cond_G = float(np.linalg.cond(G))
    if cond_G > COND_LIMIT:
        raise RuntimeError(f"G is numerically singular (cond {cond_G:.2e}); no controller")
    T, _ = whitening_transform(Q)
    gain = np.linalg.solve(G, L.ravel()) @ T  # symmetric G, T
    diag = {
        "cond_G": cond_G,
        "sigma": float(assignment.get("sigma", np.nan)),
        "lam_g": float(assignment.get("lam_g", np.nan)),
        "gamma": float(assignment.get("gamma", np.nan)),
        "whitening_cond": float(np.linalg.cond(T)) ** 2,
    }
    return gain, diag


def assemble_ff_sdp(
    data: VrftDataFF,
    vertices: Sequence[Tuple[np.ndarray, np.ndarray]],
    relax_weight: float = DEFAULT_RELAX_WEIGHT,
) -> SemidefiniteProgram:
    """Cost bound plus per-vertex stability certificates as one block SDP.

    Variables: symmetric ``G``, gain row ``L`` (the controller is
    ``K = L G^-1``), cost bound ``sigma``, relaxation scalars ``gamma`` and
    ``lam_g >= 0`` tying ``G`` to ``gamma Q``, and one symmetric ``P_i`` per
    vertex.  The cost is ``sigma + relax_weight * lam_g``, handed to the
    solver normalized by ``max(1, relax_weight)``.  Internally the problem
    lives in the whitened basis of :func:`whitening_transform` and the free
    joint scale of the variables is pinned by ``gamma >= 1``;
    :func:`extract_ff_controller` undoes the basis change.
    """
    return _assemble_whitened_sdp(data.Q, data.R, vertices, relax_weight)


def extract_ff_controller(
    assignment: Dict[str, np.ndarray], data: VrftDataFF, Ts: float
) -> FFController:
    """Recover ``K = L G^-1`` and the feedforward gain from a solved SDP."""
    K, diag = _extract_whitened_gain(assignment, data.Q)
    fvec = feedforward_vector(data.n, data.rho)
    f_K = float(data.rho - K @ fvec)
    diag["const"] = data.const
    diag["cost_quadratic"] = data.cost_of(K)
    return FFController(K=K, f_K=f_K, rho=data.rho, n=data.n, Ts=Ts, diagnostics=diag)


def vrft_cost_ff(
    dataset: Dataset,
    M: TransferFunction,
    F: TransferFunction,
    rho: float,
    K: np.ndarray,
) -> float:
    """Direct time-domain evaluation of the feedforward data cost.

    Builds the unfiltered input mismatch per channel, filters the combined
    series once, and averages the cross product over the retained window.
    Used as the independent check of the ``R, Q, const`` reduction.
    """
    n = dataset.n
    L = dataset.u.size
    K = np.asarray(K, dtype=float).ravel()
    fvec = feedforward_vector(n, rho)
    sl = _window(n, L)
    filtered = []
    for y in dataset.channels():
        r = virtual_reference(M, y)
        x = state_lag_matrix(y, dataset.u, n)
        s = dataset.u[: L - 1] - rho * r - (x - np.outer(r, fvec)) @ K
        filtered.append(filter_signal(F, s))
    prod = filtered[0][sl] * filtered[1][sl]
    return float(np.sum(prod) / prod.size)
