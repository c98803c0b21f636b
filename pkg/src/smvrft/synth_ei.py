"""Integral-action synthesis from differenced virtual-reference data.

The controller integrates the tracking error, ``eta(k+1) = eta(k) + e(k)``
and ``u(k) = K x(k) + g (eta(k) + e(k))``, which rejects constant
disturbances without knowing the plant static gain.  Differencing the
recorded input and output removes the steady-state offsets from the data
cost; the virtual tracking error enters undifferenced.  The quadratic
reduction lives in the gain ``[K g]``; a constant change of basis ``E``
(identity except the accumulator row, which subtracts the measured output)
maps it to the lifted gain ``J`` whose closed loop is ``Aa + Ba J`` on the
integrator-augmented vertex models, so the same Schur/stability SDP shape as
the feedforward case applies at dimension ``2n``.
"""

from __future__ import annotations

import dataclasses
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .conic import SemidefiniteProgram
from .lti import TransferFunction, filter_signal
from .signals import Dataset, state_lag_matrix, virtual_error

__all__ = [
    "VrftDataEI",
    "EIController",
    "difference_tf",
    "basis_matrix",
    "build_ei_data",
    "assemble_ei_sdp",
    "extract_ei_controller",
    "vrft_cost_ei",
]

from .synth_ff import (
    DEFAULT_RELAX_WEIGHT,
    _assemble_whitened_sdp,
    _extract_whitened_gain,
)


def difference_tf() -> TransferFunction:
    """First-difference filter ``1 - q^-1``."""
    return TransferFunction([1.0, -1.0], [1.0])


def basis_matrix(n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Change of basis ``E`` between data-cost and closed-loop gains.

    ``E`` is the identity with the last row replaced by ``[-C, 1]`` (the
    accumulator sees the negative measured output); its inverse just flips
    that sign.  Returns ``(E, E_inv)`` of size ``2n``.
    """
    m = 2 * n - 1
    E = np.eye(m + 1)
    E[m, 0] = -1.0
    E_inv = np.eye(m + 1)
    E_inv[m, 0] = 1.0
    return E, E_inv


@dataclasses.dataclass
class VrftDataEI:
    """Quadratic reduction of the integral-action cost in the lifted basis."""

    Rcal: np.ndarray    # (2n,)
    Qcal: np.ndarray    # (2n, 2n)
    const: float
    n: int
    N_eff: int

    @property
    def dim(self) -> int:
        return 2 * self.n

    def cost_of(self, K: np.ndarray, g: float) -> float:
        """Evaluate the cost at controller gains via the lifted quadratic form."""
        E, _ = basis_matrix(self.n)
        J = np.concatenate([np.asarray(K, dtype=float).ravel(), [float(g)]]) @ E
        return float(self.const + J @ self.Qcal @ J - 2.0 * J @ self.Rcal)


@dataclasses.dataclass
class EIController:
    """State feedback plus integral action on the tracking error."""

    K: np.ndarray
    g: float
    n: int
    Ts: float
    diagnostics: Dict[str, float] = dataclasses.field(default_factory=dict)


def _window(n: int, L: int) -> slice:
    return slice(2 * n - 1, L - 1)


def build_ei_data(
    dataset: Dataset, M: TransferFunction, F: TransferFunction
) -> VrftDataEI:
    """Difference-filter the experiment and form the lifted ``R, Q, const``.

    The input and the state lags are filtered by ``(1 - q^-1) F``; the
    virtual tracking error is filtered by ``F`` only (it is already a
    deviation variable, so differencing it would destroy the integral
    action's view of constant offsets).  First ``n`` regressor-complete rows
    are dropped as transient; sums are normalized by the retained count.
    """
    n = dataset.n
    L = dataset.u.size
    DF = difference_tf() * F
    sl = _window(n, L)
    u_DF = filter_signal(DF, dataset.u)
    U = u_DF[: L - 1][sl]
    X: List[np.ndarray] = []
    for y in dataset.channels():
        y_DF = filter_signal(DF, y)
        x_DF = state_lag_matrix(y_DF, u_DF, n)
        e_t = virtual_error(M, y)
        e_F = filter_signal(F, e_t)
        X.append(np.hstack([x_DF[sl], e_F[sl, None]]))
    N_eff = U.size
    R = (X[0] + X[1]).T @ U / (2.0 * N_eff)
    Q = (X[0].T @ X[1] + X[1].T @ X[0]) / (2.0 * N_eff)
    const = float(U @ U) / N_eff
    _, E_inv = basis_matrix(n)
    return VrftDataEI(
        Rcal=E_inv @ R, Qcal=E_inv @ Q @ E_inv.T, const=const, n=n, N_eff=N_eff
    )


def assemble_ei_sdp(
    data: VrftDataEI,
    aug_vertices: Sequence[Tuple[np.ndarray, np.ndarray]],
    relax_weight: float = DEFAULT_RELAX_WEIGHT,
) -> SemidefiniteProgram:
    """Same block structure as the feedforward SDP at dimension ``2n``.

    ``aug_vertices`` are the integrator-augmented pairs ``(Aa_i, Ba_i)``;
    the solved gain is the lifted ``J = L G^-1``.  As in the feedforward
    case the problem is assembled in the whitened basis of ``Qcal`` with the
    joint scale pinned by ``gamma >= 1``.
    """
    return _assemble_whitened_sdp(data.Qcal, data.Rcal, aug_vertices, relax_weight)


def extract_ei_controller(
    assignment: Dict[str, np.ndarray], data: VrftDataEI, Ts: float
) -> EIController:
    """Recover ``[K g] = (L G^-1) E^-1`` from a solved SDP."""
    J, diag = _extract_whitened_gain(assignment, data.Qcal)
    _, E_inv = basis_matrix(data.n)
    Kg = J @ E_inv
    K, g = Kg[:-1], float(Kg[-1])
    diag["const"] = data.const
    diag["cost_quadratic"] = data.cost_of(K, g)
    return EIController(K=K, g=g, n=data.n, Ts=Ts, diagnostics=diag)


def vrft_cost_ei(
    dataset: Dataset,
    M: TransferFunction,
    F: TransferFunction,
    K: np.ndarray,
    g: float,
) -> float:
    """Direct time-domain evaluation of the integral-action data cost.

    Differences the raw input and state rows, subtracts the controller's
    differenced response plus the error-integrator injection, filters the
    combined series once per channel, and averages the cross product over
    the retained window.  Independent check of the lifted reduction.
    """
    n = dataset.n
    L = dataset.u.size
    K = np.asarray(K, dtype=float).ravel()
    sl = _window(n, L)
    Du = np.diff(dataset.u, prepend=0.0)
    filtered = []
    for y in dataset.channels():
        x = state_lag_matrix(y, dataset.u, n)
        Dx = np.diff(x, axis=0, prepend=np.zeros((1, x.shape[1])))
        e_t = virtual_error(M, y)
        s = Du[: L - 1] - Dx @ K - g * e_t
        filtered.append(filter_signal(F, s))
    prod = filtered[0][sl] * filtered[1][sl]
    return float(np.sum(prod) / prod.size)
