"""Discrete-time LTI plumbing shared by the identification and synthesis stages.

Conventions
-----------
* Transfer functions are coefficient arrays in the backward-shift operator:
  ``F(q) = (b0 + b1 q^-1 + ... + bM q^-M) / (1 + a1 q^-1 + ... + aL q^-L)``.
  The denominator is stored monic.  Roots reported by :meth:`TransferFunction.poles`
  and :meth:`TransferFunction.zeros` live in the forward ``z`` domain, so
  stability means magnitude strictly below one.
* A plant of order ``n`` is a parameter vector ``theta`` of length ``2n``:
  the first ``n`` entries multiply lagged outputs, the last ``n`` lagged
  inputs, i.e. ``y(k+1) = sum_i theta_i y(k+1-i) + sum_j theta_{n+j} u(k+1-j)``.
* The measured-signal state recast stacks ``n`` output lags and ``n-1`` input
  lags, ``x(k) = [y(k),...,y(k-n+1), u(k-1),...,u(k-n+1)]``, dimension
  ``2n - 1``.  The integral-action recast appends one accumulator state.
"""

from __future__ import annotations

import dataclasses
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import signal as _sig
from scipy.linalg import expm

__all__ = [
    "TransferFunction",
    "zoh_discretize",
    "theta_to_tf",
    "theta_to_state_space",
    "augment_integrator",
    "simulate",
    "filter_signal",
    "freq_response",
    "h2_norm",
    "impulse_energy_norm",
    "spectral_radius",
    "settling_steps",
]

#: magnitude below which a leading numerator coefficient counts as a pure delay
DELAY_TOL = 0.0
#: default frequency-grid size for quadrature norms
H2_GRID = 4096


@dataclasses.dataclass(frozen=True)
class TransferFunction:
    """Rational filter in the backward shift, denominator stored monic.

    Parameters
    ----------
    num : array_like
        Coefficients ``[b0, b1, ...]`` of powers of ``q^-1``.
    den : array_like
        Coefficients ``[a0, a1, ...]``; ``a0`` must be nonzero and is
        normalized to one on construction.
    """

    num: np.ndarray
    den: np.ndarray

    def __init__(self, num: Sequence[float], den: Sequence[float] = (1.0,)):
        num = np.atleast_1d(np.asarray(num, dtype=float))
        den = np.atleast_1d(np.asarray(den, dtype=float))
        if den[0] == 0.0:
            raise ValueError("denominator leading coefficient must be nonzero")
        object.__setattr__(self, "num", num / den[0])
        object.__setattr__(self, "den", den / den[0])

    # -- algebra -----------------------------------------------------------
    def __mul__(self, other: "TransferFunction | float") -> "TransferFunction":
        # np.convolve, not np.polymul: leading zeros are delays and must survive
        if isinstance(other, TransferFunction):
            return TransferFunction(
                np.convolve(self.num, other.num), np.convolve(self.den, other.den)
            )
        return TransferFunction(self.num * float(other), self.den)

    __rmul__ = __mul__

    def __truediv__(self, other: "TransferFunction") -> "TransferFunction":
        if not isinstance(other, TransferFunction):
            return TransferFunction(self.num / float(other), self.den)
        if other.num[0] == 0.0:
            raise ValueError("division requires a biproper divisor (no leading delay)")
        return TransferFunction(
            np.convolve(self.num, other.den), np.convolve(self.den, other.num)
        )

    # -- analysis ----------------------------------------------------------
    def poles(self) -> np.ndarray:
        """Denominator roots in the z domain."""
        if self.den.size == 1:
            return np.array([])
        return np.roots(self.den)

    def zeros(self) -> np.ndarray:
        """Roots of the numerator (leading delays stripped) in the z domain."""
        num = np.trim_zeros(self.num, "f")
        if num.size <= 1:
            return np.array([])
        return np.roots(num)

    def is_stable(self, tol: float = 0.0) -> bool:
        p = self.poles()
        return bool(p.size == 0 or np.max(np.abs(p)) < 1.0 - tol)

    def dcgain(self) -> float:
        return float(np.sum(self.num) / np.sum(self.den))

    def evaluate(self, omega: np.ndarray) -> np.ndarray:
        """Frequency response at angular frequencies ``omega`` (rad/sample)."""
        omega = np.atleast_1d(np.asarray(omega, dtype=float))
        zinv = np.exp(-1j * omega)
        powers = zinv[:, None] ** np.arange(self.num.size)[None, :]
        nv = powers @ self.num
        powers = zinv[:, None] ** np.arange(self.den.size)[None, :]
        dv = powers @ self.den
        return nv / dv

    def delay(self) -> int:
        """Number of leading zero numerator coefficients (pure delay steps)."""
        nz = np.nonzero(np.abs(self.num) > DELAY_TOL)[0]
        return int(nz[0]) if nz.size else self.num.size

    def inverse_after_delay(self) -> "TransferFunction":
        """Inverse of a one-step-delay filter with the delay removed.

        For ``F = q^-1 B(q)/A(q)`` returns ``A(q)/B(q)``, so that the exact
        inverse is the returned filter composed with a one-step advance
        (see :func:`filter_signal` mode ``"acausal-by-one"``).
        """
        if self.num.size < 2 or self.num[0] != 0.0 or self.num[1] == 0.0:
            raise ValueError("filter must carry exactly one step of delay")
        return TransferFunction(self.den, self.num[1:])

    @staticmethod
    def first_order(a1: float, b1: float) -> "TransferFunction":
        """``b1 q^-1 / (1 + a1 q^-1)``, i.e. ``y(k) = -a1 y(k-1) + b1 r(k-1)``."""
        return TransferFunction([0.0, b1], [1.0, a1])

    @staticmethod
    def constant(g: float = 1.0) -> "TransferFunction":
        return TransferFunction([g], [1.0])


def zoh_discretize(num_s: Sequence[float], den_s: Sequence[float], Ts: float) -> np.ndarray:
    """Zero-order-hold discretization of a strictly proper continuous plant.

    The continuous plant ``num_s(s)/den_s(s)`` (coefficients in descending
    powers of ``s``) is realized in controllable canonical form, the discrete
    pair is obtained from the matrix exponential of the augmented state
    matrix, and the result is converted back to difference-equation
    coefficients.

    Returns
    -------
    numpy.ndarray
        ``theta`` of length ``2n``: output coefficients then input
        coefficients of ``y(k+1) = sum theta_i y(k+1-i) + sum theta_{n+j} u(k+1-j)``.
    """
    num_s = np.atleast_1d(np.asarray(num_s, dtype=float))
    den_s = np.atleast_1d(np.asarray(den_s, dtype=float))
    if Ts <= 0:
        raise ValueError("sample time must be positive")
    if np.trim_zeros(num_s, "f").size >= den_s.size:
        raise ValueError("plant must be strictly proper")
    Ac, Bc, Cc, Dc = _sig.tf2ss(num_s, den_s)
    n = Ac.shape[0]
    aug = np.zeros((n + 1, n + 1))
    aug[:n, :n] = Ac
    aug[:n, n:] = Bc
    md = expm(aug * Ts)
    Ad, Bd = md[:n, :n], md[:n, n:]
    numd, dend = _sig.ss2tf(Ad, Bd, Cc, Dc)
    numd = np.atleast_2d(numd)[0]
    # dend is monic z^n + a1 z^{n-1} + ...; numd[0] is the direct term (zero
    # for strictly proper plants up to roundoff)
    theta = np.concatenate([-dend[1:], numd[1:]])
    return theta


def theta_to_tf(theta: Sequence[float]) -> TransferFunction:
    """Plant transfer function ``(theta_{n+1} q^-1 + ...) / (1 - theta_1 q^-1 - ...)``."""
    theta = np.asarray(theta, dtype=float)
    n = _order_of(theta)
    return TransferFunction(
        np.concatenate([[0.0], theta[n:]]), np.concatenate([[1.0], -theta[:n]])
    )


def _order_of(theta: np.ndarray) -> int:
    if theta.size % 2 != 0 or theta.size == 0:
        raise ValueError("theta must have even length 2n")
    return theta.size // 2


def theta_to_state_space(theta: Sequence[float]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Measured-signal state-space recast of a parameter vector.

    State ``x(k) = [y(k),...,y(k-n+1), u(k-1),...,u(k-n+1)]`` of dimension
    ``2n - 1`` with ``x(k+1) = A x(k) + B u(k)`` and ``y(k) = C x(k)``.

    Returns
    -------
    (A, B, C) : tuple of numpy.ndarray
        ``A`` is ``(2n-1, 2n-1)``, ``B`` is ``(2n-1, 1)``, ``C`` is ``(1, 2n-1)``.
    """
    theta = np.asarray(theta, dtype=float)
    n = _order_of(theta)
    m = 2 * n - 1
    A = np.zeros((m, m))
    A[0, :n] = theta[:n]
    if n > 1:
        A[0, n:] = theta[n + 1 :]
        A[1:n, : n - 1] = np.eye(n - 1)
    if n > 2:
        A[n + 1 :, n : m - 1] = np.eye(n - 2)
    B = np.zeros((m, 1))
    B[0, 0] = theta[n]
    if n > 1:
        B[n, 0] = 1.0
    C = np.zeros((1, m))
    C[0, 0] = 1.0
    return A, B, C


def augment_integrator(A: np.ndarray, B: np.ndarray, C: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Append an error accumulator state for integral-action synthesis.

    ``Aa = [[A, 0], [-C, 1]]``, ``Ba = [[B], [0]]``; the accumulator integrates
    the negative plant output (the reference enters as an exogenous input).
    """
    m = A.shape[0]
    Aa = np.zeros((m + 1, m + 1))
    Aa[:m, :m] = A
    Aa[m, :m] = -C[0]
    Aa[m, m] = 1.0
    Ba = np.vstack([B, np.zeros((1, 1))])
    return Aa, Ba


def simulate(
    theta: Sequence[float],
    u: Sequence[float],
    d: Optional[Sequence[float]] = None,
) -> np.ndarray:
    """Open-loop response of the difference-equation plant with zero initial state.

    Parameters
    ----------
    theta : array_like
        Parameter vector of length ``2n``.
    u : array_like
        Input samples; the noise-free output evolves on the same index range.
    d : array_like, optional
        Additive output noise, same length as ``u``.  Omitted means noise free.

    Returns
    -------
    numpy.ndarray
        Measured output ``y = z + d`` where ``z`` is the noise-free response.
    """
    u = np.asarray(u, dtype=float)
    tf = theta_to_tf(theta)
    z = _sig.lfilter(tf.num, tf.den, u)
    if d is None:
        return z
    d = np.asarray(d, dtype=float)
    if d.shape != u.shape:
        raise ValueError("noise sequence must match the input length")
    return z + d


def filter_signal(F: TransferFunction, x: Sequence[float], mode: str = "causal") -> np.ndarray:
    """Apply a rational filter to a finite signal with zero initial state.

    ``mode="acausal-by-one"`` advances the input one step before causal
    filtering (the final sample is dropped because its successor is not
    available).  Composing it with :meth:`TransferFunction.inverse_after_delay`
    inverts a one-step-delay filter offline.
    """
    x = np.asarray(x, dtype=float)
    if mode == "causal":
        return _sig.lfilter(F.num, F.den, x)
    if mode == "acausal-by-one":
        return _sig.lfilter(F.num, F.den, x[1:])
    raise ValueError(f"unknown filtering mode: {mode!r}")


def freq_response(F: TransferFunction, omega: Sequence[float]) -> np.ndarray:
    """Complex response of ``F`` on a grid of angular frequencies (rad/sample)."""
    return F.evaluate(np.asarray(omega, dtype=float))


def h2_norm(F: TransferFunction, n_grid: int = H2_GRID) -> float:
    """Quadrature H2 norm ``sqrt((1/2pi) int |F(e^jw)|^2 dw)``.

    Uses the trapezoid rule on a uniform grid over ``[-pi, pi]``; for stable
    rational filters the periodic trapezoid rule converges geometrically.
    """
    w = np.linspace(-np.pi, np.pi, n_grid + 1)
    mag2 = np.abs(F.evaluate(w)) ** 2
    return float(np.sqrt(np.trapezoid(mag2, w) / (2.0 * np.pi)))


def impulse_energy_norm(F: TransferFunction, tol: float = 1e-14, max_len: int = 100000) -> float:
    """H2 norm via truncated impulse-response energy (independent cross-check).

    Truncates once the tail contribution estimate drops below ``tol`` times the
    accumulated energy, using the dominant-pole decay rate.
    """
    if not F.is_stable():
        raise ValueError("impulse energy requires a stable filter")
    p = F.poles()
    rho = float(np.max(np.abs(p))) if p.size else 0.0
    length = F.num.size
    if rho > 0.0:
        # geometric tail bound: need rho^(2k) small relative to tol
        length = max(length, int(np.ceil(np.log(tol) / (2.0 * np.log(rho)))) + F.num.size)
    length = min(max(length, 8), max_len)
    imp = np.zeros(length)
    imp[0] = 1.0
    h = _sig.lfilter(F.num, F.den, imp)
    return float(np.sqrt(np.sum(h * h)))


def spectral_radius(A: np.ndarray) -> float:
    """Largest eigenvalue magnitude of a square matrix."""
    return float(np.max(np.abs(np.linalg.eigvals(np.asarray(A, dtype=float)))))


def settling_steps(F: TransferFunction, frac: float = 0.02) -> int:
    """Steps for the dominant mode of a stable filter to decay below ``frac``."""
    p = F.poles()
    if p.size == 0:
        return 1
    rho = float(np.max(np.abs(p)))
    if rho >= 1.0:
        raise ValueError("settling time requires a stable filter")
    if rho == 0.0:
        return F.den.size
    return max(1, int(np.ceil(np.log(frac) / np.log(rho))))
