"""Closed-loop evaluation: tracking simulations, FIT scores, stability audits.

Simulations run the true difference-equation plant against the synthesized
controllers, with the controller reading the measured (noisy) output exactly
as it would online.  The robust-stability audit checks spectral radii at
every stored vertex of the feasible set, at random convex combinations, and
at any extra parameter vectors supplied (such as the true plant).  Bode
tables compare the achieved closed loop with the reference model.  This
module produces numbers only; figure rendering lives in the report path.
"""

from __future__ import annotations

import dataclasses
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import signal as _sig

from .lti import TransferFunction, augment_integrator, spectral_radius, theta_to_state_space
from .synth_ei import EIController
from .synth_ff import FFController

__all__ = [
    "ReferenceProfile",
    "ClosedLoopRun",
    "StabilityAudit",
    "reference_model_response",
    "fit_index",
    "simulate_closed_loop_ff",
    "simulate_closed_loop_ei",
    "robust_stability_check",
    "closed_loop_response",
    "bode_comparison",
    "evaluation_horizon",
]

DIVERGENCE_LIMIT = 1e9
#: multiple of the reference-model settling length used for steady-state runs
SETTLING_MULTIPLE = 40


@dataclasses.dataclass(frozen=True)
class ReferenceProfile:
    """Piecewise-constant reference: ``(value, t_start, t_end)`` triples."""

    pieces: Tuple[Tuple[float, float, float], ...]
    Ts: float

    def __init__(self, pieces: Sequence[Sequence[float]], Ts: float):
        object.__setattr__(self, "pieces", tuple(tuple(map(float, p)) for p in pieces))
        object.__setattr__(self, "Ts", float(Ts))
        if any(p[1] >= p[2] for p in self.pieces):
            raise ValueError("each profile piece needs t_start < t_end")
        ends = [p[2] for p in self.pieces[:-1]]
        starts = [p[1] for p in self.pieces[1:]]
        if any(e != s for e, s in zip(ends, starts)):
            raise ValueError("profile pieces must be contiguous and increasing")

    @property
    def t_end(self) -> float:
        return self.pieces[-1][2]

    def n_steps(self) -> int:
        return int(round(self.t_end / self.Ts)) + 1

    def series(self) -> np.ndarray:
        """Sampled reference; boundaries belong to the later piece, the final
        instant to the last piece."""
        k = np.arange(self.n_steps())
        t = k * self.Ts
        out = np.empty(t.size)
        for value, t0, t1 in self.pieces:
            out[(t >= t0) & (t < t1)] = value
        out[t >= self.pieces[-1][2]] = self.pieces[-1][0]
        return out


@dataclasses.dataclass
class ClosedLoopRun:
    """Trajectories of one closed-loop simulation."""

    ref: np.ndarray
    y: np.ndarray
    u: np.ndarray
    e: np.ndarray
    diverged: bool = False
    k_diverged: Optional[int] = None


def reference_model_response(M: TransferFunction, ref: Sequence[float]) -> np.ndarray:
    """Target output: reference profile passed through the reference model."""
    ref = np.asarray(ref, dtype=float)
    return _sig.lfilter(M.num, M.den, ref)


def fit_index(y: Sequence[float], y_target: Sequence[float]) -> float:
    """``100 (1 - ||y_t - y|| / ||y_t - mean(y_t)||)`` on matching ranges."""
    y = np.asarray(y, dtype=float)
    y_target = np.asarray(y_target, dtype=float)
    if y.shape != y_target.shape:
        raise ValueError("trajectories must share one index range")
    denom = float(np.linalg.norm(y_target - np.mean(y_target)))
    if denom == 0.0:
        raise ValueError("target trajectory is constant; FIT undefined")
    return float(100.0 * (1.0 - np.linalg.norm(y_target - y) / denom))


def _plant_step(theta: np.ndarray, zbuf: np.ndarray, ubuf: np.ndarray) -> float:
    n = theta.size // 2
    return float(theta[:n] @ zbuf + theta[n:] @ ubuf)


def simulate_closed_loop_ff(
    theta: Sequence[float],
    ctrl: FFController,
    ref: Sequence[float],
    d: Optional[Sequence[float]] = None,
    output_offset: float = 0.0,
) -> ClosedLoopRun:
    """Run ``u = f_K ref + K x`` against the difference-equation plant.

    ``x`` stacks measured outputs and past inputs, so measurement noise
    ``d`` (and any constant ``output_offset``) feeds back through the
    controller.  The plant starts at rest.
    """
    theta = np.asarray(theta, dtype=float)
    ref = np.asarray(ref, dtype=float)
    n = theta.size // 2
    N = ref.size
    d = np.zeros(N) if d is None else np.asarray(d, dtype=float)
    zbuf = np.zeros(n)      # z(k-1) .. z(k-n)
    ubuf = np.zeros(n)      # u(k-1) .. u(k-n)
    ybuf = np.zeros(n - 1)  # y(k-1) .. y(k-n+1)
    y = np.zeros(N)
    u = np.zeros(N)
    for k in range(N):
        z_k = _plant_step(theta, zbuf, ubuf)
        y[k] = z_k + d[k] + output_offset
        if abs(y[k]) > DIVERGENCE_LIMIT:
            return ClosedLoopRun(ref, y[: k + 1], u[:k], ref[: k + 1] - y[: k + 1],
                                 diverged=True, k_diverged=k)
        x = np.concatenate([[y[k]], ybuf, ubuf[: n - 1]])
        u[k] = ctrl.f_K * ref[k] + float(ctrl.K @ x)
        zbuf = np.concatenate([[z_k], zbuf[:-1]])
        ubuf = np.concatenate([[u[k]], ubuf[:-1]])
        if n > 1:
            ybuf = np.concatenate([[y[k]], ybuf[:-1]])
    return ClosedLoopRun(ref=ref, y=y, u=u, e=ref - y)


def simulate_closed_loop_ei(
    theta: Sequence[float],
    ctrl: EIController,
    ref: Sequence[float],
    d: Optional[Sequence[float]] = None,
    output_offset: float = 0.0,
) -> ClosedLoopRun:
    """Run the error-integrating controller against the plant.

    Recursion: ``e(k) = ref(k) - y(k)``, the accumulator adds ``e(k)`` and
    ``u(k) = K x(k) + g * accumulator`` (accumulator starts at zero).
    """
    theta = np.asarray(theta, dtype=float)
    ref = np.asarray(ref, dtype=float)
    n = theta.size // 2
    N = ref.size
    d = np.zeros(N) if d is None else np.asarray(d, dtype=float)
    zbuf = np.zeros(n)
    ubuf = np.zeros(n)
    ybuf = np.zeros(n - 1)
    acc = 0.0
    y = np.zeros(N)
    u = np.zeros(N)
    for k in range(N):
        z_k = _plant_step(theta, zbuf, ubuf)
        y[k] = z_k + d[k] + output_offset
        if abs(y[k]) > DIVERGENCE_LIMIT:
            return ClosedLoopRun(ref, y[: k + 1], u[:k], ref[: k + 1] - y[: k + 1],
                                 diverged=True, k_diverged=k)
        x = np.concatenate([[y[k]], ybuf, ubuf[: n - 1]])
        acc += ref[k] - y[k]
        u[k] = float(ctrl.K @ x) + ctrl.g * acc
        zbuf = np.concatenate([[z_k], zbuf[:-1]])
        ubuf = np.concatenate([[u[k]], ubuf[:-1]])
        if n > 1:
            ybuf = np.concatenate([[y[k]], ybuf[:-1]])
    return ClosedLoopRun(ref=ref, y=y, u=u, e=ref - y)


@dataclasses.dataclass
class StabilityAudit:
    """Spectral radii of the closed loop over the uncertainty set."""

    vertex_radii: np.ndarray
    combo_radii: np.ndarray
    extra_radii: np.ndarray
    max_radius: float
    stable: bool


def _closed_loop_matrix(theta: np.ndarray, ctrl) -> np.ndarray:
    A, B, C = theta_to_state_space(theta)
    if isinstance(ctrl, FFController):
        return A + B @ ctrl.K.reshape(1, -1)
    if isinstance(ctrl, EIController):
        Aa, Ba = augment_integrator(A, B, C)
        J = np.concatenate([ctrl.K - ctrl.g * C.ravel(), [ctrl.g]])
        return Aa + Ba @ J.reshape(1, -1)
    raise TypeError(f"unsupported controller type: {type(ctrl)!r}")


def robust_stability_check(
    vertices: np.ndarray,
    ctrl,
    n_combos: int = 100,
    seed: int = 0,
    extra: Optional[Sequence[np.ndarray]] = None,
) -> StabilityAudit:
    """Closed-loop spectral radii at vertices, random mixtures, extra points.

    Convex-combination weights are Dirichlet(1,...,1) draws from a seeded
    generator; ``extra`` typically carries the true parameter vector.
    """
    vertices = np.atleast_2d(np.asarray(vertices, dtype=float))
    v_r = np.array([spectral_radius(_closed_loop_matrix(v, ctrl)) for v in vertices])
    rng = np.random.default_rng(seed)
    weights = rng.dirichlet(np.ones(vertices.shape[0]), size=n_combos)
    combos = weights @ vertices
    c_r = np.array([spectral_radius(_closed_loop_matrix(t, ctrl)) for t in combos])
    e_r = np.array(
        [spectral_radius(_closed_loop_matrix(np.asarray(t, dtype=float), ctrl))
         for t in (extra or [])]
    )
    all_r = np.concatenate([v_r, c_r, e_r if e_r.size else np.empty(0)])
    max_radius = float(np.max(all_r))
    return StabilityAudit(
        vertex_radii=v_r, combo_radii=c_r, extra_radii=e_r,
        max_radius=max_radius, stable=bool(max_radius < 1.0),
    )


def closed_loop_response(theta: np.ndarray, ctrl, omega: np.ndarray) -> np.ndarray:
    """Reference-to-output frequency response of the controller in the loop."""
    theta = np.asarray(theta, dtype=float)
    omega = np.asarray(omega, dtype=float)
    A, B, C = theta_to_state_space(theta)
    if isinstance(ctrl, FFController):
        Acl = A + B @ ctrl.K.reshape(1, -1)
        Bcl = B * ctrl.f_K
        Ccl = C
    elif isinstance(ctrl, EIController):
        Aa, Ba = augment_integrator(A, B, C)
        J = np.concatenate([ctrl.K - ctrl.g * C.ravel(), [ctrl.g]])
        Acl = Aa + Ba @ J.reshape(1, -1)
        Bcl = np.vstack([ctrl.g * B, [[1.0]]])
        Ccl = np.hstack([C, [[0.0]]])
    else:
        raise TypeError(f"unsupported controller type: {type(ctrl)!r}")
    eye = np.eye(Acl.shape[0])
    out = np.empty(omega.size, dtype=complex)
    for i, w in enumerate(omega):
        out[i] = (Ccl @ np.linalg.solve(np.exp(1j * w) * eye - Acl, Bcl))[0, 0]
    return out


def bode_comparison(
    theta: np.ndarray,
    ctrl,
    M: TransferFunction,
    n_points: int = 200,
) -> Dict[str, np.ndarray]:
    """Magnitude/phase table of the achieved loop next to the reference model."""
    omega = np.linspace(0.0, np.pi, n_points)
    H = closed_loop_response(theta, ctrl, omega)
    Hm = M.evaluate(omega)
    return {
        "omega": omega,
        "mag_closed_loop": np.abs(H),
        "phase_closed_loop": np.unwrap(np.angle(H)),
        "mag_model": np.abs(Hm),
        "phase_model": np.unwrap(np.angle(Hm)),
    }


def evaluation_horizon(M: TransferFunction, multiple: int = SETTLING_MULTIPLE) -> int:
    """Steady-state simulation length: a multiple of the model settling length."""
    from .lti import settling_steps

    return multiple * settling_steps(M)
