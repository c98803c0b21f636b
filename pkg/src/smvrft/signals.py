"""Excitation signals, experiment datasets and input spectral modeling.

The identification experiments drive the plant twice with the same PRBS input
and independent bounded measurement noise, so the two output channels differ
only through the noise.  Sample indices run from ``k = -n+1`` (the ``n-1``
warm-up samples feed the first regressor) through ``k = N_d``; all arrays are
stored flat with ``array[i] = signal(k_start + i)``.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import pathlib
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.linalg import solve_toeplitz

from .lti import TransferFunction, filter_signal, simulate

__all__ = [
    "Dataset",
    "SpectralFactor",
    "generate_prbs",
    "collect_dataset",
    "build_regressors",
    "estimate_ar_spectrum",
    "virtual_reference",
    "virtual_error",
    "write_dataset",
    "read_dataset",
]

#: LFSR feedback taps giving maximal-length sequences (register length -> taps)
_LFSR_TAPS = {
    5: (5, 3),
    7: (7, 6),
    9: (9, 5),
    11: (11, 9),
    15: (15, 14),
    16: (16, 15, 13, 4),
    23: (23, 18),
}

DEFAULT_LFSR_ORDER = 16


@dataclasses.dataclass
class Dataset:
    """Two-channel identification experiment record.

    ``u``, ``y1`` and ``y2`` have equal length ``N_d + n`` covering
    ``k = -n+1 .. N_d``; ``y1 - y2`` equals the noise difference because both
    channels share the same input and noise-free response.
    """

    u: np.ndarray
    y1: np.ndarray
    y2: np.ndarray
    n: int
    Ts: float
    dbar: float

    def __post_init__(self) -> None:
        self.u = np.asarray(self.u, dtype=float)
        self.y1 = np.asarray(self.y1, dtype=float)
        self.y2 = np.asarray(self.y2, dtype=float)
        if not (self.u.shape == self.y1.shape == self.y2.shape):
            raise ValueError("u, y1, y2 must share one index range")
        if self.n < 1 or self.u.size <= self.n:
            raise ValueError("need at least one regressor pair")

    @property
    def N_d(self) -> int:
        return self.u.size - self.n

    @property
    def k_start(self) -> int:
        return -(self.n - 1)

    def channels(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.y1, self.y2


@dataclasses.dataclass(frozen=True)
class SpectralFactor:
    """All-pole spectral factor ``Z(q) = g / (1 + c1 q^-1 + ... + cm q^-m)``."""

    gain: float
    coeffs: np.ndarray  # (c1 .. cm)

    def to_tf(self) -> TransferFunction:
        return TransferFunction([self.gain], np.concatenate([[1.0], self.coeffs]))


def generate_prbs(
    length: int,
    low: float = -1.0,
    high: float = 1.0,
    seed: int = 0,
    clock: int = 1,
    order: int = DEFAULT_LFSR_ORDER,
) -> np.ndarray:
    """Pseudo-random binary sequence from a maximal-length LFSR.

    Parameters
    ----------
    length : int
        Number of samples.
    low, high : float
        The two signal levels.
    seed : int
        Seeds the shift register (any value; mapped to a nonzero state).
    clock : int
        Hold each register bit for this many samples (1 = switch every sample).
    order : int
        Register length; must be a key of the internal maximal-taps table.
    """
    if order not in _LFSR_TAPS:
        raise ValueError(f"no maximal-length taps for register length {order}")
    if clock < 1:
        raise ValueError("clock period must be at least 1 sample")
    taps = _LFSR_TAPS[order]
    state = (int(seed) % ((1 << order) - 1)) + 1
    n_bits = -(-length // clock)
    bits = np.empty(n_bits, dtype=bool)
    for i in range(n_bits):
        bits[i] = state & 1
        # right-shifting register: stage t feeds back from bit (order - t),
        # so the output bit (t = order) always participates and the update
        # stays a bijection on the nonzero states
        fb = 0
        for t in taps:
            fb ^= (state >> (order - t)) & 1
        state = (state >> 1) | (fb << (order - 1))
    values = np.where(np.repeat(bits, clock)[:length], float(high), float(low))
    return values


def collect_dataset(
    theta: Sequence[float],
    N_d: int,
    dbar: float,
    Ts: float,
    input_low: float = -10.0,
    input_high: float = 10.0,
    input_seed: int = 0,
    noise_seeds: Tuple[int, int] = (1, 2),
    clock: int = 1,
    u: Optional[np.ndarray] = None,
) -> Dataset:
    """Run the two-channel identification experiment on a known plant.

    The plant starts at rest; each channel adds independent uniform noise on
    ``[-dbar, dbar]`` drawn from its own seeded generator.  A precomputed
    input can be supplied instead of the built-in PRBS.
    """
    theta = np.asarray(theta, dtype=float)
    n = theta.size // 2
    total = N_d + n
    if u is None:
        u = generate_prbs(total, input_low, input_high, seed=input_seed, clock=clock)
    else:
        u = np.asarray(u, dtype=float)
        if u.size != total:
            raise ValueError(f"supplied input must have length N_d + n = {total}")
    d1 = np.random.default_rng(noise_seeds[0]).uniform(-dbar, dbar, total)
    d2 = np.random.default_rng(noise_seeds[1]).uniform(-dbar, dbar, total)
    y1 = simulate(theta, u, d1)
    y2 = simulate(theta, u, d2)
    return Dataset(u=u, y1=y1, y2=y2, n=n, Ts=Ts, dbar=dbar)


def build_regressors(y: np.ndarray, u: np.ndarray, n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Stack measured regressors against one-step-ahead outputs.

    Given ``y`` and ``u`` over ``k = -n+1 .. N_d`` returns ``(Phi, ynext)``
    with ``N_d`` rows: ``Phi[t] = [y(t), ..., y(t-n+1), u(t), ..., u(t-n+1)]``
    and ``ynext[t] = y(t+1)`` for ``t = 0 .. N_d - 1``.
    """
    y = np.asarray(y, dtype=float)
    u = np.asarray(u, dtype=float)
    if y.shape != u.shape or y.size <= n:
        raise ValueError("signals must share one index range longer than n")
    # windows[t] = signal(t-n+1 .. t); flip to the lag ordering used here
    ywin = sliding_window_view(y[:-1], n)[:, ::-1]
    uwin = sliding_window_view(u[:-1], n)[:, ::-1]
    Phi = np.hstack([ywin, uwin])
    ynext = y[n:]
    return Phi, ynext


def state_lag_matrix(y: np.ndarray, u: np.ndarray, n: int) -> np.ndarray:
    """Rows of the measured-signal state ``x(k) = [y(k..k-n+1), u(k-1..k-n+1)]``.

    Signals cover ``k = -n+1 .. N_d``; the returned matrix has one row per
    ``k = -n+1 .. N_d - 1`` (the same range as the virtual reference), with
    lags before the record start taken as zero.  Callers that only need the
    regressor-complete range slice off the first ``n - 1`` rows.
    """
    y = np.asarray(y, dtype=float)
    u = np.asarray(u, dtype=float)
    if y.shape != u.shape or y.size <= n:
        raise ValueError("signals must share one index range longer than n")
    L = y.size
    pad = n - 1
    yp = np.concatenate([np.zeros(pad), y])
    up = np.concatenate([np.zeros(pad), u])
    ywin = sliding_window_view(yp, n)[: L - 1, ::-1]
    if n > 1:
        uwin = sliding_window_view(up, n - 1)[: L - 1, ::-1]
        return np.hstack([ywin, uwin])
    return ywin


def estimate_ar_spectrum(x: Sequence[float], order: int) -> SpectralFactor:
    """Autoregressive spectral factor of a scalar signal via Yule-Walker.

    Solves the Toeplitz normal equations on biased autocovariances, which
    guarantees a stable all-pole factor; the gain is the innovation standard
    deviation, so ``(1/2pi) int |Z|^2 dw`` reproduces the biased sample
    variance estimate ``r(0)``.
    """
    x = np.asarray(x, dtype=float)
    if order < 1 or x.size <= order + 1:
        raise ValueError("signal too short for the requested AR order")
    xc = x - np.mean(x)
    r = np.array(
        [np.dot(xc[: x.size - m], xc[m:]) / x.size for m in range(order + 1)]
    )
    if r[0] <= 0.0:
        raise ValueError("signal has no variance to model")
    a = solve_toeplitz(r[:-1], r[1:])
    coeffs = -a
    var_innov = r[0] - np.dot(a, r[1:])
    if var_innov <= 0.0:
        raise ValueError("Yule-Walker produced a nonpositive innovation variance")
    factor = SpectralFactor(gain=float(np.sqrt(var_innov)), coeffs=coeffs)
    if not factor.to_tf().is_stable():
        raise ValueError("spectral factor unstable; lower the AR order")
    return factor


def virtual_reference(M: TransferFunction, y: Sequence[float]) -> np.ndarray:
    """Reference that would have produced ``y`` through the model ``M``.

    ``M`` must carry exactly one step of delay; the inverse is applied
    offline by advancing ``y`` one step, so the result is one sample shorter
    than ``y`` (defined for ``k = k_start .. N_d - 1``).
    """
    return filter_signal(M.inverse_after_delay(), y, mode="acausal-by-one")


def virtual_error(M: TransferFunction, y: Sequence[float]) -> np.ndarray:
    """Virtual tracking error ``r - y`` on the virtual-reference index range."""
    y = np.asarray(y, dtype=float)
    r = virtual_reference(M, y)
    return r - y[: r.size]


# -- dataset persistence ----------------------------------------------------

def write_dataset(ds: Dataset, csv_path: str | pathlib.Path) -> pathlib.Path:
    """Write ``k,u,y1,y2`` rows plus a JSON metadata sidecar.

    The sidecar lives next to the CSV with suffix ``.meta.json`` and records
    ``n``, ``Ts`` and ``dbar``.  Floats are written in full round-trip
    precision.
    """
    csv_path = pathlib.Path(csv_path)
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "u", "y1", "y2"])
        for i in range(ds.u.size):
            w.writerow(
                [
                    ds.k_start + i,
                    repr(float(ds.u[i])),
                    repr(float(ds.y1[i])),
                    repr(float(ds.y2[i])),
                ]
            )
    meta = {"n": ds.n, "Ts": ds.Ts, "dbar": ds.dbar, "N_d": ds.N_d}
    sidecar = csv_path.with_suffix(".meta.json")
    sidecar.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return csv_path


def read_dataset(csv_path: str | pathlib.Path) -> Dataset:
    """Load a dataset written by :func:`write_dataset`."""
    csv_path = pathlib.Path(csv_path)
    meta: Dict[str, float] = json.loads(csv_path.with_suffix(".meta.json").read_text())
    rows = []
    with open(csv_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["k", "u", "y1", "y2"]:
            raise ValueError(f"unexpected dataset header: {header}")
        for row in reader:
            rows.append([float(v) for v in row[1:]])
    arr = np.asarray(rows, dtype=float)
    return Dataset(
        u=arr[:, 0],
        y1=arr[:, 1],
        y2=arr[:, 2],
        n=int(meta["n"]),
        Ts=float(meta["Ts"]),
        dbar=float(meta["dbar"]),
    )
