"""Scenario-based estimation of the set-membership inflation factor.

The noise floor recovered from finite data underestimates the worst case, so
the feasible-set bound is inflated by a factor ``alpha``.  The factor is
chosen by the scenario approach: draw fictitious plant/noise pairs around a
least-squares fit, replay the recorded input through each of them, compute
the smallest admissible inflation per scenario, discard the ``p`` largest,
and keep the maximum of the rest.  The resulting ``alpha`` then bounds the
violation probability by the usual scenario certificate, which also fixes
the number of scenarios to draw.
"""

from __future__ import annotations

import dataclasses
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import gammaln, logsumexp

from .lti import simulate
from .signals import build_regressors
from .sm import OmegaBox, estimate_error_bound

__all__ = [
    "ScenarioSpec",
    "ThetaDistribution",
    "Scenario",
    "ScenarioOutcome",
    "binomial_tail_log",
    "min_sample_size",
    "fit_theta_distribution",
    "sample_scenarios",
    "scenario_alpha",
    "estimate_alpha",
    "validate_alpha",
    "run_alpha_campaign",
]

#: treat the per-scenario noise floor as exactly zero below this
LAMBDA_ZERO_TOL = 1e-10
DEFAULT_M_CAP = 1e6
#: consecutive stability rejections tolerated before giving up (99 percent
#: rejection over a window of this size)
_REJECTION_WINDOW = 100
_DIVERGENCE_LIMIT = 1e12


@dataclasses.dataclass(frozen=True)
class ScenarioSpec:
    """Violation level, confidence and discard count of a campaign."""

    epsilon: float
    beta: float
    p: int
    M_cap: float = DEFAULT_M_CAP

    def __post_init__(self) -> None:
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError("epsilon must lie in (0, 1)")
        if not 0.0 < self.beta < 1.0:
            raise ValueError("beta must lie in (0, 1)")
        if self.p < 0:
            raise ValueError("discard count must be nonnegative")

    def sample_size(self) -> int:
        return min_sample_size(self.epsilon, self.beta, self.p)


def binomial_tail_log(N: int, epsilon: float, p: int) -> float:
    """``log P(Bin(N, epsilon) <= p)`` evaluated stably in the log domain."""
    j = np.arange(p + 1)
    terms = (
        gammaln(N + 1)
        - gammaln(j + 1)
        - gammaln(N - j + 1)
        + j * np.log(epsilon)
        + (N - j) * np.log1p(-epsilon)
    )
    return float(logsumexp(terms))


def min_sample_size(epsilon: float, beta: float, p: int) -> int:
    """Smallest ``N`` with ``P(Bin(N, epsilon) <= p) <= beta``.

    The tail is monotone decreasing in ``N``, so the bound is located by
    geometric bracketing plus bisection on the log-domain evaluator.
    """
    if not 0.0 < epsilon < 1.0 or not 0.0 < beta < 1.0 or p < 0:
        raise ValueError("need epsilon, beta in (0,1) and p >= 0")
    log_beta = math.log(beta)
    lo = p + 1
    hi = max(2 * lo, 2)
    while binomial_tail_log(hi, epsilon, p) > log_beta:
        lo = hi
        hi *= 2
    while lo < hi:
        mid = (lo + hi) // 2
        if binomial_tail_log(mid, epsilon, p) <= log_beta:
            hi = mid
        else:
            lo = mid + 1
    return int(lo)


@dataclasses.dataclass(frozen=True)
class ThetaDistribution:
    """Gaussian plant-parameter distribution with a stability filter."""

    mean: np.ndarray
    cov: np.ndarray
    stability_filter: bool = True

    def __post_init__(self) -> None:
        mean = np.asarray(self.mean, dtype=float)
        cov = np.asarray(self.cov, dtype=float)
        cov = 0.5 * (cov + cov.T)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        try:
            chol = np.linalg.cholesky(cov + 1e-300 * np.eye(cov.shape[0]))
        except np.linalg.LinAlgError:
            w, V = np.linalg.eigh(cov)
            w = np.clip(w, 0.0, None)
            chol = V @ np.diag(np.sqrt(w))
        object.__setattr__(self, "_chol", chol)

    @property
    def dim(self) -> int:
        return self.mean.size


def fit_theta_distribution(
    Phi: np.ndarray, ynext: np.ndarray, stability_filter: bool = True
) -> ThetaDistribution:
    """Least-squares fit with residual-scaled covariance.

    The covariance is the classical asymptotic expression
    ``s^2 (Phi' Phi)^-1`` with ``s^2`` the residual variance corrected for
    the parameter count.
    """
    Phi = np.asarray(Phi, dtype=float)
    ynext = np.asarray(ynext, dtype=float)
    N, dim = Phi.shape
    if N <= dim:
        raise ValueError("need more samples than parameters for the fit")
    gram = Phi.T @ Phi
    theta_hat, *_ = np.linalg.lstsq(Phi, ynext, rcond=None)
    resid = ynext - Phi @ theta_hat
    s2 = float(resid @ resid) / (N - dim)
    try:
        cov = s2 * np.linalg.inv(gram)
    except np.linalg.LinAlgError as exc:
        raise ValueError("regressors are not informative enough for a covariance") from exc
    return ThetaDistribution(mean=theta_hat, cov=cov, stability_filter=stability_filter)


@dataclasses.dataclass(frozen=True)
class Scenario:
    """One fictitious plant/noise draw."""

    index: int
    seed: int
    theta: np.ndarray
    d: np.ndarray


def _is_stable_theta(theta: np.ndarray) -> bool:
    n = theta.size // 2
    poly = np.concatenate([[1.0], -theta[:n]])
    roots = np.roots(poly)
    return bool(roots.size == 0 or np.max(np.abs(roots)) < 1.0)


def sample_scenarios(
    dist: ThetaDistribution,
    count: int,
    dbar: float,
    length: int,
    base_seed: int,
) -> List[Scenario]:
    """Draw ``count`` scenarios, each from its own generator ``base_seed + i``.

    Per-scenario generators make the list order-independent: scenario ``i``
    is identical whether drawn alone or as part of a batch.  Unstable
    parameter draws are rejected and redrawn when the stability filter is on.
    """
    out: List[Scenario] = []
    chol = dist._chol  # type: ignore[attr-defined]
    for i in range(count):
        seed = base_seed + i
        rng = np.random.default_rng(seed)
        rejections = 0
        while True:
            theta = dist.mean + chol @ rng.standard_normal(dist.dim)
            if not dist.stability_filter or _is_stable_theta(theta):
                break
            rejections += 1
            if rejections >= _REJECTION_WINDOW:
                raise RuntimeError(
                    "stability filter rejected "
                    f"{rejections} consecutive draws; the fitted distribution "
                    "is concentrated on unstable plants"
                )
        d = rng.uniform(-dbar, dbar, length)
        out.append(Scenario(index=i, seed=seed, theta=theta, d=d))
    return out


@dataclasses.dataclass(frozen=True)
class ScenarioOutcome:
    """Per-scenario inflation requirement and the branch that produced it."""

    index: int
    alpha: float
    lam_lb: float
    lam_hat_max: float
    case: str  # "ratio" | "consistent" | "capped"


def scenario_alpha(
    theta_i: np.ndarray,
    d_i: np.ndarray,
    u: np.ndarray,
    n: int,
    dbar: float,
    omega: OmegaBox,
    M_cap: float = DEFAULT_M_CAP,
    zero_tol: float = LAMBDA_ZERO_TOL,
    index: int = -1,
) -> ScenarioOutcome:
    """Smallest admissible inflation factor for one fictitious replay.

    The recorded input is replayed through the scenario plant with the
    scenario noise; the per-sample inflation demand is the regressor residual
    of the scenario plant minus the noise bound, and the scenario's own noise
    floor comes from the same LP as on real data.  Three branches:
    positive floor gives the clipped demand/floor ratio; zero floor with no
    demand gives one; zero floor with positive demand hits the cap.
    """
    u = np.asarray(u, dtype=float)
    y_i = simulate(theta_i, u, d_i)
    if np.max(np.abs(y_i)) > _DIVERGENCE_LIMIT:
        raise RuntimeError("fictitious replay diverged; scenario plant unstable")
    Phi_i, ynext_i = build_regressors(y_i, u, n)
    lam_hat = np.abs(ynext_i - Phi_i @ theta_i) - dbar
    lam_hat_max = float(np.max(lam_hat))
    lam_lb, _ = estimate_error_bound(Phi_i, ynext_i, omega, dbar)
    if lam_lb > zero_tol:
        alpha = min(max(lam_hat_max / lam_lb, 1.0), M_cap)
        case = "ratio"
    elif lam_hat_max <= zero_tol:
        alpha, case = 1.0, "consistent"
    else:
        alpha, case = M_cap, "capped"
    return ScenarioOutcome(
        index=index, alpha=float(alpha), lam_lb=float(lam_lb),
        lam_hat_max=lam_hat_max, case=case,
    )


def estimate_alpha(
    alphas: Sequence[float], p: int, M_cap: float = DEFAULT_M_CAP
) -> Tuple[float, List[int]]:
    """Discard the ``p`` largest demands and return the maximum of the rest.

    Ties at the discard boundary are broken by scenario index: lower indices
    are kept.  Returns the inflation factor and the sorted discarded indices.
    An estimate equal to the cap means the campaign could not certify any
    finite inflation; that is an error (increase ``p`` or improve the data).
    """
    alphas = np.asarray(alphas, dtype=float)
    N = alphas.size
    if p >= N:
        raise ValueError("cannot discard every scenario")
    order = sorted(range(N), key=lambda i: (-alphas[i], -i))
    removed = sorted(order[:p])
    alpha_star = float(alphas[order[p]])
    if alpha_star >= M_cap:
        raise RuntimeError(
            "retained scenarios still demand the inflation cap; "
            "increase the discard count or collect richer data"
        )
    return alpha_star, removed


def validate_alpha(fresh_alphas: Sequence[float], alpha_star: float) -> float:
    """Fraction of fresh scenarios whose demand strictly exceeds the estimate."""
    fresh = np.asarray(fresh_alphas, dtype=float)
    if fresh.size == 0:
        raise ValueError("validation needs at least one scenario")
    return float(np.mean(fresh > alpha_star))


def run_alpha_campaign(
    u: np.ndarray,
    n: int,
    dbar: float,
    omega: OmegaBox,
    dist: ThetaDistribution,
    spec: ScenarioSpec,
    base_seed: int,
    count: Optional[int] = None,
) -> Tuple[float, List[ScenarioOutcome], List[int]]:
    """Full campaign: draw, replay, discard, estimate.

    ``count`` defaults to the certificate sample size of ``spec``.
    """
    N = spec.sample_size() if count is None else int(count)
    scenarios = sample_scenarios(dist, N, dbar, len(u), base_seed)
    outcomes = [
        scenario_alpha(
            s.theta, s.d, u, n, dbar, omega, M_cap=spec.M_cap, index=s.index
        )
        for s in scenarios
    ]
    alpha_star, removed = estimate_alpha(
        [o.alpha for o in outcomes], spec.p, M_cap=spec.M_cap
    )
    return alpha_star, outcomes, removed
