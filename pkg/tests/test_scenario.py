"""Scenario campaign: sample sizes, per-scenario demands, discard estimator."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import binom

from smvrft.lti import simulate
from smvrft.scenario import (
    Scenario,
    ScenarioSpec,
    ThetaDistribution,
    binomial_tail_log,
    estimate_alpha,
    fit_theta_distribution,
    min_sample_size,
    run_alpha_campaign,
    sample_scenarios,
    scenario_alpha,
    validate_alpha,
)
from smvrft.signals import build_regressors
from smvrft.sm import OmegaBox


class TestBinomialTail:
    def test_matches_scipy_logcdf(self):
        for N, eps, p in [(10, 0.3, 2), (100, 0.05, 0), (1265, 0.05, 20), (500, 0.1, 7)]:
            want = binom.logcdf(p, N, eps)
            assert binomial_tail_log(N, eps, p) == pytest.approx(want, rel=1e-10)

    def test_p_zero_closed_form(self):
        # P(Bin(N, eps) = 0) = (1 - eps)^N
        assert binomial_tail_log(50, 0.2, 0) == pytest.approx(50 * np.log(0.8), rel=1e-12)


class TestMinSampleSize:
    def test_benchmark_certificate_size(self):
        assert min_sample_size(0.05, 1e-10, 20) == 1265

    def test_desk_certificate_size(self):
        assert min_sample_size(0.1, 1e-6, 5) == 244

    def test_p_zero_closed_form(self):
        # N = ceil(log beta / log(1 - eps)) when nothing is discarded
        assert min_sample_size(0.05, 0.01, 0) == int(np.ceil(np.log(0.01) / np.log(0.95)))

    @settings(max_examples=30, deadline=None)
    @given(
        eps=st.floats(min_value=0.02, max_value=0.3),
        beta=st.floats(min_value=1e-8, max_value=0.1),
        p=st.integers(min_value=0, max_value=10),
    )
    def test_boundary_property(self, eps, beta, p):
        N = min_sample_size(eps, beta, p)
        assert binom.cdf(p, N, eps) <= beta
        if N > p + 1:
            assert binom.cdf(p, N - 1, eps) > beta

    def test_invalid_arguments(self):
        for args in [(0.0, 0.1, 1), (0.5, 1.0, 1), (0.5, 0.1, -1)]:
            with pytest.raises(ValueError):
                min_sample_size(*args)

    def test_spec_passthrough_and_validation(self):
        assert ScenarioSpec(0.05, 1e-10, 20).sample_size() == 1265
        with pytest.raises(ValueError):
            ScenarioSpec(1.5, 0.1, 0)
        with pytest.raises(ValueError):
            ScenarioSpec(0.1, 0.1, -2)


class TestFitThetaDistribution:
    def test_noise_free_fit_recovers_theta(self):
        theta = np.array([0.6, 0.8])
        rng = np.random.default_rng(1)
        u = rng.choice([-1.0, 1.0], size=200)
        y = simulate(theta, u)
        Phi, ynext = build_regressors(y, u, 1)
        dist = fit_theta_distribution(Phi, ynext)
        assert np.allclose(dist.mean, theta, atol=1e-8)
        assert np.linalg.norm(dist.cov) <= 1e-12

    def test_covariance_formula(self):
        rng = np.random.default_rng(2)
        Phi = rng.normal(size=(60, 3))
        y = Phi @ [1.0, -0.5, 0.2] + rng.normal(scale=0.3, size=60)
        dist = fit_theta_distribution(Phi, y, stability_filter=False)
        theta_hat, *_ = np.linalg.lstsq(Phi, y, rcond=None)
        resid = y - Phi @ theta_hat
        s2 = resid @ resid / (60 - 3)
        assert np.allclose(dist.mean, theta_hat, atol=1e-12)
        assert np.allclose(dist.cov, s2 * np.linalg.inv(Phi.T @ Phi), atol=1e-12)

    def test_underdetermined_rejected(self):
        with pytest.raises(ValueError):
            fit_theta_distribution(np.ones((2, 2)), np.zeros(2))

    def test_singular_gram_rejected(self):
        Phi = np.array([[1.0, 0.0], [2.0, 0.0], [3.0, 0.0]])
        with pytest.raises(ValueError):
            fit_theta_distribution(Phi, np.array([1.0, 2.0, 3.05]))


class TestSampleScenarios:
    def _dist(self, mean=(0.5, 0.8), scale=0.05, stability_filter=True):
        mean = np.asarray(mean, dtype=float)
        return ThetaDistribution(
            mean=mean, cov=scale**2 * np.eye(mean.size), stability_filter=stability_filter
        )

    def test_order_independence(self):
        dist = self._dist()
        batch = sample_scenarios(dist, 5, 0.1, 30, base_seed=900)
        solo = sample_scenarios(dist, 1, 0.1, 30, base_seed=903)[0]
        assert np.array_equal(batch[3].theta, solo.theta)
        assert np.array_equal(batch[3].d, solo.d)
        assert batch[3].seed == 903

    def test_noise_bounds_and_lengths(self):
        draws = sample_scenarios(self._dist(), 4, 0.2, 25, base_seed=5)
        for s in draws:
            assert s.d.shape == (25,) and np.max(np.abs(s.d)) <= 0.2

    def test_stability_filter_keeps_stable_draws(self):
        dist = self._dist(mean=(0.95, 1.0), scale=0.1)
        for s in sample_scenarios(dist, 40, 0.1, 10, base_seed=77):
            assert abs(s.theta[0]) < 1.0

    def test_concentrated_unstable_distribution_raises(self):
        dist = self._dist(mean=(2.0, 1.0), scale=1e-6)
        with pytest.raises(RuntimeError, match="stability filter"):
            sample_scenarios(dist, 1, 0.1, 10, base_seed=0)

    def test_filter_off_returns_unstable(self):
        dist = self._dist(mean=(2.0, 1.0), scale=1e-6, stability_filter=False)
        draws = sample_scenarios(dist, 2, 0.1, 10, base_seed=0)
        assert all(abs(s.theta[0]) > 1.0 for s in draws)


class TestScenarioAlpha:
    OMEGA = OmegaBox.symmetric(2)

    def test_noise_free_replay_is_consistent(self):
        rng = np.random.default_rng(8)
        u = rng.choice([-1.0, 1.0], size=80)
        out = scenario_alpha(np.array([0.6, 0.8]), np.zeros(80), u, 1, 0.1, self.OMEGA)
        assert out.case == "consistent" and out.alpha == 1.0
        assert out.lam_hat_max <= 1e-10 and out.lam_lb <= 1e-10

    def test_bounded_measurement_noise_still_demands_inflation(self):
        # output noise colors the regressor residual beyond dbar, which is
        # the whole reason the feasible-set bound gets inflated
        rng = np.random.default_rng(9)
        u = rng.choice([-1.0, 1.0], size=120)
        theta = np.array([0.6, 0.8])
        d = rng.uniform(-0.1, 0.1, size=120)
        out = scenario_alpha(theta, d, u, 1, 0.1, self.OMEGA)
        assert out.case == "ratio"
        assert out.lam_lb > 0.0 and out.lam_hat_max > 0.0
        assert out.alpha == pytest.approx(
            min(max(out.lam_hat_max / out.lam_lb, 1.0), 1e6), rel=1e-12
        )
        assert out.alpha > 1.0

    def test_absorbing_noise_hits_cap(self):
        # constant input and constant offset: another parameter explains the
        # data exactly, so the floor is zero while the true demand is not
        u = np.ones(60)
        theta = np.array([0.5, 1.0])
        d = np.full(60, 0.3)
        out = scenario_alpha(theta, d, u, 1, 0.1, self.OMEGA, M_cap=1e6)
        assert out.case == "capped" and out.alpha == 1e6
        assert out.lam_lb <= 1e-10 and out.lam_hat_max > 0.0

    def test_divergent_replay_rejected(self):
        u = np.ones(600)
        with pytest.raises(RuntimeError, match="diverged"):
            scenario_alpha(np.array([1.5, 1.0]), np.zeros(600), u, 1, 0.1, self.OMEGA)


class TestEstimateAlpha:
    def test_discard_two_with_tie(self):
        alpha_star, removed = estimate_alpha([1.0, 2.0, 2.0, 3.0], p=2)
        assert alpha_star == 2.0 and removed == [2, 3]

    def test_no_discard_is_max(self):
        alpha_star, removed = estimate_alpha([1.3, 0.9, 1.1], p=0)
        assert alpha_star == 1.3 and removed == []

    def test_ties_keep_lower_indices(self):
        alpha_star, removed = estimate_alpha([5.0, 5.0, 5.0], p=1)
        assert alpha_star == 5.0 and removed == [2]

    def test_discarding_everything_rejected(self):
        with pytest.raises(ValueError):
            estimate_alpha([1.0, 2.0], p=2)

    def test_capped_estimate_rejected(self):
        with pytest.raises(RuntimeError, match="cap"):
            estimate_alpha([1e6, 1e6, 1.0], p=1, M_cap=1e6)
        alpha_star, _ = estimate_alpha([1e6, 1e6, 1.0], p=2, M_cap=1e6)
        assert alpha_star == 1.0


class TestValidateAlpha:
    def test_strict_exceedance_fraction(self):
        assert validate_alpha([0.5, 1.5, 2.5], 1.5) == pytest.approx(1.0 / 3.0)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            validate_alpha([], 1.0)


class TestRunAlphaCampaign:
    def _setup(self):
        theta = np.array([0.6, 0.8])
        rng = np.random.default_rng(30)
        u = rng.choice([-1.0, 1.0], size=60)
        y = simulate(theta, u, rng.uniform(-0.05, 0.05, size=60))
        Phi, ynext = build_regressors(y, u, 1)
        dist = fit_theta_distribution(Phi, ynext)
        return u, dist

    def test_small_campaign(self):
        u, dist = self._setup()
        spec = ScenarioSpec(0.2, 0.01, 2)
        alpha_star, outcomes, removed = run_alpha_campaign(
            u, 1, 0.05, OmegaBox.symmetric(2), dist, spec, base_seed=400, count=40
        )
        assert len(outcomes) == 40 and len(removed) == 2
        assert 1.0 <= alpha_star < spec.M_cap
        # the campaign estimator is the discard estimator on its own outcomes
        ref, _ = estimate_alpha([o.alpha for o in outcomes], 2)
        assert alpha_star == ref
        assert all(o.case in ("ratio", "consistent", "capped") for o in outcomes)

    def test_campaign_deterministic(self):
        u, dist = self._setup()
        spec = ScenarioSpec(0.2, 0.01, 2)
        a1, _, _ = run_alpha_campaign(
            u, 1, 0.05, OmegaBox.symmetric(2), dist, spec, base_seed=400, count=30
        )
        a2, _, _ = run_alpha_campaign(
            u, 1, 0.05, OmegaBox.symmetric(2), dist, spec, base_seed=400, count=30
        )
        assert a1 == a2
