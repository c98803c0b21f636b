"""Excitation, experiment records, regressors, spectra, virtual signals."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from smvrft.lti import TransferFunction, filter_signal, simulate
from smvrft.signals import (
    Dataset,
    SpectralFactor,
    build_regressors,
    collect_dataset,
    estimate_ar_spectrum,
    generate_prbs,
    read_dataset,
    state_lag_matrix,
    virtual_error,
    virtual_reference,
    write_dataset,
)


class TestPrbs:
    def test_two_levels_and_length(self):
        u = generate_prbs(400, low=-10.0, high=10.0, seed=17)
        assert u.shape == (400,)
        assert set(np.unique(u)) == {-10.0, 10.0}

    def test_deterministic_per_seed(self):
        a = generate_prbs(200, seed=5)
        b = generate_prbs(200, seed=5)
        c = generate_prbs(200, seed=6)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_clock_holds_levels(self):
        u = generate_prbs(60, clock=5, seed=3)
        blocks = u.reshape(-1, 5)
        assert np.all(blocks == blocks[:, :1])

    def test_roughly_balanced(self):
        for seed in (1, 17, 12345):
            u = generate_prbs(4000, low=-1.0, high=1.0, seed=seed)
            assert abs(np.mean(u)) < 0.1

    def test_maximal_period(self):
        # a full cycle of a 9-bit register visits every nonzero state once,
        # so the bit stream repeats exactly every 511 samples
        u = generate_prbs(1022, seed=33, order=9)
        assert np.array_equal(u[:511], u[511:])
        assert not any(np.array_equal(u[:p], u[p : 2 * p]) for p in (255, 256))

    def test_zero_seed_valid_register(self):
        # seed maps onto a nonzero register state, so the output still toggles
        u = generate_prbs(100, seed=0)
        assert np.unique(u).size == 2

    def test_invalid_arguments(self):
        with pytest.raises(ValueError):
            generate_prbs(10, order=6)
        with pytest.raises(ValueError):
            generate_prbs(10, clock=0)


class TestCollectDataset:
    def test_shapes_and_noise_bound(self, ex1_theta):
        ds = collect_dataset(ex1_theta, 300, 0.1, 0.125, input_seed=9)
        assert ds.u.shape == ds.y1.shape == ds.y2.shape == (303,)
        assert ds.N_d == 300 and ds.k_start == -2
        z = simulate(ex1_theta, ds.u)
        assert np.max(np.abs(ds.y1 - z)) <= 0.1
        assert np.max(np.abs(ds.y2 - z)) <= 0.1
        assert not np.array_equal(ds.y1, ds.y2)

    def test_supplied_input_used_verbatim(self, ex1_theta):
        u = np.linspace(-1.0, 1.0, 103)
        ds = collect_dataset(ex1_theta, 100, 0.05, 0.125, u=u)
        assert np.array_equal(ds.u, u)
        with pytest.raises(ValueError):
            collect_dataset(ex1_theta, 100, 0.05, 0.125, u=u[:-1])

    def test_dataset_validation(self):
        with pytest.raises(ValueError):
            Dataset(np.zeros(5), np.zeros(4), np.zeros(5), n=2, Ts=0.1, dbar=0.1)
        with pytest.raises(ValueError):
            Dataset(np.zeros(2), np.zeros(2), np.zeros(2), n=2, Ts=0.1, dbar=0.1)


class TestRegressors:
    def test_hand_built_case(self):
        # n = 2, signals over k = -1 .. 3 (N_d = 3)
        y = np.array([0.0, 1.0, 2.0, 3.0, 4.0])
        u = np.array([5.0, 6.0, 7.0, 8.0, 9.0])
        Phi, ynext = build_regressors(y, u, 2)
        assert Phi.shape == (3, 4)
        assert np.array_equal(ynext, [2.0, 3.0, 4.0])
        # row t: [y(t), y(t-1), u(t), u(t-1)] at t = 0, 1, 2
        assert np.array_equal(Phi[0], [1.0, 0.0, 6.0, 5.0])
        assert np.array_equal(Phi[1], [2.0, 1.0, 7.0, 6.0])
        assert np.array_equal(Phi[2], [3.0, 2.0, 8.0, 7.0])

    def test_noise_free_regression_recovers_theta(self, ex1_theta):
        ds = collect_dataset(ex1_theta, 400, 1e-9, 0.125, input_seed=4)
        Phi, ynext = build_regressors(ds.y1, ds.u, 3)
        theta_hat, *_ = np.linalg.lstsq(Phi, ynext, rcond=None)
        assert np.allclose(theta_hat, ex1_theta, atol=1e-6)

    def test_state_lag_matrix_alignment(self):
        # x(k) = [y(k), y(k-1), u(k-1)] for n = 2; rows k = -1 .. N_d - 1
        y = np.array([1.0, 2.0, 3.0, 4.0])
        u = np.array([5.0, 6.0, 7.0, 8.0])
        X = state_lag_matrix(y, u, 2)
        assert X.shape == (3, 3)
        assert np.array_equal(X[0], [1.0, 0.0, 0.0])
        assert np.array_equal(X[1], [2.0, 1.0, 5.0])
        assert np.array_equal(X[2], [3.0, 2.0, 6.0])


class TestArSpectrum:
    def test_white_noise_near_flat(self):
        x = np.random.default_rng(0).normal(size=20000)
        Z = estimate_ar_spectrum(x, 4)
        mag = np.abs(Z.to_tf().evaluate(np.linspace(0, np.pi, 64)))
        assert np.max(mag) / np.min(mag) < 1.25

    def test_ar1_coefficient_recovered(self):
        rng = np.random.default_rng(1)
        e = rng.normal(size=30000)
        x = np.zeros(30000)
        for k in range(1, 30000):
            x[k] = 0.8 * x[k - 1] + e[k]
        Z = estimate_ar_spectrum(x, 1)
        assert Z.coeffs[0] == pytest.approx(-0.8, abs=0.02)
        assert Z.gain == pytest.approx(1.0, abs=0.05)

    def test_variance_normalization(self):
        # (1/2pi) int |Z|^2 dw equals the biased sample variance
        x = np.random.default_rng(2).normal(size=5000)
        x = x - np.mean(x)
        for order in (2, 6):
            Z = estimate_ar_spectrum(x, order).to_tf()
            w = np.linspace(-np.pi, np.pi, 20001)
            integral = np.trapezoid(np.abs(Z.evaluate(w)) ** 2, w) / (2 * np.pi)
            assert integral == pytest.approx(np.var(x), rel=0.02)

    def test_stable_factor(self):
        x = np.random.default_rng(3).normal(size=2000)
        assert estimate_ar_spectrum(x, 8).to_tf().is_stable()

    def test_degenerate_signals_flagged(self):
        with pytest.raises(ValueError):
            estimate_ar_spectrum(np.ones(100), 2)  # constant: no variance
        with pytest.raises(ValueError):
            estimate_ar_spectrum(np.ones(5), 8)  # too short for the order


class TestVirtualSignals:
    @settings(max_examples=25, deadline=None)
    @given(
        a1=st.floats(-0.9, -0.1),
        seed=st.integers(0, 2**16),
    )
    def test_round_trip_recovers_reference(self, a1, seed):
        M = TransferFunction.first_order(a1, 1.0 + a1)
        r = np.random.default_rng(seed).uniform(-2.0, 2.0, 64)
        y = filter_signal(M, r)
        r_rec = virtual_reference(M, y)
        assert np.allclose(r_rec, r[:-1], atol=1e-8)

    def test_virtual_error_definition(self):
        M = TransferFunction.first_order(-0.855, 0.145)
        y = np.random.default_rng(5).uniform(-1.0, 1.0, 40)
        r = virtual_reference(M, y)
        e = virtual_error(M, y)
        assert np.allclose(e, r - y[: r.size])


class TestPersistence:
    def test_round_trip_exact(self, ex1_theta, tmp_path):
        ds = collect_dataset(ex1_theta, 50, 0.1, 0.125, input_seed=2)
        path = write_dataset(ds, tmp_path / "dataset.csv")
        back = read_dataset(path)
        assert np.array_equal(back.u, ds.u)
        assert np.array_equal(back.y1, ds.y1)
        assert np.array_equal(back.y2, ds.y2)
        assert back.n == ds.n and back.Ts == ds.Ts and back.dbar == ds.dbar
        assert (tmp_path / "dataset.meta.json").exists()

    def test_spectral_factor_to_tf(self):
        Z = SpectralFactor(gain=2.0, coeffs=np.array([-0.5]))
        tf = Z.to_tf()
        assert np.allclose(tf.num, [2.0])
        assert np.allclose(tf.den, [1.0, -0.5])
