import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mixmobo.acquisition import (
    AcquisitionKind,
    AcquisitionParams,
    acq_ei,
    acq_pi,
    acq_smc,
    acq_ucb,
    check_portfolio,
    evaluate_array,
    expected_improvement,
    probability_of_improvement,
    stochastic_monte_carlo,
    upper_confidence_bound,
)
from mixmobo.space import MixedSpace, sample_uniform
from mixmobo.surrogate import Dataset, KernelHyperparams, fit_gp


def Phi(z):
    return 0.5 * (1 + math.erf(z / math.sqrt(2)))


def ei_by_quadrature(mu, sigma, f, xi):
    """E[max(Y - f - xi, 0)] for Y ~ N(mu, sigma^2), by the trapezoid rule."""
    y = np.linspace(mu - 12 * sigma, mu + 12 * sigma, 200_001)
    dens = np.exp(-0.5 * ((y - mu) / sigma) ** 2) / (sigma * math.sqrt(2 * math.pi))
    return float(np.trapezoid(np.maximum(y - f - xi, 0.0) * dens, y))


class TestClosedForms:
    def test_ei_no_uncertainty_no_improvement(self):
        assert expected_improvement([[1.0]], [0.0], [1.0], 0.0)[0, 0] == 0.0

    def test_ei_deterministic_improvement(self):
        assert expected_improvement([[3.0]], [0.0], [1.0], 0.0)[0, 0] == 2.0

    def test_ei_at_z_zero(self):
        assert expected_improvement([[0.0]], [1.0], [0.0], 0.0)[0, 0] == pytest.approx(0.39894, abs=1e-5)

    @given(st.floats(-5, 5), st.floats(0.05, 3), st.floats(-5, 5), st.floats(0, 1))
    def test_ei_matches_quadrature(self, mu, sigma, f, xi):
        got = expected_improvement([[mu]], [sigma], [f], xi)[0, 0]
        assert got == pytest.approx(ei_by_quadrature(mu, sigma, f, xi), abs=1e-7)

    def test_pi_values(self):
        assert probability_of_improvement([[1.01]], [1.0], [1.0], 0.01)[0, 0] == pytest.approx(0.5)
        assert probability_of_improvement([[2.0]], [0.0], [1.0], 0.01)[0, 0] == 1.0
        assert probability_of_improvement([[1.0]], [0.0], [1.0], 0.01)[0, 0] == 0.0
        assert probability_of_improvement([[2.01]], [1.0], [1.0], 0.01)[0, 0] == pytest.approx(0.84134, abs=1e-5)

    @given(st.floats(-5, 5), st.floats(0.01, 3), st.floats(-5, 5), st.floats(0, 1))
    def test_pi_matches_erf(self, mu, sigma, f, xi):
        got = probability_of_improvement([[mu]], [sigma], [f], xi)[0, 0]
        assert got == pytest.approx(Phi((mu - f - xi) / sigma), abs=1e-12)

    def test_ucb(self):
        mu = np.array([[1.0, -3.0]])
        assert np.array_equal(upper_confidence_bound(mu, [2.0], 0.0), mu)
        assert upper_confidence_bound([[1.0]], [2.0], 2.0)[0, 0] == 5.0
        assert upper_confidence_bound([[1.0]], [0.5], 1.0)[0, 0] < upper_confidence_bound([[1.0]], [0.7], 1.0)[0, 0]

    def test_smc_zero_sigma(self, rng):
        mu = np.array([[1.0, 2.0]])
        assert np.array_equal(stochastic_monte_carlo(mu, [0.0], rng), mu)

    def test_smc_moments(self, rng):
        v = stochastic_monte_carlo(np.zeros((10_000, 1)), np.ones(10_000), rng)[:, 0]
        assert np.all((v >= 0) & (v <= 2))
        assert v.mean() == pytest.approx(1.0, abs=0.05)

    def test_smc_shares_draw_across_objectives(self, rng):
        v = stochastic_monte_carlo(np.array([[0.0, 5.0]] * 50), np.ones(50), rng)
        assert np.allclose(v[:, 1] - v[:, 0], 5.0)

    def test_smc_seeded(self):
        a = stochastic_monte_carlo([[0.0]], [1.0], np.random.default_rng(3))
        b = stochastic_monte_carlo([[0.0]], [1.0], np.random.default_rng(3))
        assert np.array_equal(a, b)

    @given(st.lists(st.floats(-10, 10), min_size=1, max_size=3), st.floats(0, 5),
           st.integers(0, 2**32 - 1))
    def test_ranges(self, mu, sigma, seed):
        mu = np.array([mu])
        inc = np.zeros(mu.shape[1])
        assert np.all(expected_improvement(mu, [sigma], inc, 0.01) >= 0)
        pi = probability_of_improvement(mu, [sigma], inc, 0.01)
        assert np.all((pi >= 0) & (pi <= 1))
        smc = stochastic_monte_carlo(mu, [sigma], np.random.default_rng(seed))
        assert np.all(smc >= mu) and np.all(smc <= mu + 2 * sigma + 1e-12)


class TestPortfolio:
    def test_parse(self):
        assert AcquisitionKind.parse("ucb") is AcquisitionKind.UCB
        with pytest.raises(ValueError):
            AcquisitionKind.parse("TS")

    def test_must_contain_ucb(self):
        with pytest.raises(ValueError):
            check_portfolio(["EI", "PI"])
        assert check_portfolio(["ucb"]) == (AcquisitionKind.UCB,)

    def test_rejects_duplicates_and_empty(self):
        with pytest.raises(ValueError):
            check_portfolio(["UCB", "ucb"])
        with pytest.raises(ValueError):
            check_portfolio([])

    def test_params_validation(self):
        with pytest.raises(ValueError):
            AcquisitionParams(ucb_kappa=0.0)
        with pytest.raises(ValueError):
            AcquisitionParams(xi=-0.1)


@pytest.fixture
def model_and_data():
    rng = np.random.default_rng(0)
    s = MixedSpace(((0.0, 1.0),), ((0.0, 1.0, 2.0),), (4, 3))
    pts = [sample_uniform(s, rng) for _ in range(12)]
    Y = rng.normal(size=(12, 2))
    hp = KernelHyperparams((0.5, 0.7, 1.0, 1.2), 1.0, 1e-3)
    return s, pts, Y, hp, rng


class TestModelBacked:
    def test_point_wrappers_match_closed_forms(self, model_and_data):
        s, pts, Y, hp, rng = model_and_data
        m = fit_gp(Dataset(pts, Y.T), s, hp)
        p = AcquisitionParams()
        w = sample_uniform(s, rng)
        mu, var = m.predict_latent(s.to_array([w]))
        sig = np.sqrt(var)
        assert np.allclose(acq_ei(m, w, p), expected_improvement(mu, sig, m.incumbents, 0.01)[0])
        assert np.allclose(acq_pi(m, w, p), probability_of_improvement(mu, sig, m.incumbents, 0.01)[0])
        assert np.allclose(acq_ucb(m, w, p), mu[0] + 2 * sig)
        v = acq_smc(m, w, rng)
        assert np.all(v >= mu[0]) and np.all(v <= mu[0] + 2 * sig + 1e-12)

    def test_explicit_incumbents(self, model_and_data):
        s, pts, Y, hp, rng = model_and_data
        m = fit_gp(Dataset(pts, Y.T), s, hp)
        w = sample_uniform(s, rng)
        assert acq_pi(m, w, AcquisitionParams(incumbents=(100.0, 100.0))) == pytest.approx([0, 0])
        with pytest.raises(ValueError):
            acq_ei(m, w, AcquisitionParams(incumbents=(1.0,)))

    @pytest.mark.parametrize("kind", ["EI", "PI", "UCB"])
    def test_training_set_permutation_invariance(self, model_and_data, kind):
        s, pts, Y, hp, rng = model_and_data
        perm = rng.permutation(len(pts))
        m1 = fit_gp(Dataset(pts, Y.T), s, hp)
        m2 = fit_gp(Dataset([pts[i] for i in perm], Y[perm].T), s, hp)
        X = s.to_array([sample_uniform(s, rng) for _ in range(20)])
        k = AcquisitionKind.parse(kind)
        a = evaluate_array(k, m1, X, AcquisitionParams())
        b = evaluate_array(k, m2, X, AcquisitionParams())
        assert np.allclose(a, b, atol=1e-9)

    def test_smc_permutation_invariance_same_stream(self, model_and_data):
        s, pts, Y, hp, rng = model_and_data
        perm = rng.permutation(len(pts))
        m1 = fit_gp(Dataset(pts, Y.T), s, hp)
        m2 = fit_gp(Dataset([pts[i] for i in perm], Y[perm].T), s, hp)
        X = s.to_array([sample_uniform(s, rng) for _ in range(20)])
        a = evaluate_array(AcquisitionKind.SMC, m1, X, AcquisitionParams(), np.random.default_rng(1))
        b = evaluate_array(AcquisitionKind.SMC, m2, X, AcquisitionParams(), np.random.default_rng(1))
        assert np.allclose(a, b, atol=1e-9)

    def test_zero_variance_argmax_reduces_to_mean(self):
        s = MixedSpace(categorical=(6,))
        pts = [s.from_array([i]) for i in range(6)]
        Y = np.array([[0.3, 1.5, -0.2, 0.9, 1.1, 0.0]])
        m = fit_gp(Dataset(pts, Y), s, KernelHyperparams((0.1,), 1.0, 0.0))
        X = s.to_array(pts)
        best = int(np.argmax(Y[0]))
        for kind in ("UCB", "SMC", "EI"):
            vals = evaluate_array(AcquisitionKind.parse(kind), m, X, AcquisitionParams(xi=0.0),
                                  np.random.default_rng(0))[:, 0]
            assert vals[best] == vals.max()
        # with an incumbent below every mean EI is strictly increasing in the mean
        low = AcquisitionParams(xi=0.0, incumbents=(-10.0,))
        vals = evaluate_array(AcquisitionKind.EI, m, X, low)[:, 0]
        assert int(np.argmax(vals)) == best
        assert np.array_equal(np.argsort(vals), np.argsort(Y[0]))

    def test_smc_requires_rng(self, model_and_data):
        s, pts, Y, hp, rng = model_and_data
        m = fit_gp(Dataset(pts, Y.T), s, hp)
        with pytest.raises(ValueError):
            evaluate_array(AcquisitionKind.SMC, m, s.to_array(pts[:1]), AcquisitionParams())
