import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pfscore import (
    Ar1Params, PolioParams, ThetaVector, ar1_model, load_polio_csv, polio_model,
    simulate,
)
from pfscore.models.polio import seasonal_predictor

from conftest import assert_rel_close, fd_gradient, fd_jacobian

TOL = 1e-5


def _random_ar1_points(n, seed=0):
    rng = np.random.default_rng(seed)
    for _ in range(n):
        theta = np.array([
            rng.uniform(-0.9, 0.9),
            rng.uniform(0.3, 2.0),
            rng.uniform(0.3, 2.0),
        ])
        x = rng.normal(scale=2.0)
        xp = rng.normal(scale=2.0)
        y = rng.normal(scale=2.0)
        yield theta, x, xp, y


def _random_polio_points(n, seed=1):
    rng = np.random.default_rng(seed)
    for _ in range(n):
        theta = np.concatenate([
            rng.normal(scale=0.5, size=6),
            [rng.uniform(-0.9, 0.9), rng.uniform(0.1, 1.5)],
        ])
        x = rng.normal(scale=0.8)
        xp = rng.normal(scale=0.8)
        y = float(rng.integers(0, 8))
        t = int(rng.integers(1, 169))
        yield theta, x, xp, y, t


class TestAr1Derivatives:
    def test_gradients_match_finite_differences(self):
        model = ar1_model(Ar1Params(0.8, 0.5, 1.0))
        for theta, x, xp, y in _random_ar1_points(100):
            assert_rel_close(
                model.grad_log_init(x, theta),
                fd_gradient(lambda th: model.init_logpdf(x, th), theta),
                TOL, "grad init",
            )
            assert_rel_close(
                model.grad_log_trans(x, xp, theta),
                fd_gradient(lambda th: model.trans_logpdf(x, xp, th), theta),
                TOL, "grad trans",
            )
            assert_rel_close(
                model.grad_log_obs(y, x, 1, theta),
                fd_gradient(lambda th: model.obs_logpdf(y, x, 1, th), theta),
                TOL, "grad obs",
            )

    def test_hessians_match_finite_differences_of_gradients(self):
        model = ar1_model(Ar1Params(0.8, 0.5, 1.0))
        for theta, x, xp, y in _random_ar1_points(100, seed=2):
            assert_rel_close(
                model.hess_log_init(x, theta),
                fd_jacobian(lambda th: model.grad_log_init(x, th), theta),
                TOL, "hess init",
            )
            assert_rel_close(
                model.hess_log_trans(x, xp, theta),
                fd_jacobian(lambda th: model.grad_log_trans(x, xp, th), theta),
                TOL, "hess trans",
            )
            assert_rel_close(
                model.hess_log_obs(y, x, 1, theta),
                fd_jacobian(lambda th: model.grad_log_obs(y, x, 1, th), theta),
                TOL, "hess obs",
            )

    def test_hessians_symmetric(self):
        model = ar1_model(Ar1Params(0.8, 0.5, 1.0))
        for theta, x, xp, y in _random_ar1_points(20, seed=3):
            for h in (
                model.hess_log_init(x, theta),
                model.hess_log_trans(x, xp, theta),
                model.hess_log_obs(y, x, 1, theta),
            ):
                np.testing.assert_array_equal(h, np.swapaxes(h, -1, -2))

    def test_init_variance_closed_form(self):
        theta = np.array([0.8, 0.5, 1.0])
        model = ar1_model(Ar1Params(*theta))
        # log N(0 | 0, v) = -0.5 log(2 pi v) pins the implied prior variance
        v = 0.25 / 0.36
        assert model.init_logpdf(0.0, theta) == pytest.approx(
            -0.5 * np.log(2 * np.pi * v), abs=1e-12
        )
        assert v == pytest.approx(0.69444, abs=5e-6)

    def test_grad_phi_zero_at_conditional_mean(self):
        theta = np.array([0.8, 0.5, 1.0])
        model = ar1_model(Ar1Params(*theta))
        xp = 1.3
        g = model.grad_log_trans(theta[0] * xp, xp, theta)
        assert g[0] == 0.0

    def test_grad_obs_tau_vs_finite_difference(self):
        theta = np.array([0.5, 0.7, 1.0])
        model = ar1_model(Ar1Params(*theta))
        g = model.grad_log_obs(1.3, 0.7, 1, theta)
        fd = fd_gradient(lambda th: model.obs_logpdf(1.3, 0.7, 1, th), theta)
        assert_rel_close(g, fd, 1e-6, "tau gradient")

    def test_parameter_validation(self):
        with pytest.raises(ValueError):
            Ar1Params(1.0, 0.5, 1.0)
        with pytest.raises(ValueError):
            Ar1Params(0.5, 0.0, 1.0)
        with pytest.raises(ValueError):
            Ar1Params(0.5, 0.5, -1.0)

    def test_optimal_proposal_identity(self):
        # g(y|x) f(x|x') must equal lookahead(x', y) q(x|x', y) pointwise
        model = ar1_model(Ar1Params(0.8, 0.5, 1.0))
        prop = model.proposal
        rng = np.random.default_rng(7)
        for theta, x, xp, y in _random_ar1_points(50, seed=4):
            lhs = model.obs_logpdf(y, x, 2, theta) + model.trans_logpdf(x, xp, theta)
            rhs = prop.log_lookahead(xp, y, 2, theta) + prop.logpdf(x, xp, y, 2, theta)
            assert lhs == pytest.approx(rhs, abs=1e-10)


class TestPolioModel:
    theta0 = np.array([0.4, -3.0, 0.3, -0.3, 0.65, -0.2, 0.4, 0.4])

    def test_zero_count_loglik_is_minus_rate(self):
        model = polio_model(PolioParams(tuple(self.theta0[:6]), 0.4, 0.4))
        x, t = 0.3, 5
        rate = np.exp(x + seasonal_predictor(t, self.theta0))
        assert model.obs_logpdf(0.0, x, t, self.theta0) == pytest.approx(-rate, rel=1e-12)

    def test_seasonal_gradient_vanishes_at_quarter_period(self):
        model = polio_model(PolioParams(tuple(self.theta0[:6]), 0.4, 0.4))
        g = model.grad_log_obs(2.0, 0.1, 3, self.theta0)
        assert g[2] == pytest.approx(0.0, abs=1e-12)  # cos(pi/2) regressor

    def test_full_gradient_matches_finite_differences(self):
        model = polio_model(PolioParams(tuple(self.theta0[:6]), 0.4, 0.4))
        for theta, x, xp, y, t in _random_polio_points(100):
            assert_rel_close(
                model.grad_log_obs(y, x, t, theta),
                fd_gradient(lambda th: model.obs_logpdf(y, x, t, th), theta),
                TOL, "polio grad obs",
            )
            assert_rel_close(
                model.grad_log_trans(x, xp, theta),
                fd_gradient(lambda th: model.trans_logpdf(x, xp, th), theta),
                TOL, "polio grad trans",
            )
            assert_rel_close(
                model.grad_log_init(x, theta),
                fd_gradient(lambda th: model.init_logpdf(x, th), theta),
                TOL, "polio grad init",
            )

    def test_gradient_at_reference_start_point(self):
        model = polio_model(PolioParams(tuple(self.theta0[:6]), 0.4, 0.4))
        rng = np.random.default_rng(11)
        for _ in range(20):
            x, xp = rng.normal(size=2)
            y = float(rng.integers(0, 6))
            t = int(rng.integers(1, 169))
            total = lambda th, x=x, xp=xp, y=y, t=t: (
                model.obs_logpdf(y, x, t, th) + model.trans_logpdf(x, xp, th)
            )
            grad = model.grad_log_obs(y, x, t, self.theta0) + model.grad_log_trans(
                x, xp, self.theta0
            )
            assert_rel_close(grad, fd_gradient(total, self.theta0), TOL, "theta0 grad")

    def test_hessians_match_finite_differences(self):
        model = polio_model(PolioParams(tuple(self.theta0[:6]), 0.4, 0.4))
        for theta, x, xp, y, t in _random_polio_points(100, seed=5):
            assert_rel_close(
                model.hess_log_obs(y, x, t, theta),
                fd_jacobian(lambda th: model.grad_log_obs(y, x, t, th), theta),
                TOL, "polio hess obs",
            )
            assert_rel_close(
                model.hess_log_trans(x, xp, theta),
                fd_jacobian(lambda th: model.grad_log_trans(x, xp, th), theta),
                TOL, "polio hess trans",
            )
            assert_rel_close(
                model.hess_log_init(x, theta),
                fd_jacobian(lambda th: model.grad_log_init(x, th), theta),
                TOL, "polio hess init",
            )

    def test_rejects_negative_counts_and_bad_params(self):
        model = polio_model(PolioParams(tuple(self.theta0[:6]), 0.4, 0.4))
        with pytest.raises(ValueError):
            model.obs_logpdf(-1.0, 0.0, 1, self.theta0)
        with pytest.raises(ValueError):
            PolioParams(tuple(self.theta0[:6]), 1.1, 0.4)
        with pytest.raises(ValueError):
            PolioParams(tuple(self.theta0[:6]), 0.4, -0.1)

    def test_dataset_loader(self):
        y = load_polio_csv()
        assert y.shape == (168,)
        assert y.min() >= 0
        assert np.all(y == y.astype(int))
        assert y[34] == 14  # November 1972 outbreak


class TestSimulate:
    def test_single_step(self):
        theta = np.array([0.8, 0.5, 1.0])
        model = ar1_model(Ar1Params(*theta))
        x, y = simulate(model, theta, 1, np.random.default_rng(0))
        assert x.shape == (1,) and y.shape == (1,)

    def test_degenerate_dynamics_pin_state_at_zero(self):
        theta = np.array([0.8, 1e-8, 1.0])
        model = ar1_model(Ar1Params(*theta))
        x, _ = simulate(model, theta, 100, np.random.default_rng(0))
        assert np.max(np.abs(x)) < 1e-6

    def test_stationary_variance(self):
        theta = np.array([0.8, 0.5, 1.0])
        model = ar1_model(Ar1Params(*theta))
        x, _ = simulate(model, theta, 10_000, np.random.default_rng(42))
        v = 0.25 / 0.36
        assert abs(x.var() - v) / v < 0.05

    def test_bit_reproducible(self):
        theta = np.array([0.8, 0.5, 1.0])
        model = ar1_model(Ar1Params(*theta))
        x1, y1 = simulate(model, theta, 200, np.random.default_rng(123))
        x2, y2 = simulate(model, theta, 200, np.random.default_rng(123))
        np.testing.assert_array_equal(x1, x2)
        np.testing.assert_array_equal(y1, y2)

    def test_polio_counts_are_integers(self):
        theta = np.array([0.4, -3.0, 0.3, -0.3, 0.65, -0.2, 0.4, 0.4])
        model = polio_model(PolioParams(tuple(theta[:6]), 0.4, 0.4))
        _, y = simulate(model, theta, 60, np.random.default_rng(5))
        assert np.all(y >= 0) and np.all(y == y.astype(int))


class TestThetaVector:
    @given(
        phi=st.floats(-0.99, 0.99),
        sigma=st.floats(0.01, 50.0),
        tau=st.floats(0.01, 50.0),
    )
    @settings(max_examples=200, deadline=None)
    def test_transform_roundtrip(self, phi, sigma, tau):
        tv = ThetaVector(
            np.array([phi, sigma, tau]),
            ("phi", "sigma", "tau"),
            ("artanh", "log", "log"),
        )
        back = tv.from_unconstrained(tv.to_unconstrained())
        np.testing.assert_allclose(back.values, tv.values, rtol=1e-12, atol=1e-12)

    def test_chain_rule_matches_finite_differences(self):
        tv = ThetaVector(
            np.array([0.5, 0.7, 1.2]), ("phi", "sigma", "tau"),
            ("artanh", "log", "log"),
        )
        f = lambda th: np.sin(th[0]) + th[1] ** 2 + np.log(th[2])
        grad_c = fd_gradient(f, tv.values)
        grad_u = tv.grad_to_unconstrained(grad_c)
        fd_u = fd_gradient(
            lambda u: f(tv.from_unconstrained(u).values), tv.to_unconstrained()
        )
        assert_rel_close(grad_u, fd_u, 1e-6, "chain rule")

    def test_validation(self):
        with pytest.raises(ValueError):
            ThetaVector(np.array([]), ())
        with pytest.raises(ValueError):
            ThetaVector(np.array([np.inf]), ("a",))
        with pytest.raises(ValueError):
            ThetaVector(np.array([0.5]), ("a",), ("bogus",))
        with pytest.raises(ValueError):
            ThetaVector(np.array([-0.5]), ("a",), ("log",))
