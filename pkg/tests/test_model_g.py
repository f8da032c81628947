import numpy as np
import pytest

from tempgp.data import TimeSeriesDataset
from tempgp.kernels import KernelSpec, gram_matrix
from tempgp.model import (
    FHyperparams,
    FitConfig,
    GHyperparams,
    GSession,
    TempGPModel,
    fit_predict_g,
    predict,
    predict_f,
    train_tempgp,
)

SQRT3 = np.sqrt(3.0)


def dataset_from(y, X, t):
    X = np.atleast_2d(X)
    return TimeSeriesDataset(
        y=y,
        X=X,
        t=t,
        covariate_names=tuple(f"x{i}" for i in range(X.shape[1])),
        raw_columns=X.copy(),
        raw_names=tuple(f"x{i}" for i in range(X.shape[1])),
    )


def model_with_residuals(residuals, t, T=5, config=None):
    """Build a trained-model shell around prescribed residuals."""
    n = len(residuals)
    rng = np.random.default_rng(0)
    X = rng.standard_normal((n, 1))
    ds = dataset_from(np.asarray(residuals, dtype=float), X, t)
    params = FHyperparams(beta=0.0, sigma_f_sq=1.0, theta=np.array([1.0]), sigma_u_sq=0.1)
    return TempGPModel(
        f_params=params,
        kernel=KernelSpec("matern32", 1.0, np.array([1.0])),
        time_kernel_family="matern32",
        train=ds,
        T=T,
        alpha=np.zeros(n),
        residuals=np.asarray(residuals, dtype=float),
        config=config or FitConfig(),
    )


class TestNeighborhood:
    def test_zero_beyond_training_horizon(self):
        model = model_with_residuals(np.random.default_rng(1).standard_normal(50), np.arange(50), T=5)
        t_max = int(model.train.t[-1])
        for t_star in (t_max + 6, t_max + 100, -200):
            assert fit_predict_g(model, t_star) == 0.0

    def test_zero_in_interior_gap(self):
        t = np.concatenate([np.arange(20), np.arange(100, 120)])
        model = model_with_residuals(np.random.default_rng(2).standard_normal(40), t, T=4)
        assert fit_predict_g(model, 60.0) == 0.0  # nearest rows are 40 slots away
        assert fit_predict_g(model, 19.0) != 0.0

    def test_zero_residuals_give_zero(self):
        model = model_with_residuals(np.zeros(30), np.arange(30), T=3)
        assert fit_predict_g(model, 10.0) == 0.0

    def test_locality_bit_identical_under_outside_perturbation(self):
        rng = np.random.default_rng(3)
        e = rng.standard_normal(60)
        t = np.arange(60)
        t_star, T = 30.0, 4
        base = model_with_residuals(e, t, T=T)
        value = fit_predict_g(base, t_star)
        e2 = e.copy()
        outside = np.abs(t - t_star) > T
        e2[outside] += rng.standard_normal(outside.sum())
        bumped = model_with_residuals(e2, t, T=T)
        assert fit_predict_g(bumped, t_star) == value  # bit-identical
        # and perturbing inside rows does change it
        e3 = e.copy()
        e3[30] += 1.0
        assert fit_predict_g(model_with_residuals(e3, t, T=T), t_star) != value


class TestClosedForm:
    def test_two_point_hand_arithmetic(self):
        # fixed hyperparameters, MLE skipped: g_hat = s @ (Q + se2 I)^{-1} e
        e = np.array([0.8, -0.2])
        t = np.array([10, 12])
        model = model_with_residuals(e, t, T=3)
        g = GHyperparams(sigma_g_sq=1.5, phi=4.0, sigma_eps_sq=0.5)

        def q(dt):
            r = abs(dt) / 4.0
            return 1.5 * (1 + SQRT3 * r) * np.exp(-SQRT3 * r)

        Q = np.array([[q(0) + 0.5, q(2)], [q(2), q(0) + 0.5]])
        s = np.array([q(1), q(1)])  # t_star = 11
        expected = s @ np.linalg.solve(Q, e)
        assert fit_predict_g(model, 11.0, g_params=g) == pytest.approx(expected, rel=1e-12)

    def test_linear_in_residuals(self):
        t = np.arange(20)
        g = GHyperparams(sigma_g_sq=1.0, phi=3.0, sigma_eps_sq=0.3)
        e = np.random.default_rng(4).standard_normal(20)
        m1 = model_with_residuals(e, t, T=5)
        m2 = model_with_residuals(2.0 * e, t, T=5)
        v1 = fit_predict_g(m1, 9.5, g_params=g)
        v2 = fit_predict_g(m2, 9.5, g_params=g)
        assert v2 == pytest.approx(2.0 * v1, rel=1e-12)


class TestLocalMle:
    def test_tracks_strong_local_residual(self):
        # residuals form a smooth bump; the local estimate should pull
        # the prediction toward the bump's sign and magnitude
        t = np.arange(40)
        e = 2.0 * np.exp(-0.5 * ((t - 20) / 5.0) ** 2)
        model = model_with_residuals(e, t, T=6)
        val = fit_predict_g(model, 20.0)
        assert 0.5 < val < 3.0

    def test_session_cache_reuses_hyperparameters(self):
        rng = np.random.default_rng(5)
        model = model_with_residuals(rng.standard_normal(200), np.arange(200), T=10)
        session = GSession(model)
        for t_star in np.arange(50.0, 60.0):
            fit_predict_g(model, t_star, session=session)
        assert session.mle_runs < 10  # neighboring times share estimates

    def test_exact_mode_refits_every_time(self):
        rng = np.random.default_rng(6)
        cfg = FitConfig(g_exact=True)
        model = model_with_residuals(rng.standard_normal(100), np.arange(100), T=8, config=cfg)
        session = GSession(model)
        times = np.arange(30.0, 36.0)
        for t_star in times:
            fit_predict_g(model, t_star, session=session)
        assert session.mle_runs == len(times)

    def test_tiny_neighborhood_skips_mle(self):
        model = model_with_residuals(np.array([1.0, -0.5]), np.array([0, 40]), T=2)
        session = GSession(model)
        assert fit_predict_g(model, 1.0, session=session) == 0.0  # |J*| = 1, nothing cached
        assert session.mle_runs == 0


class TestCombinedPrediction:
    def _trained(self, seed=7, n=300):
        rng = np.random.default_rng(seed)
        X = rng.standard_normal((n, 1))
        K = gram_matrix(KernelSpec("matern32", 1.0, np.array([0.6])), X)
        f = np.linalg.cholesky(K + 1e-10 * np.eye(n)) @ rng.standard_normal(n)
        # slow sinusoidal residual so the local estimate has signal
        t = np.arange(n)
        g = 1.5 * np.sin(2 * np.pi * t / 40.0)
        y = 1.0 + f + g + 0.05 * rng.standard_normal(n)
        ds = dataset_from(y, X, t)
        return train_tempgp(ds, T=5, config=FitConfig(restarts=1, max_iter=50, gtol=1e-4))

    def test_far_future_equals_f_only(self):
        model = self._trained()
        x_star = np.array([0.3])
        t_far = float(model.train.t[-1] + model.T + 1)
        assert predict(model, x_star, t_far) == predict_f(model, x_star)

    def test_out_of_temporal_batch_is_pure_f(self):
        model = self._trained()
        rng = np.random.default_rng(8)
        X_star = rng.standard_normal((15, 1))
        t_far = model.train.t[-1] + model.T + 1 + np.arange(15.0)
        np.testing.assert_array_equal(predict(model, X_star, t_far), predict_f(model, X_star))

    def test_in_temporal_pulls_toward_local_residual(self):
        model = self._trained()
        # pick a training time where the residual is large and positive
        e = model.residuals
        i = int(np.argmax(e[50:-50])) + 50
        t_star = float(model.train.t[i])
        x_star = model.train.X[i]
        combined = predict(model, x_star, t_star)
        f_only = predict_f(model, x_star)
        assert np.sign(combined - f_only) == np.sign(e[i])
        assert abs(combined - model.train.y[i]) < abs(f_only - model.train.y[i])

    def test_mismatched_lengths_rejected(self):
        model = self._trained()
        with pytest.raises(ValueError):
            predict(model, np.zeros((3, 1)), np.zeros(4))
