import numpy as np
import pytest

from tempgp.data import TimeSeriesDataset
from tempgp.exceptions import NumericalError
from tempgp.kernels import KernelSpec, cross_matrix, gram_matrix
from tempgp.model import (
    FHyperparams,
    FitConfig,
    TempGPModel,
    _fit_f_detailed,
    compute_residuals,
    fit_f,
    predict_f,
    train_tempgp,
)
from tempgp.pdsolve import factorize
from tempgp.thinning import thin_dataset

QUICK = FitConfig(restarts=2, max_iter=60, gtol=1e-4)


def dataset_from(y, X, t=None):
    X = np.atleast_2d(X)
    return TimeSeriesDataset(
        y=y,
        X=X,
        t=np.arange(len(y)) if t is None else t,
        covariate_names=tuple(f"x{i}" for i in range(X.shape[1])),
        raw_columns=X.copy(),
        raw_names=tuple(f"x{i}" for i in range(X.shape[1])),
    )


def sample_from_model(seed, n=400, beta=2.0, sf2=1.0, theta=0.5, su2=0.1):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, 1))
    K = gram_matrix(KernelSpec("matern32", sf2, np.array([theta])), X)
    f = np.linalg.cholesky(K + 1e-10 * np.eye(n)) @ rng.standard_normal(n)
    y = beta + f + rng.normal(0, np.sqrt(su2), n)
    return dataset_from(y, X)


def manual_model(ds, params, config=None):
    """Assemble a trained model directly from given hyperparameters."""
    config = config or FitConfig()
    spec = KernelSpec(config.kernel_family, params.sigma_f_sq, params.theta)
    K = gram_matrix(spec, ds.X)
    fact = factorize(K + params.sigma_u_sq * np.eye(ds.n), check_symmetry=False)
    alpha = fact.solve(ds.y - params.beta)
    f_hat = params.beta + K @ alpha
    return TempGPModel(
        f_params=params,
        kernel=spec,
        time_kernel_family=config.time_kernel_family,
        train=ds,
        T=1,
        alpha=alpha,
        residuals=ds.y - f_hat,
        config=config,
    )


class TestFitF:
    def test_objective_beats_every_initial_point(self):
        ds = sample_from_model(0, n=250)
        _, diag = _fit_f_detailed(ds, thin_dataset(ds, 1), QUICK)
        for attempt in diag["restarts"]:
            assert diag["objective"] >= attempt["initial_objective"] - 1e-9

    def test_constant_response_degenerates(self):
        ds = dataset_from(np.full(80, 4.2), np.random.default_rng(1).standard_normal((80, 1)))
        params = fit_f(ds, thin_dataset(ds, 1), QUICK)
        assert abs(params.beta - 4.2) < 1e-3
        assert params.sigma_f_sq < 1e-6
        assert params.sigma_u_sq < 1e-6

    def test_too_few_rows_rejected(self):
        ds = dataset_from(np.arange(3.0), np.random.default_rng(0).standard_normal((3, 2)))
        with pytest.raises(NumericalError):
            fit_f(ds, thin_dataset(ds, 1), QUICK)

    def test_translation_equivariance(self):
        # shifting y by a constant shifts beta and nothing else
        ds = sample_from_model(3, n=200)
        shifted = dataset_from(ds.y + 25.0, ds.X)
        a = fit_f(ds, thin_dataset(ds, 1), QUICK)
        b = fit_f(shifted, thin_dataset(shifted, 1), QUICK)
        assert b.beta - a.beta == pytest.approx(25.0, abs=1e-5)
        np.testing.assert_allclose(b.theta, a.theta, rtol=1e-6)
        assert b.sigma_f_sq == pytest.approx(a.sigma_f_sq, rel=1e-6)
        assert b.sigma_u_sq == pytest.approx(a.sigma_u_sq, rel=1e-6)
        ma = manual_model(ds, a)
        mb = manual_model(shifted, b)
        np.testing.assert_allclose(ma.residuals, mb.residuals, atol=1e-5)

    def test_thinned_fit_runs_and_improves_on_inits(self):
        ds = sample_from_model(4, n=300)
        _, diag = _fit_f_detailed(ds, thin_dataset(ds, 5), QUICK)
        assert diag["objective"] >= max(a["initial_objective"] for a in diag["restarts"])

    def test_recovers_known_hyperparameters(self):
        # single moderate-size check; the 10-seed battery at n=2000 with
        # the documented +-0.5 / +-0.7 bands lives in the acceptance suite
        ds = sample_from_model(11, n=800)
        params = fit_f(ds, thin_dataset(ds, 1), FitConfig(restarts=1, max_iter=60, gtol=1e-4))
        assert abs(np.log(params.sigma_u_sq) - np.log(0.1)) < 0.7
        assert abs(np.log(params.theta[0]) - np.log(0.5)) < 0.7


class TestPredictF:
    def test_three_point_closed_form(self):
        params = FHyperparams(beta=1.5, sigma_f_sq=2.0, theta=np.array([0.8]), sigma_u_sq=0.3)
        ds = dataset_from(np.array([2.0, 0.5, 1.1]), np.array([[0.0], [0.5], [1.4]]))
        model = manual_model(ds, params)
        x_star = np.array([0.7])
        spec = model.kernel
        K = gram_matrix(spec, ds.X) + 0.3 * np.eye(3)
        r = cross_matrix(spec, x_star[None, :], ds.X)[0]
        expected = 1.5 + r @ np.linalg.solve(K, ds.y - 1.5)
        assert predict_f(model, x_star) == pytest.approx(expected, rel=1e-12)

    def test_interpolates_in_noiseless_limit(self):
        ds = sample_from_model(7, n=60)
        params = FHyperparams(beta=0.0, sigma_f_sq=1.0, theta=np.array([0.7]), sigma_u_sq=1e-10)
        model = manual_model(ds, params)
        for i in (0, 17, 59):
            assert predict_f(model, ds.X[i]) == pytest.approx(ds.y[i], abs=1e-4)

    def test_reverts_to_prior_mean_far_away(self):
        ds = sample_from_model(8, n=50)
        params = FHyperparams(beta=-3.0, sigma_f_sq=1.0, theta=np.array([0.5]), sigma_u_sq=0.1)
        model = manual_model(ds, params)
        assert predict_f(model, np.array([500.0])) == pytest.approx(-3.0, abs=1e-8)

    def test_affine_in_response(self):
        # superposition at fixed hyperparameters
        ds = sample_from_model(9, n=80)
        rng = np.random.default_rng(2)
        y2 = rng.standard_normal(ds.n)
        params = FHyperparams(beta=0.0, sigma_f_sq=1.2, theta=np.array([0.9]), sigma_u_sq=0.2)
        m1 = manual_model(ds, params)
        m2 = manual_model(dataset_from(y2, ds.X), params)
        m12 = manual_model(dataset_from(2.0 * ds.y + 3.0 * y2, ds.X), params)
        grid = rng.standard_normal((12, 1))
        np.testing.assert_allclose(
            predict_f(m12, grid),
            2.0 * predict_f(m1, grid) + 3.0 * predict_f(m2, grid),
            rtol=1e-9, atol=1e-9,
        )

    def test_batch_matches_single(self):
        ds = sample_from_model(10, n=70)
        model = train_tempgp(ds, T=1, config=QUICK)
        grid = np.linspace(-2, 2, 9)[:, None]
        batch = predict_f(model, grid)
        singles = np.array([predict_f(model, g) for g in grid])
        np.testing.assert_allclose(batch, singles, atol=1e-12)

    def test_dimension_mismatch(self):
        ds = sample_from_model(12, n=40)
        model = train_tempgp(ds, T=1, config=QUICK)
        with pytest.raises(ValueError):
            predict_f(model, np.zeros(3))


class TestResiduals:
    def test_zero_when_response_equals_fit(self):
        ds = sample_from_model(13, n=60)
        model = train_tempgp(ds, T=2, config=QUICK)
        fitted = predict_f(model, ds.X)
        ds2 = dataset_from(fitted, ds.X)
        model2 = manual_model(ds2, model.f_params)
        # response constructed to equal the fit of the original model,
        # then refit residuals against its own prediction: not exactly
        # zero; the sharp zero case is alpha = 0
        params = model.f_params
        zero_alpha_model = TempGPModel(
            f_params=params,
            kernel=model.kernel,
            time_kernel_family="matern32",
            train=dataset_from(np.full(ds.n, params.beta), ds.X),
            T=2,
            alpha=np.zeros(ds.n),
            residuals=np.zeros(ds.n),
        )
        np.testing.assert_allclose(compute_residuals(zero_alpha_model), 0.0, atol=1e-12)
        del model2

    def test_recomputable_from_stored_state(self):
        ds = sample_from_model(14, n=90)
        model = train_tempgp(ds, T=3, config=QUICK)
        np.testing.assert_allclose(compute_residuals(model), model.residuals, atol=1e-10)

    def test_pointwise_dependence_on_response(self):
        # with model state (hyperparameters and alpha) held fixed,
        # residual i changes iff y_i changes
        ds = sample_from_model(15, n=50)
        model = train_tempgp(ds, T=1, config=QUICK)
        y2 = ds.y.copy()
        y2[20] += 1.0
        bumped = TempGPModel(
            f_params=model.f_params,
            kernel=model.kernel,
            time_kernel_family=model.time_kernel_family,
            train=dataset_from(y2, ds.X),
            T=model.T,
            alpha=model.alpha,
            residuals=model.residuals,
        )
        r1 = model.train.y - predict_f(model, model.train.X)
        r2 = bumped.train.y - predict_f(bumped, bumped.train.X)
        diff = r2 - r1
        assert diff[20] == pytest.approx(1.0, abs=1e-12)
        mask = np.ones(50, dtype=bool)
        mask[20] = False
        np.testing.assert_array_equal(diff[mask], 0.0)

    def test_no_systematic_bias_on_model_data(self):
        ds = sample_from_model(16, n=600)
        model = train_tempgp(ds, T=1, config=FitConfig(restarts=1, max_iter=60, gtol=1e-4))
        e = model.residuals
        assert abs(e.mean()) < 0.2 * e.std()


class TestTrainPipeline:
    def test_bin_average_mode_close_to_full(self):
        ds = sample_from_model(17, n=150)
        full = train_tempgp(ds, T=3, config=QUICK)
        capped_cfg = FitConfig(restarts=2, max_iter=60, gtol=1e-4, predict_cap=100)
        capped = train_tempgp(ds, T=3, config=capped_cfg)
        assert capped.diagnostics["prediction_mode"] == "bin_average"
        assert full.diagnostics["prediction_mode"] == "full"
        grid = np.random.default_rng(3).standard_normal((20, 1))
        # averaged per-bin predictor approximates the full smoother
        corr = np.corrcoef(predict_f(full, grid), predict_f(capped, grid))[0, 1]
        assert corr > 0.98

    def test_adaptive_T_selection_used(self):
        rng = np.random.default_rng(18)
        from tempgp.simulate import ar_from_partial_autocorrelations, sample_ar

        x = sample_ar(ar_from_partial_autocorrelations([0.6, 0.4]), 1200, rng)
        y = np.sin(x) + 0.1 * rng.standard_normal(1200)
        ds = dataset_from(y, x[:, None])
        model = train_tempgp(ds, config=FitConfig(restarts=1, max_iter=30, gtol=1e-3))
        assert model.T >= 2  # AR(2) covariate forces thinning
        assert model.diagnostics["T"] == model.T
