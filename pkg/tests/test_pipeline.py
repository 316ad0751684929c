import numpy as np
import pytest

from ssofr import (
    BasisSpec,
    FunctionalDataset,
    MTuning,
    NumericalError,
    SimSpec,
    ValidationError,
    fit,
    grid_contiguity,
    inner_product,
    model_from_json,
    model_to_json,
    predict,
    select_K,
    simulate,
)
from ssofr.fpls import HampelConfig


BS = BasisSpec(kind="fourier", M=5)


def sim(seed=3, n=100, rho=0.4, sigma=0.3, shape=(10, 10), **kw):
    spec = SimSpec(n=n, p=61, rho=rho, sigma=sigma, seed=seed,
                   weights_scheme="queen", grid_shape=shape, **kw)
    return simulate(spec)


class TestFit:
    def test_noiseless_round_trip_recovers_truth(self):
        ds, w, truth = sim(seed=1, sigma=0.0)
        model = fit(ds, w, BS, "fpc", K=5, estimator="ml")
        assert abs(model.rho - truth.rho) < 1e-3
        diff = model.beta_grid - truth.beta_on_grid
        rel = np.sqrt(
            inner_product(diff, diff, ds.grid)
            / inner_product(truth.beta_on_grid, truth.beta_on_grid, ds.grid)
        )
        assert rel < 1e-2
        assert abs(model.intercept_uncentered - truth.beta0) < 1e-2

    def test_robust_fit_matches_classical_on_clean_data(self):
        ds, w, truth = sim(seed=13, n=400, shape=(20, 20), sigma=0.3)
        m_ml = fit(ds, w, BS, "fpls", K=3, estimator="ml")
        m_rob = fit(ds, w, BS, "rfpls", K=3, estimator="m")
        assert abs(m_rob.rho - m_ml.rho) / abs(m_ml.rho) < 0.05
        assert m_rob.sigma == pytest.approx(m_ml.sigma, rel=0.05)
        diff = m_rob.beta_grid - m_ml.beta_grid
        rel = np.sqrt(
            inner_product(diff, diff, ds.grid)
            / inner_product(m_ml.beta_grid, m_ml.beta_grid, ds.grid)
        )
        assert rel < 0.05
        d0 = abs(m_rob.intercept_uncentered - m_ml.intercept_uncentered)
        assert d0 / abs(m_ml.intercept_uncentered) < 0.05

    def test_rho_zero_equals_nonspatial_fit(self):
        ds, w, truth = sim(seed=4, rho=0.0, sigma=0.01)
        model = fit(ds, w, BS, "fpc", K=5, estimator="ml")
        # non-spatial scalar-on-function fit: least squares on the scores
        Z = np.column_stack([np.ones(ds.n), model.decomposition.scores])
        coefs, *_ = np.linalg.lstsq(Z, ds.response, rcond=None)
        nonspatial = Z @ coefs
        rel = np.abs(model.fitted_values - nonspatial).max() / np.abs(ds.response).max()
        assert rel < 0.01

    def test_beta_curve_consistency(self):
        ds, w, _ = sim(seed=5)
        model = fit(ds, w, BS, "fpc", K=3)
        expect = model.decomposition.phi @ model.params.theta[1:]
        assert np.array_equal(model.beta_coeffs, expect)

    def test_beta_reconstruction_round_trip(self):
        ds, w, _ = sim(seed=6)
        model = fit(ds, w, BS, "fpc", K=3)
        # integral of beta(t) against each component recovers theta_k
        for k in range(3):
            phi_grid = model.basis.eval @ model.decomposition.phi[:, k]
            val = inner_product(model.beta_grid, phi_grid, ds.grid)
            assert val == pytest.approx(model.params.theta[1 + k], abs=1e-6)

    def test_reduced_form_identity(self):
        ds, w, _ = sim(seed=7)
        model = fit(ds, w, BS, "rfpc", K=2, estimator="m")
        Z = np.column_stack([np.ones(ds.n), model.decomposition.scores])
        lhs = (np.eye(ds.n) - model.rho * w.w) @ model.fitted_values
        assert np.abs(lhs - Z @ model.params.theta).max() < 1e-10

    def test_method_nesting_with_infinite_cutoffs(self):
        ds, w, _ = sim(seed=8, n=144, shape=(12, 12), sigma=0.4)
        classical = fit(ds, w, BS, "fpc", K=3, estimator="ml")
        relaxed = fit(
            ds, w, BS, "rfpc", K=3, estimator="m",
            tuning=MTuning(c1=1e6, c2=1e6, c3=1e6),
            hampel_config=HampelConfig(a=1e9, b=2e9, q=3e9),
        )
        assert abs(relaxed.rho - classical.rho) < 0.02
        assert relaxed.sigma == pytest.approx(classical.sigma, rel=0.05)

    def test_validation_errors(self):
        ds, w, _ = sim(seed=9)
        with pytest.raises(ValidationError):
            fit(ds, w, BS, "nope", K=2)
        with pytest.raises(ValidationError):
            fit(ds, w, BS, "fpc", K=2, estimator="map")
        w_small = grid_contiguity(3, 3, "rook")
        with pytest.raises(ValidationError):
            fit(ds, w_small, BS, "fpc", K=2)


class TestBsplineIntegration:
    def test_contaminated_fit_with_default_basis(self):
        ds, w, truth = sim(seed=44, n=144, shape=(12, 12), sigma=1.0,
                           rho=0.5, contamination_fraction=0.10,
                           contamination_kind="vertical")
        bs = BasisSpec(kind="bspline", M=12, degree=3)
        classical = fit(ds, w, bs, "fpc", K=3, estimator="ml")
        robust = fit(ds, w, bs, "rfpc", K=3, estimator="m")
        assert robust.fit_info.converged
        lo, hi = w.rho_bounds
        assert lo < robust.rho < hi
        assert robust.sigma < classical.sigma / 2
        assert abs(robust.rho - truth.rho) < abs(classical.rho - truth.rho)

    def test_bspline_beta_recovery_noiseless(self):
        ds, w, truth = sim(seed=45, sigma=0.0)
        bs = BasisSpec(kind="bspline", M=15, degree=3)
        model = fit(ds, w, bs, "fpc", K=5, estimator="ml")
        diff = model.beta_grid - truth.beta_on_grid
        rel = np.sqrt(
            inner_product(diff, diff, ds.grid)
            / inner_product(truth.beta_on_grid, truth.beta_on_grid, ds.grid)
        )
        assert rel < 5e-2
        assert abs(model.rho - truth.rho) < 5e-3


class TestPredict:
    def test_rho_zero_identity_resolvent(self):
        ds, w, _ = sim(seed=10, rho=0.0, sigma=0.2)
        model = fit(ds, w, BS, "fpc", K=3)
        object.__setattr__(model.params, "rho", 0.0)
        pred = predict(model, ds, w)
        A = model.decomposition.scores
        direct = model.params.theta[0] + A @ model.params.theta[1:]
        assert np.array_equal(pred, direct)

    def test_training_refeed_matches_fitted(self):
        ds, w, _ = sim(seed=11)
        model = fit(ds, w, BS, "fpls", K=3)
        pred = predict(model, ds, w)
        assert np.abs(pred - model.fitted_values).max() < 1e-12

    def test_noiseless_prediction_matches_simulated_response(self):
        ds, w, truth = sim(seed=12, sigma=0.0)
        model = fit(ds, w, BS, "fpc", K=5)
        spec2 = SimSpec(n=100, p=61, rho=truth.rho, sigma=0.0, seed=999,
                        weights_scheme="queen", grid_shape=(10, 10))
        ds2, w2, truth2 = simulate(spec2)
        pred = predict(model, ds2, w2)
        rel = np.abs(pred - ds2.response).max() / np.abs(ds2.response).max()
        assert rel < 1e-4

    def test_grid_mismatch_rejected(self):
        ds, w, _ = sim(seed=13)
        model = fit(ds, w, BS, "fpc", K=2)
        other = FunctionalDataset(
            grid=np.linspace(0, 2, ds.p), curves=ds.curves, response=ds.response
        )
        with pytest.raises(ValidationError):
            predict(model, other, w)

    def test_rho_outside_new_bounds_explained(self):
        ds, w, _ = sim(seed=14, rho=0.6)
        model = fit(ds, w, BS, "fpc", K=3)
        # doctor a weight matrix whose admissible interval excludes rho_hat
        bad = grid_contiguity(10, 10, "rook")
        object.__setattr__(bad, "rho_bounds", (-0.1, 0.1))
        with pytest.raises(NumericalError, match="admissible"):
            predict(model, ds, bad)


class TestSelectK:
    def test_explained_variance_rank2(self):
        rng = np.random.default_rng(15)
        w = grid_contiguity(8, 8, "rook")
        grid = np.linspace(0, 1, 61)
        basis = BS.build(grid)
        coef = np.zeros((64, 5))
        coef[:, 0] = 3.0 * rng.standard_normal(64)
        coef[:, 1] = 1.5 * rng.standard_normal(64)
        curves = coef @ basis.eval.T
        ds = FunctionalDataset(grid=grid, curves=curves, response=rng.standard_normal(64))
        k = select_K(ds, w, BS, "fpc", rule="ev:0.95")
        assert k == 2

    def test_bic_pure_noise_prefers_small_k(self):
        hits = 0
        for seed in range(20):
            rng = np.random.default_rng(1000 + seed)
            ds, w, _ = sim(seed=seed + 300, sigma=1.0)
            noise_ds = FunctionalDataset(
                grid=ds.grid, curves=ds.curves,
                response=rng.standard_normal(ds.n),
            )
            k = select_K(noise_ds, w, BS, "fpc", rule="bic", K_max=4)
            hits += k == 1
        assert hits >= 18

    def test_cv_single_component_signal(self):
        picks = []
        for seed in range(5):
            rng = np.random.default_rng(2000 + seed)
            w = grid_contiguity(5, 10, "rook")
            grid = np.linspace(0, 1, 61)
            basis = BS.build(grid)
            coef = rng.standard_normal((50, 5)) * np.array([3.0, 0.3, 0.3, 0.3, 0.3])
            curves = coef @ basis.eval.T
            y = 1.0 * coef[:, 0] + 2.0 * rng.standard_normal(50)
            ds = FunctionalDataset(grid=grid, curves=curves, response=y)
            picks.append(select_K(ds, w, BS, "fpc", rule="cv:5", K_max=4))
        assert max(set(picks), key=picks.count) == 1

    def test_rule_validation(self):
        ds, w, _ = sim(seed=16)
        with pytest.raises(ValidationError):
            select_K(ds, w, BS, "fpc", rule="magic")
        with pytest.raises(ValidationError):
            select_K(ds, w, BS, "fpc", rule="cv:1")


class TestSerialization:
    def test_round_trip_bit_exact(self):
        ds, w, _ = sim(seed=17)
        model = fit(ds, w, BS, "rfpls", K=3, estimator="m")
        text = model_to_json(model)
        loaded = model_from_json(text)
        assert np.array_equal(loaded.params.theta, model.params.theta)
        assert loaded.params.sigma == model.params.sigma
        assert loaded.params.rho == model.params.rho
        assert np.array_equal(loaded.beta_coeffs, model.beta_coeffs)
        assert np.array_equal(loaded.decomposition.phi, model.decomposition.phi)
        assert np.array_equal(loaded.decomposition.center, model.decomposition.center)
        assert np.array_equal(loaded.basis.grid, model.basis.grid)
        assert model_to_json(loaded) == text

    def test_loaded_model_predicts_identically(self):
        ds, w, _ = sim(seed=18)
        model = fit(ds, w, BS, "fpc", K=3)
        loaded = model_from_json(model_to_json(model))
        assert np.array_equal(predict(loaded, ds, w), predict(model, ds, w))

    def test_schema_version_checked(self):
        ds, w, _ = sim(seed=19)
        model = fit(ds, w, BS, "fpc", K=2)
        text = model_to_json(model).replace('"schema_version": 1', '"schema_version": 99')
        with pytest.raises(ValidationError):
            model_from_json(text)
