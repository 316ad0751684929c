import hashlib
import json

import numpy as np
import pytest

from ssofr import SimSpec, ValidationError, simulate
from ssofr.functional import trapezoid_weights


class TestSimulate:
    def test_noiseless_deterministic(self):
        spec = SimSpec(n=30, p=41, sigma=0.0, rho=0.3, seed=4,
                       weights_scheme="rook", grid_shape=(5, 6))
        ds, w, truth = simulate(spec)
        assert np.all(truth.eps == 0.0)
        assert np.array_equal(ds.response, truth.clean_response)

    def test_rho_zero_componentwise(self):
        spec = SimSpec(n=24, p=31, rho=0.0, seed=5,
                       weights_scheme="rook", grid_shape=(4, 6))
        ds, w, truth = simulate(spec)
        q = trapezoid_weights(ds.grid)
        signal = ds.curves @ (q * truth.beta_on_grid)
        expect = truth.beta0 + signal + truth.eps
        assert np.abs(ds.response - expect).max() < 1e-12

    def test_residual_back_check(self):
        spec = SimSpec(n=36, p=41, rho=0.45, sigma=0.7, seed=6,
                       weights_scheme="queen", grid_shape=(6, 6))
        ds, w, truth = simulate(spec)
        q = trapezoid_weights(ds.grid)
        signal = ds.curves @ (q * truth.beta_on_grid)
        lhs = (np.eye(36) - truth.rho * w.w) @ truth.clean_response
        resid = lhs - truth.beta0 - signal
        assert np.abs(resid - truth.eps).max() < 1e-10

    def test_noise_variance_calibration(self):
        # aggregated residual variance over replicates approaches sigma^2
        draws = []
        for seed in range(40):
            spec = SimSpec(n=25, p=21, rho=0.3, sigma=1.5, seed=seed,
                           weights_scheme="rook", grid_shape=(5, 5))
            _, _, truth = simulate(spec)
            draws.append(truth.eps)
        eps = np.concatenate(draws)
        assert eps.var() == pytest.approx(1.5**2, rel=0.1)

    def test_contamination_bookkeeping(self):
        spec = SimSpec(n=40, p=31, seed=7, contamination_fraction=0.10,
                       contamination_kind="both", vertical_magnitude=20.0,
                       leverage_amplitude=10.0,
                       weights_scheme="rook", grid_shape=(5, 8))
        ds, w, truth = simulate(spec)
        assert len(truth.vertical_indices) == 4
        assert len(truth.leverage_indices) == 4
        diff = ds.response - truth.clean_response
        changed = np.nonzero(diff)[0]
        assert set(changed.tolist()) == set(truth.vertical_indices)
        assert np.allclose(diff[list(truth.vertical_indices)], 20.0 * spec.sigma)

    def test_leverage_scales_curves_before_generation(self):
        base = SimSpec(n=40, p=31, seed=7, weights_scheme="rook", grid_shape=(5, 8))
        cont = SimSpec(n=40, p=31, seed=7, weights_scheme="rook", grid_shape=(5, 8),
                       contamination_fraction=0.10, contamination_kind="leverage",
                       leverage_amplitude=10.0)
        ds0, _, _ = simulate(base)
        ds1, _, truth = simulate(cont)
        idx = list(truth.leverage_indices)
        assert len(idx) == 4
        assert np.allclose(ds1.curves[idx], 10.0 * ds0.curves[idx])
        clean = np.setdiff1d(np.arange(40), idx)
        assert np.array_equal(ds1.curves[clean], ds0.curves[clean])
        # the scaled curves feed the response generation
        assert not np.allclose(ds1.response[idx], ds0.response[idx])

    def test_contamination_does_not_perturb_clean_streams(self):
        base = SimSpec(n=30, p=31, seed=11, weights_scheme="rook", grid_shape=(5, 6))
        cont = SimSpec(n=30, p=31, seed=11, weights_scheme="rook", grid_shape=(5, 6),
                       contamination_fraction=0.1, contamination_kind="vertical")
        ds0, _, truth0 = simulate(base)
        ds1, _, truth1 = simulate(cont)
        assert np.array_equal(ds0.curves, ds1.curves)
        assert np.array_equal(truth0.eps, truth1.eps)
        assert np.array_equal(truth0.clean_response, truth1.clean_response)

    def test_seed_reproducibility_byte_identical(self):
        spec = SimSpec(n=20, p=21, seed=42, contamination_fraction=0.1,
                       contamination_kind="both")
        a = simulate(spec)
        b = simulate(spec)
        assert a[0].curves.tobytes() == b[0].curves.tobytes()
        assert a[0].response.tobytes() == b[0].response.tobytes()
        assert a[1].w.tobytes() == b[1].w.tobytes()

    def test_golden_digest_pinned(self):
        # frozen digest guards the seeded stream layout across platforms;
        # only PRNG-derived quantities enter (no BLAS-dependent products)
        spec = SimSpec(n=12, p=11, seed=2024, rho=0.2, sigma=0.5,
                       weights_scheme="rook", grid_shape=(3, 4),
                       contamination_fraction=0.1, contamination_kind="vertical")
        ds, w, truth = simulate(spec)
        payload = json.dumps(
            {
                "curve_coeffs": truth.curve_coeffs.tolist(),
                "eps": truth.eps.tolist(),
                "w": w.w.tolist(),
                "vertical": list(truth.vertical_indices),
            },
            sort_keys=True,
        ).encode()
        digest = hashlib.sha256(payload).hexdigest()
        assert digest == "35e17c10c0d7e104343e96bd79877354f9a0db51922e4bfcd7668f716f77ffce"

    def test_rho_outside_bounds_rejected(self):
        with pytest.raises(Exception):
            simulate(SimSpec(n=16, p=21, rho=1.2, weights_scheme="rook",
                             grid_shape=(4, 4)))

    def test_spec_validation(self):
        with pytest.raises(ValidationError):
            SimSpec(contamination_fraction=0.6)
        with pytest.raises(ValidationError):
            SimSpec(contamination_kind="weird")
