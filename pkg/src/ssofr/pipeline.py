"""End-to-end model fitting and prediction.

fit() wires the pieces together: basis construction, curve projection, the
chosen decomposition, and ML or robust M estimation of the autoregressive
parameters. Prediction applies the reduced form, solving (I - rho W) y = mu
so no observed responses are needed for new units. Models serialize to a
versioned JSON document that round-trips exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .diagnostics import fit_metrics
from .exceptions import NumericalError, ValidationError
from .fpca import Decomposition, fpc, rfpc, scores_for
from .fpls import HampelConfig, fpls, rfpls
from .functional import (
    BasisSystem,
    FunctionalDataset,
    build_basis,
    project_curves,
)
from .mscale import DEFAULT_MSCALE, MScaleConfig
from .sar import MTuning, SarDesign, SarFit, SarParams, m_fit, ml_fit
from .weights import SpatialWeights, row_normalize

SCHEMA_VERSION = 1
DECOMPOSITION_METHODS = ("fpc", "fpls", "rfpc", "rfpls")
ESTIMATORS = ("ml", "m")


@dataclass(frozen=True)
class BasisSpec:
    kind: str = "bspline"
    M: int = 15
    degree: int = 3

    def build(self, grid) -> BasisSystem:
        return build_basis(self.kind, self.M, grid, degree=self.degree)


@dataclass
class FittedModel:
    """A fitted spatial scalar-on-function regression."""

    basis: BasisSystem
    decomposition: Decomposition
    params: SarParams
    fit_info: SarFit
    beta_coeffs: np.ndarray
    beta_grid: np.ndarray
    method: str
    estimator: str
    K: int
    fitted_values: np.ndarray
    insample_metrics: dict = field(default_factory=dict)

    @property
    def rho(self) -> float:
        return self.params.rho

    @property
    def sigma(self) -> float:
        return self.params.sigma

    @property
    def intercept_uncentered(self) -> float:
        """Intercept of the model written against uncentered curves."""
        c = self.decomposition.center
        return float(self.params.theta[0] - c @ self.basis.gram @ self.beta_coeffs)


def _decompose(method, coeffs, basis, Y, K, m_scale_config, hampel_config):
    if method == "fpc":
        return fpc(coeffs, basis, K)
    if method == "rfpc":
        return rfpc(coeffs, basis, K, m_scale_config)
    if method == "fpls":
        return fpls(coeffs, basis, Y, K)
    if method == "rfpls":
        return rfpls(coeffs, basis, Y, K, hampel_config, m_scale_config)
    raise ValidationError(f"unknown decomposition method {method!r}")


def _reduced_form(rho: float, w: np.ndarray, mu: np.ndarray) -> np.ndarray:
    if rho == 0.0:
        return mu
    return np.linalg.solve(np.eye(mu.size) - rho * w, mu)


def fit(
    dataset: FunctionalDataset,
    weights: SpatialWeights,
    basis_spec: BasisSpec,
    decomposition_method: str = "fpc",
    K: int = 2,
    estimator: str = "ml",
    tuning: MTuning = MTuning(),
    m_scale_config: MScaleConfig = DEFAULT_MSCALE,
    hampel_config: HampelConfig = HampelConfig(),
    trim_grid: tuple = (0.0, 0.05, 0.10),
) -> FittedModel:
    """Fit the spatial scalar-on-function model."""
    method = decomposition_method.lower()
    if method not in DECOMPOSITION_METHODS:
        raise ValidationError(f"method must be one of {DECOMPOSITION_METHODS}")
    est = estimator.lower()
    if est not in ESTIMATORS:
        raise ValidationError(f"estimator must be one of {ESTIMATORS}")
    if dataset.n != weights.n:
        raise ValidationError("dataset and weights have different unit counts")

    basis = basis_spec.build(dataset.grid)
    coeffs = project_curves(dataset, basis)
    decomp = _decompose(
        method, coeffs, basis, dataset.response, K, m_scale_config, hampel_config
    )
    Z = np.column_stack([np.ones(dataset.n), decomp.scores])
    design = SarDesign(Y=dataset.response, Z=Z, weights=weights)
    info = ml_fit(design) if est == "ml" else m_fit(design, tuning)

    beta_coeffs = decomp.phi @ info.params.theta[1:]
    beta_grid = basis.eval @ beta_coeffs
    fitted = _reduced_form(info.params.rho, weights.w, Z @ info.params.theta)
    metrics = {t: fit_metrics(dataset.response, fitted, t) for t in trim_grid}
    return FittedModel(
        basis=basis, decomposition=decomp, params=info.params, fit_info=info,
        beta_coeffs=beta_coeffs, beta_grid=beta_grid, method=method,
        estimator=est, K=decomp.K, fitted_values=fitted,
        insample_metrics=metrics,
    )


def predict(
    model: FittedModel,
    new_dataset: FunctionalDataset,
    weights_full: SpatialWeights,
) -> np.ndarray:
    """Reduced-form predictions for curves observed on the training grid."""
    if new_dataset.grid.shape != model.basis.grid.shape or not np.array_equal(
        new_dataset.grid, model.basis.grid
    ):
        raise ValidationError("new curves are not on the training grid")
    if weights_full.n != new_dataset.n:
        raise ValidationError("weights size must match prediction units")
    lo, hi = weights_full.rho_bounds
    if not lo < model.params.rho < hi:
        raise NumericalError(
            f"fitted rho={model.params.rho:.6g} is outside the admissible "
            f"interval ({lo:.6g}, {hi:.6g}) of the supplied weight matrix; "
            "predictions through (I - rho W)^{-1} would not be defined"
        )
    coeffs = project_curves(new_dataset, model.basis)
    scores = scores_for(model.decomposition, coeffs, model.basis)
    mu = model.params.theta[0] + scores @ model.params.theta[1:]
    return _reduced_form(model.params.rho, weights_full.w, mu)


def _parse_rule(rule):
    if isinstance(rule, (tuple, list)):
        return tuple(rule)
    s = str(rule)
    if s == "bic":
        return ("bic",)
    if s.startswith("ev"):
        tau = float(s.split(":", 1)[1]) if ":" in s else 0.95
        return ("ev", tau)
    if s.startswith("cv"):
        folds = int(s.split(":", 1)[1]) if ":" in s else 5
        return ("cv", folds)
    raise ValidationError(f"unknown selection rule {rule!r}")


def select_K(
    dataset: FunctionalDataset,
    weights: SpatialWeights,
    basis_spec: BasisSpec,
    decomposition_method: str = "fpc",
    rule="ev:0.95",
    estimator: str = "ml",
    K_max: int | None = None,
    **fit_kwargs,
) -> int:
    """Choose the truncation level by explained variance, BIC, or CV."""
    parsed = _parse_rule(rule)
    basis = basis_spec.build(dataset.grid)
    if K_max is None:
        K_max = min(dataset.n - 1, basis.M, 20)
    K_max = max(1, K_max)

    if parsed[0] == "ev":
        tau = parsed[1]
        if not 0.0 < tau < 1.0:
            raise ValidationError("explained-variance threshold must be in (0,1)")
        coeffs = project_curves(dataset, basis)
        decomp = _decompose(
            decomposition_method, coeffs, basis, dataset.response, K_max,
            fit_kwargs.get("m_scale_config", DEFAULT_MSCALE),
            fit_kwargs.get("hampel_config", HampelConfig()),
        )
        lam = np.asarray(decomp.lambdas, dtype=float)
        total = lam.sum()
        if total <= 0:
            return 1
        frac = np.cumsum(lam) / total
        return int(np.argmax(frac >= tau) + 1)

    if parsed[0] == "bic":
        best_k, best_bic = 1, np.inf
        n = dataset.n
        for k in range(1, K_max + 1):
            model = fit(
                dataset, weights, basis_spec, decomposition_method, k,
                estimator, **fit_kwargs,
            )
            w = weights.w
            resid = (
                dataset.response
                - model.params.rho * (w @ dataset.response)
                - model.params.theta[0]
                - model.decomposition.scores @ model.params.theta[1:]
            )
            rss = float(resid @ resid)
            bic = n * np.log(max(rss, 1e-300) / n) + (k + 2) * np.log(n)
            if bic < best_bic:
                best_k, best_bic = k, bic
        return best_k

    if parsed[0] == "cv":
        folds = parsed[1]
        if folds < 2:
            raise ValidationError("cv needs at least 2 folds")
        n = dataset.n
        assignment = np.arange(n) % folds
        best_k, best_mspe = 1, np.inf
        for k in range(1, K_max + 1):
            errors = []
            for f in range(folds):
                test = np.where(assignment == f)[0]
                train = np.where(assignment != f)[0]
                if test.size == 0 or train.size <= k + 2:
                    continue
                d_train = FunctionalDataset(
                    grid=dataset.grid, curves=dataset.curves[train],
                    response=dataset.response[train],
                )
                d_test = FunctionalDataset(
                    grid=dataset.grid, curves=dataset.curves[test],
                    response=dataset.response[test],
                )
                w_train = row_normalize(weights.w[np.ix_(train, train)], weights.scheme)
                w_test = row_normalize(weights.w[np.ix_(test, test)], weights.scheme)
                try:
                    model = fit(
                        d_train, w_train, basis_spec, decomposition_method,
                        k, estimator, **fit_kwargs,
                    )
                    pred = predict(model, d_test, w_test)
                except (NumericalError, ValidationError):
                    errors.append(np.inf)
                    continue
                errors.append(float(np.mean((d_test.response - pred) ** 2)))
            mspe = float(np.mean(errors)) if errors else np.inf
            if mspe < best_mspe:
                best_k, best_mspe = k, mspe
        return best_k

    raise ValidationError(f"unknown selection rule {rule!r}")


def model_to_json(model: FittedModel) -> str:
    """Serialize to a versioned JSON document (exact float round-trip)."""
    doc = {
        "schema_version": SCHEMA_VERSION,
        "method": model.method,
        "estimator": model.estimator,
        "K": model.K,
        "basis": {
            "kind": model.basis.kind,
            "M": model.basis.M,
            "degree": model.basis.degree,
        },
        "grid": model.basis.grid.tolist(),
        "decomposition": {
            "method": model.decomposition.method,
            "phi": model.decomposition.phi.tolist(),
            "lambdas": model.decomposition.lambdas.tolist(),
            "center": model.decomposition.center.tolist(),
            "truncated": bool(model.decomposition.truncated),
        },
        "params": {
            "theta": model.params.theta.tolist(),
            "sigma": model.params.sigma,
            "rho": model.params.rho,
        },
        "beta_coeffs": model.beta_coeffs.tolist(),
        "fit": {
            "converged": bool(model.fit_info.converged),
            "iterations": int(model.fit_info.iterations),
            "boundary": bool(model.fit_info.boundary),
        },
    }
    return json.dumps(doc, sort_keys=True, indent=2)


def model_from_json(text: str) -> FittedModel:
    """Rebuild a fitted model from its JSON document."""
    doc = json.loads(text)
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ValidationError(
            f"unsupported model schema version {doc.get('schema_version')!r}"
        )
    grid = np.asarray(doc["grid"], dtype=float)
    b = doc["basis"]
    basis = build_basis(b["kind"], b["M"], grid, degree=b["degree"] or 3)
    d = doc["decomposition"]
    decomp = Decomposition(
        phi=np.asarray(d["phi"], dtype=float),
        lambdas=np.asarray(d["lambdas"], dtype=float),
        scores=np.zeros((0, len(d["lambdas"]))),
        method=d["method"],
        center=np.asarray(d["center"], dtype=float),
        basis=basis,
        truncated=d["truncated"],
    )
    p = doc["params"]
    params = SarParams(
        theta=np.asarray(p["theta"], dtype=float), sigma=p["sigma"], rho=p["rho"]
    )
    beta_coeffs = np.asarray(doc["beta_coeffs"], dtype=float)
    info = SarFit(
        params=params, method=doc["estimator"].upper(),
        converged=doc["fit"]["converged"], iterations=doc["fit"]["iterations"],
        boundary=doc["fit"]["boundary"],
    )
    return FittedModel(
        basis=basis, decomposition=decomp, params=params, fit_info=info,
        beta_coeffs=beta_coeffs, beta_grid=basis.eval @ beta_coeffs,
        method=doc["method"], estimator=doc["estimator"], K=doc["K"],
        fitted_values=np.array([]), insample_metrics={},
    )
