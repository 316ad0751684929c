"""M-scale estimation with the Tukey biweight loss.

The raw biweight loss saturates at c^2/6, which is below the usual target
delta = 0.5, so the estimating equation is solved with the loss normalized
to supremum 1. With delta = 0.5 this gives the 50% breakdown point.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import NonConvergenceError, ValidationError

# median absolute deviation consistency factor: 1 / Phi^{-1}(3/4)
MAD_SCALE = 1.4826022185056018


def tukey_loss(u, c: float = 1.56):
    """Tukey biweight loss: u^2/2 (1 - u^2/c^2 + u^4/(3 c^4)) for |u| <= c,
    exactly c^2/6 beyond the cutoff."""
    if c <= 0:
        raise ValidationError("tuning constant c must be positive")
    u = np.asarray(u, dtype=float)
    u2 = u * u
    c2 = c * c
    inner = 0.5 * u2 * (1.0 - u2 / c2 + u2 * u2 / (3.0 * c2 * c2))
    val = np.where(u2 <= c2, inner, c**2 / 6.0)
    return val if val.ndim else float(val)


def tukey_loss_norm(u, c: float = 1.56):
    """Biweight loss rescaled to supremum 1."""
    return tukey_loss(u, c) * (6.0 / c**2)


def tukey_weight(u, c: float = 1.56):
    """Biweight psi(u)/u weight: (1 - (u/c)^2)^2 inside, 0 outside."""
    u = np.asarray(u, dtype=float)
    t = np.clip(1.0 - (u / c) ** 2, 0.0, None)
    w = t * t
    return w if w.ndim else float(w)


def m_location(x, c: float = 4.685, tol: float = 1e-10, max_iter: int = 200) -> float:
    """Bisquare M-location via IRLS, scale fixed at the normalized MAD."""
    x = np.asarray(x, dtype=float)
    mu = float(np.median(x))
    s = MAD_SCALE * float(np.median(np.abs(x - mu)))
    if s == 0.0:
        return mu
    for _ in range(max_iter):
        w = tukey_weight((x - mu) / s, c)
        if w.sum() == 0.0:
            return mu
        mu_new = float(np.sum(w * x) / np.sum(w))
        if abs(mu_new - mu) <= tol * max(1.0, abs(mu)):
            return mu_new
        mu = mu_new
    return mu


@dataclass(frozen=True)
class MScaleConfig:
    c: float = 1.56
    delta: float = 0.5
    max_iter: int = 200
    tol: float = 1e-10
    location: str = "median"

    def __post_init__(self):
        if self.c <= 0:
            raise ValidationError("c must be positive")
        if not 0.0 < self.delta < 1.0:
            raise ValidationError("delta must be in (0, 1)")
        if self.max_iter < 1:
            raise ValidationError("max_iter must be positive")
        if self.location not in ("median", "m_location"):
            raise ValidationError("location must be 'median' or 'm_location'")


@dataclass
class MScaleResult:
    sigma: float
    location: float
    degenerate: bool
    converged: bool
    iterations: int
    history: list = field(default_factory=list)


DEFAULT_MSCALE = MScaleConfig()


def m_scale_info(x, config: MScaleConfig = DEFAULT_MSCALE) -> MScaleResult:
    """Solve (1/n) sum rho_norm((x_i - mu)/sigma) = delta by fixed point.

    The iteration sigma_{k+1}^2 = sigma_k^2 * (n delta)^{-1} sum rho_norm(u_k)
    starts from the normalized MAD and keeps every iterate positive. Samples
    where more than (1 - delta) n values coincide with the location estimate
    are degenerate and return sigma = 0.
    """
    x = np.asarray(x, dtype=float).ravel()
    n = x.size
    if n < 2:
        raise ValidationError("m_scale needs at least 2 observations")
    cfg = config
    mu = float(np.median(x)) if cfg.location == "median" else m_location(x)
    resid = x - mu
    n_at_mu = int(np.sum(resid == 0.0))
    if n_at_mu > (1.0 - cfg.delta) * n:
        return MScaleResult(0.0, mu, True, True, 0, [0.0])

    sigma = MAD_SCALE * float(np.median(np.abs(resid)))
    if sigma == 0.0:
        # exactly-half ties: MAD collapses but the equation is still solvable
        sigma = float(np.sqrt(np.mean(resid**2)))
    history = [sigma]
    for it in range(1, cfg.max_iter + 1):
        mean_rho = float(np.mean(tukey_loss_norm(resid / sigma, cfg.c)))
        sigma_new = sigma * np.sqrt(mean_rho / cfg.delta)
        history.append(sigma_new)
        if abs(sigma_new - sigma) <= cfg.tol * sigma:
            return MScaleResult(float(sigma_new), mu, False, True, it, history)
        sigma = sigma_new
    raise NonConvergenceError(
        f"m_scale did not converge in {cfg.max_iter} iterations"
    )


def m_scale(x, config: MScaleConfig = DEFAULT_MSCALE) -> float:
    return m_scale_info(x, config).sigma


def m_scale_columns(x: np.ndarray, config: MScaleConfig = DEFAULT_MSCALE) -> np.ndarray:
    """Column-wise M-scales of a 2-D array, vectorized fixed point.

    Same estimator as m_scale applied to each column; used where many
    candidate projections must be scored at once. Degenerate columns get 0.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValidationError("m_scale_columns needs an (n >= 2) x m array")
    cfg = config
    n = x.shape[0]
    if cfg.location == "median":
        mu = np.median(x, axis=0)
    else:
        mu = np.array([m_location(col) for col in x.T])
    resid = x - mu
    degenerate = np.sum(resid == 0.0, axis=0) > (1.0 - cfg.delta) * n

    sigma = MAD_SCALE * np.median(np.abs(resid), axis=0)
    rms = np.sqrt(np.mean(resid**2, axis=0))
    sigma = np.where(sigma == 0.0, rms, sigma)
    sigma = np.where(degenerate, 1.0, sigma)  # placeholder, masked at the end

    active = ~degenerate
    for _ in range(cfg.max_iter):
        if not active.any():
            break
        u = resid[:, active] / sigma[active]
        mean_rho = np.mean(tukey_loss_norm(u, cfg.c), axis=0)
        new = sigma[active] * np.sqrt(mean_rho / cfg.delta)
        conv = np.abs(new - sigma[active]) <= cfg.tol * sigma[active]
        sigma[active] = new
        still = active.copy()
        still[active] = ~conv
        active = still
    if active.any():
        raise NonConvergenceError("m_scale_columns did not converge")
    sigma[degenerate] = 0.0
    return sigma
