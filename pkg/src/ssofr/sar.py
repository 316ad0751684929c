"""Estimation for the finite-dimensional spatial autoregressive model

    Y = rho W Y + Z theta + eps,   eps ~ N(0, sigma^2 I),

with Z = [1_n, A] built from decomposition scores. Provides the exact
Gaussian log-likelihood with profile maximization over rho, the robust
estimating equations with Huber-transformed standardized residuals, and the
iterative M-estimator (weighted least squares for theta, a multiplicative
scale update, and a 1-D line search for rho).
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .exceptions import NumericalError, ValidationError
from .weights import SpatialWeights

_SIGMA_FLOOR = 1e-300
_RSS_FLOOR = 1e-300
_RHO_MARGIN = 1e-8
_RIDGE_EPS = 1e-8


def huber_psi(u, c: float):
    """Huber function: identity inside [-c, c], clipped at +-c outside."""
    if c <= 0:
        raise ValidationError("Huber cutoff c must be positive")
    u = np.asarray(u, dtype=float)
    out = np.clip(u, -c, c)
    return out if out.ndim else float(out)


def huber_weight(u, c: float):
    """psi_c(u)/u with the convention weight(0) = 1."""
    u = np.asarray(u, dtype=float)
    au = np.abs(u)
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(au <= c, 1.0, c / au)
    return w if w.ndim else float(w)


def rho_tilde(c: float) -> float:
    """E[psi_c(U)^2] for U standard normal, in closed form."""
    if c <= 0:
        raise ValidationError("cutoff c must be positive")
    phi_c = np.exp(-0.5 * c * c) / np.sqrt(2.0 * np.pi)
    Pi_c = float(ndtr(c))
    return 2.0 * c * c * (1.0 - Pi_c) - 2.0 * c * phi_c - 1.0 + 2.0 * Pi_c


@dataclass(frozen=True, eq=False)
class SarDesign:
    """Response, design matrix [1_n, A], and spatial weights."""

    Y: np.ndarray
    Z: np.ndarray
    weights: SpatialWeights

    def __post_init__(self):
        Y = np.asarray(self.Y, dtype=float).ravel()
        Z = np.asarray(self.Z, dtype=float)
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "Z", Z)
        n = Y.size
        if Z.ndim != 2 or Z.shape[0] != n:
            raise ValidationError("Z must be n x (K+1)")
        if self.weights.n != n:
            raise ValidationError("weight matrix size must match response")
        if not np.allclose(Z[:, 0], 1.0):
            raise ValidationError("first column of Z must be the intercept 1_n")
        s = np.linalg.svd(Z, compute_uv=False)
        if s[-1] < 1e-10 * max(s[0], 1.0):
            raise ValidationError("Z is numerically rank deficient")

    @property
    def n(self) -> int:
        return self.Y.size

    @property
    def k(self) -> int:
        return self.Z.shape[1]


@dataclass(frozen=True, eq=False)
class SarParams:
    """Parameter block (theta, sigma, rho)."""

    theta: np.ndarray
    sigma: float
    rho: float

    def __post_init__(self):
        object.__setattr__(self, "theta", np.asarray(self.theta, dtype=float).ravel())
        if self.sigma <= 0:
            raise ValidationError("sigma must be positive")

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.theta, [self.sigma, self.rho]])


@dataclass(frozen=True)
class MTuning:
    c1: float = 1.4
    c2: float = 2.4
    c3: float = 1.65
    eps_conv: float = 1e-6
    max_iter: int = 100
    ridge_eps: float = 0.0

    def __post_init__(self):
        if min(self.c1, self.c2, self.c3) <= 0:
            raise ValidationError("Huber cutoffs must be positive")
        if self.eps_conv <= 0 or self.max_iter < 1:
            raise ValidationError("bad convergence settings")


class ResolventCache:
    """Cached spectral machinery for (I - rho W)^{-1} along a rho path.

    A one-time eigendecomposition of W gives O(n^2) resolvent solves and O(n)
    log-determinants and traces for every rho in the line searches. When W is
    too defective for a reliable eigenbasis, solves fall back to dense LU.
    """

    def __init__(self, weights: SpatialWeights):
        self.w = weights.w
        self.n = weights.n
        self.rho_bounds = weights.rho_bounds
        self.eigvals = None
        self._V = None
        self._Vinv = None
        self.ridge_events = 0
        try:
            vals, V = np.linalg.eig(self.w)
            Vinv = np.linalg.inv(V)
            recon = (V * vals) @ Vinv
            err = np.abs(recon - self.w).max()
            if err <= 1e-8 * max(1.0, np.abs(self.w).max()):
                self.eigvals = vals
                self._V = V
                self._Vinv = Vinv
            else:
                self.eigvals = vals  # still fine for logdet/trace
        except np.linalg.LinAlgError:
            pass

    def _denom(self, rho: float, ridge: float = 0.0) -> np.ndarray:
        return (1.0 + ridge) - rho * self.eigvals

    def logdet(self, rho: float) -> float:
        """log |det(I - rho W)|."""
        if self.eigvals is not None:
            d = self._denom(rho)
            mag = np.abs(d)
            if np.any(mag <= 0.0):
                raise NumericalError("I - rho W singular at this rho")
            return float(np.sum(np.log(mag)))
        sign, val = np.linalg.slogdet(np.eye(self.n) - rho * self.w)
        if sign == 0:
            raise NumericalError("I - rho W singular at this rho")
        return float(val)

    def trace_g(self, rho: float, ridge: float = 0.0) -> float:
        """trace[W (I - rho W)^{-1}]."""
        if self.eigvals is not None:
            return float(np.sum(self.eigvals / self._denom(rho, ridge)).real)
        a = np.eye(self.n) * (1.0 + ridge) - rho * self.w
        return float(np.trace(np.linalg.solve(a.T, self.w.T).T))

    def solve(self, rho: float, b: np.ndarray, ridge: float = 0.0) -> np.ndarray:
        """(I - rho W)^{-1} b."""
        if self._V is not None:
            y = self._Vinv @ b
            x = self._V @ (y / self._denom(rho, ridge))
            return x.real if np.isrealobj(b) else x
        a = np.eye(self.n) * (1.0 + ridge) - rho * self.w
        return np.linalg.solve(a, b)

    def g_dot(self, rho: float, b: np.ndarray, ridge: float = 0.0) -> np.ndarray:
        """W (I - rho W)^{-1} b."""
        return self.w @ self.solve(rho, b, ridge)

    def g_dot_grid(self, rhos: np.ndarray, b: np.ndarray, ridge: float = 0.0):
        """Columns W (I - rho_g W)^{-1} b_g for a grid of rhos.

        b is either a single vector used for every rho or an n x G matrix of
        per-rho right-hand sides. Returns an n x G real matrix, or None when
        no eigenbasis is available.
        """
        if self._V is None:
            return None
        denoms = (1.0 + ridge) - np.outer(self.eigvals, rhos)  # n x G
        if b.ndim == 1:
            s = (self._Vinv @ b)[:, None] / denoms
        else:
            s = (self._Vinv @ b) / denoms
        return (self.w @ (self._V @ s)).real

    def trace_g_grid(self, rhos: np.ndarray, ridge: float = 0.0):
        if self.eigvals is None:
            return None
        denoms = (1.0 + ridge) - np.outer(self.eigvals, rhos)
        return np.sum(self.eigvals[:, None] / denoms, axis=0).real

    def min_resolvent_margin(self, rho: float) -> float:
        if self.eigvals is not None:
            return float(np.abs(self._denom(rho)).min())
        return 1.0


_CACHE_REGISTRY: "weakref.WeakKeyDictionary[SpatialWeights, ResolventCache]" = (
    weakref.WeakKeyDictionary()
)


def resolvent_cache(weights: SpatialWeights) -> ResolventCache:
    cache = _CACHE_REGISTRY.get(weights)
    if cache is None:
        cache = ResolventCache(weights)
        _CACHE_REGISTRY[weights] = cache
    return cache


def log_likelihood(params: SarParams, design: SarDesign) -> float:
    """Exact Gaussian log-likelihood; determinant by LU with log-abs terms."""
    lo, hi = design.weights.rho_bounds
    if not lo < params.rho < hi:
        raise NumericalError(f"rho={params.rho} outside bounds ({lo}, {hi})")
    n = design.n
    a = np.eye(n) - params.rho * design.weights.w
    sign, logdet = np.linalg.slogdet(a)
    if sign == 0:
        raise NumericalError("I - rho W is singular")
    r = a @ design.Y - design.Z @ params.theta
    s = params.sigma
    return float(
        -0.5 * n * np.log(2.0 * np.pi)
        - n * np.log(s)
        + logdet
        - 0.5 * (r @ r) / (s * s)
    )


def eta_ml(params: SarParams, design: SarDesign, cache: ResolventCache | None = None) -> np.ndarray:
    """Score of the log-likelihood: blocks for theta, sigma, rho."""
    if cache is None:
        cache = resolvent_cache(design.weights)
    wy = design.weights.w @ design.Y
    r = design.Y - params.rho * wy - design.Z @ params.theta
    s, n = params.sigma, design.n
    b_theta = design.Z.T @ r / s**2
    b_sigma = (r @ r) / s**3 - n / s
    b_rho = (wy @ r) / s**2 - cache.trace_g(params.rho)
    return np.concatenate([b_theta, [b_sigma, b_rho]])


def eta_robust(
    params: SarParams,
    design: SarDesign,
    tuning: MTuning = MTuning(),
    cache: ResolventCache | None = None,
) -> np.ndarray:
    """Robust estimating equations with Huber-transformed residuals."""
    if cache is None:
        cache = resolvent_cache(design.weights)
    wy = design.weights.w @ design.Y
    zt = design.Z @ params.theta
    s = params.sigma
    eps = (design.Y - params.rho * wy - zt) / s
    n = design.n

    psi1 = huber_psi(eps, tuning.c1)
    block1 = design.Z.T @ psi1

    psi2 = huber_psi(eps, tuning.c2)
    block2 = float(psi2 @ psi2 - n * rho_tilde(tuning.c2))

    psi3 = huber_psi(eps, tuning.c3)
    ridge = tuning.ridge_eps
    if cache.min_resolvent_margin(params.rho) < 1e-12:
        ridge = max(ridge, _RIDGE_EPS)
        cache.ridge_events += 1
    gzt = cache.g_dot(params.rho, zt, ridge)
    gpsi3 = cache.g_dot(params.rho, psi3, ridge)
    block3 = float(
        (gzt @ psi3) / s + gpsi3 @ psi3 - cache.trace_g(params.rho, ridge) * rho_tilde(tuning.c3)
    )
    return np.concatenate([block1, [block2, block3]])


@dataclass
class SarFit:
    """Fit result: parameter block plus diagnostics of the optimizer run."""

    params: SarParams
    method: str
    converged: bool
    iterations: int
    boundary: bool = False
    eta_norm: float = np.nan
    loglik: float = np.nan
    events: list = field(default_factory=list)
    history: list = field(default_factory=list)

    @property
    def theta(self) -> np.ndarray:
        return self.params.theta

    @property
    def sigma(self) -> float:
        return self.params.sigma

    @property
    def rho(self) -> float:
        return self.params.rho


def _golden_max(f, lo: float, hi: float, tol: float, max_iter: int = 200):
    """Golden-section maximization on [lo, hi]."""
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    it = 0
    while (b - a) > tol and it < max_iter:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
        it += 1
    return (c, fc) if fc >= fd else (d, fd)


def ml_fit(design: SarDesign) -> SarFit:
    """Maximum likelihood via the concentrated (profile) likelihood in rho.

    For fixed rho, theta is the least-squares fit of (I - rho W) Y on Z and
    sigma^2 the mean squared residual; the profile is maximized by a coarse
    grid bracket followed by golden-section refinement.
    """
    cache = resolvent_cache(design.weights)
    n = design.n
    Y, Z = design.Y, design.Z
    wy = design.weights.w @ Y

    theta_y, *_ = np.linalg.lstsq(Z, Y, rcond=None)
    theta_w, *_ = np.linalg.lstsq(Z, wy, rcond=None)
    e0 = Y - Z @ theta_y
    e1 = wy - Z @ theta_w
    qa, qb, qc = float(e0 @ e0), float(e0 @ e1), float(e1 @ e1)

    def rss(rho: float) -> float:
        return max(qa - 2.0 * rho * qb + rho * rho * qc, _RSS_FLOOR)

    def profile(rho: float) -> float:
        return -0.5 * n * np.log(rss(rho) / n) + cache.logdet(rho)

    lo, hi = design.weights.rho_bounds
    width = hi - lo
    glo, ghi = lo + _RHO_MARGIN * width, hi - _RHO_MARGIN * width
    grid = np.linspace(glo, ghi, 201)
    vals = np.array([profile(r) for r in grid])
    i = int(np.argmax(vals))
    blo = grid[max(i - 1, 0)]
    bhi = grid[min(i + 1, grid.size - 1)]
    rho_hat, _ = _golden_max(profile, blo, bhi, tol=1e-12 * width)

    theta_hat = theta_y - rho_hat * theta_w
    sigma_hat = max(float(np.sqrt(rss(rho_hat) / n)), _SIGMA_FLOOR)
    params = SarParams(theta=theta_hat, sigma=sigma_hat, rho=float(rho_hat))
    boundary = (rho_hat - lo) < 1e-6 * width or (hi - rho_hat) < 1e-6 * width
    fit = SarFit(
        params=params, method="ML", converged=True, iterations=1,
        boundary=boundary,
        loglik=float(
            -0.5 * n * np.log(2.0 * np.pi) - 0.5 * n + profile(rho_hat)
        ),
    )
    if sigma_hat > 1e-100:
        fit.eta_norm = float(np.linalg.norm(eta_ml(params, design, cache)))
    else:
        fit.events.append("degenerate zero-residual fit; score norm skipped")
    if boundary:
        fit.events.append("rho at interval boundary")
    return fit


def lad_init(design: SarDesign) -> SarParams:
    """Median-regression fallback start: LAD theta at rho = 0, MAD scale."""
    from scipy.optimize import linprog

    n, k = design.n, design.k
    # minimize sum |Y - Z theta| as an LP in (theta, u+, u-)
    c = np.concatenate([np.zeros(k), np.ones(2 * n)])
    a_eq = np.hstack([design.Z, np.eye(n), -np.eye(n)])
    bounds = [(None, None)] * k + [(0, None)] * (2 * n)
    res = linprog(c, A_eq=a_eq, b_eq=design.Y, bounds=bounds, method="highs")
    if not res.success:
        theta, *_ = np.linalg.lstsq(design.Z, design.Y, rcond=None)
    else:
        theta = res.x[:k]
    r = design.Y - design.Z @ theta
    sigma = 1.4826022185056018 * float(np.median(np.abs(r - np.median(r))))
    return SarParams(theta=theta, sigma=max(sigma, _SIGMA_FLOOR), rho=0.0)


def _rho_step(design, cache, theta, sigma, tuning, wy, zt, prev_rho=None):
    """Minimize the squared rho-block of the robust equations over the bounds.

    A coarse scan brackets the minimizer (batched through the eigenbasis when
    available; warm-started around the previous rho on later iterations), and
    golden-section refines the bracket to an interval tolerance of 1e-8.
    """
    lo, hi = design.weights.rho_bounds
    width = hi - lo
    glo, ghi = lo + _RHO_MARGIN * width, hi - _RHO_MARGIN * width
    rt3 = rho_tilde(tuning.c3)
    events = []

    def block3(rho: float) -> float:
        eps = (design.Y - rho * wy - zt) / sigma
        psi3 = huber_psi(eps, tuning.c3)
        ridge = tuning.ridge_eps
        if cache.min_resolvent_margin(rho) < 1e-12:
            ridge = max(ridge, _RIDGE_EPS)
            events.append(f"ridge applied at rho={rho:.6g}")
        gzt = cache.g_dot(rho, zt, ridge)
        gpsi = cache.g_dot(rho, psi3, ridge)
        return float((gzt @ psi3) / sigma + gpsi @ psi3 - cache.trace_g(rho, ridge) * rt3)

    def objective(rho: float) -> float:
        b = block3(rho)
        return b * b

    def objective_grid(rhos: np.ndarray) -> np.ndarray:
        eps = ((design.Y - zt)[:, None] - np.outer(wy, rhos)) / sigma
        psi3 = np.clip(eps, -tuning.c3, tuning.c3)
        gzt = cache.g_dot_grid(rhos, zt, tuning.ridge_eps)
        gpsi = cache.g_dot_grid(rhos, psi3, tuning.ridge_eps)
        if gzt is None or gpsi is None:
            return np.array([objective(r) for r in rhos])
        traces = cache.trace_g_grid(rhos, tuning.ridge_eps)
        b = (
            np.einsum("ig,ig->g", gzt, psi3) / sigma
            + np.einsum("ig,ig->g", gpsi, psi3)
            - traces * rt3
        )
        return b * b

    blo = bhi = None
    if prev_rho is not None:
        # expand a bracket around the previous iterate before refining
        h = 1e-3 * width
        center = min(max(prev_rho, glo), ghi)
        f_c = objective(center)
        while h < width:
            a = max(center - h, glo)
            b = min(center + h, ghi)
            f_a, f_b = objective(a), objective(b)
            if f_c <= f_a and f_c <= f_b:
                blo, bhi = a, b
                break
            if f_a < f_c:
                center, f_c = a, f_a
            else:
                center, f_c = b, f_b
            h *= 3.0
    if blo is None:
        grid = np.linspace(glo, ghi, 65)
        vals = objective_grid(grid)
        i = int(np.argmin(vals))
        blo = grid[max(i - 1, 0)]
        bhi = grid[min(i + 1, grid.size - 1)]
    rho_new, _ = _golden_max(lambda r: -objective(r), blo, bhi, tol=1e-8)
    return float(rho_new), events


def m_fit(
    design: SarDesign,
    tuning: MTuning = MTuning(),
    init: SarParams | None = None,
) -> SarFit:
    """Iterative robust M-estimator.

    Each iteration updates theta by Huber-weighted least squares, rescales
    sigma multiplicatively so the scale block of the estimating equations is
    solved at the fixed point, and updates rho by a bracketed golden-section
    line search on the squared rho block. Stops when the Euclidean change of
    the full parameter vector falls below eps_conv.
    """
    cache = resolvent_cache(design.weights)
    if init is None:
        init = ml_fit(design).params
    theta = np.asarray(init.theta, dtype=float).copy()
    sigma = float(init.sigma)
    rho = float(init.rho)

    Y, Z = design.Y, design.Z
    n = design.n
    wy = design.weights.w @ Y
    rt2 = rho_tilde(tuning.c2)
    events: list = []
    history: list = []
    converged = False

    for it in range(1, tuning.max_iter + 1):
        prev = np.concatenate([theta, [sigma, rho]])

        # theta: weighted least squares with psi_{c1}(eps)/eps weights
        eps = (Y - rho * wy - Z @ theta) / sigma
        w = huber_weight(eps, tuning.c1)
        zw = Z * w[:, None]
        try:
            theta = np.linalg.solve(Z.T @ zw, zw.T @ (Y - rho * wy))
        except np.linalg.LinAlgError:
            theta, *_ = np.linalg.lstsq(zw, w * (Y - rho * wy), rcond=None)
            events.append(f"iteration {it}: singular weighted normal equations")

        # sigma: multiplicative update solving the scale block at fixed point
        eps = (Y - rho * wy - Z @ theta) / sigma
        psi2 = huber_psi(eps, tuning.c2)
        sigma = max(sigma * float(np.sqrt((psi2 @ psi2) / (n * rt2))), _SIGMA_FLOOR)

        # rho: 1-D minimization of the squared rho block. The scan is global
        # on the first pass; afterwards the search tracks the minimizer from
        # the previous iterate, which keeps the iteration on one root when
        # the rho equation has several.
        zt = Z @ theta
        warm = rho if it > 1 else None
        rho, ev = _rho_step(design, cache, theta, sigma, tuning, wy, zt, prev_rho=warm)
        events.extend(ev)

        cur = np.concatenate([theta, [sigma, rho]])
        history.append(cur)
        if float(np.linalg.norm(cur - prev)) < tuning.eps_conv:
            converged = True
            break

    params = SarParams(theta=theta, sigma=sigma, rho=rho)
    fit = SarFit(
        params=params, method="M", converged=converged,
        iterations=len(history), events=events, history=history,
    )
    fit.eta_norm = float(np.linalg.norm(eta_robust(params, design, tuning, cache)))
    if not converged:
        fit.events.append(f"no convergence within {tuning.max_iter} iterations")
    return fit
