"""Spatial weight matrices: great-circle distances, inverse-distance and
grid-contiguity schemes, row normalization, and the admissible interval for
the spatial autocorrelation parameter.

The admissible interval for rho is (-1/|lambda_min|, 1) where lambda_min is
the smallest real eigenvalue of the row-normalized matrix. Asymmetric
row-normalized matrices can have complex eigenvalues; lambda_min is taken
over the (numerically) real ones, falling back to -1 when none is negative.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import NumericalError, ValidationError

EARTH_RADIUS_KM = 6371.0
_REAL_EIG_TOL = 1e-9


def haversine_distance(lat1, lon1, lat2, lon2, radius_km: float = EARTH_RADIUS_KM):
    """Great-circle distance in km between points given in degrees."""
    lat1, lon1, lat2, lon2 = (np.asarray(v, dtype=float) for v in (lat1, lon1, lat2, lon2))
    for lat in (lat1, lat2):
        if np.any(np.abs(lat) > 90.0):
            raise ValidationError("latitude outside [-90, 90]")
    for lon in (lon1, lon2):
        if np.any(np.abs(lon) > 180.0):
            raise ValidationError("longitude outside [-180, 180]")
    u1, u2 = np.radians(lat1), np.radians(lat2)
    dv = np.radians(lon2) - np.radians(lon1)
    du = u2 - u1
    a = np.sin(du / 2.0) ** 2 + np.cos(u1) * np.cos(u2) * np.sin(dv / 2.0) ** 2
    a = np.clip(a, 0.0, 1.0)
    c = 2.0 * np.arctan2(np.sqrt(a), np.sqrt(1.0 - a))
    d = radius_km * c
    return d if d.ndim else float(d)


@dataclass(frozen=True, eq=False)
class SpatialWeights:
    """Row-normalized n x n spatial weight matrix with zero diagonal."""

    w: np.ndarray
    scheme: str
    lambda_min: float
    rho_bounds: tuple
    isolated: np.ndarray = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.w.shape[0]

    def __post_init__(self):
        if self.isolated is None:
            object.__setattr__(
                self, "isolated", np.zeros(self.w.shape[0], dtype=bool)
            )


def _min_real_eigenvalue(w: np.ndarray) -> float:
    """Smallest real eigenvalue; -1 when the real spectrum has none below 0."""
    eigs = np.linalg.eigvals(w)
    scale = max(1.0, float(np.abs(eigs).max()) if eigs.size else 1.0)
    real = eigs[np.abs(eigs.imag) <= _REAL_EIG_TOL * scale].real
    if real.size == 0 or real.min() >= 0.0:
        return -1.0
    return float(real.min())


def rho_bounds_for(w_normalized: np.ndarray) -> tuple:
    """Open interval (-1/|lambda_min|, 1) keeping I - rho W invertible."""
    lam = _min_real_eigenvalue(w_normalized)
    return (-1.0 / abs(lam), 1.0)


def from_matrix(raw: np.ndarray, scheme: str = "custom", normalize: bool = True) -> SpatialWeights:
    """Build SpatialWeights from a raw matrix.

    The diagonal is zeroed; with normalize=True each nonzero row is scaled to
    sum 1 and all-zero rows are kept and flagged as isolated units.
    """
    w = np.asarray(raw, dtype=float).copy()
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ValidationError("weight matrix must be square")
    if w.shape[0] < 2:
        raise ValidationError("weight matrix needs at least 2 units")
    if not np.all(np.isfinite(w)):
        raise ValidationError("weight matrix contains non-finite values")
    np.fill_diagonal(w, 0.0)
    sums = w.sum(axis=1)
    isolated = sums == 0.0
    if normalize:
        safe = np.where(isolated, 1.0, sums)
        w = w / safe[:, None]
    lam = _min_real_eigenvalue(w)
    return SpatialWeights(
        w=w, scheme=scheme, lambda_min=lam,
        rho_bounds=(-1.0 / abs(lam), 1.0), isolated=isolated,
    )


def row_normalize(raw: np.ndarray, scheme: str = "custom") -> SpatialWeights:
    """Zero the diagonal, normalize rows to sum 1, flag isolated units."""
    return from_matrix(raw, scheme=scheme, normalize=True)


def inverse_distance_weights(lat, lon, radius_km: float = EARTH_RADIUS_KM) -> SpatialWeights:
    """Row-normalized inverse great-circle-distance weights."""
    lat = np.asarray(lat, dtype=float).ravel()
    lon = np.asarray(lon, dtype=float).ravel()
    if lat.size != lon.size:
        raise ValidationError("lat and lon must have equal length")
    n = lat.size
    if n < 2:
        raise ValidationError("need at least 2 coordinates")
    d = haversine_distance(lat[:, None], lon[:, None], lat[None, :], lon[None, :], radius_km)
    off = ~np.eye(n, dtype=bool)
    if np.any(d[off] == 0.0):
        i, j = np.argwhere((d == 0.0) & off)[0]
        raise ValidationError(f"duplicate coordinates for units {i} and {j}")
    raw = np.zeros_like(d)
    raw[off] = 1.0 / d[off]
    return row_normalize(raw, scheme="inverse_distance")


def grid_contiguity(rows: int, cols: int, kind: str = "rook") -> SpatialWeights:
    """Rook (edges) or queen (edges + corners) contiguity on a rows x cols grid."""
    if kind not in ("rook", "queen"):
        raise ValidationError("kind must be 'rook' or 'queen'")
    n = rows * cols
    if rows < 1 or cols < 1 or n < 2:
        raise ValidationError("grid must contain at least 2 cells")
    raw = np.zeros((n, n))
    steps = [(-1, 0), (1, 0), (0, -1), (0, 1)]
    if kind == "queen":
        steps += [(-1, -1), (-1, 1), (1, -1), (1, 1)]
    for r in range(rows):
        for c in range(cols):
            i = r * cols + c
            for dr, dc in steps:
                rr, cc = r + dr, c + dc
                if 0 <= rr < rows and 0 <= cc < cols:
                    raw[i, rr * cols + cc] = 1.0
    return row_normalize(raw, scheme=kind)


def check_rho(rho: float, weights: SpatialWeights) -> None:
    lo, hi = weights.rho_bounds
    if not lo < rho < hi:
        raise NumericalError(
            f"rho={rho} outside the admissible open interval ({lo}, {hi})"
        )
