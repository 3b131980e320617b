from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np


@dataclass(frozen=True)
class GPParams:
    """Mean coefficients (intercept first) and exponential covariance parameters."""

    beta: np.ndarray
    sigma2: float
    tau2: float
    phi: float

    def __post_init__(self):
        object.__setattr__(self, "beta", np.asarray(self.beta, dtype=float).reshape(-1))
        if self.sigma2 < 0 or self.tau2 < 0:
            raise ValueError("variances must be nonnegative")
        if not (self.sigma2 + self.tau2 > 0):
            raise ValueError("sigma2 + tau2 must be positive")
        if not (self.phi > 0 and np.isfinite(self.phi)):
            raise ValueError("phi must be positive and finite")

    @property
    def total_variance(self) -> float:
        return self.sigma2 + self.tau2

    def with_(self, **kw) -> "GPParams":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        return {"beta": [float(b) for b in self.beta], "sigma2": float(self.sigma2),
                "tau2": float(self.tau2), "phi": float(self.phi)}


def covariance(d, params: GPParams, same_site: bool | None = None):
    """Exponential covariance ``sigma2 * exp(-d/phi)``, plus ``tau2`` for a site with itself.

    ``same_site`` defaults to ``d == 0``; pass ``False`` for two distinct
    sites that happen to share a location.
    """
    d = np.asarray(d, dtype=float)
    c = params.sigma2 * np.exp(-d / params.phi)
    same = (d == 0) if same_site is None else same_site
    out = c + np.where(same, params.tau2, 0.0)
    return float(out) if out.ndim == 0 else out


def pairwise_distances(a, b=None) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    b = a if b is None else np.asarray(b, dtype=float)
    diff = a[..., :, None, :] - b[..., None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=-1))


def covariance_matrix(coords, params: GPParams, nugget: bool = True) -> np.ndarray:
    """Dense n x n covariance; the nugget sits on the diagonal only."""
    D = pairwise_distances(coords)
    C = params.sigma2 * np.exp(-D / params.phi)
    if nugget:
        C[np.diag_indices_from(C)] += params.tau2
    return C
