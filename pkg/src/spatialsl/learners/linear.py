"""Penalized linear regressors on standardized covariates."""
import numpy as np
from numba import njit

from .base import Learner, _stable_mean


@njit(cache=True)
def coordinate_descent(Xs, yc, l1, l2, max_iter, tol):
    """Minimise (1/2n)||yc - Xs b||^2 + l1 ||b||_1 + (l2/2) ||b||^2 by cyclic updates."""
    n, p = Xs.shape
    b = np.zeros(p)
    r = yc.copy()
    sq = np.zeros(p)
    for j in range(p):
        s = 0.0
        for i in range(n):
            s += Xs[i, j] * Xs[i, j]
        sq[j] = s / n
    for it in range(max_iter):
        max_delta = 0.0
        max_b = 0.0
        for j in range(p):
            if sq[j] == 0.0:
                continue
            bj = b[j]
            rho = 0.0
            for i in range(n):
                rho += Xs[i, j] * r[i]
            rho = rho / n + sq[j] * bj
            if rho > l1:
                new = (rho - l1) / (sq[j] + l2)
            elif rho < -l1:
                new = (rho + l1) / (sq[j] + l2)
            else:
                new = 0.0
            d = new - bj
            if d != 0.0:
                for i in range(n):
                    r[i] -= d * Xs[i, j]
                b[j] = new
            if abs(d) > max_delta:
                max_delta = abs(d)
            if abs(new) > max_b:
                max_b = abs(new)
        if max_delta == 0.0 or max_delta <= tol * max_b:
            return b, it + 1
    return b, max_iter


class _Linear(Learner):
    standardize = True

    def _predict(self, X):
        return self.intercept_ + X @ self.coef_

    @property
    def coef_original_(self):
        """Coefficients on the unstandardized covariate scale."""
        return self.coef_ / self.x_scale_

    @property
    def intercept_original_(self):
        return self.intercept_ - float(self.x_mean_ @ self.coef_original_)


class Ridge(_Linear):
    """Minimises ||y - b0 - Xb||^2 + alpha ||b||^2."""

    name = "ridge"
    defaults = {"alpha": 1.0}

    def _fit(self, X, y, seed):
        ym = _stable_mean(y)
        U, s, Vt = np.linalg.svd(X, full_matrices=False)
        alpha = float(self.params["alpha"])
        keep = s > s.max() * max(X.shape) * np.finfo(float).eps if s.size else s > 0
        d = np.zeros_like(s)
        d[keep] = s[keep] / (s[keep] ** 2 + alpha)
        self.coef_ = Vt.T @ (d * (U.T @ (y - ym)))
        self.intercept_ = ym


class ElasticNet(_Linear):
    """Minimises (1/2n)||y - b0 - Xb||^2 + alpha*l1_ratio*|b|_1 + alpha*(1-l1_ratio)/2*||b||^2."""

    name = "elastic_net"
    defaults = {"alpha": 1.0, "l1_ratio": 0.5, "max_iter": 10000, "tol": 1e-10}

    def _fit(self, X, y, seed):
        ym = _stable_mean(y)
        a = float(self.params["alpha"])
        r = float(self.params["l1_ratio"])
        self.coef_, self.n_iter_ = coordinate_descent(
            np.ascontiguousarray(X), y - ym, a * r, a * (1 - r),
            int(self.params["max_iter"]), float(self.params["tol"]))
        self.intercept_ = ym


class Lasso(ElasticNet):
    name = "lasso"
    defaults = {"alpha": 1.0, "max_iter": 10000, "tol": 1e-10}

    def __init__(self, **params):
        super().__init__(**params)
        self.params["l1_ratio"] = 1.0


class OLS(_Linear):
    """Ordinary least squares (ridge with no penalty)."""

    name = "ols"
    defaults = {}

    def _fit(self, X, y, seed):
        ym = _stable_mean(y)
        coef, *_ = np.linalg.lstsq(X, y - ym, rcond=None)
        self.coef_ = coef
        self.intercept_ = ym
