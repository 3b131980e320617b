from __future__ import annotations

import numpy as np

from ..errors import DegenerateDesign, NotFitted


def _stable_mean(v):
    # exact for constant vectors, which sum/len is not
    return float(v[0] + np.mean(v - v[0]))


class Learner:
    """fit/predict regressor with explicit hyperparameters.

    Subclasses set ``name``, ``defaults`` and implement ``_fit``/``_predict``.
    ``standardize`` switches on train-set z-scoring of the covariates.
    """

    name = "learner"
    defaults: dict = {}
    standardize = False

    def __init__(self, **params):
        unknown = set(params) - set(self.defaults)
        if unknown:
            raise ValueError(f"{self.name}: unknown hyperparameters {sorted(unknown)}")
        self.params = {**self.defaults, **params}
        self._fitted = False

    def __repr__(self):
        args = ", ".join(f"{k}={v!r}" for k, v in self.params.items())
        return f"{type(self).__name__}({args})"

    def fit(self, X, y, seed: int = 0) -> "Learner":
        X = np.ascontiguousarray(X, dtype=float)
        y = np.asarray(y, dtype=float).reshape(-1)
        if X.ndim != 2 or X.shape[0] != y.shape[0]:
            raise DegenerateDesign(f"{self.name}: X and y shapes disagree")
        if X.shape[0] < 2:
            raise DegenerateDesign(f"{self.name}: need at least 2 rows")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise DegenerateDesign(f"{self.name}: inputs must be finite (impute first)")
        self.n_features_ = X.shape[1]
        if self.standardize:
            self.x_mean_ = X.mean(axis=0)
            sd = X.std(axis=0)
            self.x_scale_ = np.where(sd > 0, sd, 1.0)
            X = (X - self.x_mean_) / self.x_scale_
        if np.all(y == y[0]):
            self.constant_ = float(y[0])
        else:
            self.constant_ = None
            self._fit(X, y, int(seed))
        self._fitted = True
        return self

    def predict(self, X) -> np.ndarray:
        if not self._fitted:
            raise NotFitted(f"{self.name} must be fitted before predict")
        X = np.ascontiguousarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features_:
            raise DegenerateDesign(f"{self.name}: expected {self.n_features_} columns")
        if X.shape[0] == 0:
            return np.empty(0)
        if self.constant_ is not None:
            return np.full(X.shape[0], self.constant_)
        if self.standardize:
            X = (X - self.x_mean_) / self.x_scale_
        return self._predict(X)

    def _fit(self, X, y, seed):
        raise NotImplementedError

    def _predict(self, X):
        raise NotImplementedError


class MeanRegressor(Learner):
    """Predicts the training mean. Useful as a reference column."""

    name = "mean"

    def _fit(self, X, y, seed):
        self.mean_ = _stable_mean(y)

    def _predict(self, X):
        return np.full(X.shape[0], self.mean_)
