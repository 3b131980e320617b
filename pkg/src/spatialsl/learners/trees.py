"""Tree learners: CART, bagging, random forest, extra trees and two boosters."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._tree import build_tree, predict_tree
from .base import Learner, _stable_mean


@dataclass
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    gain: np.ndarray
    weight: np.ndarray

    def predict(self, X):
        return predict_tree(X, self.feature, self.threshold, self.left, self.right, self.value)

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature < 0))

    def feature_gains(self, p: int) -> np.ndarray:
        """Total split gain per covariate (half the weighted SSE reduction for CART)."""
        out = np.zeros(p)
        split = self.feature >= 0
        np.add.at(out, self.feature[split], self.gain[split])
        return out


def grow(X, g, h, t, rows=None, *, max_depth=-1, min_samples_split=2, min_samples_leaf=1,
         max_features=None, extra=False, lam=0.0, gamma=0.0, min_child_weight=0.0,
         seed=0) -> Tree:
    p = X.shape[1]
    if rows is None:
        rows = np.arange(X.shape[0], dtype=np.int64)
    mf = p if max_features is None else int(min(max(1, max_features), p))
    arrays = build_tree(np.ascontiguousarray(X), np.ascontiguousarray(g, dtype=float),
                        np.ascontiguousarray(h, dtype=float), np.ascontiguousarray(t, dtype=float),
                        np.asarray(rows, dtype=np.int64), int(max_depth), int(min_samples_split),
                        int(min_samples_leaf), mf, bool(extra), float(lam), float(gamma),
                        float(min_child_weight), int(seed) % (2**32 - 1))
    return Tree(*arrays)


def _cart(X, y, w, seed, **kw):
    """Weighted variance-reduction tree on ``y``; leaf values are weighted means."""
    rows = np.flatnonzero(w > 0)
    # centring on a data value keeps constant leaves exact; the minimum does
    # not depend on row order
    ref = y[rows].min()
    tree = grow(X, -w * (y - ref), w, y, rows, seed=seed, **kw)
    tree.value = tree.value + ref
    return tree


def _tree_seeds(seed, n):
    return np.random.default_rng(seed).integers(0, 2**31 - 1, size=n)


class _Ensemble(Learner):
    def _predict(self, X):
        acc = np.zeros(X.shape[0])
        for tree in self.trees_:
            acc += tree.predict(X)
        return acc / len(self.trees_)

    def feature_importances(self) -> np.ndarray:
        """Split gains per covariate averaged over trees, normalised to sum 1."""
        if self.constant_ is not None:
            return np.zeros(self.n_features_)
        tot = np.mean([t.feature_gains(self.n_features_) for t in self.trees_], axis=0)
        s = tot.sum()
        return tot / s if s > 0 else tot


class DecisionTree(_Ensemble):
    name = "decision_tree"
    defaults = {"max_depth": -1, "min_samples_split": 2, "min_samples_leaf": 1}

    def _fit(self, X, y, seed):
        w = np.ones(X.shape[0])
        self.trees_ = [_cart(X, y, w, seed, **self.params)]


class Bagging(_Ensemble):
    name = "bagging"
    defaults = {"n_estimators": 10, "max_depth": -1, "min_samples_split": 2,
                "min_samples_leaf": 1, "max_features": None, "bootstrap": True, "extra": False}

    def _fit(self, X, y, seed):
        n = X.shape[0]
        boot_seq, tree_seq = np.random.SeedSequence(seed).spawn(2)
        rng = np.random.default_rng(boot_seq)
        p = self.params
        mf = self._max_features(X.shape[1])
        trees = []
        for s in _tree_seeds(tree_seq, int(p["n_estimators"])):
            if p["bootstrap"]:
                w = np.bincount(rng.integers(0, n, size=n), minlength=n).astype(float)
            else:
                w = np.ones(n)
            trees.append(_cart(X, y, w, int(s), max_depth=p["max_depth"],
                               min_samples_split=p["min_samples_split"],
                               min_samples_leaf=p["min_samples_leaf"],
                               max_features=mf, extra=p["extra"]))
        self.trees_ = trees

    def _max_features(self, p):
        mf = self.params["max_features"]
        if mf is None:
            return p
        if isinstance(mf, float) and mf <= 1.0:
            return max(1, int(mf * p))
        return int(mf)


class RandomForest(Bagging):
    name = "random_forest"
    defaults = {**Bagging.defaults, "n_estimators": 100, "max_features": 1.0 / 3.0}


class ExtraTrees(Bagging):
    name = "extra_trees"
    defaults = {**Bagging.defaults, "n_estimators": 100, "bootstrap": False, "extra": True}


class GradientBoosting(Learner):
    """Least-squares boosting of shallow trees with shrinkage."""

    name = "gradient_boosting"
    defaults = {"n_estimators": 100, "learning_rate": 0.1, "max_depth": 3,
                "min_samples_split": 2, "min_samples_leaf": 1}
    _second_order = False

    def _fit(self, X, y, seed):
        p = self.params
        self.init_ = _stable_mean(y)
        F = np.full(X.shape[0], self.init_)
        h = np.ones(X.shape[0])
        lr = float(p["learning_rate"])
        trees = []
        for s in _tree_seeds(seed, int(p["n_estimators"])):
            g = F - y
            if self._second_order:
                tree = grow(X, g, h, g, max_depth=p["max_depth"], lam=p["reg_lambda"],
                            gamma=p["gamma"], min_child_weight=p["min_child_weight"],
                            min_samples_split=p["min_samples_split"],
                            min_samples_leaf=p["min_samples_leaf"], seed=int(s))
            else:
                tree = grow(X, g, h, g, max_depth=p["max_depth"],
                            min_samples_split=p["min_samples_split"],
                            min_samples_leaf=p["min_samples_leaf"], seed=int(s))
            F = F + lr * tree.predict(X)
            trees.append(tree)
        self.trees_ = trees

    def _predict(self, X):
        lr = float(self.params["learning_rate"])
        F = np.full(X.shape[0], self.init_)
        for tree in self.trees_:
            F = F + lr * tree.predict(X)
        return F

    def feature_importances(self) -> np.ndarray:
        if self.constant_ is not None:
            return np.zeros(self.n_features_)
        tot = np.mean([t.feature_gains(self.n_features_) for t in self.trees_], axis=0)
        s = tot.sum()
        return tot / s if s > 0 else tot


class RegularizedBoosting(GradientBoosting):
    """Second-order boosting: Newton leaf weights -G/(H+lambda), split gain penalised by gamma."""

    name = "regularized_boosting"
    defaults = {**GradientBoosting.defaults, "reg_lambda": 1.0, "gamma": 0.0,
                "min_child_weight": 1.0}
    _second_order = True
