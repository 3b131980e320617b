"""Stage 1: fold assignment, out-of-fold meta-features and full-data refits."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import PixelDataset
from .errors import ConstantColumn, LearnerFailure, SchemaMismatch, TooFewRows
from .learners import Learner, LearnerSpec, check_library
from .seeding import derive_seed


@dataclass(frozen=True, eq=False)
class FoldAssignment:
    labels: np.ndarray  # 0-based fold index per row
    K: int
    seed: int

    def rows(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.labels == k)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.K)


def make_folds(n: int, K: int = 10, seed: int = 0) -> FoldAssignment:
    """Uniform random partition of ``range(n)`` into K folds whose sizes differ by at most one."""
    if K < 2:
        raise TooFewRows("need at least 2 folds")
    if n < K:
        raise TooFewRows(f"cannot split {n} rows into {K} folds")
    rng = np.random.default_rng(seed)
    labels = np.empty(n, dtype=np.int64)
    labels[rng.permutation(n)] = np.arange(n) % K
    return FoldAssignment(labels, K, seed)


@dataclass(frozen=True, eq=False)
class MetaFeatures:
    Z: np.ndarray
    names: tuple[str, ...]
    ids: np.ndarray
    coords: np.ndarray
    y: np.ndarray

    def to_dataset(self, response_name="dnbr", distance_unit="unit") -> PixelDataset:
        return PixelDataset(ids=self.ids, coords=self.coords, X=self.Z, y=self.y,
                            columns=tuple(f"z_{nm}" for nm in self.names),
                            response_name=response_name, distance_unit=distance_unit)

    @classmethod
    def from_dataset(cls, ds: PixelDataset) -> "MetaFeatures":
        if not all(c.startswith("z_") for c in ds.columns):
            raise SchemaMismatch("meta-feature columns must be named z_<learner>")
        return cls(ds.X, tuple(c[2:] for c in ds.columns), ds.ids, ds.coords, ds.y)


def _require_complete(data: PixelDataset):
    if not data.complete:
        raise SchemaMismatch("covariates contain missing values; impute first")


def _config_key(spec: LearnerSpec) -> str:
    return spec.kind + repr(sorted(spec.params.items()))


def _map(fn, tasks, threads):
    if threads is None or threads <= 1:
        return [fn(t) for t in tasks]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, tasks))


def oof_matrix(library: Sequence[LearnerSpec], data: PixelDataset, folds: FoldAssignment,
               seed: int = 0, threads: int = 1) -> MetaFeatures:
    """Out-of-fold predictions: row i of column l comes from learner l fitted without fold(i)."""
    check_library(library)
    _require_complete(data)
    if folds.labels.shape[0] != data.n:
        raise SchemaMismatch("fold assignment does not match dataset size")
    Z = np.empty((data.n, len(library)))

    def task(item):
        k, li = item
        spec = library[li]
        test = folds.rows(k)
        train = np.flatnonzero(folds.labels != k)
        try:
            # learner seed depends on the learner config and the held-out set, not on fold labels
            s = derive_seed(seed, "learner", _config_key(spec), int(data.ids[test].min()))
            model = spec.build().fit(data.X[train], data.y[train], seed=s)
            return test, li, model.predict(data.X[test])
        except Exception as e:  # abort the whole run with context
            raise LearnerFailure(spec.name, k, e) from e

    tasks = [(k, li) for k in range(folds.K) for li in range(len(library))]
    for test, li, pred in _map(task, tasks, threads):
        Z[test, li] = pred
    if not np.all(np.isfinite(Z)):
        raise LearnerFailure("?", -1, "non-finite out-of-fold prediction")
    return MetaFeatures(Z, tuple(s.name for s in library), data.ids, data.coords, data.y)


def refit_full(library: Sequence[LearnerSpec], train: PixelDataset, test_X, seed: int = 0,
               threads: int = 1):
    """Fit each learner once on all training rows.

    Returns ``(Z_train_fitted, Z_test, fitted)`` where ``fitted`` maps learner
    name to the fitted model.
    """
    check_library(library)
    _require_complete(train)
    test_X = np.asarray(test_X, dtype=float).reshape(-1, train.p)

    def task(li):
        spec = library[li]
        try:
            s = derive_seed(seed, "learner", _config_key(spec), "full")
            model = spec.build().fit(train.X, train.y, seed=s)
        except Exception as e:
            raise LearnerFailure(spec.name, "full", e) from e
        return model, model.predict(train.X), model.predict(test_X)

    out = _map(task, range(len(library)), threads)
    Z_train = np.column_stack([o[1] for o in out]) if out else np.empty((train.n, 0))
    Z_test = np.column_stack([o[2] for o in out]).reshape(test_X.shape[0], len(library))
    fitted = {spec.name: o[0] for spec, o in zip(library, out)}
    return Z_train, Z_test, fitted


def learner_correlations(meta) -> np.ndarray:
    """Pearson correlation matrix between meta-feature columns."""
    Z = meta.Z if isinstance(meta, MetaFeatures) else np.asarray(meta, dtype=float)
    Zc = Z - Z.mean(axis=0)
    norms = np.sqrt(np.einsum("ij,ij->j", Zc, Zc))
    if np.any(norms == 0):
        raise ConstantColumn(f"constant meta-feature column(s): {np.flatnonzero(norms == 0).tolist()}")
    C = (Zc.T @ Zc) / np.outer(norms, norms)
    C = 0.5 * (C + C.T)
    np.fill_diagonal(C, 1.0)
    return np.clip(C, -1.0, 1.0)
