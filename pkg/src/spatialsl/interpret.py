"""Variable importance (impurity and permutation) and accumulated local effects."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .errors import ConstantCovariate, NotTreeEnsemble
from .seeding import derive_seed


def _predictor(model):
    fn = model if callable(model) and not hasattr(model, "predict") else model.predict

    def f(X):
        out = fn(X)
        if isinstance(out, tuple):  # (mean, variance) from spatial models
            out = out[0]
        return np.asarray(out, dtype=float).reshape(-1)
    return f


def _names(columns, p):
    return tuple(columns) if columns is not None else tuple(f"x{j + 1}" for j in range(p))


@dataclass
class ImportanceReport:
    columns: tuple
    importances: np.ndarray
    method: str               # "impurity" or "permutation"
    repeats: int = 0
    seed: int | None = None
    std: np.ndarray | None = None
    raw: np.ndarray | None = None   # repeats x p score drops

    def ranks(self) -> np.ndarray:
        """1 = most important; ties share the order of first appearance."""
        order = np.argsort(-self.importances, kind="stable")
        r = np.empty_like(order)
        r[order] = np.arange(1, order.size + 1)
        return r

    def top(self) -> str:
        return self.columns[int(np.argmax(self.importances))]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["covariate", "importance", "std", "rank", "method"])
        std = self.std if self.std is not None else np.zeros_like(self.importances)
        for nm, v, s, r in zip(self.columns, self.importances, std, self.ranks()):
            w.writerow([nm, repr(float(v)), repr(float(s)), int(r), self.method])
        return buf.getvalue()


def impurity_importance(model, columns=None) -> ImportanceReport:
    """Split-gain importance of a fitted tree learner (mean over trees, normalised to sum 1)."""
    fn = getattr(model, "feature_importances", None)
    if fn is None:
        raise NotTreeEnsemble(f"{type(model).__name__} has no tree structure")
    imp = np.asarray(fn(), dtype=float)
    return ImportanceReport(_names(columns, imp.size), imp, "impurity")


def r2_score(y, pred) -> float:
    y = np.asarray(y, dtype=float)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum((y - pred) ** 2))
    if ss_tot == 0:
        return 1.0 if ss_res == 0 else 0.0
    return 1.0 - ss_res / ss_tot


def permutation_importance(model, X, y, repeats: int = 10, seed: int = 0,
                           columns=None) -> ImportanceReport:
    """Mean drop in R^2 when one column is shuffled; the model is not refit."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    n, p = X.shape
    if n < 2:
        raise ValueError("permutation importance needs at least 2 rows")
    f = _predictor(model)
    base = r2_score(y, f(X))
    raw = np.empty((repeats, p))
    for j in range(p):
        rng = np.random.default_rng(derive_seed(seed, "pfi", j))
        Xp = X.copy()
        for r in range(repeats):
            Xp[:, j] = X[rng.permutation(n), j]
            raw[r, j] = base - r2_score(y, f(Xp))
    return ImportanceReport(_names(columns, p), raw.mean(axis=0), "permutation", repeats, seed,
                            raw.std(axis=0), raw)


@dataclass
class ALECurve:
    covariate: str
    edges: np.ndarray        # strictly increasing, n_bins + 1
    effects: np.ndarray      # centred effect per bin (count-weighted mean 0)
    edge_values: np.ndarray  # centred accumulated effect at each edge
    counts: np.ndarray

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["covariate", "lower", "upper", "count", "effect", "effect_at_upper"])
        for k in range(self.counts.size):
            w.writerow([self.covariate, repr(float(self.edges[k])), repr(float(self.edges[k + 1])),
                        int(self.counts[k]), repr(float(self.effects[k])),
                        repr(float(self.edge_values[k + 1]))])
        return buf.getvalue()


def _bin_index(x, edges):
    return np.clip(np.searchsorted(edges, x, side="left") - 1, 0, edges.size - 2)


def ale(model, X, j: int, n_bins: int = 20, column: str | None = None) -> ALECurve:
    """First-order ALE of covariate j over equal-count quantile bins.

    Duplicate quantiles are merged and an empty bin is folded into its left
    neighbour.
    """
    if n_bins < 2:
        raise ValueError("n_bins must be >= 2")
    X = np.asarray(X, dtype=float)
    xj = X[:, j]
    if np.all(xj == xj[0]):
        raise ConstantCovariate(f"covariate {column or j} is constant")
    edges = np.unique(np.quantile(xj, np.linspace(0.0, 1.0, n_bins + 1)))
    while True:
        counts = np.bincount(_bin_index(xj, edges), minlength=edges.size - 1)
        empty = np.flatnonzero(counts == 0)
        if empty.size == 0:
            break
        k = int(empty[0])
        edges = np.delete(edges, max(k, 1))
    idx = _bin_index(xj, edges)
    f = _predictor(model)
    lo, hi = X.copy(), X.copy()
    lo[:, j] = edges[idx]
    hi[:, j] = edges[idx + 1]
    diff = f(hi) - f(lo)
    local = np.bincount(idx, weights=diff, minlength=counts.size) / counts
    acc = np.concatenate([[0.0], np.cumsum(local)])
    mid = 0.5 * (acc[:-1] + acc[1:])
    c = float(np.sum(counts * mid) / counts.sum())
    name = column if column is not None else f"x{j + 1}"
    return ALECurve(name, edges, mid - c, acc - c, counts)


def plot_ale(curve: ALECurve, path) -> None:
    """Render an ALE curve to an image file (needs matplotlib)."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(4.5, 3.2))
    ax.plot(curve.edges, curve.edge_values, marker="o", ms=2.5, lw=1.2)
    ax.axhline(0.0, color="0.6", lw=0.6)
    ax.set_xlabel(curve.covariate)
    ax.set_ylabel("ALE")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
