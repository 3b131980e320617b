"""Synthetic data from the spatial linear model, used as test oracles."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import cholesky
from scipy.special import ndtr

from .core import PixelDataset, save_dataset
from .errors import ConfigError, SizeTooLarge
from .spatial.covariance import GPParams, pairwise_distances

MAX_DENSE = 5000
MEAN_TAGS = ("linear", "friedman", "constant")


@dataclass(frozen=True)
class SynthSpec:
    """What to simulate. ``beta`` is the linear mean (intercept first); for the
    other tags only ``beta[0]`` is used as an offset. ``scale`` multiplies the
    Friedman-style surface. sigma2 = tau2 = 0 gives y equal to the mean."""

    n: int = 500
    beta: tuple = (0.0, 1.0)
    sigma2: float = 1.0
    tau2: float = 0.25
    phi: float = 0.1
    mean: str = "linear"
    p: int | None = None
    domain: tuple = (0.0, 1.0, 0.0, 1.0)
    scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError("n must be >= 1")
        if self.mean not in MEAN_TAGS:
            raise ConfigError(f"unknown mean tag {self.mean!r}; choose from {MEAN_TAGS}")
        if self.sigma2 < 0 or self.tau2 < 0 or not self.phi > 0:
            raise ConfigError("need sigma2, tau2 >= 0 and phi > 0")
        object.__setattr__(self, "beta", tuple(float(b) for b in np.ravel(self.beta)))
        if self.mean == "friedman" and self.n_covariates < 5:
            raise ConfigError("the friedman mean needs at least 5 covariates")

    @property
    def n_covariates(self) -> int:
        if self.p is not None:
            return int(self.p)
        return max(len(self.beta) - 1, 1) if self.mean == "linear" else 5

    @property
    def params(self) -> GPParams:
        return GPParams(np.array(self.beta), self.sigma2, self.tau2, self.phi)


@dataclass
class Truth:
    spec: SynthSpec
    mean: np.ndarray      # mean function at each site
    spatial: np.ndarray   # T
    noise: np.ndarray     # epsilon
    tag: str


def friedman(X, scale=1.0):
    """Friedman #1 surface on the normal-CDF transform of the first five columns."""
    u = ndtr(X[:, :5])
    f = (10 * np.sin(np.pi * u[:, 0] * u[:, 1]) + 20 * (u[:, 2] - 0.5) ** 2
         + 10 * u[:, 3] + 5 * u[:, 4])
    return scale * f


def mean_function(spec: SynthSpec, X):
    b = np.array(spec.beta)
    if spec.mean == "linear":
        if b.size != X.shape[1] + 1:
            raise ConfigError(f"linear mean needs {X.shape[1] + 1} coefficients, got {b.size}")
        return b[0] + X @ b[1:]
    if spec.mean == "friedman":
        return b[0] + friedman(X, spec.scale)
    return np.full(X.shape[0], float(b[0]))


def simulate_gp(spec: SynthSpec, return_truth: bool = False):
    """Exact draw of y = m(X) + T + eps at uniform sites, T ~ GP(0, sigma2 exp(-d/phi)).

    Uses a dense Cholesky factor, so n is capped at ``MAX_DENSE``.
    """
    if spec.n > MAX_DENSE and spec.sigma2 > 0:
        raise SizeTooLarge(f"dense simulation limited to {MAX_DENSE} sites (asked {spec.n})")
    rng = np.random.default_rng(spec.seed)
    x0, x1, y0, y1 = spec.domain
    coords = np.column_stack([rng.uniform(x0, x1, spec.n), rng.uniform(y0, y1, spec.n)])
    X = rng.standard_normal((spec.n, spec.n_covariates))
    z = rng.standard_normal(spec.n)
    e = rng.standard_normal(spec.n)
    if spec.sigma2 > 0:
        K = spec.sigma2 * np.exp(-pairwise_distances(coords) / spec.phi)
        K[np.diag_indices_from(K)] += 1e-12 * spec.sigma2
        T = cholesky(K, lower=True) @ z
    else:
        T = np.zeros(spec.n)
    eps = np.sqrt(spec.tau2) * e
    m = mean_function(spec, X)
    ds = PixelDataset(ids=np.arange(spec.n), coords=coords, X=X, y=m + T + eps,
                      columns=tuple(f"x{j + 1}" for j in range(X.shape[1])))
    if return_truth:
        return ds, Truth(spec, m, T, eps, spec.mean)
    return ds


def plant_signal(dataset: PixelDataset, j: int, effect):
    """Add ``effect(X[:, j])`` to y. Returns (dataset', added values)."""
    if not 0 <= j < dataset.p:
        raise IndexError(f"covariate {j} out of range for {dataset.p} columns")
    delta = np.asarray(effect(np.asarray(dataset.X[:, j])), dtype=float).reshape(dataset.n)
    return dataset.replace(y=dataset.y + delta), delta


def step_effect(height=1.0, at=None):
    def f(x):
        c = np.median(x) if at is None else at
        return np.where(x > c, height, 0.0)
    return f


def truth_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".truth")


def write_simulation(dataset: PixelDataset, truth: Truth, path) -> None:
    """Dataset in the core format plus a truth sidecar (parameters, true mean per site)."""
    save_dataset(dataset, path)
    p = truth.spec
    lines = [f"mean={truth.tag}", f"n={p.n}", f"sigma2={p.sigma2!r}", f"tau2={p.tau2!r}",
             f"phi={p.phi!r}", "beta=" + ",".join(repr(b) for b in p.beta), f"p={p.n_covariates}",
             f"scale={p.scale!r}", f"seed={p.seed}", "domain=" + ",".join(repr(float(v)) for v in p.domain),
             "id,true_mean,spatial,noise"]
    lines += [f"{int(i)},{m!r},{t!r},{e!r}" for i, m, t, e in
              zip(dataset.ids, truth.mean.tolist(), truth.spatial.tolist(), truth.noise.tolist())]
    truth_path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_truth(path) -> Truth:
    text = truth_path(path).read_text(encoding="utf-8").splitlines()
    head = {}
    i = 0
    while not text[i].startswith("id,"):
        k, v = text[i].split("=", 1)
        head[k] = v
        i += 1
    rows = np.array([[float(v) for v in ln.split(",")] for ln in text[i + 1:] if ln], dtype=float)
    rows = rows.reshape(-1, 4)
    spec = SynthSpec(n=int(head["n"]), beta=tuple(float(b) for b in head["beta"].split(",")),
                     sigma2=float(head["sigma2"]), tau2=float(head["tau2"]), phi=float(head["phi"]),
                     mean=head["mean"], p=int(head["p"]), scale=float(head["scale"]),
                     seed=int(head["seed"]),
                     domain=tuple(float(v) for v in head["domain"].split(",")))
    return Truth(spec, rows[:, 1], rows[:, 2], rows[:, 3], head["mean"])
