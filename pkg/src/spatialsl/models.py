"""The four model variants (LR/SL mean x independent/spatial errors) and their evaluation."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import SeverityCategory, PixelDataset, categorize_array, concat_datasets
from .errors import EmptyTestSet, SchemaMismatch
from .learners import LearnerSpec, default_library
from .seeding import derive_seed
from .spatial import GPFit, GPParams, fit_fisher_scoring, local_krige, ols, vecchia_config
from .stacking import MetaFeatures, make_folds, oof_matrix, refit_full


@dataclass(frozen=True)
class ModelVariant:
    mean: str         # "LR" (covariates) or "SL" (base-learner predictions)
    covariance: str   # "Independent" or "Spatial"

    def __post_init__(self):
        if self.mean not in ("LR", "SL") or self.covariance not in ("Independent", "Spatial"):
            raise ValueError(f"no such variant: {self.mean}-{self.covariance}")

    @property
    def name(self) -> str:
        return f"{self.mean}-{self.covariance}"

    @classmethod
    def parse(cls, text: str) -> "ModelVariant":
        mean, _, cov = text.partition("-")
        return cls(mean, cov)


VARIANTS = (ModelVariant("LR", "Independent"), ModelVariant("LR", "Spatial"),
            ModelVariant("SL", "Independent"), ModelVariant("SL", "Spatial"))


@dataclass
class ModelConfig:
    folds: int = 10
    vecchia_k: int = 15
    pred_k: int = 60
    seed: int = 0
    threads: int = 1
    max_iter: int = 100
    library: list = None

    def learners(self) -> list[LearnerSpec]:
        return list(self.library) if self.library is not None else default_library()


@dataclass
class Stage1:
    """Out-of-fold meta-features and the full-data learner refits for one training set."""

    meta: MetaFeatures
    fitted: dict

    def z(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return np.column_stack([self.fitted[nm].predict(X) for nm in self.meta.names])


def fit_stage1(train: PixelDataset, config: ModelConfig, seed=None) -> Stage1:
    seed = config.seed if seed is None else seed
    lib = config.learners()
    folds = make_folds(train.n, config.folds, derive_seed(seed, "stage1-folds"))
    meta = oof_matrix(lib, train, folds, seed=seed, threads=config.threads)
    _, _, fitted = refit_full(lib, train, train.X[:0], seed=seed, threads=config.threads)
    return Stage1(meta, fitted)


def _design(M) -> np.ndarray:
    return np.column_stack([np.ones(M.shape[0]), M])


@dataclass
class FittedModel:
    variant: ModelVariant
    params: GPParams
    gp: GPFit | None
    W: np.ndarray           # training design (leading 1s)
    y: np.ndarray
    coords: np.ndarray
    names: tuple
    stderr_beta: np.ndarray
    stage1: Stage1 | None = None
    pred_k: int = 60
    threads: int = 1
    covariates: tuple = ()  # input covariate columns, in training order

    def design(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return _design(self.stage1.z(X) if self.variant.mean == "SL" else X)

    def predict(self, X, coords):
        """Predictive mean and variance of Y at new sites."""
        Wt = self.design(X)
        coords = np.asarray(coords, dtype=float).reshape(-1, 2)
        if self.variant.covariance == "Independent":
            return Wt @ self.params.beta, np.full(Wt.shape[0], self.params.total_variance)
        return local_krige(self.params, (self.W, self.y, self.coords), (Wt, coords),
                           k_pred=self.pred_k, threads=self.threads)

    def fitted_values(self):
        """Fitted values at the training sites: the mean function for independent
        errors, the kriging (conditional) mean given all training data otherwise."""
        if self.variant.covariance == "Independent":
            return self.W @ self.params.beta
        return local_krige(self.params, (self.W, self.y, self.coords), (self.W, self.coords),
                           k_pred=self.pred_k, threads=self.threads)[0]

    def report(self) -> dict:
        coefs = [{"name": nm, "estimate": float(b), "stderr": float(s)}
                 for nm, b, s in zip(("intercept",) + tuple(self.names), self.params.beta,
                                     self.stderr_beta)]
        out = {"variant": self.variant.name, "coefficients": coefs,
               "sigma2": float(self.params.sigma2), "tau2": float(self.params.tau2),
               "phi": float(self.params.phi)}
        if self.gp is not None:
            g = self.gp.report(self.names)
            out.update({k: g[k] for k in ("loglik", "iterations", "converged", "vecchia_k", "trace")})
        return out


def _fit_independent(W, y):
    beta, tau2 = ols(y, W)
    n, q = W.shape
    resid = y - W @ beta
    s2 = float(resid @ resid) / max(n - q, 1)
    cov = s2 * np.linalg.inv(W.T @ W)
    return GPParams(beta, 0.0, tau2, 1.0), np.sqrt(np.diag(cov))


def fit_variant(variant: ModelVariant, train: PixelDataset, config: ModelConfig | None = None,
                stage1: Stage1 | None = None) -> FittedModel:
    """Fit one variant. SL variants regress y on out-of-fold learner predictions
    and predict with the full-data refits."""
    config = config or ModelConfig()
    if not train.complete:
        raise SchemaMismatch("training data has missing covariates; preprocess first")
    if variant.mean == "SL":
        stage1 = stage1 or fit_stage1(train, config)
        M, names = stage1.meta.Z, tuple(stage1.meta.names)
    else:
        stage1, M, names = None, np.asarray(train.X), tuple(train.columns)
    W = _design(M)
    y = np.asarray(train.y, dtype=float)
    gp = None
    if variant.covariance == "Independent":
        params, se = _fit_independent(W, y)
    else:
        cfg = vecchia_config(train.coords, config.vecchia_k)
        gp = fit_fisher_scoring(y, W, train.coords, config=cfg, max_iter=config.max_iter,
                                threads=config.threads)
        params, se = gp.params, gp.stderr_beta
    return FittedModel(variant, params, gp, W, y, np.asarray(train.coords), names, se, stage1,
                       config.pred_k, config.threads, tuple(train.columns))


# --------------------------------------------------------------------------
# metrics

@dataclass(frozen=True)
class EvalReport:
    rmse: float
    ca: float
    ca_high: float | None   # None when no test site is truly High
    n_test: int
    n_high: int = 0


def evaluate(pred_mean, truth) -> EvalReport:
    """RMSE, 7-class accuracy (%) and accuracy over truly-High sites (%)."""
    pred = np.asarray(pred_mean, dtype=float).reshape(-1)
    truth = np.asarray(truth, dtype=float).reshape(-1)
    if truth.size == 0:
        raise EmptyTestSet("no test sites to evaluate")
    if pred.shape != truth.shape:
        raise SchemaMismatch("predictions and truth differ in length")
    err = pred - truth
    rmse = float(np.sqrt(np.mean(err * err)))
    cp, ct = categorize_array(pred), categorize_array(truth)
    hit = cp == ct
    ca = 100.0 * float(hit.mean())
    high = ct == int(SeverityCategory.High)
    ca_high = 100.0 * float(hit[high].mean()) if high.any() else None
    return EvalReport(rmse, ca, ca_high, int(truth.size), int(high.sum()))


# --------------------------------------------------------------------------
# protocols

@dataclass
class RunResult:
    reports: dict                      # variant name -> EvalReport
    predictions: dict = field(default_factory=dict)   # variant name -> test-fold means
    truth: np.ndarray = None


def cross_validate(dataset: PixelDataset, config: ModelConfig | None = None,
                   variants: Sequence[ModelVariant] = VARIANTS) -> RunResult:
    """K-fold CV. For every held-out fold the whole pipeline (stage-1 out-of-fold
    predictions, stage-2 fit, stage-3 prediction) sees only the other folds."""
    config = config or ModelConfig()
    if not dataset.complete:
        raise SchemaMismatch("dataset has missing covariates; preprocess first")
    folds = make_folds(dataset.n, config.folds, derive_seed(config.seed, "cv-folds"))
    preds = {v.name: np.full(dataset.n, np.nan) for v in variants}
    for k in range(folds.K):
        test = folds.rows(k)
        train = dataset.subset(np.flatnonzero(folds.labels != k))
        held = dataset.subset(test)
        seed = derive_seed(config.seed, "cv", int(held.ids.min()))
        st1 = None
        if any(v.mean == "SL" for v in variants):
            st1 = fit_stage1(train, config, seed=seed)
        for v in variants:
            model = fit_variant(v, train, config, stage1=st1)
            preds[v.name][test] = model.predict(held.X, held.coords)[0]
    reports = {name: evaluate(p, dataset.y) for name, p in preds.items()}
    return RunResult(reports, preds, np.asarray(dataset.y))


def run_within_fire(dataset: PixelDataset, config: ModelConfig | None = None,
                    variants: Sequence[ModelVariant] = VARIANTS) -> dict:
    return cross_validate(dataset, config, variants).reports


def run_combined(datasets: Sequence[PixelDataset], config: ModelConfig | None = None,
                 variants: Sequence[ModelVariant] = VARIANTS) -> dict:
    """Same protocol on the row-concatenation of several fires."""
    if len(datasets) < 1:
        raise SchemaMismatch("need at least one dataset")
    return cross_validate(concat_datasets(list(datasets)), config, variants).reports


def holdout(train: PixelDataset, test: PixelDataset, config: ModelConfig | None = None,
            variants: Sequence[ModelVariant] = VARIANTS, with_learners: bool = False) -> RunResult:
    """Fit every variant on ``train`` and score on ``test``. With ``with_learners``
    the individual base learners (full-data refits) are scored as well."""
    config = config or ModelConfig()
    st1 = fit_stage1(train, config) if any(v.mean == "SL" for v in variants) or with_learners else None
    preds = {}
    for v in variants:
        preds[v.name] = fit_variant(v, train, config, stage1=st1).predict(test.X, test.coords)[0]
    if with_learners:
        for nm in st1.meta.names:
            preds[nm] = st1.fitted[nm].predict(test.X)
    reports = {name: evaluate(p, test.y) for name, p in preds.items()}
    return RunResult(reports, preds, np.asarray(test.y))


# --------------------------------------------------------------------------
# report formatting

REPORT_COLUMNS = ("variant", "RMSE", "CA", "CA-High", "n_test")


def _num(v):
    return "" if v is None else repr(float(v))


def report_csv(reports: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for name, r in reports.items():
        w.writerow([name, _num(r.rmse), _num(r.ca), _num(r.ca_high), r.n_test])
    return buf.getvalue()


def read_report_csv(text: str) -> dict:
    rows = list(csv.reader(io.StringIO(text)))
    if tuple(rows[0]) != REPORT_COLUMNS:
        raise SchemaMismatch(f"report columns must be {REPORT_COLUMNS}")
    return {r[0]: EvalReport(float(r[1]), float(r[2]), float(r[3]) if r[3] else None, int(r[4]))
            for r in rows[1:] if r}


def report_table(reports: dict) -> str:
    """Aligned text table, one row per variant."""
    rows = [("variant", "RMSE", "CA", "CA-High", "n_test")]
    for name, r in reports.items():
        rows.append((name, f"{r.rmse:.2f}", f"{r.ca:.1f}",
                     "-" if r.ca_high is None else f"{r.ca_high:.1f}", str(r.n_test)))
    widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
    lines = ["  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in
                       enumerate(zip(row, widths))) for row in rows]
    return "\n".join(lines) + "\n"
