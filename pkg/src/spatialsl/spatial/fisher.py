"""Maximum likelihood for the spatial linear model by Fisher scoring."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import NotConverged, RankDeficientDesign, SingularConditioning
from .covariance import GPParams
from .ordering import VecchiaConfig, vecchia_config
from .vecchia import (
    LOG_2PI,
    fsum_rows,
    gls_beta,
    score_and_information,
    whiten,
)

PARAM_NAMES = ("sigma2", "tau2", "phi")


@dataclass
class GPFit:
    params: GPParams
    stderr_beta: np.ndarray
    loglik: float
    iterations: int
    converged: bool
    beta_cov: np.ndarray = None
    information: np.ndarray = None
    free: tuple = PARAM_NAMES
    trace: list = field(default_factory=list)
    k: int = 15

    def report(self, names=None) -> dict:
        names = list(names) if names is not None else [f"w{i}" for i in range(1, self.params.beta.size)]
        return {
            "coefficients": [
                {"name": nm, "estimate": float(b), "stderr": float(s)}
                for nm, b, s in zip(["intercept", *names], self.params.beta, self.stderr_beta)
            ],
            "sigma2": float(self.params.sigma2),
            "tau2": float(self.params.tau2),
            "phi": float(self.params.phi),
            "loglik": float(self.loglik),
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
            "free_parameters": list(self.free),
            "vecchia_k": int(self.k),
            "trace": self.trace,
        }


def ols(y, W):
    """Least-squares coefficients and the MLE residual variance RSS/n."""
    beta, *_ = np.linalg.lstsq(W, y, rcond=None)
    resid = y - W @ beta
    return beta, float(resid @ resid) / y.shape[0]


def default_init(y, W, coords, seed: int = 0) -> dict:
    """OLS beta, half the residual variance to each variance term, phi = max distance / 10."""
    beta, _ = ols(y, W)
    s2 = float(np.var(y - W @ beta)) or 1.0
    n = coords.shape[0]
    rows = np.arange(n)
    if n > 1000:
        rows = np.sort(np.random.default_rng(seed).choice(n, 1000, replace=False))
    sub = coords[rows]
    diff = sub[:, None, :] - sub[None, :, :]
    dmax = float(np.sqrt((diff * diff).sum(-1)).max())
    return {"beta": beta, "sigma2": 0.5 * s2, "tau2": 0.5 * s2, "phi": 0.1 * dmax if dmax > 0 else 1.0}


def _check_design(y, W):
    n, q = W.shape
    if n <= q:
        raise RankDeficientDesign(f"need more sites ({n}) than mean coefficients ({q})")
    if np.linalg.matrix_rank(W) < q:
        raise RankDeficientDesign("design matrix is not full column rank")


def fit_fisher_scoring(y, W, coords, config: VecchiaConfig | None = None, init: dict | None = None,
                       fixed: dict | None = None, k: int = 15, max_iter: int = 100,
                       tol: float = 1e-8, max_halvings: int = 10, threads: int = 1,
                       raise_on_failure: bool = False) -> GPFit:
    """Maximise the Vecchia likelihood over (beta, sigma2, tau2, phi).

    beta is profiled out by GLS at every covariance update; the covariance
    parameters take Fisher scoring steps on the log scale with step halving.
    ``fixed`` pins any of sigma2/tau2/phi (e.g. ``{"sigma2": 0.0}`` for the
    independent-error model, which also pins phi).
    """
    y = np.asarray(y, dtype=float).reshape(-1)
    W = np.asarray(W, dtype=float)
    if W.ndim == 1:
        W = W.reshape(-1, 1)
    coords = np.asarray(coords, dtype=float)
    _check_design(y, W)
    if config is None:
        config = vecchia_config(coords, k)
    start = default_init(y, W, coords)
    start.update(init or {})
    fixed = dict(fixed or {})
    if fixed.get("sigma2", None) == 0.0:
        fixed.setdefault("phi", start["phi"])
    vals = {nm: float(fixed.get(nm, start[nm])) for nm in PARAM_NAMES}
    free = [i for i, nm in enumerate(PARAM_NAMES) if nm not in fixed]
    yvar = float(np.var(y)) or 1.0
    dscale = start["phi"] * 10.0
    lo = np.log(np.array([1e-10 * yvar, 1e-10 * yvar, 1e-6 * dscale]))
    hi = np.log(np.array([1e4 * yvar, 1e4 * yvar, 1e4 * dscale]))

    def unpack(theta):
        v = dict(vals)
        for i in free:
            v[PARAM_NAMES[i]] = float(np.exp(theta[i]))
        return v

    def evaluate(theta):
        v = unpack(theta)
        params = GPParams(np.zeros(W.shape[1]), v["sigma2"], v["tau2"], v["phi"])
        p1 = whiten(y, W, coords, config, params, allow_jitter=True, threads=threads)
        beta, cov = gls_beta(p1)
        z = p1.ytil - p1.Wtil @ beta
        ll = float(fsum_rows(-0.5 * LOG_2PI - p1.logsd - 0.5 * z * z))
        return ll, params.with_(beta=beta), cov

    theta = np.array([math.log(vals[nm]) if vals[nm] > 0 else -np.inf for nm in PARAM_NAMES])
    theta[free] = np.clip(theta[free], lo[free], hi[free])
    ll, params, cov = evaluate(theta)
    trace = [{"iteration": 0, "loglik": ll, **params.to_dict()}]
    converged = False
    it = 0
    info_free = np.zeros((len(free), len(free)))
    if not free:
        converged = True
    while free and it < max_iter:
        it += 1
        g, info = score_and_information(params, y, W, coords, config, threads=threads)
        g = g[free]
        info_free = info[np.ix_(free, free)]
        w, V = np.linalg.eigh(info_free)
        w = np.maximum(w, 1e-8 * max(w.max(), 1e-300))
        step = V @ ((V.T @ g) / w)
        # keep log-scale steps moderate; halving handles the rest
        big = np.abs(step).max()
        if big > 3.0:
            step *= 3.0 / big
        accepted = False
        for h in range(max_halvings + 1):
            cand = theta.copy()
            cand[free] = np.clip(theta[free] + step / (2 ** h), lo[free], hi[free])
            try:
                ll_new, p_new, cov_new = evaluate(cand)
            except SingularConditioning:
                continue
            if ll_new >= ll:
                accepted = True
                break
        if not accepted:
            # no ascent along the scoring direction: numerically at the maximum
            converged = bool(abs(float(g @ step)) < 1e-6 * max(1.0, abs(ll)))
            break
        rel = abs(ll_new - ll) / max(abs(ll), 1e-300)
        theta, ll, params, cov = cand, ll_new, p_new, cov_new
        trace.append({"iteration": it, "loglik": ll, "halvings": h, **params.to_dict()})
        if rel < tol:
            converged = True
            break
    if free:
        _, info = score_and_information(params, y, W, coords, config, threads=threads)
        info_free = info[np.ix_(free, free)]
    fit = GPFit(params=params, stderr_beta=np.sqrt(np.maximum(np.diag(cov), 0.0)), loglik=ll,
                iterations=it, converged=converged, beta_cov=cov, information=info_free,
                free=tuple(PARAM_NAMES[i] for i in free), trace=trace, k=config.k)
    if raise_on_failure and not converged:
        raise NotConverged(f"Fisher scoring did not converge in {it} iterations")
    return fit
