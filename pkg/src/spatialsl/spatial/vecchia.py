"""Vecchia log-likelihood, its gradient and Fisher information.

Position j contributes ``log p(y_j | y_N(j))``. Each conditional is evaluated
on the block B = N(j) + {j} (site j last) as ``log p(r_B) - log p(r_N)``;
blocks are padded to a common size with identity rows so they batch through
numpy's stacked linear algebra. Covariance parameters are handled on the log
scale: theta = (log sigma2, log tau2, log phi).
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..errors import SingularConditioning
from .covariance import GPParams
from .ordering import VecchiaConfig

LOG_2PI = math.log(2.0 * math.pi)
CHUNK = 2048
JITTER_STEPS = (1e-10, 1e-8, 1e-6, 1e-4)


def fsum_rows(a) -> np.ndarray:
    """Correctly rounded column sums; independent of row order and chunking."""
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        return np.array(math.fsum(a))
    flat = a.reshape(a.shape[0], -1)
    return np.array([math.fsum(flat[:, c]) for c in range(flat.shape[1])]).reshape(a.shape[1:])


def _chunks(n, size=CHUNK):
    return [(a, min(a + size, n)) for a in range(0, n, size)]


def _pmap(fn, items, threads):
    if threads is None or threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


def _block_geometry(coords, config: VecchiaConfig, a, b):
    """Index/validity arrays and distances for positions a..b-1 (site j last)."""
    sites = config.order[a:b]
    nb = config.neighbors[a:b]
    idx = np.concatenate([nb, sites[:, None]], axis=1)
    valid = idx >= 0
    safe = np.where(valid, idx, sites[:, None])
    P = coords[safe]
    diff = P[:, :, None, :] - P[:, None, :, :]
    D = np.sqrt(np.sum(diff * diff, axis=-1))
    pair = valid[:, :, None] & valid[:, None, :]
    return sites, safe, valid, pair, D


def _block_cov(D, pair, params: GPParams):
    m = D.shape[-1]
    R = np.where(pair, np.exp(-D / params.phi), 0.0)
    S = params.sigma2 * R
    diag = np.arange(m)
    validd = pair[:, diag, diag]
    S[:, diag, diag] += np.where(validd, params.tau2, 1.0)
    return S, R


def _cholesky(S, params, sites, allow_jitter):
    try:
        return np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        pass
    L = np.empty_like(S)
    m = S.shape[-1]
    eye = np.eye(m)
    scale = params.sigma2 + params.tau2
    for i in range(S.shape[0]):
        try:
            L[i] = np.linalg.cholesky(S[i])
            continue
        except np.linalg.LinAlgError:
            if not allow_jitter:
                raise SingularConditioning(int(sites[i])) from None
        for eps in JITTER_STEPS:
            try:
                L[i] = np.linalg.cholesky(S[i] + eps * scale * eye)
                break
            except np.linalg.LinAlgError:
                continue
        else:
            raise SingularConditioning(int(sites[i]))
    return L


@dataclass
class _Pass1:
    logsd: np.ndarray   # log conditional sd per position
    ytil: np.ndarray    # whitened response per position
    Wtil: np.ndarray    # whitened design per position


def _pass1_chunk(y, W, coords, config, params, a, b, allow_jitter):
    sites, safe, valid, pair, D = _block_geometry(coords, config, a, b)
    S, _ = _block_cov(D, pair, params)
    L = _cholesky(S, params, sites, allow_jitter)
    yB = np.where(valid, y[safe], 0.0)
    WB = np.where(valid[:, :, None], W[safe], 0.0)
    rhs = np.concatenate([yB[:, :, None], WB], axis=2)
    sol = np.linalg.solve(L, rhs)
    last = sol[:, -1, :]
    return _Pass1(np.log(L[:, -1, -1]), last[:, 0], last[:, 1:])


def whiten(y, W, coords, config: VecchiaConfig, params: GPParams, allow_jitter=True,
           threads=1) -> _Pass1:
    n = config.n
    parts = _pmap(lambda ab: _pass1_chunk(y, W, coords, config, params, *ab, allow_jitter),
                  _chunks(n), threads)
    return _Pass1(np.concatenate([p.logsd for p in parts]),
                  np.concatenate([p.ytil for p in parts]),
                  np.concatenate([p.Wtil for p in parts]))


def _prepare(y, W, coords):
    y = np.asarray(y, dtype=float).reshape(-1)
    W = np.asarray(W, dtype=float)
    if W.ndim == 1:
        W = W.reshape(-1, 1)
    coords = np.asarray(coords, dtype=float)
    return y, W, coords


def vecchia_loglik(params: GPParams, y, W, coords, config: VecchiaConfig,
                   allow_jitter=False, threads=1) -> float:
    """Vecchia log-likelihood at the given mean coefficients and covariance."""
    y, W, coords = _prepare(y, W, coords)
    p1 = whiten(y, W, coords, config, params, allow_jitter, threads)
    z = p1.ytil - p1.Wtil @ params.beta
    terms = -0.5 * LOG_2PI - p1.logsd - 0.5 * z * z
    return float(fsum_rows(terms))


def gls_beta(p1: _Pass1):
    """GLS coefficients and their covariance under the Vecchia precision."""
    Wt = p1.Wtil
    q = Wt.shape[1]
    A = np.empty((q, q))
    for i in range(q):
        for j in range(i, q):
            A[i, j] = A[j, i] = math.fsum(Wt[:, i] * Wt[:, j])
    c = np.array([math.fsum(Wt[:, i] * p1.ytil) for i in range(q)])
    cov = np.linalg.inv(A)
    beta = np.linalg.solve(A, c)
    return beta, cov


def profile_loglik(sigma2, tau2, phi, y, W, coords, config, allow_jitter=True, threads=1):
    """Log-likelihood maximised over beta; returns (loglik, beta, beta_cov)."""
    y, W, coords = _prepare(y, W, coords)
    params = GPParams(np.zeros(W.shape[1]), sigma2, tau2, phi)
    p1 = whiten(y, W, coords, config, params, allow_jitter, threads)
    beta, cov = gls_beta(p1)
    z = p1.ytil - p1.Wtil @ beta
    terms = -0.5 * LOG_2PI - p1.logsd - 0.5 * z * z
    return float(fsum_rows(terms)), beta, cov


def _score_chunk(resid, coords, config, params, a, b, allow_jitter):
    sites, safe, valid, pair, D = _block_geometry(coords, config, a, b)
    S, R = _block_cov(D, pair, params)
    m = S.shape[-1]
    L = _cholesky(S, params, sites, allow_jitter)
    Linv = np.linalg.inv(L)
    # derivatives of the block covariance w.r.t. log sigma2, log tau2, log phi
    dS = np.empty((3,) + S.shape)
    dS[0] = params.sigma2 * R
    dS[1] = 0.0
    diag = np.arange(m)
    dS[1][:, diag, diag] = np.where(valid, params.tau2, 0.0)
    dS[2] = params.sigma2 * R * (D / params.phi)
    r = np.where(valid, resid[safe], 0.0)

    grad = np.zeros((b - a, 3))
    info = np.zeros((b - a, 3, 3))
    for sign, cut in ((1.0, m), (-1.0, m - 1)):
        if cut == 0:
            continue
        Li = Linv[:, :cut, :cut]
        Sinv = np.swapaxes(Li, 1, 2) @ Li
        alpha = np.einsum("nij,nj->ni", Sinv, r[:, :cut])
        A = [Sinv @ dS[t][:, :cut, :cut] for t in range(3)]
        for t in range(3):
            tr = np.einsum("nii->n", A[t])
            quad = np.einsum("ni,nij,nj->n", alpha, dS[t][:, :cut, :cut], alpha)
            grad[:, t] += sign * (-0.5 * tr + 0.5 * quad)
            for u in range(t, 3):
                val = 0.5 * np.einsum("nij,nji->n", A[t], A[u])
                info[:, t, u] += sign * val
                if u != t:
                    info[:, u, t] += sign * val
    return grad, info


def score_and_information(params: GPParams, y, W, coords, config: VecchiaConfig,
                          allow_jitter=True, threads=1):
    """Gradient and Fisher information of the Vecchia log-likelihood with respect to
    (log sigma2, log tau2, log phi), holding beta fixed at ``params.beta``."""
    y, W, coords = _prepare(y, W, coords)
    resid = y - W @ params.beta
    parts = _pmap(lambda ab: _score_chunk(resid, coords, config, params, *ab, allow_jitter),
                  _chunks(config.n), threads)
    grad = fsum_rows(np.concatenate([p[0] for p in parts]))
    info = fsum_rows(np.concatenate([p[1] for p in parts]))
    return grad, info
