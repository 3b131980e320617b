from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from ..core import categorize, categorize_array
from ..errors import SingularNeighborhood
from .covariance import GPParams
from .vecchia import JITTER_STEPS, _pmap

CHUNK = 1024


def _solve_spd(C, rhs, scale):
    try:
        L = np.linalg.cholesky(C)
    except np.linalg.LinAlgError:
        L = np.empty_like(C)
        eye = np.eye(C.shape[-1])
        for i in range(C.shape[0]):
            for eps in (0.0,) + JITTER_STEPS:
                try:
                    L[i] = np.linalg.cholesky(C[i] + eps * scale * eye)
                    break
                except np.linalg.LinAlgError:
                    continue
            else:
                raise SingularNeighborhood(f"kriging neighbourhood {i} is singular")
    half = np.linalg.solve(L, rhs)
    return np.linalg.solve(np.swapaxes(L, 1, 2), half)


def _krige_chunk(params, Wtr, ytr, Ctr, Wte, Cte, nb):
    P = Ctr[nb]                                   # (m, k, 2)
    diff = P[:, :, None, :] - P[:, None, :, :]
    D = np.sqrt(np.sum(diff * diff, axis=-1))
    C = params.sigma2 * np.exp(-D / params.phi)
    kk = C.shape[-1]
    C[:, np.arange(kk), np.arange(kk)] += params.tau2
    d0 = np.sqrt(np.sum((P - Cte[:, None, :]) ** 2, axis=-1))
    c = params.sigma2 * np.exp(-d0 / params.phi)  # no nugget across sites
    r = ytr[nb] - Wtr[nb] @ params.beta
    sol = _solve_spd(C, np.stack([r, c], axis=2), params.total_variance)
    mean = Wte @ params.beta + np.einsum("mk,mk->m", c, sol[:, :, 0])
    var = params.total_variance - np.einsum("mk,mk->m", c, sol[:, :, 1])
    return mean, np.maximum(var, 0.0)


def local_krige(fit, train, test, k_pred: int = 60, threads: int = 1):
    """Predict Y at test sites from the ``k_pred`` nearest training sites.

    ``fit`` is a GPFit or GPParams; ``train = (W, y, coords)``,
    ``test = (W_star, coords_star)``. Returns (mean, variance); the variance
    includes the nugget since a new observation carries fresh noise.
    """
    params: GPParams = getattr(fit, "params", fit)
    Wtr, ytr, Ctr = (np.asarray(a, dtype=float) for a in train)
    Wte, Cte = (np.asarray(a, dtype=float) for a in test)
    m = Cte.shape[0]
    if m == 0:
        return np.empty(0), np.empty(0)
    Wtr = Wtr.reshape(Ctr.shape[0], -1)
    Wte = Wte.reshape(m, -1)
    n = Ctr.shape[0]
    k = int(min(k_pred, n))
    if k < 1:
        raise ValueError("k_pred must be >= 1")
    if k == n:
        nb = np.broadcast_to(np.arange(n), (m, n))
    else:
        _, nb = cKDTree(Ctr).query(Cte, k=k)
        nb = nb.reshape(m, k)
    chunks = [(a, min(a + CHUNK, m)) for a in range(0, m, CHUNK)]
    parts = _pmap(lambda ab: _krige_chunk(params, Wtr, ytr, Ctr, Wte[ab[0]:ab[1]],
                                          Cte[ab[0]:ab[1]], nb[ab[0]:ab[1]]), chunks, threads)
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def predict_category(krige_mean):
    """Severity class of a kriging mean (scalar) or integer class codes (array)."""
    if np.ndim(krige_mean) == 0:
        return categorize(krige_mean)
    return categorize_array(krige_mean)
