"""Compiled regression-tree builder.

One builder serves every tree learner. Each row carries a gradient ``g`` and
hessian ``h``; a leaf predicts ``-G / (H + lam)`` and a split's gain is

    0.5 * (GL^2/(HL+lam) + GR^2/(HR+lam) - G^2/(H+lam)) - gamma

With ``g = -w*y``, ``h = w`` and ``lam = gamma = 0`` this is the ordinary
variance-reduction CART (gain = half the weighted SSE reduction), so bagged,
random and extremely randomized forests reuse it through weights alone.
"""
import numpy as np
from numba import njit

LEAF = -1


@njit(cache=True)
def _score(G, H, lam):
    return G * G / (H + lam)


@njit(cache=True, nogil=True)
def build_tree(X, g, h, t, rows, max_depth, min_samples_split, min_samples_leaf,
               max_features, extra, lam, gamma, min_child_weight, seed):
    n_rows = rows.shape[0]
    p = X.shape[1]
    cap = 2 * n_rows + 1
    feature = np.full(cap, LEAF, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, LEAF, dtype=np.int64)
    right = np.full(cap, LEAF, dtype=np.int64)
    value = np.zeros(cap)
    gain_out = np.zeros(cap)
    weight = np.zeros(cap)

    np.random.seed(seed)
    idx = rows.copy()
    feats = np.arange(p)

    # explicit stack: node id, start, end, depth
    st_node = np.empty(cap, dtype=np.int64)
    st_start = np.empty(cap, dtype=np.int64)
    st_end = np.empty(cap, dtype=np.int64)
    st_depth = np.empty(cap, dtype=np.int64)
    st_node[0] = 0
    st_start[0] = 0
    st_end[0] = n_rows
    st_depth[0] = 0
    sp = 1
    n_nodes = 1

    while sp > 0:
        sp -= 1
        node = st_node[sp]
        start = st_start[sp]
        end = st_end[sp]
        depth = st_depth[sp]
        cnt = end - start

        G = 0.0
        H = 0.0
        S2 = 0.0
        tmin = np.inf
        tmax = -np.inf
        for a in range(start, end):
            r = idx[a]
            G += g[r]
            H += h[r]
            if h[r] > 0:
                S2 += g[r] * g[r] / h[r]
            if t[r] < tmin:
                tmin = t[r]
            if t[r] > tmax:
                tmax = t[r]
        value[node] = -G / (H + lam)
        weight[node] = H

        if (max_depth >= 0 and depth >= max_depth) or cnt < min_samples_split \
                or tmin == tmax or H < 2.0 * min_child_weight:
            continue

        parent = _score(G, H, lam)
        # gains within rounding of the incumbent count as ties and keep the
        # earlier candidate, so the tree does not depend on row order
        tie = 1e-12 * S2
        best_gain = 0.0
        best_f = -1
        best_thr = 0.0

        # partial Fisher-Yates: draw features until max_features were tried
        # and at least one of them produced a valid split
        for a in range(p):
            feats[a] = a
        tried = 0
        for a in range(p):
            if max_features < p:
                b = a + np.random.randint(0, p - a)
                tmp = feats[a]
                feats[a] = feats[b]
                feats[b] = tmp
            if tried >= max_features and best_f >= 0:
                break
            f = feats[a]
            tried += 1
            vals = np.empty(cnt)
            for c in range(cnt):
                vals[c] = X[idx[start + c], f]
            if extra:
                lo = vals.min()
                hi = vals.max()
                if lo == hi:
                    continue
                thr = lo + np.random.random() * (hi - lo)
                if thr >= hi:
                    thr = lo
                GL = 0.0
                HL = 0.0
                nl = 0
                for c in range(cnt):
                    if vals[c] <= thr:
                        r = idx[start + c]
                        GL += g[r]
                        HL += h[r]
                        nl += 1
                nr = cnt - nl
                HR = H - HL
                if nl < min_samples_leaf or nr < min_samples_leaf:
                    continue
                if HL < min_child_weight or HR < min_child_weight:
                    continue
                gain = 0.5 * (_score(GL, HL, lam) + _score(G - GL, HR, lam) - parent) - gamma
                if gain > best_gain + tie:
                    best_gain = gain
                    best_f = f
                    best_thr = thr
            else:
                order = np.argsort(vals, kind="mergesort")
                GL = 0.0
                HL = 0.0
                for c in range(cnt - 1):
                    r = idx[start + order[c]]
                    GL += g[r]
                    HL += h[r]
                    v0 = vals[order[c]]
                    v1 = vals[order[c + 1]]
                    if v0 == v1:
                        continue
                    nl = c + 1
                    if nl < min_samples_leaf or cnt - nl < min_samples_leaf:
                        continue
                    HR = H - HL
                    if HL < min_child_weight or HR < min_child_weight:
                        continue
                    gain = 0.5 * (_score(GL, HL, lam) + _score(G - GL, HR, lam) - parent) - gamma
                    if gain > best_gain + tie:
                        best_gain = gain
                        best_f = f
                        thr = v0 + (v1 - v0) * 0.5
                        if thr >= v1:
                            thr = v0
                        best_thr = thr

        if best_f < 0:
            continue

        # in-place partition of idx[start:end]
        i = start
        j = end - 1
        while i <= j:
            if X[idx[i], best_f] <= best_thr:
                i += 1
            else:
                tmp = idx[i]
                idx[i] = idx[j]
                idx[j] = tmp
                j -= 1
        mid = i
        if mid == start or mid == end:
            continue

        feature[node] = best_f
        threshold[node] = best_thr
        gain_out[node] = best_gain + gamma
        lnode = n_nodes
        rnode = n_nodes + 1
        n_nodes += 2
        left[node] = lnode
        right[node] = rnode

        st_node[sp] = rnode
        st_start[sp] = mid
        st_end[sp] = end
        st_depth[sp] = depth + 1
        sp += 1
        st_node[sp] = lnode
        st_start[sp] = start
        st_end[sp] = mid
        st_depth[sp] = depth + 1
        sp += 1

    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), value[:n_nodes].copy(), gain_out[:n_nodes].copy(),
            weight[:n_nodes].copy())


@njit(cache=True, nogil=True)
def predict_tree(X, feature, threshold, left, right, value):
    m = X.shape[0]
    out = np.empty(m)
    for i in range(m):
        node = 0
        while feature[node] != LEAF:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = value[node]
    return out
