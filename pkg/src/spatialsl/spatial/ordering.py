"""Max-min ordering and ordered nearest-neighbour conditioning sets."""
from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree


@dataclass(frozen=True, eq=False)
class VecchiaConfig:
    """``neighbors[j]`` lists (original) site indices conditioning position j,
    nearest first, padded with -1. Position j is site ``order[j]``."""

    k: int
    order: np.ndarray
    neighbors: np.ndarray

    @property
    def n(self) -> int:
        return self.order.shape[0]

    def validate(self) -> None:
        pos = np.empty(self.n, dtype=np.int64)
        pos[self.order] = np.arange(self.n)
        for j in range(self.n):
            nb = self.neighbors[j][self.neighbors[j] >= 0]
            if np.any(pos[nb] >= j):
                raise ValueError(f"position {j} conditions on a later site")


def maxmin_order(coords) -> np.ndarray:
    """Exact max-min ordering starting from the site nearest the centroid.

    Each step appends the unordered site whose distance to the ordered set is
    largest (ties to the lower index). Only sites inside the current radius
    of the newly selected point can have their distances reduced, so a k-d
    tree ball query keeps this near O(n log n) in two dimensions.
    """
    coords = np.asarray(coords, dtype=float)
    n = coords.shape[0]
    if n == 0:
        return np.empty(0, dtype=np.int64)
    centroid = coords.mean(axis=0)
    d0 = np.hypot(coords[:, 0] - centroid[0], coords[:, 1] - centroid[1])
    first = int(np.argmin(d0))
    order = np.empty(n, dtype=np.int64)
    order[0] = first
    if n == 1:
        return order
    tree = cKDTree(coords)
    dist = np.hypot(coords[:, 0] - coords[first, 0], coords[:, 1] - coords[first, 1])
    selected = np.zeros(n, dtype=bool)
    selected[first] = True
    heap = [(-dist[i], i) for i in range(n) if i != first]
    heapq.heapify(heap)
    count = 1
    while count < n:
        negd, i = heapq.heappop(heap)
        if selected[i] or -negd != dist[i]:
            continue
        selected[i] = True
        order[count] = i
        count += 1
        r = dist[i]
        ball = np.asarray(tree.query_ball_point(coords[i], r), dtype=np.int64)
        if ball.size == 0:
            continue
        dj = np.hypot(coords[ball, 0] - coords[i, 0], coords[ball, 1] - coords[i, 1])
        upd = (~selected[ball]) & (dj < dist[ball])
        for j, d in zip(ball[upd].tolist(), dj[upd].tolist()):
            dist[j] = d
            heapq.heappush(heap, (-d, j))
    return order


def _brute_prefix(C, start, stop, k, out):
    for j in range(start, stop):
        m = min(k, j)
        if m == 0:
            continue
        d = np.hypot(C[:j, 0] - C[j, 0], C[:j, 1] - C[j, 1])
        out[j, :m] = np.argsort(d, kind="stable")[:m]


def nn_conditioning(coords, order, k: int = 15) -> VecchiaConfig:
    """Conditioning set for position j: the min(k, j) nearest earlier-ordered sites."""
    coords = np.asarray(coords, dtype=float)
    order = np.asarray(order, dtype=np.int64)
    n = order.shape[0]
    k = int(k)
    if k < 0:
        raise ValueError("k must be nonnegative")
    C = coords[order]
    nb = np.full((n, max(k, 0)), -1, dtype=np.int64)
    if k == 0 or n <= 1:
        return VecchiaConfig(k, order, nb)
    head = min(n, 4 * (k + 1))
    _brute_prefix(C, 1, head, k, nb)
    a = head
    while a < n:
        b = min(2 * a, n)
        tree = cKDTree(C[:b])
        pending = np.arange(a, b)
        K = min(b, 2 * k + 2)
        while pending.size:
            _, idx = tree.query(C[pending], k=K)
            idx = idx.reshape(pending.size, K)
            earlier = idx < pending[:, None]
            enough = earlier.sum(axis=1) >= k
            if K >= b:
                enough[:] = True
            for row in np.flatnonzero(enough):
                sel = idx[row][earlier[row]][:k]
                nb[pending[row], :sel.size] = sel
            pending = pending[~enough]
            K = min(b, 2 * K)
        a = b
    # ordered positions -> original site indices
    out = np.where(nb >= 0, order[np.maximum(nb, 0)], -1)
    return VecchiaConfig(k, order, out)


def vecchia_config(coords, k: int = 15) -> VecchiaConfig:
    coords = np.asarray(coords, dtype=float)
    return nn_conditioning(coords, maxmin_order(coords), k)
