"""Clustering primitives: average-linkage agglomeration and k-medoids.

Both operate on cosine distance (1 - cosine) and are fully deterministic:
merge and swap ties resolve to the lowest index, and all randomness flows
from an explicit seed.
"""

from __future__ import annotations

import numpy as np


def cosine_distance_matrix(vectors: np.ndarray) -> np.ndarray:
    """Pairwise 1 - cosine over row vectors; zero rows get distance 1 to everything."""
    v = np.asarray(vectors, dtype=np.float64)
    norms = np.linalg.norm(v, axis=1, keepdims=True)
    safe = np.where(norms == 0.0, 1.0, norms)
    units = v / safe
    sim = units @ units.T
    np.clip(sim, -1.0, 1.0, out=sim)
    d = 1.0 - sim
    np.fill_diagonal(d, 0.0)
    return d


def average_linkage_merges(vectors: np.ndarray) -> list[tuple[int, int]]:
    """UPGMA merge trace over cosine distance.

    Returns n-1 merges; merge i joins cluster ids a < b (original points are
    0..n-1, the cluster created by merge i gets id n+i). Cluster-to-cluster
    distance is the mean pairwise distance between original members, kept
    exact through Lance-Williams updates.
    """
    n = int(vectors.shape[0])
    if n < 2:
        return []
    total = 2 * n - 1
    big = np.full((total, total), np.inf, dtype=np.float64)
    big[:n, :n] = cosine_distance_matrix(vectors)
    np.fill_diagonal(big, np.inf)
    active = np.zeros(total, dtype=bool)
    active[:n] = True
    size = np.zeros(total, dtype=np.int64)
    size[:n] = 1
    merges: list[tuple[int, int]] = []
    for step in range(n - 1):
        idx = np.flatnonzero(active)
        sub = big[np.ix_(idx, idx)]
        m = sub.min()
        pos = np.argwhere(sub == m)
        pairs = sorted((int(idx[i]), int(idx[j])) for i, j in pos if idx[i] < idx[j])
        a, b = pairs[0]
        new = n + step
        sa, sb = size[a], size[b]
        others = idx[(idx != a) & (idx != b)]
        if others.size:
            big[new, others] = (sa * big[a, others] + sb * big[b, others]) / (sa + sb)
            big[others, new] = big[new, others]
        size[new] = sa + sb
        active[a] = active[b] = False
        active[new] = True
        merges.append((a, b))
    return merges


def _farthest_point_seeds(dist: np.ndarray, k: int, seed: int) -> list[int]:
    n = dist.shape[0]
    rng = np.random.default_rng(seed)
    first = int(rng.integers(n))
    chosen = [first]
    mind = dist[first].copy()
    while len(chosen) < k:
        nxt = int(np.argmax(mind))  # first occurrence on ties
        chosen.append(nxt)
        np.minimum(mind, dist[nxt], out=mind)
    return chosen


def _greedy_seeds(dist: np.ndarray, k: int) -> list[int]:
    """PAM BUILD: add the medoid with the largest total-cost reduction."""
    n = dist.shape[0]
    first = int(np.argmin(dist.sum(axis=1)))
    chosen = [first]
    mind = dist[first].copy()
    while len(chosen) < k:
        gains = np.maximum(mind[None, :] - dist, 0.0).sum(axis=1)
        gains[chosen] = -1.0
        nxt = int(np.argmax(gains))
        chosen.append(nxt)
        np.minimum(mind, dist[nxt], out=mind)
    return chosen


def _assign(dist: np.ndarray, medoids: list[int]) -> np.ndarray:
    """Index into ``medoids`` of each point's nearest medoid (first wins ties)."""
    return np.argmin(dist[:, medoids], axis=1)


def _cost(dist: np.ndarray, medoids: list[int]) -> float:
    return float(dist[:, medoids].min(axis=1).sum())


def kmedoids(dist: np.ndarray, k: int, seed: int = 0,
             method: str = "pam", init: str = "farthest") -> tuple[list[int], np.ndarray]:
    """k-medoids over a precomputed distance matrix.

    ``method="pam"`` runs the classic swap phase (best improving swap per
    pass); ``method="alternate"`` runs Voronoi iterations, which scale to
    thousands of points where the quadratic-per-swap PAM scan does not.
    ``init`` picks farthest-point or greedy (PAM BUILD) seeding. Returns
    (medoid indices, and for each point the index into that list of its
    assigned medoid).
    """
    n = dist.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k={k} out of range for {n} points")
    if k == n:
        medoids = list(range(n))
        return medoids, np.arange(n)
    if init == "greedy":
        medoids = _greedy_seeds(dist, k)
    elif init == "farthest":
        medoids = _farthest_point_seeds(dist, k, seed)
    else:
        raise ValueError(f"unknown init {init!r}")
    if method == "pam":
        cost = _cost(dist, medoids)
        improved = True
        while improved:
            improved = False
            best = (0.0, None, None)
            medoid_set = set(medoids)
            for mi in range(k):
                for o in range(n):
                    if o in medoid_set:
                        continue
                    trial = medoids.copy()
                    trial[mi] = o
                    c = _cost(dist, trial)
                    if cost - c > best[0] + 1e-12:
                        best = (cost - c, mi, o)
            if best[1] is not None:
                medoids[best[1]] = best[2]
                cost -= best[0]
                improved = True
    elif method == "alternate":
        for _ in range(200):
            labels = _assign(dist, medoids)
            new = medoids.copy()
            for ci in range(k):
                members = np.flatnonzero(labels == ci)
                if members.size == 0:
                    continue
                within = dist[np.ix_(members, members)].sum(axis=1)
                new[ci] = int(members[int(np.argmin(within))])
            if new == medoids:
                break
            medoids = new
    else:
        raise ValueError(f"unknown method {method!r}")
    labels = _assign(dist, medoids)
    return medoids, labels
