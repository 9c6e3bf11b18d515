"""Balanced clustering of output channels by weight-sign similarity.

Output channels whose weight columns share sign patterns are grouped into
array-width clusters so that one input-channel order suits every column of a
cluster. The solver is a capacity-constrained k-means on sign vectors under
Manhattan (Hamming) distance:

1. farthest-point seeding from a deterministic start channel;
2. assignment in decreasing-regret order, each channel to the nearest centroid
   that still has room while keeping a hard-balanced completion feasible;
3. centroid update to the per-position majority bit (ties go to 1);

repeated until the assignment stops changing, the objective would increase, or
``max_iters`` is reached. The result is never worse than consecutive blocks.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .model_io import ArrayConfig, QuantizedTensor
from .reorder import SortCriteria, column_blocks


def _data(w) -> np.ndarray:
    return w.data if isinstance(w, QuantizedTensor) else np.asarray(w)


def sign_vector(column) -> np.ndarray:
    return (np.asarray(column) >= 0).astype(np.int8)


def sign_matrix(w) -> np.ndarray:
    """Sign vectors of every output channel, shape (K, C)."""
    return (_data(w).T >= 0).astype(np.int8)


def sign_difference(x, y) -> int:
    x, y = np.asarray(x, dtype=np.int64), np.asarray(y, dtype=np.int64)
    if x.shape != y.shape:
        raise ValidationError(f"sign vectors differ in length: {x.shape} vs {y.shape}")
    return int(np.abs(x - y).sum())


def _sd_of_signs(bits: np.ndarray) -> int:
    # bits: (members, C). Each position with `ones` ones among m members
    # contributes ones * (m - ones) disagreeing pairs.
    m = bits.shape[0]
    ones = bits.sum(axis=0, dtype=np.int64)
    return int((ones * (m - ones)).sum())


def cluster_sd(w, cluster) -> int:
    """Pairwise sign difference summed over unordered pairs within ``cluster``."""
    idx = list(cluster)
    if len(idx) < 2:
        return 0
    return _sd_of_signs(sign_matrix(w)[idx])


def clustering_objective(w, clusters) -> int:
    s = sign_matrix(w)
    return sum(_sd_of_signs(s[list(c)]) for c in clusters if len(c) > 1)


@dataclass(frozen=True)
class ClusterParams:
    max_iters: int = 50
    # only used to draw extra start channels when restarts > 0
    seed: int | None = None
    restarts: int = 0

    @classmethod
    def from_dict(cls, d: dict | None) -> "ClusterParams":
        d = d or {}
        seed = d.get("seed")
        return cls(int(d.get("max_iters", 50)), None if seed is None else int(seed),
                   int(d.get("restarts", 0)))


@dataclass(frozen=True)
class OutputClustering:
    clusters: tuple[tuple[int, ...], ...]
    objective: int = 0
    history: tuple[int, ...] = field(default=(), compare=False)
    fallback: bool = field(default=False, compare=False)

    def __len__(self):
        return len(self.clusters)

    def validate(self, k: int, capacity: int) -> None:
        flat = [i for c in self.clusters for i in c]
        if sorted(flat) != list(range(k)):
            raise ValidationError("clusters are not a partition of the output channels")
        sizes = [len(c) for c in self.clusters]
        if any(s > capacity or s < 1 for s in sizes):
            raise ValidationError(f"cluster sizes {sizes} exceed capacity {capacity}")
        if sum(s != capacity for s in sizes) > 1:
            raise ValidationError(f"cluster sizes {sizes} are not hard-balanced")

    def to_json(self) -> str:
        return json.dumps([list(c) for c in self.clusters])

    @classmethod
    def from_json(cls, text: str) -> "OutputClustering":
        return cls(tuple(tuple(int(i) for i in c) for c in json.loads(text)))


def _canonical(groups) -> tuple[tuple[int, ...], ...]:
    groups = [tuple(sorted(int(i) for i in g)) for g in groups if len(g)]
    return tuple(sorted(groups, key=lambda g: g[0]))


def identity_clustering(k: int, capacity: int) -> tuple[tuple[int, ...], ...]:
    return tuple(tuple(b) for b in column_blocks(k, capacity))


def _distances(signs: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    s = signs.astype(np.int64)
    c = centroids.astype(np.int64)
    return s @ (1 - c).T + (1 - s) @ c.T


def _farthest_point(signs: np.ndarray, n: int, start: int) -> np.ndarray:
    chosen = [start]
    nearest = _distances(signs, signs[[start]])[:, 0]
    while len(chosen) < n:
        # argmax returns the lowest index among ties
        nxt = int(np.argmax(nearest))
        chosen.append(nxt)
        nearest = np.minimum(nearest, _distances(signs, signs[[nxt]])[:, 0])
    return signs[chosen].copy()


def _assign(dist: np.ndarray, capacity: int) -> np.ndarray:
    k, n = dist.shape
    labels = np.full(k, -1, dtype=np.int64)
    if n == 1:
        labels[:] = 0
        return labels
    ranked = np.sort(dist, axis=1)
    regret = ranked[:, 1] - ranked[:, 0]
    order = np.lexsort((np.arange(k), -regret))
    deficit = np.full(n, capacity, dtype=np.int64)
    remaining = k
    for p in order:
        remaining -= 1
        for j in np.lexsort((np.arange(n), dist[p])):
            if deficit[j] == 0:
                continue
            deficit[j] -= 1
            # every cluster but one must still be fillable by the remaining points
            if remaining >= deficit.sum() - deficit.max():
                labels[p] = j
                break
            deficit[j] += 1
        else:  # pragma: no cover - feasibility invariant guarantees a slot
            raise RuntimeError("balanced assignment became infeasible")
    return labels


def _majority(signs: np.ndarray, labels: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    out = centroids.copy()
    for j in range(len(centroids)):
        members = signs[labels == j]
        if len(members):
            ones = members.sum(axis=0)
            out[j] = (2 * ones >= len(members)).astype(np.int8)
    return out


def _groups(labels: np.ndarray, n: int):
    return [np.flatnonzero(labels == j).tolist() for j in range(n)]


def _solve(signs: np.ndarray, n: int, capacity: int, start: int, max_iters: int):
    centroids = _farthest_point(signs, n, start)
    labels, best, history = None, None, []
    for _ in range(max(1, max_iters)):
        new = _assign(_distances(signs, centroids), capacity)
        obj = sum(_sd_of_signs(signs[g]) for g in _groups(new, n))
        if labels is not None and (obj > best or np.array_equal(new, labels)):
            break
        labels, best = new, obj
        history.append(obj)
        centroids = _majority(signs, labels, centroids)
    return labels, best, history


def balanced_cluster(w, capacity: int, params: ClusterParams | None = None) -> OutputClustering:
    params = params or ClusterParams()
    if capacity < 1:
        raise ValidationError("capacity must be >= 1")
    signs = sign_matrix(w)
    k = signs.shape[0]
    n = math.ceil(k / capacity)
    ident = identity_clustering(k, capacity)
    ident_obj = clustering_objective(w, ident)
    if n == 1:
        return OutputClustering(ident, ident_obj, (ident_obj,))

    starts = [0]
    if params.restarts > 0 and params.seed is not None:
        rng = np.random.default_rng(params.seed)
        starts += rng.integers(0, k, size=params.restarts).tolist()
    best = None
    for start in starts:
        labels, obj, history = _solve(signs, n, capacity, int(start), params.max_iters)
        if best is None or obj < best[1]:
            best = (labels, obj, history)
    labels, obj, history = best
    if obj > ident_obj:
        return OutputClustering(ident, ident_obj, tuple(history), fallback=True)
    return OutputClustering(_canonical(_groups(labels, n)), obj, tuple(history))


def cluster_then_reorder(w: QuantizedTensor, config: ArrayConfig,
                         criteria=SortCriteria.SIGN_FIRST,
                         params: ClusterParams | None = None, layer: int = 0):
    """Cluster output channels, then order input channels per cluster."""
    from .plan import plan_from_clusters

    clustering = balanced_cluster(w, config.array_cols, params)
    return plan_from_clusters(w, clustering.clusters, criteria, layer=layer)
