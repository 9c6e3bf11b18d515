"""Exhaustive references for tiny instances.

:func:`brute_force_sequence` tries every input-channel order of a tile (C <= 8)
and :func:`brute_force_clustering` every hard-balanced partition of its output
channels (K <= 8). Both evaluate their objective from first principles so they
can check the heuristics in :mod:`readflow.reorder` and :mod:`readflow.cluster`.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Any

import numpy as np

from .cluster import sign_difference, sign_vector
from .dataflow import wrap24
from .errors import OracleLimitError
from .model_io import ActivationBatch, QuantizedTensor

MAX_CHANNELS = 8
_CHUNK = 5040


@dataclass(frozen=True)
class OracleResult:
    best_value: int
    best_solution: Any
    explored: int


def _as_acts(acts) -> np.ndarray:
    data = acts.data if isinstance(acts, ActivationBatch) else np.asarray(acts)
    return np.atleast_2d(data).astype(np.int64)


def _as_weights(tile) -> np.ndarray:
    data = tile.data if isinstance(tile, QuantizedTensor) else np.asarray(tile)
    if data.ndim == 1:
        data = data[:, None]
    return data.astype(np.int64)


def sequence_flips(tile, acts, order) -> int:
    """Total sign flips over every output when accumulating in ``order``."""
    w, a = _as_weights(tile), _as_acts(acts)
    order = list(order)
    prods = a[:, order, None] * w[None, order, :]
    psums = np.concatenate(
        [np.zeros((a.shape[0], 1, w.shape[1]), np.int64), wrap24(np.cumsum(prods, axis=1))],
        axis=1,
    )
    neg = psums < 0
    return int((neg[:, 1:] != neg[:, :-1]).sum())


def brute_force_sequence(tile, acts) -> OracleResult:
    w, a = _as_weights(tile), _as_acts(acts)
    C = w.shape[0]
    if C > MAX_CHANNELS:
        raise OracleLimitError(f"{C} input channels exceeds the enumeration limit {MAX_CHANNELS}")
    if a.shape[1] != C:
        raise OracleLimitError(f"activations have {a.shape[1]} channels, tile has {C}")
    perms = np.array(list(itertools.permutations(range(C))), dtype=np.int64)
    prods = a[:, :, None] * w[None, :, :]  # (N, C, c)
    best, best_idx = None, 0
    for start in range(0, len(perms), _CHUNK):
        p = perms[start:start + _CHUNK]
        ps = wrap24(np.cumsum(prods[:, p, :], axis=2))  # (N, P, C, c)
        neg = ps < 0
        # the register starts at 0, which counts as non-negative
        flips = neg[:, :, 0, :].astype(np.int64) + (neg[:, :, 1:] != neg[:, :, :-1]).sum(axis=2)
        totals = flips.sum(axis=(0, 2))
        i = int(np.argmin(totals))
        if best is None or totals[i] < best:
            best, best_idx = int(totals[i]), start + i
    return OracleResult(best, perms[best_idx].tolist(), len(perms))


def balanced_partitions(k: int, capacity: int):
    """Every partition of range(k) into blocks of ``capacity`` plus one remainder block."""
    n = math.ceil(k / capacity)
    short = k - (n - 1) * capacity

    def rec(remaining, short_left):
        if not remaining:
            if not short_left:
                yield []
            return
        first, rest = remaining[0], remaining[1:]
        sizes = [capacity] + ([short] if short_left else [])
        for s in sizes:
            if s > len(remaining):
                continue
            for mates in itertools.combinations(rest, s - 1):
                left = [x for x in rest if x not in mates]
                for tail in rec(left, short_left and s != short):
                    yield [(first, *mates)] + tail

    yield from rec(list(range(k)), short != capacity)


def partition_count(k: int, capacity: int) -> int:
    """Closed-form number of hard-balanced partitions."""
    n = math.ceil(k / capacity)
    short = k - (n - 1) * capacity
    if short == capacity:
        return math.factorial(k) // (math.factorial(capacity) ** n * math.factorial(n))
    return math.factorial(k) // (
        math.factorial(capacity) ** (n - 1) * math.factorial(n - 1) * math.factorial(short)
    )


def _pairwise_sd(vectors, block) -> int:
    return sum(sign_difference(vectors[i], vectors[j])
               for i, j in itertools.combinations(block, 2))


def brute_force_clustering(w, capacity: int) -> OracleResult:
    data = _as_weights(w)
    k = data.shape[1]
    if k > MAX_CHANNELS:
        raise OracleLimitError(f"{k} output channels exceeds the enumeration limit {MAX_CHANNELS}")
    vectors = [sign_vector(data[:, j]) for j in range(k)]
    best, best_part, explored = None, None, 0
    for part in balanced_partitions(k, capacity):
        explored += 1
        value = sum(_pairwise_sd(vectors, b) for b in part)
        if best is None or value < best:
            best, best_part = value, part
    return OracleResult(best, [list(b) for b in best_part], explored)
