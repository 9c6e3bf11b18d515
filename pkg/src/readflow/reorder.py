"""Input-channel reordering for one array-width tile of a weight matrix.

Two sort criteria are supported. ``sign_first`` ranks input channels by how many
non-negative weights they carry across the tile's columns, breaking ties by the
min-max-scaled row sum. ``mag_first`` ranks by the raw row sum plus the scaled
non-negative count. Channels with larger scores are accumulated first, which for
a single column puts every non-negative weight ahead of every negative one.
"""

from __future__ import annotations

import json
from enum import Enum

import numpy as np

from .model_io import QuantizedTensor


class SortCriteria(str, Enum):
    SIGN_FIRST = "sign_first"
    MAG_FIRST = "mag_first"


def _as_matrix(tile) -> np.ndarray:
    data = tile.data if isinstance(tile, QuantizedTensor) else np.asarray(tile)
    if data.ndim == 1:
        data = data[:, None]
    return data.astype(np.int64)


def channel_metrics(tile) -> tuple[np.ndarray, np.ndarray]:
    """Per-row (non-negative weight count, exact integer row sum)."""
    w = _as_matrix(tile)
    return (w >= 0).sum(axis=1), w.sum(axis=1)


def minmax_scale(values) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    lo, hi = v.min(), v.max()
    if hi == lo:
        return np.zeros_like(v)
    return (v - lo) / (hi - lo)


def sort_input_channels(tile, criteria=SortCriteria.SIGN_FIRST) -> np.ndarray:
    """Accumulation order for the rows of ``tile``.

    The score is ``primary + scaled secondary``, with the primary term an
    integer and the scaled term in [0, 1]. Ranking lexicographically by
    (primary, scaled secondary) descending gives the same order as ranking the
    summed score, except that exact score ties fall back to the primary term
    instead of floating-point noise. Remaining ties keep ascending row index.
    """
    criteria = SortCriteria(criteria)
    n_nonneg, row_sum = channel_metrics(tile)
    if criteria is SortCriteria.SIGN_FIRST:
        primary, secondary = n_nonneg, minmax_scale(row_sum)
    else:
        primary, secondary = row_sum, minmax_scale(n_nonneg)
    idx = np.arange(len(primary))
    # np.lexsort sorts by the last key first
    return np.lexsort((idx, -secondary, -primary)).astype(np.int64)


def segment_matrix(w, block: int) -> list[QuantizedTensor]:
    """Split into consecutive column tiles of width ``block`` (last may be narrower)."""
    if block < 1:
        raise ValueError("block width must be >= 1")
    data = w.data if isinstance(w, QuantizedTensor) else np.asarray(w)
    return [QuantizedTensor(data[:, i:i + block]) for i in range(0, data.shape[1], block)]


def column_blocks(k: int, block: int) -> list[list[int]]:
    return [list(range(i, min(i + block, k))) for i in range(0, k, block)]


def sequence_to_json(order) -> str:
    return json.dumps([int(i) for i in order])


def sequence_from_json(text: str) -> np.ndarray:
    return np.asarray(json.loads(text), dtype=np.int64)
