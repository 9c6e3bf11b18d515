"""Accumulation-order-accurate output-stationary systolic array model.

Each MAC owns one output (one sample x one output channel) and accumulates
``a[order[j]] * w[order[j], k]`` for ``j = 0..C-1`` into a 24-bit two's
complement register that starts at zero. Fill/drain skew is not modeled: only
the order of accumulation matters for partial-sum sign flips.

Samples map onto array rows (``mac_row = sample % array_rows``, successive
passes reuse the same MAC), tile columns onto array columns.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import DimensionMismatchError, PermutationError
from .model_io import PSUM_BITS, ActivationBatch, ArrayConfig, QuantizedTensor

PSUM_MIN = -(1 << (PSUM_BITS - 1))
PSUM_MAX = (1 << (PSUM_BITS - 1)) - 1
_MASK = (1 << PSUM_BITS) - 1


def wrap24(x):
    """Reduce integers (scalar or array) to 24-bit two's complement."""
    if isinstance(x, np.ndarray):
        x = x.astype(np.int64, copy=False)
    return ((x - PSUM_MIN) & _MASK) + PSUM_MIN


def to_bits24(x):
    """Unsigned 24-bit encoding of a two's-complement value."""
    return x & _MASK


def sign(value) -> int:
    """Sign bit as used for flip counting: 1 for value >= 0, 0 for negative."""
    return 1 if value >= 0 else 0


def sign_bits(values) -> np.ndarray:
    return (np.asarray(values) >= 0).astype(np.int8)


def mac_step(psum: int, a: int, w: int) -> tuple[int, bool]:
    """One multiply-accumulate: returns (wrapped psum + a*w, overflowed)."""
    exact = int(psum) + int(a) * int(w)
    return wrap24(exact), not (PSUM_MIN <= exact <= PSUM_MAX)


def check_permutation(order, n: int, what: str = "order") -> np.ndarray:
    arr = np.asarray(order)
    if arr.ndim != 1 or arr.shape[0] != n or not np.issubdtype(arr.dtype, np.integer):
        raise PermutationError(f"{what} must be a length-{n} integer sequence")
    if not np.array_equal(np.sort(arr), np.arange(n)):
        raise PermutationError(f"{what} is not a permutation of [0, {n})")
    return arr.astype(np.int64)


@dataclass(frozen=True, eq=False)
class PsumTrace:
    mac_row: int
    mac_col: int
    values: np.ndarray  # length C+1, values[0] == 0
    flips: np.ndarray  # length C
    overflowed: bool = False
    sample: int = 0
    channel: int = 0

    @classmethod
    def from_values(cls, values: Sequence[int], mac_row: int = 0, mac_col: int = 0,
                    **kw) -> "PsumTrace":
        values = np.asarray(values, dtype=np.int64)
        s = sign_bits(values)
        return cls(mac_row, mac_col, values, s[:-1] != s[1:], **kw)

    @property
    def depth(self) -> int:
        return len(self.flips)


def count_sign_flips(trace) -> int:
    """Sign-bit transitions between consecutive partial sums.

    Accepts a :class:`PsumTrace` or a raw sequence of partial sums whose first
    element is the initial register value.
    """
    values = trace.values if isinstance(trace, PsumTrace) else trace
    s = sign_bits(values)
    return int(np.count_nonzero(s[:-1] != s[1:]))


@dataclass(eq=False)
class SignFlipStats:
    total_flips: int = 0
    total_mac_cycles: int = 0
    # per_output_flips[n] = number of outputs whose accumulation flipped n times
    per_output_flips: np.ndarray = field(default_factory=lambda: np.zeros(1, np.int64))

    @property
    def flip_rate(self) -> float:
        return self.total_flips / self.total_mac_cycles if self.total_mac_cycles else 0.0

    @property
    def n_outputs(self) -> int:
        return int(self.per_output_flips.sum())

    @classmethod
    def from_flip_counts(cls, counts: np.ndarray, depth: int) -> "SignFlipStats":
        counts = np.asarray(counts, dtype=np.int64).reshape(-1)
        hist = np.bincount(counts, minlength=1).astype(np.int64)
        return cls(int(counts.sum()), int(counts.size) * int(depth), hist)

    @classmethod
    def combine(cls, parts: Iterable["SignFlipStats"]) -> "SignFlipStats":
        out = cls()
        for p in parts:
            out = out + p
        return out

    def __add__(self, other: "SignFlipStats") -> "SignFlipStats":
        n = max(len(self.per_output_flips), len(other.per_output_flips))
        hist = np.zeros(n, np.int64)
        hist[: len(self.per_output_flips)] += self.per_output_flips
        hist[: len(other.per_output_flips)] += other.per_output_flips
        return SignFlipStats(
            self.total_flips + other.total_flips,
            self.total_mac_cycles + other.total_mac_cycles,
            hist,
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, SignFlipStats):
            return NotImplemented
        return (self.total_flips == other.total_flips
                and self.total_mac_cycles == other.total_mac_cycles
                and np.array_equal(np.trim_zeros(self.per_output_flips, "b"),
                                   np.trim_zeros(other.per_output_flips, "b")))

    def to_dict(self) -> dict:
        return {
            "total_flips": self.total_flips,
            "total_mac_cycles": self.total_mac_cycles,
            "flip_rate": self.flip_rate,
            "per_output_flips": [int(x) for x in self.per_output_flips],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


@dataclass(frozen=True, eq=False)
class PsumTraces:
    """Array-backed collection of traces for one tile.

    ``values`` has shape (samples, cols, depth + 1); ``flips`` has shape
    (samples, cols, depth); ``products`` holds the per-cycle addends so that
    error injection can replay the accumulation.
    """

    values: np.ndarray
    flips: np.ndarray
    overflowed: np.ndarray
    products: np.ndarray
    channels: np.ndarray
    array_rows: int = 1

    @property
    def samples(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    @property
    def depth(self) -> int:
        return self.flips.shape[2]

    @property
    def outputs(self) -> np.ndarray:
        return self.values[:, :, -1]

    def flip_counts(self) -> np.ndarray:
        return self.flips.sum(axis=2)

    def stats(self) -> SignFlipStats:
        return SignFlipStats.from_flip_counts(self.flip_counts(), self.depth)

    def trace(self, sample: int, col: int) -> PsumTrace:
        return PsumTrace(
            mac_row=sample % self.array_rows,
            mac_col=col,
            values=self.values[sample, col],
            flips=self.flips[sample, col],
            overflowed=bool(self.overflowed[sample, col]),
            sample=sample,
            channel=int(self.channels[col]),
        )

    def __len__(self):
        return self.samples * self.cols

    def __iter__(self) -> Iterator[PsumTrace]:
        for s in range(self.samples):
            for c in range(self.cols):
                yield self.trace(s, c)


def accumulate(stream_acts: np.ndarray, stream_weights: np.ndarray,
               channels=None, array_rows: int = 1) -> PsumTraces:
    """Run the accumulation for activations/weights already in fetch order.

    ``stream_acts`` is (samples, depth); ``stream_weights`` is (depth, cols),
    row j being the weights consumed at cycle j.
    """
    acts = np.asarray(stream_acts, dtype=np.int64)
    w = np.asarray(stream_weights, dtype=np.int64)
    if acts.shape[1] != w.shape[0]:
        raise DimensionMismatchError(
            f"activation stream depth {acts.shape[1]} != weight stream depth {w.shape[0]}"
        )
    n, depth = acts.shape
    cols = w.shape[1]
    # (samples, cols, depth)
    products = np.einsum("nj,jk->nkj", acts, w)
    values = np.zeros((n, cols, depth + 1), dtype=np.int64)
    values[:, :, 1:] = wrap24(np.cumsum(products, axis=2))
    exact = values[:, :, :-1] + products
    overflowed = ((exact < PSUM_MIN) | (exact > PSUM_MAX)).any(axis=2)
    s = values >= 0
    flips = s[:, :, :-1] != s[:, :, 1:]
    if channels is None:
        channels = np.arange(cols)
    return PsumTraces(values, flips, overflowed, products,
                      np.asarray(channels, dtype=np.int64), array_rows)


@dataclass(frozen=True, eq=False)
class TileResult:
    outputs: np.ndarray  # (samples, cols) 24-bit values
    traces: PsumTraces
    stats: SignFlipStats


def simulate_tile(weights: QuantizedTensor, acts: ActivationBatch, config: ArrayConfig,
                  order=None, channels=None) -> TileResult:
    """Simulate one C x c weight tile against a batch of activations."""
    C, c = weights.shape
    if c > config.array_cols:
        raise DimensionMismatchError(
            f"tile has {c} columns but the array has {config.array_cols}"
        )
    if acts.channels != C:
        raise DimensionMismatchError(
            f"activations have {acts.channels} channels, tile expects {C}"
        )
    order = np.arange(C) if order is None else check_permutation(order, C)
    traces = accumulate(acts.data[:, order], weights.data[order, :],
                        channels, config.array_rows)
    return TileResult(traces.outputs.copy(), traces, traces.stats())


def requantize(pre: np.ndarray, shift: int) -> np.ndarray:
    """Arithmetic right shift then clamp to the uint8 activation range."""
    return np.clip(np.asarray(pre, dtype=np.int64) >> shift, 0, 255).astype(np.uint8)


# ---------------------------------------------------------------------------
# export

TRACE_FIELDS = ("layer", "cluster", "mac_row", "mac_col", "cycle", "psum", "flip", "error")


def trace_rows(traces: PsumTraces, layer: int = 0, cluster: int = 0,
               errors: np.ndarray | None = None, values: np.ndarray | None = None):
    """Yield one CSV record per MAC per cycle.

    Cycle numbering is per MAC: pass ``p = sample // array_rows`` occupies cycles
    ``p * (depth + 1) .. p * (depth + 1) + depth``, the first being the reset.
    """
    vals = traces.values if values is None else values
    depth = traces.depth
    for s in range(traces.samples):
        row, base = s % traces.array_rows, (s // traces.array_rows) * (depth + 1)
        for col in range(traces.cols):
            flips = traces.flips[s, col]
            errs = errors[s, col] if errors is not None else None
            v = vals[s, col]
            for j in range(depth + 1):
                flip = int(flips[j - 1]) if j else 0
                err = int(errs[j - 1]) if (j and errs is not None) else 0
                yield (layer, cluster, row, col, base + j, int(v[j]), flip, err)


def export_traces_csv(records: Iterable[tuple], fh=None) -> str | None:
    """Write trace records (see :func:`trace_rows`) as CSV.

    Writes to ``fh`` when given, otherwise returns the CSV text.
    """
    out = fh if fh is not None else io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(TRACE_FIELDS)
    writer.writerows(records)
    if fh is None:
        return out.getvalue()
    return None
