"""Data model and on-disk container for quantized layers and activations.

A bundle directory holds ``manifest.json`` plus one raw little-endian file per
tensor. Weights are int8 (row-major, rows = input channels, cols = output
channels); activations are uint8 (sample-major)::

    {
      "name": "toy",
      "metadata": {"seed": 0},
      "layers": [
        {"name": "fc0", "rows": 64, "cols": 16, "activation": "relu",
         "shift": 6, "file": "fc0.bin"}
      ],
      "activations": [
        {"name": "train", "samples": 128, "channels": 64, "file": "train.bin",
         "labels": "train_labels.bin"}
      ]
    }

Labels, when present, are little-endian int32, one per sample.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .errors import (
    BundleIOError,
    DimensionMismatchError,
    EmptyBundleError,
    LengthMismatchError,
    MissingFileError,
    ValidationError,
    ValueRangeError,
)

MANIFEST = "manifest.json"
ACTIVATIONS = ("relu", "none")

PSUM_BITS = 24
WEIGHT_BITS = 8
ACT_BITS = 8


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


def _as_checked(data, lo: int, hi: int, dtype, what: str) -> np.ndarray:
    arr = np.asarray(data)
    if arr.ndim != 2:
        raise DimensionMismatchError(f"{what} must be 2-D, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DimensionMismatchError(f"{what} must be non-empty, got shape {arr.shape}")
    if arr.dtype != dtype:
        if not np.issubdtype(arr.dtype, np.integer):
            if not np.all(np.equal(np.mod(arr, 1), 0)):
                raise ValueRangeError(f"{what} must hold integers")
        wide = arr.astype(np.int64)
        if wide.min() < lo or wide.max() > hi:
            raise ValueRangeError(
                f"{what} element out of range [{lo}, {hi}]: "
                f"min={wide.min()}, max={wide.max()}"
            )
        arr = wide.astype(dtype)
    else:
        arr = arr.copy()
    return _readonly(np.ascontiguousarray(arr))


@dataclass(frozen=True, eq=False)
class QuantizedTensor:
    """Signed 8-bit weight matrix, shape (input channels, output channels).

    Filters larger than 1x1 are expected pre-flattened into the row dimension.
    """

    data: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "data", _as_checked(self.data, -128, 127, np.int8, "weights")
        )

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def columns(self, idx: Sequence[int]) -> "QuantizedTensor":
        return QuantizedTensor(self.data[:, list(idx)])

    def __eq__(self, other):
        if not isinstance(other, QuantizedTensor):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.data, other.data))

    def __repr__(self):
        return f"QuantizedTensor(rows={self.rows}, cols={self.cols})"


@dataclass(frozen=True, eq=False)
class ActivationBatch:
    """Unsigned 8-bit activations, shape (samples, channels)."""

    data: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(
            self, "data", _as_checked(self.data, 0, 255, np.uint8, "activations")
        )
        if self.labels is not None:
            labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
            if labels.shape[0] != self.samples:
                raise DimensionMismatchError(
                    f"{labels.shape[0]} labels for {self.samples} samples"
                )
            object.__setattr__(self, "labels", _readonly(labels))

    @property
    def samples(self) -> int:
        return self.data.shape[0]

    @property
    def channels(self) -> int:
        return self.data.shape[1]

    def __eq__(self, other):
        if not isinstance(other, ActivationBatch):
            return NotImplemented
        same_labels = (self.labels is None and other.labels is None) or (
            self.labels is not None
            and other.labels is not None
            and np.array_equal(self.labels, other.labels)
        )
        return (
            self.data.shape == other.data.shape
            and bool(np.array_equal(self.data, other.data))
            and same_labels
        )

    def __repr__(self):
        return f"ActivationBatch(samples={self.samples}, channels={self.channels})"


@dataclass(frozen=True)
class ArrayConfig:
    array_rows: int = 16
    array_cols: int = 4
    psum_bits: int = PSUM_BITS
    weight_bits: int = WEIGHT_BITS
    act_bits: int = ACT_BITS

    def __post_init__(self):
        if self.array_rows < 1 or self.array_cols < 1:
            raise ValidationError("array dimensions must be >= 1")
        if self.psum_bits != PSUM_BITS:
            raise ValidationError(f"psum_bits is fixed at {PSUM_BITS}")
        if self.weight_bits != WEIGHT_BITS or self.act_bits != ACT_BITS:
            raise ValidationError("weight and activation widths are fixed at 8 bits")

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ArrayConfig":
        return cls(
            array_rows=int(d.get("array_rows", d.get("rows", 16))),
            array_cols=int(d.get("array_cols", d.get("cols", 4))),
            psum_bits=int(d.get("psum_bits", PSUM_BITS)),
        )

    def to_dict(self) -> dict[str, int]:
        return {"array_rows": self.array_rows, "array_cols": self.array_cols,
                "psum_bits": self.psum_bits}


@dataclass(frozen=True)
class Layer:
    name: str
    weights: QuantizedTensor
    activation: str = "relu"
    # arithmetic right shift applied before clamping to uint8 for the next layer
    shift: int = 0

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValidationError(
                f"layer {self.name!r}: activation must be one of {ACTIVATIONS}"
            )
        if not 0 <= self.shift < PSUM_BITS:
            raise ValidationError(f"layer {self.name!r}: shift {self.shift} out of range")


@dataclass(frozen=True)
class ModelBundle:
    layers: tuple[Layer, ...]
    name: str = "bundle"
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.layers:
            raise EmptyBundleError("empty bundle")
        for i in range(len(self.layers) - 1):
            a, b = self.layers[i].weights, self.layers[i + 1].weights
            if a.cols != b.rows:
                raise DimensionMismatchError(
                    f"layer {i} has {a.cols} outputs but layer {i + 1} expects {b.rows} inputs"
                )

    def __len__(self):
        return len(self.layers)

    @property
    def input_channels(self) -> int:
        return self.layers[0].weights.rows

    @classmethod
    def from_matrices(cls, mats, activations=None, shifts=None, name="bundle", **metadata):
        n = len(mats)
        activations = activations or ["relu"] * (n - 1) + ["none"]
        shifts = shifts or [0] * n
        layers = [
            Layer(f"layer{i}", QuantizedTensor(m), activations[i], int(shifts[i]))
            for i, m in enumerate(mats)
        ]
        return cls(tuple(layers), name=name, metadata=dict(metadata))

    def with_shifts(self, shifts: Sequence[int]) -> "ModelBundle":
        if len(shifts) != len(self.layers):
            raise DimensionMismatchError(
                f"{len(shifts)} shifts given for {len(self.layers)} layers"
            )
        layers = tuple(
            Layer(l.name, l.weights, l.activation, int(s)) for l, s in zip(self.layers, shifts)
        )
        return ModelBundle(layers, self.name, dict(self.metadata))


# ---------------------------------------------------------------------------
# container I/O


def _read_manifest(path: Path) -> dict:
    mpath = path / MANIFEST
    if not mpath.is_file():
        raise MissingFileError(f"no {MANIFEST} in {path}")
    try:
        return json.loads(mpath.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"malformed {mpath}: {exc}") from exc


def _read_raw(path: Path, fname: str, dtype, count: int, what: str) -> np.ndarray:
    fpath = path / fname
    if not fpath.is_file():
        raise MissingFileError(f"{what}: missing file {fpath}")
    raw = np.fromfile(fpath, dtype=dtype)
    if raw.size != count:
        raise LengthMismatchError(
            f"{what}: length mismatch, manifest declares {count} elements, "
            f"{fpath.name} holds {raw.size}"
        )
    return raw


def _write_raw(path: Path, fname: str, arr: np.ndarray, dtype) -> None:
    try:
        np.ascontiguousarray(arr, dtype=dtype).tofile(path / fname)
    except OSError as exc:
        raise BundleIOError(f"cannot write {path / fname}: {exc}") from exc


def _dims(entry: dict, keys: tuple[str, str], what: str) -> tuple[int, int]:
    try:
        a, b = int(entry[keys[0]]), int(entry[keys[1]])
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"{what}: bad or missing dimension field ({exc})") from exc
    if a < 1 or b < 1:
        raise DimensionMismatchError(f"{what}: dimensions must be >= 1, got {a}x{b}")
    return a, b


def load_bundle(path) -> ModelBundle:
    path = Path(path)
    manifest = _read_manifest(path)
    entries = manifest.get("layers") or []
    if not entries:
        raise EmptyBundleError("empty bundle")
    layers = []
    for i, e in enumerate(entries):
        name = e.get("name", f"layer{i}")
        rows, cols = _dims(e, ("rows", "cols"), f"layer {name!r}")
        if "file" not in e:
            raise ValidationError(f"layer {name!r}: no file field")
        raw = _read_raw(path, e["file"], "<i1", rows * cols, f"layer {name!r}")
        layers.append(
            Layer(
                name,
                QuantizedTensor(raw.reshape(rows, cols)),
                e.get("activation", "relu"),
                int(e.get("shift", 0)),
            )
        )
    return ModelBundle(tuple(layers), manifest.get("name", path.name),
                       dict(manifest.get("metadata", {})))


def _update_manifest(path: Path, update) -> None:
    try:
        path.mkdir(parents=True, exist_ok=True)
        mpath = path / MANIFEST
        manifest = json.loads(mpath.read_text()) if mpath.is_file() else {}
        update(manifest)
        mpath.write_text(json.dumps(manifest, indent=2) + "\n")
    except OSError as exc:
        raise BundleIOError(f"cannot write bundle at {path}: {exc}") from exc


def save_bundle(bundle: ModelBundle, path) -> None:
    path = Path(path)
    entries = []

    def update(manifest):
        for i, layer in enumerate(bundle.layers):
            fname = f"layer{i:03d}.bin"
            _write_raw(path, fname, layer.weights.data, "<i1")
            entries.append({
                "name": layer.name,
                "rows": layer.weights.rows,
                "cols": layer.weights.cols,
                "activation": layer.activation,
                "shift": layer.shift,
                "file": fname,
            })
        manifest["name"] = bundle.name
        manifest["metadata"] = bundle.metadata
        manifest["layers"] = entries

    _update_manifest(path, update)


def save_activations(batch: ActivationBatch, path, name: str = "acts") -> None:
    path = Path(path)

    def update(manifest):
        entry = {"name": name, "samples": batch.samples, "channels": batch.channels,
                 "file": f"{name}.bin"}
        _write_raw(path, entry["file"], batch.data, "<u1")
        if batch.labels is not None:
            entry["labels"] = f"{name}_labels.bin"
            _write_raw(path, entry["labels"], batch.labels, "<i4")
        others = [a for a in manifest.get("activations", []) if a.get("name") != name]
        manifest["activations"] = others + [entry]

    _update_manifest(path, update)


def load_activations(path, name: str | None = None) -> ActivationBatch:
    """Load one activation batch; the first listed one when ``name`` is None."""
    path = Path(path)
    entries = _read_manifest(path).get("activations") or []
    if name is not None:
        entries = [e for e in entries if e.get("name") == name]
    if not entries:
        what = f"activation batch {name!r}" if name else "activation batches"
        raise MissingFileError(f"no {what} in {path}")
    e = entries[0]
    what = f"activations {e.get('name')!r}"
    samples, channels = _dims(e, ("samples", "channels"), what)
    raw = _read_raw(path, e["file"], "<u1", samples * channels, what)
    labels = None
    if e.get("labels"):
        labels = _read_raw(path, e["labels"], "<i4", samples, what + " labels")
    return ActivationBatch(raw.reshape(samples, channels), labels)


def check_pair(bundle: ModelBundle, acts: ActivationBatch) -> None:
    if acts.channels != bundle.input_channels:
        raise DimensionMismatchError(
            f"activations have {acts.channels} channels, first layer expects "
            f"{bundle.input_channels}"
        )

