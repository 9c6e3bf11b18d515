"""Deployable per-layer plans: cluster membership, fetch order, address LUT.

A plan entry says which output channels share a pass through the array and in
which order the input channels are streamed for them. Outputs of a planned
layer are stored physically in cluster order (``output_order``); the next
layer's fetch addresses absorb that permutation via :func:`compose_cross_layer`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataflow import SignFlipStats, check_permutation, simulate_tile
from .errors import (
    BundleIOError,
    DimensionMismatchError,
    MissingFileError,
    PermutationError,
    PlanError,
)
from .model_io import ActivationBatch, ArrayConfig, QuantizedTensor
from .reorder import SortCriteria, column_blocks, sort_input_channels


@dataclass(frozen=True, eq=False)
class AddressLut:
    """``table[cycle]`` is the activation address read at that cycle."""

    table: np.ndarray

    def __post_init__(self):
        table = np.asarray(self.table)
        check_permutation(table, len(table), "LUT")
        object.__setattr__(self, "table", table.astype(np.int64))

    def __len__(self):
        return len(self.table)

    def __eq__(self, other):
        return isinstance(other, AddressLut) and np.array_equal(self.table, other.table)

    def apply(self, acts: np.ndarray) -> np.ndarray:
        return np.asarray(acts)[..., self.table]

    def inverse(self) -> np.ndarray:
        return np.argsort(self.table)

    @property
    def bits(self) -> int:
        return lut_bits(len(self.table))


def lut_bits(channels: int) -> int:
    """Storage for a ``channels``-entry LUT: one address of ceil(log2 C) bits each."""
    return channels * max(1, math.ceil(math.log2(channels)))


def build_lut(sequence) -> AddressLut:
    return AddressLut(np.asarray(sequence, dtype=np.int64).copy())


def compose_cross_layer(prev_output_order, curr_sequence) -> np.ndarray:
    """Physical fetch addresses for ``curr_sequence`` over permuted storage.

    ``prev_output_order[pos]`` is the logical channel stored at physical
    position ``pos``. Returns ``f`` with ``prev_output_order[f[t]] ==
    curr_sequence[t]``.
    """
    prev = np.asarray(prev_output_order)
    curr = np.asarray(curr_sequence)
    if prev.shape != curr.shape:
        raise DimensionMismatchError(
            f"previous layer stores {prev.size} channels, sequence has {curr.size}"
        )
    prev = check_permutation(prev, prev.size, "previous output order")
    curr = check_permutation(curr, curr.size, "sequence")
    position = np.empty_like(prev)
    position[prev] = np.arange(prev.size)
    return position[curr]


@dataclass(frozen=True, eq=False)
class PlanEntry:
    members: tuple[int, ...]
    sequence: np.ndarray
    lut: AddressLut

    def to_dict(self) -> dict:
        return {
            "members": [int(m) for m in self.members],
            "sequence": [int(s) for s in self.sequence],
            "lut": [int(t) for t in self.lut.table],
        }


@dataclass(frozen=True, eq=False)
class LayerPlan:
    layer: int
    entries: tuple[PlanEntry, ...]

    @property
    def output_order(self) -> np.ndarray:
        return np.asarray([m for e in self.entries for m in e.members], dtype=np.int64)

    @property
    def clusters(self) -> tuple[tuple[int, ...], ...]:
        return tuple(e.members for e in self.entries)

    @property
    def lut_bits(self) -> int:
        return sum(e.lut.bits for e in self.entries)

    def validate(self, rows: int, cols: int, capacity: int | None = None) -> None:
        order = self.output_order
        if sorted(order.tolist()) != list(range(cols)):
            raise PlanError(f"layer {self.layer}: members do not partition {cols} output channels")
        for i, e in enumerate(self.entries):
            if capacity is not None and len(e.members) > capacity:
                raise PlanError(
                    f"layer {self.layer} entry {i}: {len(e.members)} members exceed "
                    f"array width {capacity}"
                )
            try:
                check_permutation(e.sequence, rows, "sequence")
                check_permutation(e.lut.table, rows, "LUT")
            except PermutationError as exc:
                raise PlanError(f"layer {self.layer} entry {i}: {exc}") from exc
            if not np.array_equal(e.lut.table, e.sequence):
                raise PlanError(f"layer {self.layer} entry {i}: LUT disagrees with sequence")

    def to_dict(self) -> dict:
        return {
            "layer": self.layer,
            "entries": [e.to_dict() for e in self.entries],
            "output_order": [int(i) for i in self.output_order],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LayerPlan":
        try:
            entries = []
            for e in d["entries"]:
                seq = np.asarray(e["sequence"], dtype=np.int64)
                table = np.asarray(e.get("lut", e["sequence"]), dtype=np.int64)
                entries.append(PlanEntry(tuple(int(m) for m in e["members"]), seq,
                                         AddressLut(table)))
            plan = cls(int(d.get("layer", 0)), tuple(entries))
        except (KeyError, TypeError, ValueError) as exc:
            raise PlanError(f"malformed layer plan: {exc}") from exc
        if "output_order" in d and list(d["output_order"]) != plan.output_order.tolist():
            raise PlanError(f"layer {plan.layer}: output_order disagrees with entries")
        return plan


def plan_from_clusters(w: QuantizedTensor, clusters, criteria=SortCriteria.SIGN_FIRST,
                       layer: int = 0) -> LayerPlan:
    entries = []
    for members in clusters:
        members = tuple(int(m) for m in members)
        seq = sort_input_channels(w.columns(members), criteria)
        entries.append(PlanEntry(members, seq, build_lut(seq)))
    return LayerPlan(layer, tuple(entries))


def direct_plan(w: QuantizedTensor, config: ArrayConfig, criteria=SortCriteria.SIGN_FIRST,
                layer: int = 0) -> LayerPlan:
    """Consecutive column tiles, each with its own sorted input order."""
    return plan_from_clusters(w, column_blocks(w.cols, config.array_cols), criteria, layer)


def identity_plan(w: QuantizedTensor, config: ArrayConfig, layer: int = 0) -> LayerPlan:
    seq = np.arange(w.rows)
    entries = tuple(PlanEntry(tuple(b), seq, build_lut(seq))
                    for b in column_blocks(w.cols, config.array_cols))
    return LayerPlan(layer, entries)


def simulate_plan(plan: LayerPlan, w: QuantizedTensor, acts: ActivationBatch,
                  config: ArrayConfig):
    """Logical-order outputs and merged stats of one layer under ``plan``."""
    outputs = np.zeros((acts.samples, w.cols), dtype=np.int64)
    stats = SignFlipStats()
    for e in plan.entries:
        res = simulate_tile(w.columns(e.members), acts, config, e.lut.table,
                            channels=e.members)
        outputs[:, list(e.members)] = res.outputs
        stats = stats + res.stats
    return outputs, stats


def reduction_ratio(baseline_rate: float, planned_rate: float) -> float:
    if planned_rate == 0:
        return 1.0 if baseline_rate == 0 else math.inf
    return baseline_rate / planned_rate


def ratio_to_json(x: float):
    return "inf" if math.isinf(x) else x


@dataclass(frozen=True)
class VerificationReport:
    bit_exact: bool
    baseline: SignFlipStats
    planned: SignFlipStats
    lut_bits: int

    @property
    def reduction_ratio(self) -> float:
        return reduction_ratio(self.baseline.flip_rate, self.planned.flip_rate)

    def to_dict(self) -> dict:
        return {
            "bit_exact": self.bit_exact,
            "baseline_flip_rate": self.baseline.flip_rate,
            "planned_flip_rate": self.planned.flip_rate,
            "reduction_ratio": ratio_to_json(self.reduction_ratio),
            "lut_bits": self.lut_bits,
        }


def verify_plan(plan: LayerPlan, w: QuantizedTensor, acts: ActivationBatch,
                config: ArrayConfig) -> VerificationReport:
    if acts.channels != w.rows:
        raise DimensionMismatchError(
            f"activations have {acts.channels} channels, layer expects {w.rows}"
        )
    plan.validate(w.rows, w.cols, config.array_cols)
    base_out, base_stats = simulate_plan(identity_plan(w, config), w, acts, config)
    plan_out, plan_stats = simulate_plan(plan, w, acts, config)
    return VerificationReport(bool(np.array_equal(base_out, plan_out)),
                              base_stats, plan_stats, plan.lut_bits)


# ---------------------------------------------------------------------------
# plan files


def plans_to_dict(plans, **meta) -> dict:
    return {**meta, "layers": [p.to_dict() for p in plans]}


def save_plans(plans, path, **meta) -> None:
    try:
        Path(path).write_text(json.dumps(plans_to_dict(plans, **meta), indent=2) + "\n")
    except OSError as exc:
        raise BundleIOError(f"cannot write plan file {path}: {exc}") from exc


def load_plans(path) -> list[LayerPlan]:
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"no plan file at {path}")
    try:
        d = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise PlanError(f"malformed plan file {path}: {exc}") from exc
    return [LayerPlan.from_dict(x) for x in d.get("layers", [])]
