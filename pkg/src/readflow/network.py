"""Multi-layer forward pass over a linear chain of quantized layers."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .dataflow import PsumTraces, SignFlipStats, accumulate, requantize, wrap24
from .errors import PlanError
from .model_io import ActivationBatch, ArrayConfig, ModelBundle, check_pair
from .plan import LayerPlan, compose_cross_layer, identity_plan

# injector(layer_index, pre_activation_outputs, layer_stats) -> corrupted outputs
Injector = Callable[[int, np.ndarray, SignFlipStats], np.ndarray]


@dataclass
class ForwardResult:
    outputs: list[np.ndarray]  # per-layer pre-activation values, logical channel order
    layer_stats: list[SignFlipStats]
    traces: list[tuple[int, int, PsumTraces]] = field(default_factory=list)

    @property
    def stats(self) -> SignFlipStats:
        return SignFlipStats.combine(self.layer_stats)

    @property
    def logits(self) -> np.ndarray:
        return self.outputs[-1]

    def predictions(self) -> np.ndarray:
        return np.argmax(self.logits, axis=1)


def forward_pass(bundle: ModelBundle, acts: ActivationBatch, config: ArrayConfig,
                 plans: Sequence[LayerPlan] | None = None, injector: Injector | None = None,
                 keep_traces: bool = False) -> ForwardResult:
    """Run every layer on the simulated array.

    Between layers the pre-activation values are shifted right by the layer's
    ``shift`` and clamped to [0, 255]. With plans, each layer's outputs are
    stored in its cluster order and the next layer fetches through the
    composed address table, so results are bit-identical to the unplanned run.
    """
    check_pair(bundle, acts)
    if plans is not None and len(plans) != len(bundle):
        raise PlanError(f"{len(plans)} plans for {len(bundle)} layers")

    n = acts.samples
    stored = acts.data
    stored_order = np.arange(acts.channels)
    outputs, layer_stats, kept = [], [], []
    for i, layer in enumerate(bundle.layers):
        w = layer.weights
        plan = plans[i] if plans is not None else identity_plan(w, config, i)
        plan.validate(w.rows, w.cols, config.array_cols)

        physical = np.zeros((n, w.cols), dtype=np.int64)
        stats = SignFlipStats()
        pos = 0
        for ci, e in enumerate(plan.entries):
            members = list(e.members)
            fetch = compose_cross_layer(stored_order, e.lut.table)
            tr = accumulate(stored[:, fetch], w.data[e.lut.table][:, members],
                            members, config.array_rows)
            physical[:, pos:pos + len(members)] = tr.outputs
            pos += len(members)
            stats = stats + tr.stats()
            if keep_traces:
                kept.append((i, ci, tr))

        order = plan.output_order
        logical = np.empty_like(physical)
        logical[:, order] = physical
        if injector is not None:
            logical = wrap24(np.asarray(injector(i, logical, stats), dtype=np.int64))
        outputs.append(logical)
        layer_stats.append(stats)

        stored = requantize(logical, layer.shift)[:, order]
        stored_order = order
    return ForwardResult(outputs, layer_stats, kept)


def reference_forward(bundle: ModelBundle, acts: ActivationBatch) -> list[np.ndarray]:
    """Plain integer matrix products, the independent check for :func:`forward_pass`."""
    x = acts.data.astype(np.int64)
    outs = []
    for layer in bundle.layers:
        pre = wrap24(x @ layer.weights.data.astype(np.int64))
        outs.append(pre)
        x = np.clip(pre >> layer.shift, 0, 255)
    return outs
