"""
From flip rate to output errors
===============================

Cycles that flip the partial-sum sign fail more often. Inject errors cycle by
cycle into one layer's traces and compare the measured error rates with the
closed-form estimate for baseline and reordered accumulation.
"""

import numpy as np

from readflow import ActivationBatch, ArrayConfig, QuantizedTensor
from readflow.cluster import cluster_then_reorder
from readflow.dataflow import simulate_tile
from readflow.errormodel import TimingErrorModel, ber_from_ter, inject_cycle_errors, ter_from_stats
from readflow.synth import random_activations, random_weights

rng = np.random.default_rng(3)
config = ArrayConfig(array_rows=16, array_cols=4)
w = QuantizedTensor(random_weights(rng, 64, 16))
acts = ActivationBatch(random_activations(rng, 64, 64))
model = TimingErrorModel(p_flip=0.02, p_base=2e-5, seed=1)

plan = cluster_then_reorder(w, config)
orders = {
    "baseline": [(tuple(range(j, j + 4)), None) for j in range(0, 16, 4)],
    "planned": [(e.members, e.sequence) for e in plan.entries],
}
for name, tiles in orders.items():
    events = cycles = bad = outputs = 0
    stats = None
    for i, (members, seq) in enumerate(tiles):
        res = simulate_tile(w.columns(members), acts, config, seq)
        inj = inject_cycle_errors(res.traces, model, cluster=i)
        events, cycles = events + inj.n_events, cycles + inj.n_cycles
        bad += int((inj.outputs != res.outputs).sum())
        outputs += res.outputs.size
        stats = res.stats if stats is None else stats + res.stats
    ter = ter_from_stats(stats, model)
    print(f"{name:9s} flip rate {stats.flip_rate:.4f}  TER {ter:.2e} (measured {events / cycles:.2e})"
          f"  BER {ber_from_ter(ter, 64):.4f} (corrupted outputs {bad / outputs:.4f})")
