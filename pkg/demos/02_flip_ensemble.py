"""
Flip rates across a random ensemble
===================================

Random int8 layers with 64 input and 16 output channels on a 4-column array,
fed non-negative activations. Compare storage order, per-tile reordering and
cluster-then-reorder, and see how weight sign skew changes the picture.
"""

import numpy as np

from readflow import ActivationBatch, ArrayConfig, QuantizedTensor
from readflow.cluster import cluster_then_reorder
from readflow.plan import direct_plan, verify_plan
from readflow.synth import random_activations, random_weights

rng = np.random.default_rng(0)
config = ArrayConfig(array_rows=16, array_cols=4)

for skew in (0.3, 0.5, 0.7):
    rates = {"baseline": [], "direct": [], "cluster": []}
    for _ in range(50):
        w = QuantizedTensor(random_weights(rng, 64, 16, sign_skew=skew))
        acts = ActivationBatch(random_activations(rng, 16, 64))
        direct = verify_plan(direct_plan(w, config), w, acts, config)
        clustered = verify_plan(cluster_then_reorder(w, config), w, acts, config)
        rates["baseline"].append(direct.baseline.flip_rate)
        rates["direct"].append(direct.planned.flip_rate)
        rates["cluster"].append(clustered.planned.flip_rate)
    means = {k: np.mean(v) for k, v in rates.items()}
    print(f"P(w >= 0) = {skew}: " + ", ".join(f"{k} {v:.4f}" for k, v in means.items()),
          f"(reduction {means['baseline'] / means['cluster']:.1f}x)")
