"""
How far from optimal are the heuristics?
========================================

Exhaustive search is feasible up to eight channels. For single-column tiles
the channel sort is exactly optimal; for multi-column tiles and for balanced
clustering it can miss, and the gap is measured here.
"""

import numpy as np

from readflow.cluster import balanced_cluster
from readflow.oracle import brute_force_clustering, brute_force_sequence, sequence_flips
from readflow.reorder import sort_input_channels
from readflow.synth import random_activations, random_weights

rng = np.random.default_rng(5)

for cols in (1, 2, 4):
    gaps = []
    for _ in range(100):
        tile = random_weights(rng, 7, cols)
        acts = random_activations(rng, 2, 7)
        best = brute_force_sequence(tile, acts).best_value
        gaps.append(sequence_flips(tile, acts, sort_input_channels(tile)) - best)
    print(f"{cols}-column tiles: mean flip gap {np.mean(gaps):.2f}, optimal in {np.sum(np.equal(gaps, 0))}/100")

gaps = []
for _ in range(100):
    w = random_weights(rng, 16, 8)
    gaps.append(balanced_cluster(w, 2).objective - brute_force_clustering(w, 2).best_value)
print(f"clustering K=8, capacity 2: mean SD gap {np.mean(gaps):.2f}, optimal in {np.sum(np.equal(gaps, 0))}/100")
