"""
Reordering a 4x4 layer by hand
==============================

A four-channel layer mapped onto a two-column array. Reordering the input
channels of each tile cuts the number of partial-sum sign flips, and grouping
output channels with matching sign patterns lets one order suit a whole tile.
"""

import numpy as np

from readflow import ActivationBatch, ArrayConfig, QuantizedTensor
from readflow.cluster import balanced_cluster, cluster_then_reorder, clustering_objective, identity_clustering
from readflow.dataflow import PsumTrace
from readflow.plan import verify_plan

w = QuantizedTensor(np.array([[4, -5, 5, -1],
                              [-10, 3, -2, 2],
                              [9, -2, 3, -1],
                              [-2, 3, -6, 3]]))
ones = ActivationBatch(np.ones((1, 4)))
config = ArrayConfig(array_rows=16, array_cols=2)

# column 0 accumulated in storage order crosses zero twice
trace = PsumTrace.from_values(np.concatenate([[0], np.cumsum(w.data[:, 0])]))
print("column 0 psums:", trace.values.tolist(), "flips:", int(trace.flips.sum()))

# columns 0 and 2 share a sign pattern, as do 1 and 3
clustering = balanced_cluster(w, capacity=2)
print("clusters:", clustering.clusters, "SD", clustering.objective,
      "vs identity SD", clustering_objective(w, identity_clustering(4, 2)))

# sort the input channels of each cluster and check nothing changed but the order
plan = cluster_then_reorder(w, config)
for entry in plan.entries:
    print("tile", entry.members, "sequence", entry.sequence.tolist())
report = verify_plan(plan, w, ones, config)
print(report.to_dict())
