"""readflow: sign-flip-aware dataflow optimization for output-stationary systolic arrays.

Subpackages
-----------
model_io    quantized tensors, bundles and their on-disk container
dataflow    24-bit accumulation traces and sign-flip statistics
network     multi-layer forward pass with plans and error hooks
reorder     input-channel sorting per array-width tile
cluster     balanced output-channel clustering by sign similarity
plan        per-layer plans, address LUTs, cross-layer composition
errormodel  flip-conditioned timing errors, output BER, bit-flip injection
oracle      exhaustive references for tiny instances
synth       seeded synthetic layers and a toy classifier
"""

__version__ = "0.1.0"

from .cluster import (
    ClusterParams,
    OutputClustering,
    balanced_cluster,
    cluster_sd,
    cluster_then_reorder,
    sign_difference,
    sign_vector,
)
from .dataflow import (
    PsumTrace,
    PsumTraces,
    SignFlipStats,
    count_sign_flips,
    mac_step,
    sign,
    simulate_tile,
)
from .errormodel import (
    LayerErrorProfile,
    OutputInjector,
    TimingErrorModel,
    ber_from_ter,
    inject_cycle_errors,
    inject_output_errors,
    ter_from_stats,
)
from .model_io import (
    ActivationBatch,
    ArrayConfig,
    Layer,
    ModelBundle,
    QuantizedTensor,
    load_activations,
    load_bundle,
    save_activations,
    save_bundle,
)
from .network import forward_pass
from .oracle import OracleResult, brute_force_clustering, brute_force_sequence
from .plan import (
    AddressLut,
    LayerPlan,
    build_lut,
    compose_cross_layer,
    direct_plan,
    verify_plan,
)
from .reorder import SortCriteria, channel_metrics, minmax_scale, segment_matrix, sort_input_channels
