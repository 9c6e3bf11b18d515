import numpy as np
import pytest

from readflow.errors import DimensionMismatchError, PlanError
from readflow.model_io import ActivationBatch, ArrayConfig, ModelBundle
from readflow.network import forward_pass, reference_forward
from readflow.plan import direct_plan
from readflow.synth import random_bundle
from readflow.experiments import RunConfig, optimize


def test_two_layer_matches_integer_matmul():
    rng = np.random.default_rng(7)
    w0 = rng.integers(-128, 128, (10, 6))
    w1 = rng.integers(-128, 128, (6, 3))
    acts = ActivationBatch(rng.integers(0, 256, (4, 10)))
    bundle = ModelBundle.from_matrices([w0, w1], shifts=[9, 0])
    res = forward_pass(bundle, acts, ArrayConfig(array_cols=4))
    h = acts.data.astype(np.int64) @ w0
    np.testing.assert_array_equal(res.outputs[0], h)
    x = np.clip(h >> 9, 0, 255)
    np.testing.assert_array_equal(res.outputs[1], x @ w1)
    for got, ref in zip(res.outputs, reference_forward(bundle, acts)):
        np.testing.assert_array_equal(got, ref)


def test_plans_are_bit_identical():
    bundle, acts = random_bundle(3, [24, 12, 9, 5], samples=8)
    cfg = ArrayConfig(array_cols=4)
    base = forward_pass(bundle, acts, cfg)
    for mode in ("direct", "cluster"):
        plans = optimize(bundle, RunConfig(array=cfg), "sign_first", mode)
        planned = forward_pass(bundle, acts, cfg, plans)
        for a, b in zip(base.outputs, planned.outputs):
            np.testing.assert_array_equal(a, b)
        assert planned.stats.total_flips <= base.stats.total_flips


def test_identity_layer_passthrough():
    w = np.eye(5, dtype=np.int64)
    acts = ActivationBatch(np.random.default_rng(2).integers(0, 256, (3, 5)))
    res = forward_pass(ModelBundle.from_matrices([w], activations=["relu"]), acts,
                       ArrayConfig(array_cols=2))
    np.testing.assert_array_equal(res.outputs[0], acts.data)


def test_mismatches():
    bundle, acts = random_bundle(0, [6, 4, 2])
    cfg = ArrayConfig(array_cols=2)
    with pytest.raises(PlanError):
        forward_pass(bundle, acts, cfg, [direct_plan(bundle.layers[0].weights, cfg)])
    wrong = [direct_plan(bundle.layers[1].weights, cfg), direct_plan(bundle.layers[1].weights, cfg)]
    with pytest.raises(PlanError):
        forward_pass(bundle, acts, cfg, wrong)
    with pytest.raises(DimensionMismatchError):
        forward_pass(bundle, ActivationBatch(np.ones((1, 5))), cfg)


def test_injector_sees_pre_activation_and_stats():
    bundle, acts = random_bundle(1, [8, 4, 3])
    seen = []

    def hook(layer, outputs, stats):
        seen.append((layer, outputs.copy(), stats.total_mac_cycles))
        return outputs + (1 if layer == 1 else 0)

    cfg = ArrayConfig(array_cols=4)
    clean = forward_pass(bundle, acts, cfg)
    res = forward_pass(bundle, acts, cfg, injector=hook)
    assert [s[0] for s in seen] == [0, 1]
    np.testing.assert_array_equal(seen[0][1], clean.outputs[0])
    assert seen[0][2] == acts.samples * 4 * 8
    np.testing.assert_array_equal(res.outputs[1], clean.outputs[1] + 1)


def test_traces_kept_per_cluster():
    bundle, acts = random_bundle(4, [8, 6])
    res = forward_pass(bundle, acts, ArrayConfig(array_cols=4), keep_traces=True)
    assert [(l, c) for l, c, _ in res.traces] == [(0, 0), (0, 1)]
    assert res.traces[1][2].channels.tolist() == [4, 5]
