"""Seeded synthetic layers, bundles and a toy labeled classification task."""

from __future__ import annotations

import math

import numpy as np

from .model_io import ActivationBatch, Layer, ModelBundle, QuantizedTensor


def random_weights(rng: np.random.Generator, rows: int, cols: int, sign_skew: float = 0.5,
                   sparsity: float = 0.0, scale: float = 24.0) -> np.ndarray:
    """int8 weights with P(w >= 0) ~ ``sign_skew`` and a fraction ``sparsity`` of zeros.

    Magnitudes are rounded half-normal with the given scale, at least 1.
    """
    mag = np.clip(np.rint(np.abs(rng.normal(0.0, scale, (rows, cols)))), 1, 127)
    signs = np.where(rng.random((rows, cols)) < sign_skew, 1, -1)
    w = (mag * signs).astype(np.int64)
    w[rng.random((rows, cols)) < sparsity] = 0
    return np.clip(w, -128, 127).astype(np.int8)


def random_activations(rng: np.random.Generator, samples: int, channels: int,
                       sparsity: float = 0.0) -> np.ndarray:
    a = rng.integers(0, 256, (samples, channels))
    a[rng.random((samples, channels)) < sparsity] = 0
    return a.astype(np.uint8)


def calibrate_shift(pre: np.ndarray, quantile: float = 0.99) -> int:
    """Smallest right shift that brings the given quantile of positive outputs under 256."""
    pos = pre[pre > 0]
    if pos.size == 0:
        return 0
    top = float(np.quantile(pos, quantile))
    return max(0, math.ceil(math.log2(top / 255.0))) if top > 255 else 0


def _calibrated(x: np.ndarray, w: np.ndarray) -> tuple[int, np.ndarray]:
    pre = x.astype(np.int64) @ w.astype(np.int64)
    shift = calibrate_shift(pre)
    return shift, np.clip(pre >> shift, 0, 255)


def random_bundle(seed: int, dims, samples: int = 16, sign_skew: float = 0.5,
                  sparsity: float = 0.0, act_sparsity: float = 0.0):
    """Linear chain with layer sizes ``dims`` (input width first) and a batch to feed it.

    Requantization shifts are calibrated on that batch.
    """
    rng = np.random.default_rng(seed)
    acts = random_activations(rng, samples, dims[0], act_sparsity)
    x = acts.astype(np.int64)
    layers = []
    for i, (c, k) in enumerate(zip(dims[:-1], dims[1:])):
        w = random_weights(rng, c, k, sign_skew, sparsity)
        shift, x = _calibrated(x, w)
        last = i == len(dims) - 2
        layers.append(Layer(f"layer{i}", QuantizedTensor(w), "none" if last else "relu", shift))
    meta = {"seed": seed, "sign_skew": sign_skew, "sparsity": sparsity, "kind": "random"}
    return ModelBundle(tuple(layers), f"random-{seed}", meta), ActivationBatch(acts)


def toy_dataset(rng: np.random.Generator, n_classes: int, features: int, samples: int,
                noise: float = 40.0, prototypes: np.ndarray | None = None):
    if prototypes is None:
        prototypes = rng.integers(0, 256, (n_classes, features))
    labels = rng.integers(0, n_classes, samples)
    x = prototypes[labels] + rng.normal(0.0, noise, (samples, features))
    return np.clip(np.rint(x), 0, 255).astype(np.uint8), labels, prototypes


def toy_classifier(seed: int = 0, n_classes: int = 4, features: int = 32,
                   hidden: tuple[int, int] = (32, 32), train_samples: int = 512,
                   test_samples: int = 256, noise: float = 40.0, sign_skew: float = 0.5):
    """Three-layer integer classifier on separable prototype data.

    The two hidden layers are random projections; the readout is a least-squares
    fit on the second hidden layer's activations, quantized to int8.
    Returns (bundle, train batch, test batch), both batches labeled.
    """
    rng = np.random.default_rng(seed)
    x_tr, y_tr, protos = toy_dataset(rng, n_classes, features, train_samples, noise)
    x_te, y_te, _ = toy_dataset(rng, n_classes, features, test_samples, noise, protos)

    dims = (features, *hidden)
    h = x_tr.astype(np.int64)
    layers = []
    for i, (c, k) in enumerate(zip(dims[:-1], dims[1:])):
        w = random_weights(rng, c, k, sign_skew)
        shift, h = _calibrated(h, w)
        layers.append(Layer(f"hidden{i}", QuantizedTensor(w), "relu", shift))

    feats = h.astype(np.float64)
    target = np.where(np.eye(n_classes)[y_tr] > 0, 1.0, -1.0)
    readout, *_ = np.linalg.lstsq(feats, target, rcond=None)
    readout = np.rint(readout / np.abs(readout).max() * 127).astype(np.int8)
    layers.append(Layer("readout", QuantizedTensor(readout), "none", 0))

    meta = {"seed": seed, "kind": "toy", "n_classes": n_classes, "noise": noise}
    bundle = ModelBundle(tuple(layers), f"toy-{seed}", meta)
    return bundle, ActivationBatch(x_tr, y_tr), ActivationBatch(x_te, y_te)
