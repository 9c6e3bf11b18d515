"""Sign-flip-conditioned timing-error model, output BER, and bit-flip injection.

A MAC cycle whose accumulation flips the partial-sum sign fails with
probability ``p_flip``; any other cycle fails with ``p_base``. A failure flips
one bit of the 24-bit partial sum, chosen from ``bit_weights``. Operating
points (voltage/temperature/aging corners) are just named (p_flip, p_base)
pairs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .dataflow import PsumTraces, SignFlipStats, to_bits24, wrap24
from .errors import MissingFileError, ValidationError
from .model_io import PSUM_BITS

# stream tags keep cycle-level and output-level draws independent
_CYCLE_STREAM = 0
_OUTPUT_STREAM = 1


def bit_profile(name: str) -> np.ndarray:
    b = np.arange(PSUM_BITS)
    if name == "msb":
        w = (b == PSUM_BITS - 1).astype(np.float64)
    elif name == "geometric":
        w = 0.5 ** (PSUM_BITS - 1 - b)
    elif name == "uniform":
        w = np.ones(PSUM_BITS)
    else:
        raise ValidationError(f"unknown bit profile {name!r}")
    return w / w.sum()


@dataclass(frozen=True, eq=False)
class TimingErrorModel:
    p_flip: float
    p_base: float = 0.0
    bit_weights: np.ndarray = field(default_factory=lambda: bit_profile("geometric"))
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.p_base <= self.p_flip <= 1.0:
            raise ValidationError(
                f"need 0 <= p_base <= p_flip <= 1, got p_base={self.p_base}, p_flip={self.p_flip}"
            )
        w = np.asarray(self.bit_weights, dtype=np.float64)
        if w.shape != (PSUM_BITS,) or (w < 0).any() or not np.isclose(w.sum(), 1.0):
            raise ValidationError(f"bit_weights must be {PSUM_BITS} non-negative weights summing to 1")
        object.__setattr__(self, "bit_weights", w / w.sum())

    @classmethod
    def from_dict(cls, d: dict, **defaults) -> "TimingErrorModel":
        d = {**defaults, **d}
        if "bit_weights" in d:
            weights = np.asarray(d["bit_weights"], dtype=np.float64)
        else:
            weights = bit_profile(d.get("bit_profile_name", "geometric"))
        return cls(float(d.get("p_flip", 0.0)), float(d.get("p_base", 0.0)),
                   weights, int(d.get("seed", 0)))

    def with_seed(self, seed: int) -> "TimingErrorModel":
        return TimingErrorModel(self.p_flip, self.p_base, self.bit_weights, seed)

    def to_dict(self) -> dict:
        return {"p_flip": self.p_flip, "p_base": self.p_base, "seed": self.seed,
                "bit_weights": [float(x) for x in self.bit_weights]}


def ter_from_stats(stats: SignFlipStats, model: TimingErrorModel) -> float:
    """Expected per-cycle error probability for a layer with these flip stats."""
    r = stats.flip_rate
    return model.p_flip * r + model.p_base * (1.0 - r)


def ber_from_ter(ter: float, n: int) -> float:
    """Probability that at least one of ``n`` accumulations into an output fails."""
    if not 0.0 <= ter <= 1.0:
        raise ValidationError(f"TER {ter} outside [0, 1]")
    if n < 1:
        raise ValidationError("need at least one MAC per output")
    return float(-np.expm1(n * np.log1p(-ter))) if ter < 1.0 else 1.0


@dataclass(frozen=True)
class LayerErrorProfile:
    ter: float
    n_macs: int

    @property
    def ber(self) -> float:
        return ber_from_ter(self.ter, self.n_macs)

    @classmethod
    def from_stats(cls, stats: SignFlipStats, model: TimingErrorModel) -> "LayerErrorProfile":
        return cls(ter_from_stats(stats, model), accumulation_depth(stats))


def accumulation_depth(stats: SignFlipStats) -> int:
    n = stats.n_outputs
    return stats.total_mac_cycles // n if n else 0


def _flip_bit(values: np.ndarray, bits: np.ndarray, hit: np.ndarray) -> np.ndarray:
    mask = np.where(hit, np.left_shift(1, bits.astype(np.int64)), 0)
    return wrap24(to_bits24(np.asarray(values, dtype=np.int64)) ^ mask)


@dataclass(frozen=True, eq=False)
class CycleInjection:
    errors: np.ndarray  # (samples, cols, depth) bool
    values: np.ndarray  # corrupted partial sums, (samples, cols, depth + 1)

    @property
    def outputs(self) -> np.ndarray:
        return self.values[:, :, -1]

    @property
    def n_events(self) -> int:
        return int(self.errors.sum())

    @property
    def n_cycles(self) -> int:
        return int(self.errors.size)

    @property
    def empirical_ter(self) -> float:
        return self.n_events / self.n_cycles if self.n_cycles else 0.0

    def erroneous_outputs(self) -> np.ndarray:
        """Outputs that saw at least one error event."""
        return self.errors.any(axis=2)


def inject_cycle_errors(traces: PsumTraces, model: TimingErrorModel, layer: int = 0,
                        cluster: int = 0) -> CycleInjection:
    """Replay each trace, corrupting cycles at the flip-conditioned rate.

    Error draws follow the clean trace's flip annotation; once a bit is flipped
    the corrupted partial sum feeds every later accumulation. Each trace draws
    from its own stream keyed by (seed, layer, cluster, sample, column), so the
    result does not depend on evaluation order.
    """
    n, c, depth = traces.flips.shape
    errors = np.zeros((n, c, depth), dtype=bool)
    values = traces.values.copy()
    if model.p_flip == 0.0:
        return CycleInjection(errors, values)
    probs = np.where(traces.flips, model.p_flip, model.p_base)
    for s in range(n):
        for k in range(c):
            rng = np.random.default_rng([model.seed, _CYCLE_STREAM, layer, cluster, s, k])
            hit = rng.random(depth) < probs[s, k]
            bits = rng.choice(PSUM_BITS, size=depth, p=model.bit_weights)
            if not hit.any():
                continue
            errors[s, k] = hit
            v = values[s, k]
            prods = traces.products[s, k]
            for j in range(int(np.argmax(hit)), depth):
                nxt = wrap24(int(v[j]) + int(prods[j]))
                if hit[j]:
                    nxt = wrap24((nxt & ((1 << PSUM_BITS) - 1)) ^ (1 << int(bits[j])))
                v[j + 1] = nxt
    return CycleInjection(errors, values)


def inject_output_errors(outputs: np.ndarray, ber: float, model: TimingErrorModel,
                         layer: int = 0) -> np.ndarray:
    """Flip one bit in each output independently with probability ``ber``.

    The draws depend only on (seed, layer, output shape), so two runs that
    differ only in ``ber`` corrupt nested subsets of outputs.
    """
    if not 0.0 <= ber <= 1.0:
        raise ValidationError(f"BER {ber} outside [0, 1]")
    out = np.asarray(outputs, dtype=np.int64)
    rng = np.random.default_rng([model.seed, _OUTPUT_STREAM, layer])
    hit = rng.random(out.shape) < ber
    bits = rng.choice(PSUM_BITS, size=out.shape, p=model.bit_weights)
    return _flip_bit(out, bits, hit)


class OutputInjector:
    """Forward-pass hook corrupting pre-activation outputs at each layer's BER.

    The BER of a layer comes from its own flip statistics, so the same model
    yields different corruption levels for baseline and planned orders.
    """

    def __init__(self, model: TimingErrorModel, layers=None):
        self.model = model
        self.layers = None if layers is None else set(layers)
        self.profiles: dict[int, LayerErrorProfile] = {}

    def __call__(self, layer: int, outputs: np.ndarray, stats: SignFlipStats) -> np.ndarray:
        profile = LayerErrorProfile.from_stats(stats, self.model)
        self.profiles[layer] = profile
        if self.layers is not None and layer not in self.layers:
            return outputs
        return inject_output_errors(outputs, profile.ber, self.model, layer)


# ---------------------------------------------------------------------------
# configuration


def default_operating_points() -> dict:
    text = resources.files("readflow").joinpath("data/operating_points.json").read_text()
    return json.loads(text)


def load_error_models(source, base_dir=None) -> dict[str, TimingErrorModel]:
    """Named operating points from a config dict or JSON file.

    Accepted forms::

        {"p_flip": .., "p_base": .., "bit_profile_name": "msb", "seed": 3}
        {"seed": 3, "bit_profile_name": "geometric",
         "operating_points": {"nominal": {"p_flip": 0, "p_base": 0}, ...}}

    ``operating_points`` may also name a JSON file (relative to the config)
    holding that table, or the string ``"default"`` for the bundled table.
    """
    if isinstance(source, (str, Path)):
        path = Path(source)
        if not path.is_file():
            raise MissingFileError(f"no error-model config at {path}")
        base_dir = path.parent
        try:
            source = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ValidationError(f"malformed error-model config {path}: {exc}") from exc
    d = dict(source)
    shared = {k: d[k] for k in ("seed", "bit_profile_name", "bit_weights") if k in d}
    points = d.get("operating_points", d.get("profiles"))
    if points is None:
        return {"default": TimingErrorModel.from_dict(d)}
    if isinstance(points, str):
        if points == "default":
            points = default_operating_points()
        else:
            ppath = Path(base_dir or ".") / points
            if not ppath.is_file():
                raise MissingFileError(f"no operating-point table at {ppath}")
            points = json.loads(ppath.read_text())
    return {name: TimingErrorModel.from_dict(p, **shared) for name, p in points.items()}
