"""Report-producing runs behind the CLI subcommands.

Every function here is deterministic given its arguments and returns plain
JSON-ready dictionaries.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import __version__
from .cluster import ClusterParams, balanced_cluster, clustering_objective, identity_clustering
from .dataflow import trace_rows, wrap24
from .errormodel import (
    OutputInjector,
    TimingErrorModel,
    ber_from_ter,
    inject_cycle_errors,
    ter_from_stats,
)
from .errors import ValidationError
from .model_io import ActivationBatch, ArrayConfig, ModelBundle
from .network import forward_pass
from .oracle import MAX_CHANNELS, brute_force_clustering, brute_force_sequence, sequence_flips
from .plan import LayerPlan, direct_plan, plan_from_clusters, ratio_to_json, reduction_ratio
from .reorder import SortCriteria


@dataclass(frozen=True)
class RunConfig:
    """Parsed form of the JSON config file shared by all subcommands."""

    array: ArrayConfig = field(default_factory=ArrayConfig)
    shifts: tuple[int, ...] | None = None
    clustering: ClusterParams = field(default_factory=ClusterParams)
    error_model: dict | None = None
    repeats: int = 5
    raw: dict = field(default_factory=dict, compare=False)

    @classmethod
    def from_dict(cls, d: dict | None) -> "RunConfig":
        d = dict(d or {})
        shifts = d.get("shifts")
        return cls(
            array=ArrayConfig.from_dict(d.get("array", {})),
            shifts=None if shifts is None else tuple(int(s) for s in shifts),
            clustering=ClusterParams.from_dict(d.get("clustering")),
            error_model=d.get("error_model"),
            repeats=int(d.get("repeats", 5)),
            raw=d,
        )

    def apply(self, bundle: ModelBundle) -> ModelBundle:
        return bundle if self.shifts is None else bundle.with_shifts(self.shifts)


def config_hash(*parts) -> str:
    blob = json.dumps(parts, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def provenance(seeds, *hashed) -> dict:
    return {"config_hash": config_hash(*hashed), "seeds": list(seeds),
            "tool_version": __version__}


# ---------------------------------------------------------------------------
# optimize


def optimize(bundle: ModelBundle, config: RunConfig, criteria="sign_first",
             mode: str = "cluster") -> list[LayerPlan]:
    criteria = SortCriteria(criteria)
    plans = []
    for i, layer in enumerate(bundle.layers):
        w = layer.weights
        if mode == "direct":
            plans.append(direct_plan(w, config.array, criteria, layer=i))
        elif mode == "cluster":
            clustering = balanced_cluster(w, config.array.array_cols, config.clustering)
            plans.append(plan_from_clusters(w, clustering.clusters, criteria, layer=i))
        else:
            raise ValidationError(f"unknown mode {mode!r}")
    return plans


# ---------------------------------------------------------------------------
# simulate


def _ratio_summary(ratios: Sequence[float]) -> dict:
    if not ratios:
        return {"mean_reduction": 1.0, "max_reduction": 1.0}
    mean = math.inf if any(math.isinf(r) for r in ratios) else float(np.mean(ratios))
    return {"mean_reduction": ratio_to_json(mean), "max_reduction": ratio_to_json(max(ratios))}


def simulate(bundle: ModelBundle, acts: ActivationBatch, config: RunConfig,
             plans: Sequence[LayerPlan] | None, model: TimingErrorModel,
             point: str = "default") -> dict:
    """Per-layer flip rates, TER and BER for the baseline and planned orders."""
    bundle = config.apply(bundle)
    base = forward_pass(bundle, acts, config.array)
    planned = forward_pass(bundle, acts, config.array, plans) if plans else base
    records, ratios = [], []
    for i, layer in enumerate(bundle.layers):
        b, p = base.layer_stats[i], planned.layer_stats[i]
        n = layer.weights.rows
        ter_b, ter_p = ter_from_stats(b, model), ter_from_stats(p, model)
        ratio = reduction_ratio(b.flip_rate, p.flip_rate)
        ratios.append(ratio)
        records.append({
            "layer": i,
            "name": layer.name,
            "baseline_flip_rate": b.flip_rate,
            "planned_flip_rate": p.flip_rate,
            "reduction_ratio": ratio_to_json(ratio),
            "ter_baseline": ter_b,
            "ter_planned": ter_p,
            "ber_baseline": ber_from_ter(ter_b, n),
            "ber_planned": ber_from_ter(ter_p, n),
            "bit_exact": bool(np.array_equal(base.outputs[i], planned.outputs[i])),
        })
    return {
        "layers": records,
        "summary": _ratio_summary(ratios),
        "provenance": {
            **provenance([model.seed], config.raw, model.to_dict(),
                         [p.to_dict() for p in plans or []]),
            "operating_point": point,
        },
    }


# ---------------------------------------------------------------------------
# inject


def inject(bundle: ModelBundle, acts: ActivationBatch, config: RunConfig,
           plans: Sequence[LayerPlan] | None, model: TimingErrorModel,
           point: str = "default", trace_sink: list | None = None) -> dict:
    """Cycle-level injection on every layer's clean traces.

    Each layer is fed its clean inputs, so the numbers characterize per-layer
    error statistics rather than error propagation through the network. When
    ``trace_sink`` is a list, CSV trace records of the planned run (or the
    baseline run without plans) are appended to it.
    """
    bundle = config.apply(bundle)
    variants = [("baseline", None)] + ([("planned", plans)] if plans else [])
    records = []
    for name, pl in variants:
        run = forward_pass(bundle, acts, config.array, pl, keep_traces=True)
        per_layer: dict[int, dict] = {}
        for layer, cluster, tr in run.traces:
            inj = inject_cycle_errors(tr, model, layer, cluster)
            rec = per_layer.setdefault(layer, {"events": 0, "cycles": 0, "outputs": 0,
                                               "erroneous_outputs": 0, "corrupted_outputs": 0,
                                               "expected_output_error": 0.0})
            rec["events"] += inj.n_events
            rec["cycles"] += inj.n_cycles
            rec["outputs"] += tr.samples * tr.cols
            rec["erroneous_outputs"] += int(inj.erroneous_outputs().sum())
            rec["corrupted_outputs"] += int((inj.outputs != tr.outputs).sum())
            k = tr.flip_counts()
            rec["expected_output_error"] += float(
                (1 - (1 - model.p_flip) ** k * (1 - model.p_base) ** (tr.depth - k)).sum()
            )
            if trace_sink is not None and (pl is not None or not plans):
                trace_sink.extend(trace_rows(tr, layer, cluster, inj.errors, inj.values))
        for layer, rec in sorted(per_layer.items()):
            stats = run.layer_stats[layer]
            ter = ter_from_stats(stats, model)
            records.append({
                "variant": name,
                "layer": layer,
                "cycles": rec["cycles"],
                "flips": stats.total_flips,
                "events": rec["events"],
                "empirical_ter": rec["events"] / rec["cycles"],
                "expected_ter": ter,
                "empirical_output_error_rate": rec["erroneous_outputs"] / rec["outputs"],
                "expected_output_error_rate": rec["expected_output_error"] / rec["outputs"],
                "closed_form_ber": ber_from_ter(ter, bundle.layers[layer].weights.rows),
                "corrupted_outputs": rec["corrupted_outputs"],
            })
    return {
        "records": records,
        "provenance": {
            **provenance([model.seed], config.raw, model.to_dict(),
                         [p.to_dict() for p in plans or []]),
            "operating_point": point,
        },
    }


# ---------------------------------------------------------------------------
# accuracy


def _accuracy(result, labels) -> float:
    return float(np.mean(result.predictions() == labels))


def _summary(values) -> dict:
    v = np.asarray(values, dtype=np.float64)
    return {"mean": float(v.mean()), "std": float(v.std(ddof=1)) if v.size > 1 else 0.0,
            "runs": [float(x) for x in v]}


def accuracy(bundle: ModelBundle, acts: ActivationBatch, config: RunConfig,
             plans: Sequence[LayerPlan], models: dict[str, TimingErrorModel],
             repeats: int | None = None, seed: int = 0, layers=None) -> dict:
    """Mean/std classification accuracy under output-level injection.

    Run ``r`` at every operating point uses seed ``seed + r`` for both the
    baseline and the planned order, so the two see the same random draws and
    differ only through their per-layer BERs.
    """
    if acts.labels is None:
        raise ValidationError("accuracy needs a labeled activation batch")
    repeats = config.repeats if repeats is None else repeats
    bundle = config.apply(bundle)
    clean_b = forward_pass(bundle, acts, config.array)
    clean_p = forward_pass(bundle, acts, config.array, plans)
    seeds = [seed + r for r in range(repeats)]
    points = []
    for name, model in models.items():
        runs = {"baseline": [], "planned": []}
        bers = {"baseline": None, "planned": None}
        for s in seeds:
            for variant, pl in (("baseline", None), ("planned", plans)):
                hook = OutputInjector(model.with_seed(s), layers)
                res = forward_pass(bundle, acts, config.array, pl, injector=hook)
                runs[variant].append(_accuracy(res, acts.labels))
                bers[variant] = [hook.profiles[i].ber for i in sorted(hook.profiles)]
        points.append({
            "point": name,
            "p_flip": model.p_flip,
            "p_base": model.p_base,
            "baseline": {**_summary(runs["baseline"]), "layer_ber": bers["baseline"]},
            "planned": {**_summary(runs["planned"]), "layer_ber": bers["planned"]},
        })
    return {
        "clean_accuracy": {"baseline": _accuracy(clean_b, acts.labels),
                           "planned": _accuracy(clean_p, acts.labels)},
        "points": points,
        "provenance": provenance(seeds, config.raw,
                                 {k: m.to_dict() for k, m in models.items()},
                                 [p.to_dict() for p in plans]),
    }


# ---------------------------------------------------------------------------
# oracle


def oracle_report(bundle: ModelBundle, acts: ActivationBatch | None, config: RunConfig,
                  criteria="sign_first") -> dict:
    """Heuristic vs exhaustive optimum for every small enough tile and layer."""
    criteria = SortCriteria(criteria)
    bundle = config.apply(bundle)
    cap = config.array.array_cols
    records = []
    x = acts.data if acts is not None else np.ones((1, bundle.input_channels), np.uint8)
    for i, layer in enumerate(bundle.layers):
        w = layer.weights
        if w.rows <= MAX_CHANNELS:
            plan = direct_plan(w, config.array, criteria, layer=i)
            for t, e in enumerate(plan.entries):
                tile = w.columns(e.members)
                res = brute_force_sequence(tile, x)
                h = sequence_flips(tile, x, e.sequence)
                records.append({"instance": f"layer{i}/tile{t}", "kind": "sequence",
                                "heuristic_value": h, "oracle_value": res.best_value,
                                "gap": h - res.best_value, "argmin": res.best_solution})
        if w.cols <= MAX_CHANNELS:
            res = brute_force_clustering(w, cap)
            h = balanced_cluster(w, cap, config.clustering).objective
            records.append({"instance": f"layer{i}", "kind": "clustering",
                            "heuristic_value": h, "oracle_value": res.best_value,
                            "gap": h - res.best_value, "argmin": res.best_solution,
                            "identity_value": clustering_objective(
                                w, identity_clustering(w.cols, cap))})
        pre = wrap24(np.asarray(x, np.int64) @ w.data.astype(np.int64))
        x = np.clip(pre >> layer.shift, 0, 255)
    return {"records": records, "provenance": provenance([], config.raw, criteria.value)}
