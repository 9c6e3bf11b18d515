"""
Accuracy of a toy classifier under timing errors
================================================

A three-layer integer classifier on separable prototype data. Each layer's
outputs are corrupted at the bit error rate implied by its own flip rate, so
the reordered network sees fewer errors at the same operating point.
"""

from readflow.errormodel import load_error_models
from readflow.experiments import RunConfig, accuracy, optimize
from readflow.synth import toy_classifier

bundle, train, test = toy_classifier(seed=0)
config = RunConfig()
plans = optimize(bundle, config, "sign_first", "cluster")

# bundled operating points plus one harsher corner
models = load_error_models({"operating_points": "default"})
models.update(load_error_models({"operating_points": {"severe": {"p_flip": 0.05, "p_base": 5e-5}}}))

report = accuracy(bundle, test, config, plans, models, repeats=5, seed=0)
print("clean accuracy", report["clean_accuracy"])
for p in report["points"]:
    b, q = p["baseline"], p["planned"]
    print(f"{p['point']:12s} baseline {b['mean']:.3f} +- {b['std']:.3f}   "
          f"planned {q['mean']:.3f} +- {q['std']:.3f}")
