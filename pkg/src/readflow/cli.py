"""Command-line front end.

    readflow gen       --out DIR [--kind random|toy] [--dims 64,16,16] [--seed N]
    readflow optimize  --bundle DIR --out plan.json [--mode cluster|direct] [--criteria ...]
    readflow simulate  --bundle DIR --acts DIR [--plan plan.json] [--error-model em.json]
    readflow inject    --bundle DIR --acts DIR [--plan plan.json] [--error-model em.json]
    readflow accuracy  --bundle DIR --acts DIR --plan plan.json [--error-model em.json]
    readflow oracle    --bundle DIR [--acts DIR]

Exit codes: 0 success, 2 usage, 3 validation error, 4 I/O error, 1 internal error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

from . import __version__, experiments, synth
from .dataflow import export_traces_csv, trace_rows
from .errormodel import load_error_models
from .errors import BundleIOError, ValidationError
from .model_io import load_activations, load_bundle, save_activations, save_bundle
from .network import forward_pass
from .plan import load_plans, plans_to_dict

log = logging.getLogger("readflow")

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_VALIDATION = 3
EXIT_IO = 4


def _read_json(path) -> dict:
    path = Path(path)
    try:
        return json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise BundleIOError(f"no such file: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"malformed JSON in {path}: {exc}") from exc


def _config(args) -> experiments.RunConfig:
    return experiments.RunConfig.from_dict(_read_json(args.config) if args.config else {})


def _models(args, config):
    if args.error_model:
        models = load_error_models(args.error_model)
    elif config.error_model is not None:
        base = Path(args.config).parent if args.config else None
        models = load_error_models(config.error_model, base)
    else:
        models = load_error_models({"operating_points": "default"})
    if args.seed is not None:
        models = {k: m.with_seed(args.seed) for k, m in models.items()}
    return models


def _pick(models, point):
    if point is None:
        return next(iter(models.items()))
    if point not in models:
        raise ValidationError(f"unknown operating point {point!r}; have {sorted(models)}")
    return point, models[point]


def _flatten(rows: list[dict]) -> str:
    out = io.StringIO()
    if rows:
        keys = list(rows[0])
        writer = csv.DictWriter(out, fieldnames=keys, lineterminator="\n", extrasaction="ignore")
        writer.writeheader()
        for r in rows:
            writer.writerow({k: json.dumps(v) if isinstance(v, (list, dict)) else v
                             for k, v in r.items()})
    return out.getvalue()


def _emit(report: dict, args, rows_key: str | None = None) -> None:
    if args.format == "csv" and rows_key is not None:
        text = _flatten(report[rows_key])
    else:
        text = json.dumps(report, indent=2) + "\n"
    if args.out:
        try:
            Path(args.out).write_text(text)
        except OSError as exc:
            raise BundleIOError(f"cannot write {args.out}: {exc}") from exc
    else:
        sys.stdout.write(text)


def _plans(args):
    return load_plans(args.plan) if args.plan else None


# ---------------------------------------------------------------------------


def cmd_gen(args) -> None:
    out = Path(args.out)
    seed = 0 if args.seed is None else args.seed
    if args.kind == "toy":
        bundle, train, test = synth.toy_classifier(seed, n_classes=args.classes,
                                                   noise=args.noise)
        save_bundle(bundle, out)
        save_activations(test, out, "test")
        save_activations(train, out, "train")
    else:
        dims = [int(x) for x in args.dims.split(",")]
        if len(dims) < 2:
            raise ValidationError("--dims needs at least an input and one output width")
        bundle, acts = synth.random_bundle(seed, dims, args.samples, args.sign_skew,
                                           args.sparsity)
        save_bundle(bundle, out)
        save_activations(acts, out, "acts")
    log.info("wrote %s", out)


def cmd_optimize(args) -> None:
    config = _config(args)
    bundle = load_bundle(args.bundle)
    plans = experiments.optimize(config.apply(bundle), config, args.criteria, args.mode)
    report = plans_to_dict(plans, mode=args.mode, criteria=args.criteria,
                           array=config.array.to_dict())
    _emit(report, args)


def cmd_simulate(args) -> None:
    config = _config(args)
    bundle = load_bundle(args.bundle)
    acts = load_activations(args.acts, args.acts_name)
    point, model = _pick(_models(args, config), args.point)
    report = experiments.simulate(bundle, acts, config, _plans(args), model, point)
    _emit(report, args, "layers")
    if args.trace_out:
        run = forward_pass(config.apply(bundle), acts, config.array, _plans(args),
                           keep_traces=True)
        with open(args.trace_out, "w", newline="") as fh:
            export_traces_csv((r for layer, cl, tr in run.traces
                               for r in trace_rows(tr, layer, cl)), fh)


def cmd_inject(args) -> None:
    config = _config(args)
    bundle = load_bundle(args.bundle)
    acts = load_activations(args.acts, args.acts_name)
    point, model = _pick(_models(args, config), args.point)
    sink = [] if args.trace_out else None
    report = experiments.inject(bundle, acts, config, _plans(args), model, point, sink)
    _emit(report, args, "records")
    if args.trace_out:
        with open(args.trace_out, "w", newline="") as fh:
            export_traces_csv(sink, fh)


def cmd_accuracy(args) -> None:
    config = _config(args)
    bundle = load_bundle(args.bundle)
    acts = load_activations(args.acts, args.acts_name)
    plans = _plans(args)
    if plans is None:
        plans = experiments.optimize(config.apply(bundle), config, args.criteria, args.mode)
    report = experiments.accuracy(bundle, acts, config, plans, _models(args, config),
                                  args.repeats, args.seed or 0)
    rows = [{"point": p["point"], "p_flip": p["p_flip"], "p_base": p["p_base"],
             "baseline_mean": p["baseline"]["mean"], "baseline_std": p["baseline"]["std"],
             "planned_mean": p["planned"]["mean"], "planned_std": p["planned"]["std"]}
            for p in report["points"]]
    report["table"] = rows
    _emit(report, args, "table")


def cmd_oracle(args) -> None:
    config = _config(args)
    bundle = load_bundle(args.bundle)
    acts = load_activations(args.acts, args.acts_name) if args.acts else None
    _emit(experiments.oracle_report(bundle, acts, config, args.criteria), args, "records")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--bundle", help="bundle directory")
    common.add_argument("--acts", help="directory holding an activation batch")
    common.add_argument("--acts-name", help="activation batch name inside --acts")
    common.add_argument("--config", help="JSON run config")
    common.add_argument("--plan", help="plan file written by `optimize`")
    common.add_argument("--mode", choices=("direct", "cluster"), default="cluster")
    common.add_argument("--criteria", choices=("sign_first", "mag_first"), default="sign_first")
    common.add_argument("--error-model", help="JSON error-model config")
    common.add_argument("--point", help="operating point name inside the error model")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--out", help="output path (stdout when omitted)")
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="readflow", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", parents=[common], help="write a synthetic bundle")
    p.add_argument("--kind", choices=("random", "toy"), default="random")
    p.add_argument("--dims", default="64,16,16")
    p.add_argument("--samples", type=int, default=16)
    p.add_argument("--sign-skew", type=float, default=0.5)
    p.add_argument("--sparsity", type=float, default=0.0)
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--noise", type=float, default=40.0)
    p.set_defaults(func=cmd_gen, need=("out",))

    p = sub.add_parser("optimize", parents=[common], help="build per-layer plans")
    p.set_defaults(func=cmd_optimize, need=("bundle",))

    p = sub.add_parser("simulate", parents=[common], help="flip/TER/BER report")
    p.add_argument("--trace-out", help="write per-cycle PSUM traces as CSV")
    p.set_defaults(func=cmd_simulate, need=("bundle", "acts"))

    p = sub.add_parser("inject", parents=[common], help="cycle-level error injection")
    p.add_argument("--trace-out", help="write per-cycle PSUM traces with error flags as CSV")
    p.set_defaults(func=cmd_inject, need=("bundle", "acts"))

    p = sub.add_parser("accuracy", parents=[common], help="accuracy under injected errors")
    p.add_argument("--repeats", type=int, default=None)
    p.set_defaults(func=cmd_accuracy, need=("bundle", "acts"))

    p = sub.add_parser("oracle", parents=[common], help="compare heuristics to brute force")
    p.set_defaults(func=cmd_oracle, need=("bundle",))
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    missing = [f"--{n}" for n in args.need if getattr(args, n) is None]
    if missing:
        parser.error(f"{args.command} requires {', '.join(missing)}")
    try:
        args.func(args)
    except ValidationError as exc:
        log.error("invalid input: %s", exc)
        return EXIT_VALIDATION
    except (BundleIOError, OSError) as exc:
        log.error("I/O error: %s", exc)
        return EXIT_IO
    except Exception:
        log.exception("internal error")
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
