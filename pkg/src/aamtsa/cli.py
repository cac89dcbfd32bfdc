"""Command-line entry point: ``tmed <subcommand>``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

SEED_ENV = "TMED_SEED"


def _seed(args, config=None):
    """Seed precedence: env var, then ``--seed``, then the config file, then 0."""
    env = os.environ.get(SEED_ENV, "").strip()
    if env:
        return int(env)
    if args.seed is not None:
        return args.seed
    return (config or {}).get("seed", 0)


def _read_config(path):
    if path is None:
        return {}
    doc = json.loads(Path(path).read_text())
    if not isinstance(doc, dict):
        raise ValueError(f"{path}: config must be a flat JSON object")
    return doc


def cmd_gen(args):
    from .dataset.schema import class_distribution
    from .dataset.synth import SynthConfig, synthesize

    cfg = SynthConfig(n_samples=args.n, dim=args.dim, seed=_seed(args))
    manifest, _ = synthesize(cfg, out_dir=args.out)
    counts, _ = class_distribution(manifest)
    print(f"wrote {len(manifest.records)} samples to {args.out}")
    print(" ".join(f"{k}={v}" for k, v in counts.items()))
    return 0


def cmd_train(args):
    from .experiment import ExperimentConfig, run_experiment

    flat = _read_config(args.config)
    if args.variant is not None:
        flat["variant"] = args.variant
    flat.setdefault("variant", "full")
    flat["seed"] = _seed(args, flat)
    out = args.out or str(Path("runs") / f"{flat['variant']}-s{flat['seed']}")
    cfg = ExperimentConfig.from_flat(flat, data_dir=args.data, out_dir=out)
    res = run_experiment(cfg)
    t = res.metrics["test"]
    print(f"{cfg.variant}: test WA {100 * t['wa']:.2f}  W-F1 {100 * t['wf1']:.2f}  "
          f"M-F1 {100 * t['mf1']:.2f}  ({res.metrics['epochs_run']} epochs, {res.seconds:.1f}s)")
    print(f"artifacts in {res.out_dir}")
    return 0


def cmd_eval(args):
    from .experiment import load_bundle
    from .metrics import evaluate_predictions, render_report
    from .model import load_checkpoint
    from .trainer import evaluate

    params, config, _ = load_checkpoint(args.checkpoint)
    bundle = load_bundle(args.data)
    loss, preds, _ = evaluate(params, config, bundle)
    rep = evaluate_predictions(bundle.label, preds, config.n_classes)
    print(f"n={len(bundle)}  loss {loss:.4f}  WA {100 * rep.wa:.2f}  W-F1 {100 * rep.wf1:.2f}")
    print(render_report(rep), end="")
    if args.out:
        Path(args.out).write_text(json.dumps({**rep.to_json(), "loss": loss}, indent=1, sort_keys=True))
    return 0


def cmd_ablate(args):
    from .experiment import ExperimentConfig, run_ablation_suite, synthetic_bundle

    names = [v.strip() for v in args.variants.split(",") if v.strip()]
    flat = _read_config(args.config)
    flat["seed"] = _seed(args, flat)
    cfg = ExperimentConfig.from_flat(flat, data_dir=args.data, out_dir=args.out)
    bundle = None if args.data else synthetic_bundle(n=args.n, seed=cfg.seed)
    table, _ = run_ablation_suite(names, cfg, bundle)
    print(table.render(), end="")
    return 0


def cmd_gradcheck(args):
    from .gradsuite import run_suite

    ok = True
    for line in run_suite(dim=args.dim, max_coords=args.max_coords):
        ok &= line.passed
        print(f"{'PASS' if line.passed else 'FAIL'}  {line.name:<18} max rel err {line.max_rel_err:.3e}")
    return 0 if ok else 1


def cmd_annotate(args):
    from .dataset.annotation import SimulatedLabeler, simulate_annotation_pipeline
    from .dataset.schema import write_manifest
    from .dataset.synth import load_corpus
    from .features import FeatureBundle

    manifest, arrays = load_corpus(args.data)
    bundle = FeatureBundle.from_arrays(arrays)
    seed = _seed(args)
    labeler = SimulatedLabeler(args.labeler_acc, seed=seed)
    res = simulate_annotation_pipeline(bundle, labeler, args.expert_acc, args.pilot_frac, rng=seed,
                                       manifest=manifest)
    for k, v in res.report.to_json().items():
        print(f"{k:<22} {v:.4f}" if isinstance(v, float) else f"{k:<22} {v}")
    if args.out:
        write_manifest(res.manifest, args.out)
        print(f"annotated manifest -> {args.out}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="tmed", description="Multimodal teacher-sentiment desk harness.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="write a synthetic corpus")
    g.add_argument("--out", required=True)
    g.add_argument("--n", type=int, default=2000)
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--dim", type=int, default=32)
    g.set_defaults(func=cmd_gen)

    t = sub.add_parser("train", help="train one variant and write artifacts")
    t.add_argument("--data", required=True)
    t.add_argument("--variant", default=None)
    t.add_argument("--config", default=None, help="flat JSON of model and training keys")
    t.add_argument("--out", default=None)
    t.add_argument("--seed", type=int, default=None)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="score a checkpoint on a corpus")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--out", default=None)
    e.set_defaults(func=cmd_eval)

    a = sub.add_parser("ablate", help="retrain several variants and tabulate WA / W-F1")
    a.add_argument("--variants", required=True, help="comma-separated variant names")
    a.add_argument("--data", default=None, help="corpus dir (default: fresh synthetic set)")
    a.add_argument("--n", type=int, default=2000, help="synthetic size when --data is absent")
    a.add_argument("--config", default=None)
    a.add_argument("--out", default=None)
    a.add_argument("--seed", type=int, default=None)
    a.set_defaults(func=cmd_ablate)

    c = sub.add_parser("gradcheck", help="finite-difference check of primitives and model")
    c.add_argument("--dim", type=int, default=8)
    c.add_argument("--max-coords", type=int, default=None)
    c.set_defaults(func=cmd_gradcheck)

    s = sub.add_parser("annotate-sim", help="simulate the pilot, expert and voting loop")
    s.add_argument("--data", required=True)
    s.add_argument("--expert-acc", type=float, required=True)
    s.add_argument("--pilot-frac", type=float, default=0.10)
    s.add_argument("--labeler-acc", type=float, default=0.7)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--out", default=None, help="write the kept records as a manifest")
    s.set_defaults(func=cmd_annotate)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (LookupError, ValueError, OSError, RuntimeError, FloatingPointError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"tmed {args.command}: error: {msg}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
