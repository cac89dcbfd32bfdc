"""Experiment runner: one variant end to end, or an ablation suite."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .dataset.splits import split
from .dataset.synth import load_corpus
from .features import FeatureBundle
from .metrics import evaluate_predictions, render_report
from .model import ModelConfig, init_params, save_checkpoint
from .trainer import TrainConfig, evaluate, train
from .variants import resolve_variant

log = logging.getLogger(__name__)

ARTIFACTS = ("history.jsonl", "checkpoint.json", "metrics.json", "report.txt", "config.json")

# Residual around the cross block keeps each branch's own evidence when it
# queries a weaker modality; the bare wiring stays the library default.
DESK_MODEL = {"cross_residual": True}

_MODEL_KEYS = {f.name for f in fields(ModelConfig)}
_TRAIN_KEYS = {f.name for f in fields(TrainConfig)}


@dataclass
class ExperimentConfig:
    data_dir: str | None = None
    variant: str = "full"
    model: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    out_dir: str | None = None
    seed: int = 0
    ratios: tuple = (0.8, 0.1, 0.1)

    @classmethod
    def from_flat(cls, flat, **kw):
        """Split a flat ``{key: value}`` dict into model and train overrides."""
        flat = dict(flat)
        unknown = sorted(set(flat) - _MODEL_KEYS - _TRAIN_KEYS - {"seed", "variant"})
        if unknown:
            raise ValueError(f"unknown config keys {unknown}")
        seed = flat.pop("seed", kw.pop("seed", 0))
        variant = flat.pop("variant", kw.pop("variant", "full"))
        model = {k: v for k, v in flat.items() if k in _MODEL_KEYS}
        trn = {k: v for k, v in flat.items() if k in _TRAIN_KEYS}
        return cls(variant=variant, model=model, train=trn, seed=seed, **kw)

    def model_config(self, d_in):
        base = ModelConfig(**{**DESK_MODEL, "d_in": d_in, **self.model})
        return resolve_variant(self.variant).apply(base)

    def train_config(self):
        return TrainConfig(**{**self.train, "seed": self.seed}).validate()


@dataclass
class ExperimentResult:
    out_dir: Path | None
    variant: str
    metrics: dict
    history: object
    seconds: float


def load_bundle(data_dir):
    _, arrays = load_corpus(data_dir)
    return FeatureBundle.from_arrays(arrays)


def run_experiment(cfg, bundle=None):
    """Train one variant on an 80/10/10 split and score the test slice.

    Writes the five files in :data:`ARTIFACTS` when ``cfg.out_dir`` is set.
    ``metrics.json`` holds only seed-determined values.
    """
    t0 = time.perf_counter()
    if bundle is None:
        if cfg.data_dir is None:
            raise ValueError("need a data dir or a preloaded bundle")
        bundle = load_bundle(cfg.data_dir)
    mcfg = cfg.model_config(bundle.d_in)
    tcfg = cfg.train_config()
    sp = split(len(bundle), cfg.ratios, seed=cfg.seed)
    params = init_params(mcfg, cfg.seed)
    hist = train(params, mcfg, bundle.select(sp.train), bundle.select(sp.val), tcfg)
    test = bundle.select(sp.test)
    test_loss, preds, _ = evaluate(params, mcfg, test, tcfg.eval_batch)
    report = evaluate_predictions(test.label, preds, mcfg.n_classes)
    metrics = {
        "variant": cfg.variant,
        "seed": cfg.seed,
        "test": {**report.to_json(), "loss": test_loss},
        "best_epoch": hist.best_epoch,
        "best_val_wa": hist.epochs[hist.best_epoch]["val_wa"],
        "epochs_run": len(hist.epochs),
        "stop_reason": hist.stop_reason,
        "sizes": {"train": len(sp.train), "val": len(sp.val), "test": len(sp.test)},
    }
    out = None
    if cfg.out_dir is not None:
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        hist.write(out / "history.jsonl")
        save_checkpoint(out / "checkpoint.json", params, mcfg,
                        extra={"variant": cfg.variant, "seed": cfg.seed})
        (out / "metrics.json").write_text(json.dumps(metrics, indent=1, sort_keys=True))
        (out / "report.txt").write_text(
            f"variant {cfg.variant}  WA {100 * report.wa:.2f}  W-F1 {100 * report.wf1:.2f}\n"
            + render_report(report))
        snapshot = {"variant": cfg.variant, "seed": cfg.seed, "data_dir": cfg.data_dir,
                    "ratios": list(cfg.ratios), "model": mcfg.to_dict(), "train": asdict(tcfg)}
        (out / "config.json").write_text(json.dumps(snapshot, indent=1, sort_keys=True))
        missing = [a for a in ARTIFACTS if not (out / a).is_file()]
        if missing:
            raise RuntimeError(f"artifacts not written: {missing}")
    secs = time.perf_counter() - t0
    log.info("%s seed %d: test WA %.4f in %.1fs", cfg.variant, cfg.seed, report.wa, secs)
    return ExperimentResult(out, cfg.variant, metrics, hist, secs)


@dataclass
class AblationTable:
    rows: list  # (variant, wa, wf1)

    def wa(self, name):
        return dict((r[0], r[1]) for r in self.rows)[name]

    def render(self):
        w = max([len("variant")] + [len(r[0]) for r in self.rows])
        lines = [f"{'variant'.ljust(w)}  {'WA':>6}  {'W-F1':>6}"]
        lines += [f"{n.ljust(w)}  {100 * a:6.2f}  {100 * f:6.2f}" for n, a, f in self.rows]
        return "\n".join(lines) + "\n"


def run_ablation_suite(variants, cfg, bundle=None):
    """Retrain each variant from scratch with the shared settings in ``cfg``."""
    if not variants:
        raise ValueError("need at least one variant")
    for v in variants:
        resolve_variant(v)
    if bundle is None:
        bundle = load_bundle(cfg.data_dir)
    rows, results = [], {}
    for v in variants:
        sub = None if cfg.out_dir is None else str(Path(cfg.out_dir) / v)
        sub_cfg = ExperimentConfig(cfg.data_dir, v, dict(cfg.model), dict(cfg.train), sub, cfg.seed, cfg.ratios)
        res = run_experiment(sub_cfg, bundle)
        results[v] = res
        rows.append((v, res.metrics["test"]["wa"], res.metrics["test"]["wf1"]))
    table = AblationTable(rows)
    if cfg.out_dir is not None:
        Path(cfg.out_dir, "ablation.txt").write_text(table.render())
    return table, results


def synthetic_bundle(n=2000, seed=0, dim=32, **synth_kw):
    from .dataset.synth import SynthConfig, synthesize

    _, arrays = synthesize(SynthConfig(n_samples=n, dim=dim, seed=seed, **synth_kw))
    return FeatureBundle.from_arrays(arrays)


def ordering_holds(wa):
    """Modality ordering: full > TA >= A > T > VD, with full >= best single + 3pp."""
    best_single = max(wa["Var-T"], wa["Var-A"], wa["Var-VD"])
    return bool(wa["full"] > wa["Var-TA"] >= wa["Var-A"] > wa["Var-T"] > wa["Var-VD"]
                and wa["full"] - best_single >= 0.03 - 1e-12)
