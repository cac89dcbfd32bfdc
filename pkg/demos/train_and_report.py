"""
Training one model and reading its report
=========================================

Train the full model on a small synthetic corpus and print the per-class
F1 table, then show the same run through the experiment runner.
"""

import tempfile
from pathlib import Path

from aamtsa.dataset import split
from aamtsa.experiment import ExperimentConfig, run_experiment, synthetic_bundle
from aamtsa.metrics import evaluate_predictions, render_report
from aamtsa.model import ModelConfig, init_params
from aamtsa.trainer import TrainConfig, evaluate, train

bundle = synthetic_bundle(n=600, seed=0)
sp = split(len(bundle), seed=0)
cfg = ModelConfig(n_layers=2, cross_residual=True)
params = init_params(cfg, seed=0)

hist = train(params, cfg, bundle.select(sp.train), bundle.select(sp.val),
             TrainConfig(max_epochs=10), on_epoch=lambda r: print(
                 f"epoch {r['epoch']:2d}  train {r['train_loss']:.3f}  val {r['val_loss']:.3f}  wa {r['val_wa']:.3f}"))
print("best epoch", hist.best_epoch, "stop:", hist.stop_reason)

test = bundle.select(sp.test)
_, preds, _ = evaluate(params, cfg, test)
print(render_report(evaluate_predictions(test.label, preds)))

# The runner does the same and writes its artifacts.
with tempfile.TemporaryDirectory() as out:
    res = run_experiment(ExperimentConfig(variant="Var-TA", train={"max_epochs": 5}, out_dir=out), bundle)
    print(sorted(p.name for p in Path(out).iterdir()))
    print((Path(out) / "report.txt").read_text())
