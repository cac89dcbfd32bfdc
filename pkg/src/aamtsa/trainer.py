"""AdamW training loop, early stopping and k-fold orchestration."""

from __future__ import annotations

import json
import logging
import math
import statistics
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .dataset.splits import kfold
from .metrics import evaluate_predictions
from .model import copy_values, flatten, init_params, model_forward, predict_labels, restore_values

log = logging.getLogger(__name__)

REFERENCE_LR = 1e-5  # suited to pretrained 768-d inputs, too small from scratch


class TrainingDiverged(FloatingPointError):
    def __init__(self, msg, state=None):
        super().__init__(msg)
        self.state = state


@dataclass
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 16
    max_epochs: int = 30
    patience: int = 5  # 0 disables early stopping
    seed: int = 0
    k: int = 5
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    reduction: str = "mean"
    val_frac: float = 0.1
    eval_batch: int = 512

    def validate(self):
        if not self.lr >= 0:
            raise ValueError("lr must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.patience < 0:
            raise ValueError("patience must be >= 1 (or 0 to disable)")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        return self

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ValueError(f"unknown TrainConfig keys {unknown}")
        return cls(**d)


# ---------------------------------------------------------------- optimizer

@dataclass
class OptState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def adamw_step(params, grads, state, cfg):
    """One decoupled-weight-decay Adam update, in place.

    ``params`` maps names to Parameters; ``grads`` maps the same names to
    arrays (``None`` reads each ``Parameter.grad``).
    """
    state.t += 1
    t = state.t
    b1, b2 = cfg.beta1, cfg.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for name, p in params.items():
        g = p.grad if grads is None else grads[name]
        if g.shape != p.shape:
            raise ValueError(f"{name}: gradient shape {g.shape} != parameter shape {p.shape}")
        if not np.isfinite(g).all():
            raise ad.NonFiniteError(f"non-finite gradient for {name}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        step = (m / c1) / (np.sqrt(v / c2) + cfg.eps)
        p.data = p.data - cfg.lr * step - cfg.lr * cfg.weight_decay * p.data
    return state


# ---------------------------------------------------------------- history

@dataclass
class TrainHistory:
    epochs: list = field(default_factory=list)
    best_epoch: int = -1
    stop_reason: str = ""

    @property
    def val_losses(self):
        return [e["val_loss"] for e in self.epochs]

    @property
    def train_losses(self):
        return [e["train_loss"] for e in self.epochs]

    def to_jsonl(self):
        return "".join(json.dumps(e, sort_keys=True) + "\n" for e in self.epochs)

    def write(self, path):
        Path(path).write_text(self.to_jsonl())


def early_stop_check(val_metric, patience, lower_is_better=True):
    """``True`` once the metric has not strictly improved for ``patience`` epochs."""
    if not val_metric:
        raise ValueError("history is empty")
    if not patience:
        return False
    sign = 1.0 if lower_is_better else -1.0
    best_i, best = 0, sign * val_metric[0]
    for i, v in enumerate(val_metric[1:], 1):
        if sign * v < best:
            best_i, best = i, sign * v
    return len(val_metric) - 1 - best_i >= patience


# ---------------------------------------------------------------- loops

def evaluate(params, config, bundle, batch=512, reduction="mean"):
    """Loss, predictions and WA on ``bundle`` without recording a graph."""
    losses, preds, n = 0.0, [], len(bundle)
    with ad.no_grad():
        for s in range(0, n, batch):
            part = bundle.select(np.arange(s, min(n, s + batch)))
            out = model_forward(part, params, config, reduction="sum")
            losses += out.loss.item()
            preds.append(predict_labels(out.probs.data))
    preds = np.concatenate(preds)
    loss = losses / n if reduction == "mean" else losses
    wa = float((preds == bundle.label).mean())
    return loss, preds, wa


def train(params, config, train_data, val_data, cfg=None, on_epoch=None):
    """Fit ``params`` in place; leave them at the best-val-WA epoch.

    Early stopping monitors validation loss. ``on_epoch(record)`` returning
    ``True`` ends training after that epoch. Returns a :class:`TrainHistory`.
    """
    cfg = (cfg or TrainConfig()).validate()
    if len(train_data) == 0 or len(val_data) == 0:
        raise ValueError("train and val sets must be non-empty")
    flat = flatten(params)
    state = OptState()
    rng = ad.make_rng(cfg.seed)
    hist = TrainHistory()
    best_wa, best_vals = -math.inf, None
    n = len(train_data)
    for epoch in range(cfg.max_epochs):
        perm = rng.permutation(n)
        total = 0.0
        for s in range(0, n, cfg.batch_size):
            batch = train_data.select(perm[s:s + cfg.batch_size])
            for p in flat.values():
                p.zero_grad()
            try:
                out = model_forward(batch, params, config, reduction=cfg.reduction)
                loss = out.loss.item()
                if not math.isfinite(loss):
                    raise ad.NonFiniteError("non-finite loss")
                ad.backward(out.loss)
                adamw_step(flat, None, state, cfg)
            except ad.NonFiniteError as exc:
                raise TrainingDiverged(f"epoch {epoch} batch {s // cfg.batch_size}: {exc}",
                                       state=copy_values(params)) from exc
            total += loss * (len(batch) if cfg.reduction == "mean" else 1)
        val_loss, _, val_wa = evaluate(params, config, val_data, cfg.eval_batch)
        rec = {"epoch": epoch, "train_loss": total / n, "val_loss": val_loss, "val_wa": val_wa}
        hist.epochs.append(rec)
        if val_wa > best_wa:
            best_wa, best_vals, hist.best_epoch = val_wa, copy_values(params), epoch
        log.debug("epoch %d train %.4f val %.4f wa %.4f", epoch, rec["train_loss"], val_loss, val_wa)
        if on_epoch is not None and on_epoch(rec) is True:
            hist.stop_reason = "callback"
            break
        if early_stop_check(hist.val_losses, cfg.patience):
            hist.stop_reason = "early_stop"
            break
    else:
        hist.stop_reason = "max_epochs"
    restore_values(params, best_vals)
    return hist


def carve_validation(indices, frac, seed):
    """Split ``indices`` into (train, val) with ``floor(frac * n)`` for val."""
    indices = np.asarray(indices)
    perm = indices[np.random.default_rng(seed).permutation(len(indices))]
    n_val = max(1, math.floor(len(indices) * frac + 1e-9))
    return perm[n_val:], perm[:n_val]


@dataclass
class FoldResult:
    fold: int
    test_indices: list
    history: TrainHistory
    wa: float
    wf1: float
    mf1: float


def aggregate(values):
    mean = float(np.mean(values))
    sd = float(statistics.stdev(values)) if len(values) > 1 else 0.0
    return mean, sd


def run_kfold(bundle, config, cfg=None):
    """Train/test once per fold; returns per-fold rows and mean/sd summary."""
    cfg = cfg or TrainConfig()
    folds = kfold(len(bundle), cfg.k, cfg.seed)
    rows = []
    for i, test_idx in enumerate(folds):
        rest = np.concatenate([f for j, f in enumerate(folds) if j != i]).astype(np.int64)
        tr, va = carve_validation(rest, cfg.val_frac, cfg.seed + i)
        params = init_params(config, cfg.seed)
        hist = train(params, config, bundle.select(tr), bundle.select(va), cfg)
        _, preds, _ = evaluate(params, config, bundle.select(test_idx), cfg.eval_batch)
        rep = evaluate_predictions(bundle.label[test_idx], preds)
        rows.append(FoldResult(i, list(test_idx), hist, rep.wa, rep.wf1, rep.mf1))
    summary = {}
    for key in ("wa", "wf1", "mf1"):
        mean, sd = aggregate([getattr(r, key) for r in rows])
        summary[key] = {"mean": mean, "sd": sd}
    return rows, summary


def train_config_dict(cfg):
    return asdict(cfg)
