"""Confusion-matrix metrics: WA, UA, per-class P/R/F1, W-F1 and M-F1."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .dataset.schema import LABEL_NAMES, N_CLASSES


@dataclass
class ConfusionMatrix:
    """``counts[i, j]`` = samples of true class ``i`` predicted as ``j``."""

    counts: np.ndarray

    @property
    def total(self):
        return int(self.counts.sum())

    @property
    def supports(self):
        return self.counts.sum(axis=1)

    @property
    def n_classes(self):
        return self.counts.shape[0]


def confusion_matrix(y_true, y_pred, n_classes=N_CLASSES):
    y_true = np.asarray(y_true, dtype=np.int64).reshape(-1)
    y_pred = np.asarray(y_pred, dtype=np.int64).reshape(-1)
    if y_true.shape != y_pred.shape:
        raise ValueError(f"length mismatch: {y_true.size} true vs {y_pred.size} predicted")
    if y_true.size == 0:
        raise ValueError("cannot score an empty prediction set")
    for name, y in (("y_true", y_true), ("y_pred", y_pred)):
        if y.min() < 0 or y.max() >= n_classes:
            raise ValueError(f"{name} has labels outside 0..{n_classes - 1}")
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(counts, (y_true, y_pred), 1)
    return ConfusionMatrix(counts)


def weighted_accuracy(M):
    """Support-weighted mean recall, i.e. trace / total."""
    if M.total == 0:
        raise ValueError("empty confusion matrix")
    return float(np.trace(M.counts) / M.total)


def unweighted_accuracy(M):
    """Mean recall over classes with nonzero support (balanced accuracy)."""
    if M.total == 0:
        raise ValueError("empty confusion matrix")
    sup = M.supports
    present = sup > 0
    return float((np.diag(M.counts)[present] / sup[present]).mean())


@dataclass
class MetricReport:
    wa: float
    ua: float
    precision: list
    recall: list
    f1: list
    supports: list
    wf1: float
    mf1: float

    def to_json(self):
        return {
            "wa": self.wa, "ua": self.ua, "wf1": self.wf1, "mf1": self.mf1,
            "per_class": {
                name: {"precision": p, "recall": r, "f1": f, "support": int(s)}
                for name, p, r, f, s in zip(LABEL_NAMES, self.precision, self.recall, self.f1, self.supports)
            },
        }

    def dumps(self):
        return json.dumps(self.to_json(), indent=1, sort_keys=True)


def _div(a, b):
    return a / b if b else 0.0


def f1_report(M):
    """Per-class scores plus support-weighted and macro F1.

    Zero divisions score 0. The macro mean runs over classes that occur in
    either the truth or the predictions.
    """
    if M.total == 0:
        raise ValueError("empty confusion matrix")
    c = M.counts
    tp = np.diag(c).astype(float)
    pred_tot = c.sum(axis=0)
    sup = c.sum(axis=1)
    prec = [_div(tp[i], pred_tot[i]) for i in range(M.n_classes)]
    rec = [_div(tp[i], sup[i]) for i in range(M.n_classes)]
    f1 = [_div(2 * p * r, p + r) for p, r in zip(prec, rec)]
    wf1 = float(np.dot(sup, f1) / sup.sum())
    present = [i for i in range(M.n_classes) if sup[i] > 0 or pred_tot[i] > 0]
    mf1 = float(np.mean([f1[i] for i in present]))
    return MetricReport(weighted_accuracy(M), unweighted_accuracy(M), prec, rec, f1,
                        sup.tolist(), wf1, mf1)


def evaluate_predictions(y_true, y_pred, n_classes=N_CLASSES):
    return f1_report(confusion_matrix(y_true, y_pred, n_classes))


# ---------------------------------------------------------------- text table

_COL = 11


def render_report(report, names=None):
    """Fixed-width table: one F1 column per class, then M-F1 and W-F1 (x100)."""
    names = names or LABEL_NAMES[:len(report.f1)]
    heads = list(names) + ["M-F1", "W-F1"]
    vals = list(report.f1) + [report.mf1, report.wf1]
    head = "".join(" " + h.rjust(_COL) for h in heads)
    row = "".join(" " + f"{100 * v:.2f}".rjust(_COL) for v in vals)
    return head + "\n" + row + "\n"


def parse_report(text):
    """Inverse of :func:`render_report`: ``{column: value/100}``."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if len(lines) != 2:
        raise ValueError("expected a header line and a value line")
    heads, vals = lines[0].split(), lines[1].split()
    if len(heads) != len(vals):
        raise ValueError("header and value columns differ in count")
    return {h: float(v) / 100 for h, v in zip(heads, vals)}
