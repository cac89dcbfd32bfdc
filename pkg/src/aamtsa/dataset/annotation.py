"""Simulated human-machine annotation loop with the 4-of-5 consensus vote."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .schema import EmotionLabel, Manifest

PANEL_SIZE = 5
MIN_AGREE = 4


@dataclass(frozen=True)
class VoteSheet:
    proposed: EmotionLabel
    expert_labels: tuple

    def __post_init__(self):
        if len(self.expert_labels) != PANEL_SIZE:
            raise ValueError(f"vote sheet needs exactly {PANEL_SIZE} expert labels, got {len(self.expert_labels)}")


def consensus_vote(sheet):
    """The proposed label if at least four experts gave it, else ``None`` (discarded)."""
    if len(sheet.expert_labels) != PANEL_SIZE:
        raise ValueError(f"panel must have {PANEL_SIZE} experts")
    agree = sum(int(e) == int(sheet.proposed) for e in sheet.expert_labels)
    return EmotionLabel(int(sheet.proposed)) if agree >= MIN_AGREE else None


def expert_agent(truth, q, rng):
    """Return ``truth`` with probability ``q``, else a uniformly chosen other label."""
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"expert accuracy must lie in [0, 1], got {q}")
    truth = int(truth)
    if rng.random() < q:
        return EmotionLabel(truth)
    j = int(rng.integers(len(EmotionLabel) - 1))
    return EmotionLabel(j if j < truth else j + 1)


# ---------------------------------------------------------------- labelers

class SimulatedLabeler:
    """Stand-in classifier that is right with a fixed probability.

    Predictions are keyed on each sample's true label and a per-call counter
    stream, so runs are reproducible from ``seed``. ``tuned_accuracy`` (if
    set) replaces ``accuracy`` after :meth:`fine_tune`.
    """

    def __init__(self, accuracy, seed=0, tuned_accuracy=None):
        self.accuracy = accuracy
        self.tuned_accuracy = tuned_accuracy
        self.rng = np.random.default_rng(seed)

    def predict(self, bundle):
        return np.array([int(expert_agent(t, self.accuracy, self.rng)) for t in bundle.label])

    def fine_tune(self, bundle, labels):
        if self.tuned_accuracy is not None:
            self.accuracy = self.tuned_accuracy


class ModelLabeler:
    """Wraps model parameters; fine-tuning delegates to the trainer."""

    def __init__(self, params, config, train_cfg=None):
        self.params = params
        self.config = config
        self.train_cfg = train_cfg
        self.history = None

    def predict(self, bundle):
        from ..trainer import evaluate

        _, preds, _ = evaluate(self.params, self.config, _with_dummy_labels(bundle))
        return preds

    def fine_tune(self, bundle, labels):
        from ..trainer import TrainConfig, carve_validation, train

        cfg = self.train_cfg or TrainConfig()
        tuned = replace(bundle, label=np.asarray(labels, dtype=np.int64))
        tr, va = carve_validation(np.arange(len(tuned)), cfg.val_frac, cfg.seed)
        self.history = train(self.params, self.config, tuned.select(tr), tuned.select(va), cfg)


def _with_dummy_labels(bundle):
    if bundle.label is not None:
        return bundle
    return replace(bundle, label=np.zeros(len(bundle), dtype=np.int64))


# ---------------------------------------------------------------- pipeline

@dataclass
class PipelineReport:
    pilot_size: int
    corrected_count: int
    auto_labeled: int
    accepted: int
    discarded: int
    retention: float
    pre_vote_accuracy: float
    accepted_accuracy: float
    pilot_accuracy_before: float
    pilot_accuracy_after: float

    def to_json(self):
        return dict(self.__dict__)


@dataclass
class PipelineResult:
    report: PipelineReport
    kept_indices: np.ndarray
    kept_labels: np.ndarray
    manifest: Manifest | None = None


def simulate_annotation_pipeline(bundle, labeler, expert_q, pilot_frac=0.10, rng=None,
                                 pilot_expert_q=None, manifest=None):
    """Run pilot labelling, expert correction, fine-tuning, bulk labelling and voting.

    ``bundle.label`` holds the ground truth. The pilot is corrected by a
    single simulated expert of accuracy ``pilot_expert_q`` (default
    ``expert_q``); each bulk-labelled sample then faces five independent
    experts of accuracy ``expert_q``. Discarded samples are dropped from the
    returned manifest.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(int(rng))
    q3 = expert_q if pilot_expert_q is None else pilot_expert_q
    truth = np.asarray(bundle.label, dtype=np.int64)
    n = len(truth)
    n_pilot = math.floor(n * pilot_frac + 1e-9)
    if n_pilot < 1:
        raise ValueError(f"pilot is empty (n={n}, pilot_frac={pilot_frac})")
    perm = rng.permutation(n)
    pilot, rest = perm[:n_pilot], perm[n_pilot:]

    pilot_pred = np.asarray(labeler.predict(bundle.select(pilot)))
    corrected = np.array([int(expert_agent(truth[i], q3, rng)) for i in pilot])
    labeler.fine_tune(bundle.select(pilot), corrected)

    proposed = np.asarray(labeler.predict(bundle.select(rest))) if len(rest) else np.zeros(0, np.int64)
    keep = np.zeros(len(rest), dtype=bool)
    for j, i in enumerate(rest):
        panel = tuple(expert_agent(truth[i], expert_q, rng) for _ in range(PANEL_SIZE))
        keep[j] = consensus_vote(VoteSheet(EmotionLabel(int(proposed[j])), panel)) is not None

    right = proposed == truth[rest]
    accepted = int(keep.sum())
    report = PipelineReport(
        pilot_size=int(n_pilot),
        corrected_count=int((corrected != pilot_pred).sum()),
        auto_labeled=int(len(rest)),
        accepted=accepted,
        discarded=int(len(rest) - accepted),
        retention=accepted / len(rest) if len(rest) else 0.0,
        pre_vote_accuracy=float(right.mean()) if len(rest) else 0.0,
        accepted_accuracy=float(right[keep].mean()) if accepted else 0.0,
        pilot_accuracy_before=float((pilot_pred == truth[pilot]).mean()),
        pilot_accuracy_after=float((corrected == truth[pilot]).mean()),
    )
    kept_idx = np.concatenate([pilot, rest[keep]])
    kept_lab = np.concatenate([corrected, proposed[keep]])
    out_manifest = None
    if manifest is not None:
        recs = [replace(manifest.records[i], label=EmotionLabel(int(l))) for i, l in zip(kept_idx, kept_lab)]
        out_manifest = Manifest(recs, provenance=f"{manifest.provenance} | annotated q={expert_q}")
    return PipelineResult(report, kept_idx, kept_lab, out_manifest)
