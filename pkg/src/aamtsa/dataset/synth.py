"""Synthetic corpus generator matching the reference class quotas.

Token features for modality ``m`` of a class-``c`` sample are
``scale[m] * mu[c, m] + noise * N(0, I)``, one draw per token, where the
``mu[:, m]`` are orthonormal class directions (fixed by the seed). Stage and
subject ids follow a class-conditional prior, so instructional info carries
signal for patience, enthusiasm and expectation. Raw video additionally
carries a per-sample nuisance vector (``raw_nuisance`` std, shared by all of
the sample's tokens) that is unrelated to the label.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .schema import CORPUS_COUNTS, CORPUS_SIZE, EmotionLabel, Manifest, SampleRecord, write_manifest

MODALITIES = ("text", "audio", "video_desc", "video_raw")

STAGE_NAMES = ["primary", "middle", "high", "higher-ed"]
SUBJECT_NAMES = ["chinese", "math", "english", "physics", "chemistry", "biology",
                 "history", "geography", "politics", "music", "computer-science"]

# class -> (preferred stage, preferred subjects) under the instructional prior
INSTR_PREFERENCE = {
    EmotionLabel.PATIENCE: (0, (0, 1)),
    EmotionLabel.ENTHUSIASM: (3, (2, 3)),
    EmotionLabel.EXPECTATION: (2, (4, 5)),
}

FEATURE_DECIMALS = 6


def _default_seq_len():
    return {"text": 4, "audio": 4, "video": 4}


def _default_scale():
    return {"audio": 1.0, "text": 0.6, "video_desc": 0.25, "video_raw": 0.1}


@dataclass
class SynthConfig:
    n_samples: int = 2000
    seq_len: dict = field(default_factory=_default_seq_len)
    dim: int = 32
    signal_scale: dict = field(default_factory=_default_scale)
    noise: float = 1.0
    raw_nuisance: float = 2.0
    instr_strength: float = 0.7
    n_stages: int = 4
    n_subjects: int = 11
    seed: int = 0

    def validate(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be positive")
        if self.dim < len(EmotionLabel):
            raise ValueError(f"dim={self.dim} cannot host {len(EmotionLabel)} class directions (need >= 8)")
        if any(v < 1 for v in self.seq_len.values()) or set(self.seq_len) != {"text", "audio", "video"}:
            raise ValueError(f"seq_len needs positive text/audio/video entries, got {self.seq_len}")
        if set(self.signal_scale) != set(MODALITIES) or any(v <= 0 for v in self.signal_scale.values()):
            raise ValueError(f"signal_scale needs positive entries for {MODALITIES}")
        if self.noise <= 0:
            raise ValueError("noise must be positive")
        if self.raw_nuisance < 0:
            raise ValueError("raw_nuisance must be >= 0")
        if not 0.0 <= self.instr_strength <= 1.0:
            raise ValueError("instr_strength must lie in [0, 1]")
        if self.n_stages < 4 or self.n_subjects < 6:
            raise ValueError("the instructional prior needs >= 4 stages and >= 6 subjects")


def apportion(n, weights=None):
    """Largest-remainder integer quotas summing to ``n``.

    Defaults to the corpus class distribution; ties in the remainder go to
    the lower class index.
    """
    if weights is None:
        weights = [CORPUS_COUNTS[lab] for lab in EmotionLabel]
    w = np.asarray(weights, dtype=np.float64)
    # exact rational arithmetic on integer weights keeps n == total exact
    total = w.sum()
    raw = [n * wi / total for wi in w]
    base = [int(np.floor(x)) for x in raw]
    rem = n - sum(base)
    order = sorted(range(len(w)), key=lambda i: (-(raw[i] - base[i]), i))
    for i in order[:rem]:
        base[i] += 1
    return base


def class_directions(rng, n_classes, dim):
    """Orthonormal rows: QR of a Gaussian matrix."""
    q, r = np.linalg.qr(rng.normal(size=(dim, n_classes)))
    q = q * np.sign(np.diag(r))
    return q.T


def _draw_instructional(rng, labels, cfg):
    n = len(labels)
    stage = rng.integers(0, cfg.n_stages, size=n)
    subject = rng.integers(0, cfg.n_subjects, size=n)
    use_pref = rng.random(n) < cfg.instr_strength
    pick = rng.integers(0, 2, size=n)
    for i, lab in enumerate(labels):
        pref = INSTR_PREFERENCE.get(EmotionLabel(int(lab)))
        if pref is not None and use_pref[i]:
            stage[i] = pref[0]
            subject[i] = pref[1][pick[i]]
    return stage, subject


def synthesize(cfg=None, out_dir=None):
    """Generate a labelled corpus; return ``(manifest, arrays)``.

    ``arrays`` maps each modality to ``[n, T, dim]`` features plus
    ``stage_id``, ``subject_id`` and ``label`` vectors. With ``out_dir``, a
    manifest, per-sample feature files and a vocabulary sidecar are written.
    """
    cfg = cfg or SynthConfig()
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    n, D = cfg.n_samples, cfg.dim
    n_classes = len(EmotionLabel)

    quotas = apportion(n)
    labels = np.repeat(np.arange(n_classes), quotas)
    labels = labels[rng.permutation(n)]

    dirs = {m: class_directions(rng, n_classes, D) for m in MODALITIES}
    arrays = {}
    for m in MODALITIES:
        T = cfg.seq_len["video" if m.startswith("video") else m]
        x = cfg.signal_scale[m] * dirs[m][labels][:, None, :] + cfg.noise * rng.normal(size=(n, T, D))
        if m == "video_raw":
            x = x + cfg.raw_nuisance * rng.normal(size=(n, 1, D))
        arrays[m] = np.round(x, FEATURE_DECIMALS)
    stage, subject = _draw_instructional(rng, labels, cfg)
    arrays["stage_id"] = stage.astype(np.int64)
    arrays["subject_id"] = subject.astype(np.int64)
    arrays["label"] = labels.astype(np.int64)

    durations = np.round(rng.uniform(1.5, 8.0, size=n), 2)
    n_rooms = max(1, min(250, n // 20))
    rooms = rng.integers(0, n_rooms, size=n)
    clock = np.zeros(n_rooms)
    records = []
    for i in range(n):
        room = int(rooms[i])
        start = round(float(clock[room]), 2)
        end = round(start + float(durations[i]), 2)
        clock[room] = end + 0.5
        records.append(SampleRecord(
            level=STAGE_NAMES[int(stage[i]) % len(STAGE_NAMES)],
            name=f"tmed_{i:05d}",
            source=f"classroom_{room:03d}/{SUBJECT_NAMES[int(subject[i]) % len(SUBJECT_NAMES)]}",
            start_time=start, end_time=end, duration=round(end - start, 2),
            text=f"synthetic utterance {i}",
            label=EmotionLabel(int(labels[i])),
            stage_id=int(stage[i]), subject_id=int(subject[i]),
        ))
    manifest = Manifest(records, provenance=f"synthetic seed={cfg.seed} n={n}")
    if out_dir is not None:
        write_corpus(out_dir, manifest, arrays, cfg)
    return manifest, arrays


def write_corpus(out_dir, manifest, arrays, cfg=None):
    out = Path(out_dir)
    feat_dir = out / "features"
    feat_dir.mkdir(parents=True, exist_ok=True)
    write_manifest(manifest, out / "manifest.jsonl")
    for i, rec in enumerate(manifest.records):
        doc = {m: arrays[m][i].tolist() for m in MODALITIES}
        doc["stage_id"] = int(arrays["stage_id"][i])
        doc["subject_id"] = int(arrays["subject_id"][i])
        doc["label"] = str(EmotionLabel(int(arrays["label"][i])))
        (feat_dir / f"{rec.name}.json").write_text(json.dumps(doc, separators=(",", ":")))
    vocab = {"stages": STAGE_NAMES, "subjects": SUBJECT_NAMES}
    (out / "vocab.json").write_text(json.dumps(vocab, indent=1))
    if cfg is not None:
        (out / "synth_config.json").write_text(json.dumps(asdict(cfg), indent=1, sort_keys=True))


def load_corpus(data_dir):
    """Read ``manifest.jsonl`` and every ``features/<name>.json`` under ``data_dir``."""
    from .schema import load_manifest

    data_dir = Path(data_dir)
    manifest = load_manifest(data_dir / "manifest.jsonl")
    cols = {m: [] for m in MODALITIES}
    ids = {"stage_id": [], "subject_id": [], "label": []}
    for rec in manifest.records:
        path = data_dir / "features" / f"{rec.name}.json"
        try:
            doc = json.loads(path.read_text())
        except FileNotFoundError:
            raise FileNotFoundError(f"missing feature file for {rec.name}: {path}") from None
        for m in MODALITIES:
            cols[m].append(np.asarray(doc[m], dtype=np.float64))
        ids["stage_id"].append(int(doc["stage_id"]))
        ids["subject_id"].append(int(doc["subject_id"]))
        ids["label"].append(int(EmotionLabel.parse(doc["label"])))
    arrays = {m: np.stack(v) for m, v in cols.items()}
    arrays.update({k: np.asarray(v, dtype=np.int64) for k, v in ids.items()})
    return manifest, arrays


def centroid_probe_accuracy(arrays, modality, train_frac=0.5, seed=0):
    """Nearest-class-centroid accuracy on token-averaged features (held-out half)."""
    x = arrays[modality].mean(axis=1)
    y = arrays["label"]
    perm = np.random.default_rng(seed).permutation(len(y))
    cut = int(len(y) * train_frac)
    tr, te = perm[:cut], perm[cut:]
    classes = np.unique(y[tr])
    cents = np.stack([x[tr][y[tr] == c].mean(axis=0) for c in classes])
    d = ((x[te][:, None, :] - cents[None]) ** 2).sum(-1)
    pred = classes[np.argmin(d, axis=1)]
    return float((pred == y[te]).mean())
