"""Record types and manifest I/O for T-MED-shaped corpora."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from enum import IntEnum
from pathlib import Path


class EmotionLabel(IntEnum):
    NEUTRAL = 0
    ANGER = 1
    JOY = 2
    SURPRISE = 3
    SADNESS = 4
    PATIENCE = 5
    ENTHUSIASM = 6
    EXPECTATION = 7

    def __str__(self):
        return self.name.lower()

    @classmethod
    def parse(cls, token):
        if isinstance(token, cls):
            return token
        try:
            return cls[str(token).strip().upper()]
        except KeyError:
            raise ValueError(f"unknown emotion label {token!r}") from None


N_CLASSES = len(EmotionLabel)
LABEL_NAMES = [str(lab) for lab in EmotionLabel]

# Class counts of the full reference corpus, in EmotionLabel order.
CORPUS_COUNTS = {
    EmotionLabel.NEUTRAL: 7318,
    EmotionLabel.ANGER: 821,
    EmotionLabel.JOY: 1619,
    EmotionLabel.SURPRISE: 507,
    EmotionLabel.SADNESS: 430,
    EmotionLabel.PATIENCE: 916,
    EmotionLabel.ENTHUSIASM: 834,
    EmotionLabel.EXPECTATION: 2493,
}
CORPUS_SIZE = 14938

MANIFEST_FIELDS = ("level", "name", "source", "start_time", "end_time", "duration",
                   "text", "label", "stage_id", "subject_id")

DURATION_TOL = 0.05


class ManifestError(ValueError):
    """A manifest line failed to parse or validate."""


@dataclass
class SampleRecord:
    level: str
    name: str
    source: str
    start_time: float
    end_time: float
    duration: float
    text: str
    label: EmotionLabel
    stage_id: int = 0
    subject_id: int = 0

    def validate(self):
        if not self.name:
            raise ManifestError("record has an empty name")
        if not (self.start_time >= 0):
            raise ManifestError(f"{self.name}: start_time must be >= 0, got {self.start_time}")
        if not (self.end_time > self.start_time):
            raise ManifestError(
                f"{self.name}: end_time ({self.end_time}) must exceed start_time ({self.start_time})")
        if abs(self.duration - (self.end_time - self.start_time)) > DURATION_TOL:
            raise ManifestError(f"{self.name}: duration {self.duration} disagrees with end-start")
        if self.stage_id < 0 or self.subject_id < 0:
            raise ManifestError(f"{self.name}: stage_id/subject_id must be >= 0")

    def to_json(self):
        d = asdict(self)
        d["label"] = str(self.label)
        return d

    @classmethod
    def from_json(cls, d):
        missing = [k for k in MANIFEST_FIELDS if k not in d]
        if missing:
            raise ManifestError(f"missing fields {missing}")
        extra = sorted(set(d) - set(MANIFEST_FIELDS))
        if extra:
            raise ManifestError(f"unexpected fields {extra}")
        rec = cls(
            level=str(d["level"]), name=str(d["name"]), source=str(d["source"]),
            start_time=float(d["start_time"]), end_time=float(d["end_time"]),
            duration=float(d["duration"]), text=str(d["text"]),
            label=EmotionLabel.parse(d["label"]),
            stage_id=int(d["stage_id"]), subject_id=int(d["subject_id"]),
        )
        for k in ("start_time", "end_time", "duration"):
            if not math.isfinite(getattr(rec, k)):
                raise ManifestError(f"{rec.name}: {k} is not finite")
        return rec


@dataclass
class Manifest:
    records: list = field(default_factory=list)
    provenance: str = ""

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, i):
        return self.records[i]

    @property
    def labels(self):
        return [r.label for r in self.records]

    def validate(self):
        seen = set()
        for r in self.records:
            r.validate()
            if r.name in seen:
                raise ManifestError(f"duplicate name {r.name!r}")
            seen.add(r.name)

    def subset(self, indices, provenance=None):
        return Manifest([self.records[i] for i in indices],
                        provenance if provenance is not None else self.provenance)


def load_manifest(path):
    """Read a JSON-Lines manifest; errors carry the 1-based line number."""
    path = Path(path)
    records, seen = [], set()
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = SampleRecord.from_json(json.loads(line))
                rec.validate()
            except (json.JSONDecodeError, ManifestError, ValueError, TypeError) as exc:
                raise ManifestError(f"{path}:{lineno}: {exc}") from exc
            if rec.name in seen:
                raise ManifestError(f"{path}:{lineno}: duplicate name {rec.name!r}")
            seen.add(rec.name)
            records.append(rec)
    return Manifest(records, provenance=str(path))


def write_manifest(manifest, path):
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for rec in manifest.records:
            fh.write(json.dumps(rec.to_json(), ensure_ascii=False) + "\n")
    return path


def class_distribution(manifest_or_labels):
    """Per-label counts and proportions, in EmotionLabel order."""
    labels = manifest_or_labels.labels if isinstance(manifest_or_labels, Manifest) else manifest_or_labels
    counts = {lab: 0 for lab in EmotionLabel}
    for lab in labels:
        counts[EmotionLabel(int(lab))] += 1
    n = sum(counts.values())
    props = {lab: (c / n if n else 0.0) for lab, c in counts.items()}
    return counts, props
