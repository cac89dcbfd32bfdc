"""Corpus schema, splits, synthetic generation and the annotation loop."""

from .annotation import (
    ModelLabeler, PipelineReport, SimulatedLabeler, VoteSheet, consensus_vote, expert_agent,
    simulate_annotation_pipeline,
)
from .schema import (
    CORPUS_COUNTS, CORPUS_SIZE, EmotionLabel, Manifest, ManifestError, SampleRecord,
    class_distribution, load_manifest, write_manifest,
)
from .splits import SplitSpec, kfold, split
from .synth import SynthConfig, apportion, centroid_probe_accuracy, load_corpus, synthesize

__all__ = [
    "CORPUS_COUNTS", "CORPUS_SIZE", "EmotionLabel", "Manifest", "ManifestError", "ModelLabeler",
    "PipelineReport", "SampleRecord", "SimulatedLabeler", "SplitSpec", "SynthConfig", "VoteSheet",
    "apportion", "centroid_probe_accuracy", "class_distribution", "consensus_vote", "expert_agent",
    "kfold", "load_corpus", "load_manifest", "simulate_annotation_pipeline", "split", "synthesize",
    "write_manifest",
]
