"""
Simulated annotation with a five-expert vote
============================================

A stand-in labeler proposes labels; simulated experts correct a pilot slice
and then vote on every proposal. Watch how expert accuracy trades retention
against label quality.
"""

from aamtsa.dataset import (
    EmotionLabel, SimulatedLabeler, VoteSheet, consensus_vote, simulate_annotation_pipeline,
)
from aamtsa.experiment import synthetic_bundle

J, N = EmotionLabel.JOY, EmotionLabel.NEUTRAL
print(consensus_vote(VoteSheet(J, (J, J, J, J, N))))  # 4 of 5 agree: kept
print(consensus_vote(VoteSheet(J, (J, J, J, N, N))))  # 3 of 5: discarded

bundle = synthetic_bundle(n=2000, seed=0)
print(f"{'q':>5} {'retention':>10} {'pre-vote':>9} {'accepted':>9}")
for q in (1.0, 0.95, 0.9, 0.8, 0.6):
    rep = simulate_annotation_pipeline(bundle, SimulatedLabeler(0.7, seed=1), q, 0.10, rng=5).report
    print(f"{q:5.2f} {rep.retention:10.3f} {rep.pre_vote_accuracy:9.3f} {rep.accepted_accuracy:9.3f}")
