"""Train/val/test splits and k-fold partitions."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass
class SplitSpec:
    train: list
    val: list
    test: list

    def sizes(self):
        return len(self.train), len(self.val), len(self.test)


def _n_of(data):
    return data if isinstance(data, (int, np.integer)) else len(data)


def _labels_of(data):
    return [int(r.label) for r in data] if not isinstance(data, (int, np.integer)) else None


def _split_sizes(n, ratios):
    # floor for every part but the first; the remainder goes to train
    rest = [math.floor(n * r + 1e-9) for r in ratios[1:]]
    return [n - sum(rest)] + rest


def split(data, ratios=(0.8, 0.1, 0.1), seed=0, stratified=False):
    """Shuffle indices by ``seed`` and cut them into train/val/test.

    ``data`` is a Manifest (or any sized sequence of records) or an int n.
    """
    n = _n_of(data)
    if n == 0:
        raise ValueError("cannot split an empty manifest")
    if len(ratios) != 3 or abs(sum(ratios) - 1.0) > 1e-9 or min(ratios) < 0:
        raise ValueError(f"ratios must be three nonnegative values summing to 1, got {ratios}")
    rng = np.random.default_rng(seed)
    if not stratified:
        perm = rng.permutation(n).tolist()
        a, b, _ = _split_sizes(n, ratios)
        return SplitSpec(perm[:a], perm[a:a + b], perm[a + b:])
    labels = _labels_of(data)
    if labels is None:
        raise ValueError("stratified split needs labelled records")
    parts = ([], [], [])
    labels = np.asarray(labels)
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        idx = idx[rng.permutation(len(idx))].tolist()
        a, b, _ = _split_sizes(len(idx), ratios)
        parts[0].extend(idx[:a])
        parts[1].extend(idx[a:a + b])
        parts[2].extend(idx[a + b:])
    return SplitSpec(*parts)


def kfold(data, k=5, seed=0):
    """k disjoint, exhaustive folds whose sizes differ by at most one."""
    n = _n_of(data)
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    if n < k:
        raise ValueError(f"need at least k={k} samples, got {n}")
    perm = np.random.default_rng(seed).permutation(n)
    return [f.tolist() for f in np.array_split(perm, k)]
