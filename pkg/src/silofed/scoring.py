"""Model-quality scoring and score-list reduction.

Accuracy scoring works in both orchestration modes; the similarity-based
multikrum scorer needs every model of a round at once, so it is sync-only
(enforced at config validation, not here).
"""

from __future__ import annotations

import statistics

import numpy as np

from silofed import kernels
from silofed.learner import Dataset, evaluate
from silofed.weights import ShapeMismatchError, WeightVector

REDUCE_KINDS = ("median", "min", "max", "mean")


def accuracy_score(w: WeightVector, test: Dataset) -> float:
    """Fraction of argmax-correct predictions on the scorer's test set."""
    return evaluate(w, test)[0]


def default_byzantine_count(n_models: int) -> int:
    return (n_models - 1) // 3


def multikrum_scores(models, f=None):
    """Similarity scores in [0, 1], one per model; higher is better.

    Each model's raw distance is the sum of squared L2 distances to its
    n-f-2 nearest other models; scores are 1 - raw/max(raw) (all 1.0 when
    every model is identical). Requires n >= f + 3.
    """
    models = list(models)
    n = len(models)
    if f is None:
        f = default_byzantine_count(n)
    if f < 0:
        raise ValueError("byzantine count must be >= 0")
    if n < f + 3:
        raise ValueError(f"need at least f+3 = {f + 3} models, got {n}")
    shape = models[0].shape
    for w in models[1:]:
        if w.shape != shape:
            raise ShapeMismatchError(f"{w.shape} != {shape}")
    mat = np.stack([w.values for w in models])
    d2 = kernels.pairwise_sqdist(mat)
    keep = n - f - 2
    raw = []
    for i in range(n):
        others = sorted(float(d2[i, j]) for j in range(n) if j != i)
        raw.append(sum(others[:keep]))
    top = max(raw)
    if top == 0.0:
        return [1.0] * n
    return [1.0 - r / top for r in raw]


def reduce_scores(values, kind: str) -> float:
    """Collapse a score list to one scalar: median, min, max, or mean.

    An even-length median is the mean of the two middle values.
    """
    values = list(values)
    if not values:
        raise ValueError("cannot reduce an empty score list")
    if kind == "median":
        return float(statistics.median(values))
    if kind == "min":
        return float(min(values))
    if kind == "max":
        return float(max(values))
    if kind == "mean":
        return float(statistics.fmean(values))
    raise ValueError(f"unknown reduce kind {kind!r}; expected one of {REDUCE_KINDS}")
