"""Aggregator-side selection of which scored peer models to merge.

Sampling policies (all / self / random_k) ignore scores; performance
policies (top_k / above_average / above_median / above_self) act on each
candidate's reduced score. Candidates with no accepted scores are
excluded from every score-based policy, kept by `all`, and eligible for
`random_k`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from silofed.scoring import REDUCE_KINDS, reduce_scores

POLICY_KINDS = ("all", "self", "random_k", "top_k",
                "above_average", "above_median", "above_self")


@dataclass(frozen=True)
class PolicySpec:
    kind: str
    k: int = 0
    reduce: str = "median"
    seed: int = 0

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}")
        if self.reduce not in REDUCE_KINDS:
            raise ValueError(f"unknown reduce kind {self.reduce!r}")
        if self.kind in ("random_k", "top_k") and self.k < 1:
            raise ValueError(f"{self.kind} needs k >= 1")


@dataclass(frozen=True)
class Candidate:
    cid: str
    submitter: int
    scores: tuple

    def __post_init__(self):
        object.__setattr__(self, "scores", tuple(float(s) for s in self.scores))
        if any(not 0.0 <= s <= 1.0 for s in self.scores):
            raise ValueError("scores must lie in [0, 1]")


def select_models(candidates, own: Candidate, spec: PolicySpec, rng=None):
    """Return the selected candidate cids for one merge decision.

    `own` is the aggregator's own entry and must not appear in
    `candidates`. Ties in top_k break by lexicographic cid; an unscored
    `own` under above_self selects every scored candidate.
    """
    candidates = list(candidates)
    if spec.kind == "self":
        return []
    if spec.kind == "all":
        return [c.cid for c in candidates]
    if spec.kind == "random_k":
        take = min(spec.k, len(candidates))
        if take == 0:
            return []
        if rng is None:
            rng = np.random.default_rng(spec.seed)
        picks = rng.choice(len(candidates), size=take, replace=False)
        return [candidates[int(i)].cid for i in picks]

    scored = [c for c in candidates if c.scores]
    reduced = {c.cid: reduce_scores(c.scores, spec.reduce) for c in scored}
    if spec.kind == "top_k":
        ranked = sorted(scored, key=lambda c: (-reduced[c.cid], c.cid))
        return [c.cid for c in ranked[: spec.k]]
    if not scored:
        return []
    if spec.kind == "above_average":
        threshold = sum(reduced.values()) / len(reduced)
    elif spec.kind == "above_median":
        threshold = reduce_scores(list(reduced.values()), "median")
    else:  # above_self
        threshold = (reduce_scores(own.scores, spec.reduce)
                     if own.scores else float("-inf"))
    return [c.cid for c in scored if reduced[c.cid] > threshold]
