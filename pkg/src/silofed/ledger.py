"""The decentralized orchestrator as a deterministic state machine.

One Ledger instance plays the role of the on-chain contract: it tracks
rounds, model submissions, randomized scorer assignment, score records,
and (in sync mode) the training/scoring phase windows. Every accepted
mutation appends to an append-only event log whose line format is stable
enough to diff across runs.

Sync mode gates submissions on the training window (late models defer to
the next round, late scores are dropped); async mode has no global gate
and assigns scorers the moment a model arrives.

All mutations must come from a single owner (the simulator event loop);
reads of the event log are safe at any time.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from silofed.cas import Cid

SYNC = "sync"
ASYNC = "async"

TRAINING = "training"
SCORING = "scoring"
CLOSED = "closed"


class LedgerError(Exception):
    pass


class RegistrationError(LedgerError):
    pass


class PhaseError(LedgerError):
    pass


class UnsupportedInModeError(LedgerError):
    pass


class SubmissionError(LedgerError):
    pass


class UnknownContentError(LedgerError):
    pass


class ScoreError(LedgerError):
    pass


class LateScoreError(ScoreError):
    pass


class SamplingError(LedgerError):
    pass


@dataclass(frozen=True)
class LedgerEvent:
    index: int
    time: float
    kind: str
    data: dict

    def line(self) -> str:
        payload = json.dumps(self.data, sort_keys=True, separators=(",", ":"))
        return f"{self.index}\t{self.time:.6f}\t{self.kind}\t{payload}"


@dataclass(frozen=True)
class ScoreRecord:
    cid: str
    scorer: int
    round: int
    value: float


class Ledger:
    def __init__(self, mode: str, seed: int, store, clock=None):
        if mode not in (SYNC, ASYNC):
            raise ValueError(f"mode must be {SYNC!r} or {ASYNC!r}")
        self.mode = mode
        self._store = store
        self._rng = np.random.default_rng(seed)
        self._clock = clock if clock is not None else (lambda: 0.0)

        self.registration_open = True
        self._registered: set[int] = set()
        self.events: list[LedgerEvent] = []

        # sync phase machine
        self.round = -1
        self.phase = CLOSED
        self._finalized_round = -1

        self.submissions: dict[int, list[tuple[int, Cid]]] = {}
        self._submitted_in: dict[int, set[int]] = {}
        self.assignments: dict[Cid, tuple[int, ...]] = {}
        self.scores: dict[Cid, list[ScoreRecord]] = {}
        self.cid_round: dict[Cid, int] = {}
        self.cid_submitter: dict[Cid, int] = {}
        self.deferred: list[tuple[int, Cid]] = []

        # async bookkeeping
        self.availability: dict[int, str] = {}
        self._latest_by_agg: dict[int, Cid] = {}
        self._agg_round: dict[int, int] = {}

    # -- registration -------------------------------------------------

    def register(self, agg: int):
        """Enrol an aggregator as both trainer and scorer candidate."""
        if not self.registration_open:
            raise RegistrationError("registration closed at first start_training")
        if agg in self._registered:
            raise RegistrationError(f"aggregator {agg} already registered")
        if not isinstance(agg, int) or agg < 0:
            raise RegistrationError(f"aggregator id must be a small unsigned int: {agg!r}")
        self._registered.add(agg)
        self.availability[agg] = "idle"

    @property
    def n_aggregators(self) -> int:
        return len(self._registered)

    def majority(self) -> int:
        return self.n_aggregators // 2 + 1

    def _close_registration(self):
        if self.registration_open:
            if sorted(self._registered) != list(range(len(self._registered))):
                raise RegistrationError(
                    f"aggregator ids must be dense 0..N-1, got {sorted(self._registered)}")
            self.registration_open = False

    # -- event log ----------------------------------------------------

    def _emit(self, kind: str, **data) -> LedgerEvent:
        ev = LedgerEvent(len(self.events), float(self._clock()), kind, data)
        self.events.append(ev)
        return ev

    def export_log(self):
        """Event log as line-delimited records (index, time, kind, fields)."""
        return [ev.line() for ev in self.events]

    # -- round lifecycle ----------------------------------------------

    def start_training(self, round: int, agg: int | None = None) -> LedgerEvent:
        """Open a training window (sync: global; async: per aggregator).

        In sync mode, submissions deferred by stragglers in the previous
        round are admitted into this one.
        """
        self._close_registration()
        if self.mode == ASYNC:
            if agg is None:
                raise LedgerError("async start_training is per-aggregator")
            if agg not in self._registered:
                raise LedgerError(f"aggregator {agg} not registered")
            expected = self._agg_round.get(agg, -1) + 1
            if round != expected:
                raise PhaseError(f"aggregator {agg} expected round {expected}, got {round}")
            self._agg_round[agg] = round
            return self._emit("start_training", round=round, agg=agg)

        if self.phase != CLOSED:
            raise PhaseError(f"cannot start training during {self.phase} phase")
        if round != self.round + 1:
            raise PhaseError(f"expected round {self.round + 1}, got {round}")
        self.round = round
        self.phase = TRAINING
        ev = self._emit("start_training", round=round)
        for d_agg, d_cid in self.deferred:
            self._record_submission(d_agg, d_cid, round)
        self.deferred.clear()
        return ev

    def start_scoring(self, round: int):
        """Close the sync training window and assign scorers to every
        model submitted this round; returns the assignment events."""
        if self.mode == ASYNC:
            raise UnsupportedInModeError("async mode assigns scorers at submission")
        if self.phase != TRAINING or round != self.round:
            raise PhaseError(
                f"start_scoring({round}) invalid in round {self.round} phase {self.phase}")
        self.phase = SCORING
        return [self.sample_scorers(cid) for _, cid in self.submissions.get(round, [])]

    def finalize_round(self, round: int) -> LedgerEvent:
        """Close the sync scoring window; later scores for this round drop."""
        if self.mode == ASYNC:
            raise UnsupportedInModeError("async mode has no global rounds")
        if self.phase != SCORING or round != self.round:
            raise PhaseError(
                f"finalize_round({round}) invalid in round {self.round} phase {self.phase}")
        self.phase = CLOSED
        self._finalized_round = round
        return self._emit("round_finalized", round=round)

    # -- submissions ----------------------------------------------------

    def _record_submission(self, agg: int, cid: Cid, round: int) -> LedgerEvent:
        self.submissions.setdefault(round, []).append((agg, cid))
        self._submitted_in.setdefault(round, set()).add(agg)
        self.cid_round[cid] = round
        self.cid_submitter[cid] = agg
        return self._emit("model_submitted", round=round, agg=agg, cid=str(cid))

    def submit_model(self, agg: int, cid, round: int):
        """Record a model CID for a round.

        Sync: inside the training window the model lands in the current
        round; outside it the submission is queued and admitted at the
        next start_training (returns None in that case). Async: recorded
        immediately, scorers assigned at once, submitter marked busy.
        """
        cid = Cid(cid)
        if agg not in self._registered:
            raise SubmissionError(f"aggregator {agg} not registered")
        if not self._store.has(cid):
            raise UnknownContentError(f"cid {cid} not present in the store")
        if cid in self.cid_round:
            raise SubmissionError(f"cid {cid} was already submitted")

        if self.mode == ASYNC:
            if round != self._agg_round.get(agg, -1):
                raise SubmissionError(
                    f"aggregator {agg} is in round {self._agg_round.get(agg, -1)}, got {round}")
            if agg in self._submitted_in.get(round, set()):
                raise SubmissionError(f"aggregator {agg} already submitted in round {round}")
            ev = self._record_submission(agg, cid, round)
            self._latest_by_agg[agg] = cid
            self.availability[agg] = "busy"
            self.sample_scorers(cid)
            return ev

        if self.round < 0:
            raise SubmissionError("no round has started")
        if round > self.round:
            raise SubmissionError(f"round {round} has not started (current {self.round})")
        if agg in self._submitted_in.get(round, set()):
            raise SubmissionError(f"aggregator {agg} already submitted in round {round}")
        if self.phase == TRAINING:
            return self._record_submission(agg, cid, self.round)
        if any(a == agg for a, _ in self.deferred):
            raise SubmissionError(f"aggregator {agg} already has a deferred model")
        self.deferred.append((agg, cid))
        return None

    # -- scoring --------------------------------------------------------

    def sample_scorers(self, cid) -> LedgerEvent:
        """Draw floor(N/2)+1 distinct scorers uniformly from all N."""
        cid = Cid(cid)
        if self.registration_open:
            raise SamplingError("registration still open")
        if self.n_aggregators < 2:
            raise SamplingError("need at least 2 aggregators for a majority")
        if cid not in self.cid_round:
            raise SamplingError(f"cid {cid} has no recorded submission")
        if cid in self.assignments:
            raise SamplingError(f"cid {cid} already has scorers assigned")
        picks = self._rng.choice(self.n_aggregators, size=self.majority(), replace=False)
        scorers = tuple(sorted(int(s) for s in picks))
        self.assignments[cid] = scorers
        return self._emit("scoring_assigned", cid=str(cid), scorers=list(scorers))

    def submit_score(self, scorer: int, cid, value: float) -> LedgerEvent:
        """Record one scorer's value for a model; sync drops late scores."""
        cid = Cid(cid)
        if cid not in self.assignments or scorer not in self.assignments[cid]:
            raise ScoreError(f"scorer {scorer} is not assigned to {cid}")
        if not 0.0 <= value <= 1.0:
            raise ScoreError(f"score {value} outside [0, 1]")
        if any(r.scorer == scorer for r in self.scores.get(cid, [])):
            raise ScoreError(f"scorer {scorer} already scored {cid}")
        model_round = self.cid_round[cid]
        if self.mode == SYNC and (self.phase != SCORING or model_round != self.round):
            raise LateScoreError(
                f"scoring window for round {model_round} is closed")
        rec = ScoreRecord(str(cid), scorer, model_round, float(value))
        self.scores.setdefault(cid, []).append(rec)
        return self._emit("score_submitted", cid=str(cid), scorer=scorer)

    # -- queries --------------------------------------------------------

    def get_latest_models_with_scores(self, requester: int) -> dict:
        """Map cid -> (submitter, list of accepted score values).

        Sync: the models of the most recently finalized round. Async:
        each aggregator's most recent submission (latest wins); the
        requester is marked idle until its next submit_model. Models with
        no accepted scores appear with an empty list.
        """
        if requester not in self._registered:
            raise LedgerError(f"aggregator {requester} not registered")
        if self.mode == ASYNC:
            self.availability[requester] = "idle"
            entries = sorted(self._latest_by_agg.items())
            return {
                cid: (agg, [r.value for r in self.scores.get(cid, [])])
                for agg, cid in entries
            }
        if self._finalized_round < 0:
            return {}
        return {
            cid: (agg, [r.value for r in self.scores.get(cid, [])])
            for agg, cid in self.submissions.get(self._finalized_round, [])
        }
