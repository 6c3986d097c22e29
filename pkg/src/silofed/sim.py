"""Deterministic discrete-event simulator for N aggregator clusters.

Virtual time only: compute costs come from configured delay models, never
from the wall clock. One master seed fans out to labeled per-subsystem
seeds (ledger sampling, per-cluster policy / delays / adversary noise,
per-client training shuffles) so changing one subsystem's behavior leaves
the others' randomness untouched.

Each round, per cluster: clients train locally -> cluster fedavg -> the
adversary (if any) poisons the outgoing copy -> serialize/put to the
store -> submit to the ledger -> scoring per mode -> the aggregator pulls
the latest scored models, reduces and selects, merges (plain average or a
FedYogi step on the delta), and broadcasts the result to its clients.

Sync mode advances global training/scoring windows on phase ticks,
deferring late models to the next round and dropping late scores. Async
mode lets every cluster loop at its own pace, with scorers assigned the
moment a model is submitted.
"""

from __future__ import annotations

import hashlib
import heapq
from dataclasses import dataclass, replace

import numpy as np

from silofed.aggregation import (FedYogiParams, FedYogiState, fedavg,
                                 fedyogi_step, merge_global)
from silofed.cas import Cid, MemoryStore
from silofed.learner import (PartitionSpec, evaluate, holdout, local_train,
                             make_synthetic, model_shape, partition)
from silofed.ledger import ASYNC, SYNC, LateScoreError, Ledger
from silofed.policy import Candidate, PolicySpec, select_models
from silofed.scoring import (accuracy_score, default_byzantine_count,
                             multikrum_scores)
from silofed.weights import WeightVector, deserialize, linear_combine, serialize

CSV_HEADER = ("round,aggregator,virtual_time_secs,local_accuracy,local_loss,"
              "global_accuracy,global_loss,selected_cids")

_RANK = {"round_start": 0, "phase_tick": 1, "client_done": 2,
         "cluster_agg": 3, "model_submitted": 4, "score_computed": 5}

ATTACK_KINDS = ("signflip", "gaussian")
ALGORITHMS = ("fedavg", "fedyogi")
SCORING_KINDS = ("accuracy", "multikrum")


def derive_seed(master: int, label: str) -> int:
    """Stable per-subsystem seed: sha256 over master seed and label."""
    digest = hashlib.sha256(f"{master}:{label}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass(frozen=True)
class DataSpec:
    classes: int
    dim: int
    samples: int
    eval_samples: int = 1000

    def __post_init__(self):
        if self.classes < 2 or self.dim < 1 or self.samples < self.classes:
            raise ValueError(f"invalid data spec: {self}")
        if self.eval_samples < self.classes:
            raise ValueError("eval_samples must cover every class")


@dataclass(frozen=True)
class DelayModel:
    """Per-cluster virtual compute costs.

    Training delay: base + U(0, jitter), times straggler_mult with
    probability straggle_prob. Scoring one model costs score_base,
    straggler-multiplied with the same probability.
    """

    base: float
    jitter: float = 0.0
    straggler_mult: float = 1.0
    straggle_prob: float = 0.0
    score_base: float = 1.0

    def __post_init__(self):
        if min(self.base, self.jitter, self.score_base) < 0:
            raise ValueError("delays must be non-negative")
        if self.straggler_mult < 1.0 or not 0.0 <= self.straggle_prob <= 1.0:
            raise ValueError(f"invalid straggler model: {self}")


def sample_delay(model: DelayModel, rng) -> float:
    """One training-delay draw; consumes exactly two rng variates."""
    d = model.base + rng.uniform(0.0, model.jitter)
    if rng.random() < model.straggle_prob:
        d *= model.straggler_mult
    return d


def sample_score_delay(model: DelayModel, rng) -> float:
    d = model.score_base
    if rng.random() < model.straggle_prob:
        d *= model.straggler_mult
    return d


@dataclass(frozen=True)
class Adversary:
    agg: int
    kind: str
    param: float = 1.0

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise ValueError(f"unknown attack kind {self.kind!r}")
        if self.param < 0:
            raise ValueError("attack parameter must be non-negative")


def poison(w: WeightVector, kind: str, param: float, rng=None) -> WeightVector:
    """Corrupt a model: signflip returns -param*w; gaussian adds seeded
    N(0, param^2) noise per element."""
    if kind == "signflip":
        return WeightVector(-param * w.values, w.shape)
    if kind == "gaussian":
        if rng is None:
            raise ValueError("gaussian poisoning needs an rng")
        return WeightVector(w.values + rng.normal(0.0, param, w.values.size), w.shape)
    raise ValueError(f"unknown attack kind {kind!r}")


@dataclass(frozen=True)
class SimConfig:
    mode: str
    n_aggregators: int
    clients_per_agg: int
    rounds: int
    data: DataSpec
    partition: PartitionSpec
    train: TrainConfig
    policies: tuple
    algorithms: tuple
    delays: tuple
    scoring: str = "accuracy"
    multikrum_f: int | None = None
    fedyogi: FedYogiParams = FedYogiParams()
    phases: tuple | None = None  # (training_secs, scoring_secs), sync only
    adversaries: tuple = ()
    warmup_rounds: int = 0
    master_seed: int = 0

    def __post_init__(self):
        n = self.n_aggregators
        if self.mode not in (SYNC, ASYNC):
            raise ValueError(f"mode must be {SYNC!r} or {ASYNC!r}")
        if n < 2:
            raise ValueError("need at least 2 aggregators for majority scoring")
        if self.clients_per_agg < 1 or self.rounds < 1 or self.warmup_rounds < 0:
            raise ValueError("clients_per_agg and rounds must be >= 1")
        for name, seq in (("policies", self.policies),
                          ("algorithms", self.algorithms),
                          ("delays", self.delays)):
            if len(seq) != n:
                raise ValueError(f"{name} must list one entry per aggregator")
        if any(a not in ALGORITHMS for a in self.algorithms):
            raise ValueError(f"algorithms must be one of {ALGORITHMS}")
        if self.scoring not in SCORING_KINDS:
            raise ValueError(f"scoring must be one of {SCORING_KINDS}")
        if self.scoring == "multikrum" and self.mode != SYNC:
            raise ValueError("multikrum scoring operates on a whole round of "
                             "models and is supported in sync mode only")
        if self.mode == SYNC:
            if self.phases is None or len(self.phases) != 2 or min(self.phases) <= 0:
                raise ValueError("sync mode needs positive (training, scoring) "
                                 "phase durations")
        seen = set()
        for adv in self.adversaries:
            if adv.agg in seen or not 0 <= adv.agg < n:
                raise ValueError(f"bad adversary id {adv.agg}")
            seen.add(adv.agg)


@dataclass(frozen=True)
class MetricsRow:
    round: int
    aggregator: int
    virtual_time_secs: float
    local_accuracy: float
    local_loss: float
    global_accuracy: float
    global_loss: float
    selected_cids: tuple

    def csv_line(self) -> str:
        return (f"{self.round},{self.aggregator},{self.virtual_time_secs:.6f},"
                f"{self.local_accuracy:.6f},{self.local_loss:.6f},"
                f"{self.global_accuracy:.6f},{self.global_loss:.6f},"
                f"{';'.join(self.selected_cids)}")


@dataclass
class DeferralRecord:
    agg: int
    cid: str
    missed_round: int
    admitted_round: int | None = None


@dataclass
class SimResult:
    rows: list
    events: list
    late_scores: int
    skipped_scores: int
    deferrals: list
    poisoned_cids: set
    total_virtual_time: float
    config: SimConfig

    def metrics_csv(self) -> str:
        return "\n".join([CSV_HEADER] + [r.csv_line() for r in self.rows]) + "\n"

    def events_log(self) -> str:
        return "\n".join(ev.line() for ev in self.events) + "\n"


class _Cluster:
    """Actor state for one aggregator and its clients."""

    def __init__(self, agg_id, clients, score_test, policy, algorithm, delay,
                 shape, fedyogi_params, master_seed):
        self.id = agg_id
        self.clients = clients
        self.score_test = score_test
        self.policy = policy
        self.algorithm = algorithm
        self.delay = delay
        self.global_model = WeightVector.zeros(shape)
        self.local_model = WeightVector.zeros(shape)
        self.yogi = (FedYogiState.fresh(shape, fedyogi_params)
                     if algorithm == "fedyogi" else None)
        self.policy_rng = np.random.default_rng(
            derive_seed(master_seed, f"policy/{agg_id}"))
        self.delay_rng = np.random.default_rng(
            derive_seed(master_seed, f"delays/{agg_id}"))
        self.adversary_rng = np.random.default_rng(
            derive_seed(master_seed, f"adversary/{agg_id}"))
        self.pending = {}
        self.training_round = None
        self.pull_round = None
        self.deferred = False
        self.score_lane_free = 0.0


class Simulation:
    """Owns the event loop, the ledger, the store, and all actor state."""

    def __init__(self, config: SimConfig):
        self.config = config
        self.now = 0.0
        self._seq = 0
        self._heap = []
        self.store = MemoryStore()
        self.ledger = Ledger(config.mode, derive_seed(config.master_seed, "ledger"),
                             self.store, clock=lambda: self.now)
        self.rows = []
        self.late_scores = 0
        self.skipped_scores = 0
        self.deferrals = []
        self.poisoned_cids = set()
        self._adversary = {a.agg: a for a in config.adversaries}
        self._mk_cache = {}

        data = config.data
        full = make_synthetic(data.classes, data.dim,
                              data.samples + data.eval_samples,
                              derive_seed(config.master_seed, "data"))
        train_pool, self.eval_set = holdout(
            full, data.eval_samples,
            derive_seed(config.master_seed, "eval-split"), stratified=True)
        shards = partition(train_pool, config.n_aggregators, config.partition,
                           derive_seed(config.master_seed, "partition"))
        shape = model_shape(data.dim, data.classes)
        self.clusters = []
        for a in range(config.n_aggregators):
            if shards[a].n < config.clients_per_agg + 1:
                raise ValueError(
                    f"aggregator {a} received only {shards[a].n} samples; "
                    "not enough for its clients plus a test split")
            cluster_train, score_test = holdout(
                shards[a], 0.2, derive_seed(config.master_seed, f"score-split/{a}"))
            clients = partition(cluster_train, config.clients_per_agg,
                                PartitionSpec("iid"),
                                derive_seed(config.master_seed, f"clients/{a}"))
            self.clusters.append(_Cluster(
                a, clients, score_test, config.policies[a],
                config.algorithms[a], config.delays[a], shape,
                config.fedyogi, config.master_seed))
            self.ledger.register(a)

    # -- event loop -----------------------------------------------------

    def _schedule(self, t, kind, agg, payload):
        heapq.heappush(self._heap, (t, _RANK[kind], agg, self._seq, kind, payload))
        self._seq += 1

    def run(self) -> SimResult:
        if self.config.mode == SYNC:
            self._schedule(0.0, "round_start", -1, {"round": 0})
        else:
            for cl in self.clusters:
                self._schedule(0.0, "round_start", cl.id, {"round": 0})
        while self._heap:
            t, _, agg, _, kind, payload = heapq.heappop(self._heap)
            self.now = t
            getattr(self, f"_on_{kind}")(agg, payload)
        self.rows.sort(key=lambda r: (r.round, r.aggregator))
        total = max(r.virtual_time_secs for r in self.rows)
        return SimResult(self.rows, self.ledger.events, self.late_scores,
                         self.skipped_scores, self.deferrals,
                         self.poisoned_cids, total, self.config)

    # -- handlers ---------------------------------------------------------

    def _on_round_start(self, agg, payload):
        r = payload["round"]
        if self.config.mode == SYNC:
            self.ledger.start_training(r)
            for rec in self.deferrals:
                if rec.admitted_round is None:
                    rec.admitted_round = r
                    self.clusters[rec.agg].pull_round = r
                    self.clusters[rec.agg].deferred = False
            for cl in self.clusters:
                if (cl.training_round is None and cl.pull_round is None
                        and not cl.deferred):
                    self._begin_training(cl, r)
            training, scoring = self.config.phases
            self._schedule(self.now + training, "phase_tick", -1,
                           {"round": r, "tick": "end_training"})
            self._schedule(self.now + training + scoring, "phase_tick", -1,
                           {"round": r, "tick": "end_scoring"})
        else:
            cl = self.clusters[agg]
            self.ledger.start_training(r, agg=agg)
            self._begin_training(cl, r)

    def _begin_training(self, cl, r):
        cl.training_round = r
        cl.pending = {}
        duration = sample_delay(cl.delay, cl.delay_rng)
        for c in range(len(cl.clients)):
            self._schedule(self.now + duration, "client_done", cl.id,
                           {"round": r, "client": c})

    def _on_client_done(self, agg, payload):
        cl = self.clusters[agg]
        r, c = payload["round"], payload["client"]
        cfg = replace(self.config.train,
                      seed=derive_seed(self.config.master_seed, f"train/{r}/{agg}/{c}"))
        cl.pending[c] = local_train(cl.global_model, cl.clients[c], cfg)
        if len(cl.pending) == len(cl.clients):
            self._schedule(self.now, "cluster_agg", agg, {"round": r})

    def _on_cluster_agg(self, agg, payload):
        cl = self.clusters[agg]
        models = [cl.pending[c] for c in range(len(cl.clients))]
        counts = [ds.n for ds in cl.clients]
        cl.local_model = fedavg(models, counts)
        cl.pending = {}
        self._schedule(self.now, "model_submitted", agg, {"round": payload["round"]})

    def _on_model_submitted(self, agg, payload):
        cl = self.clusters[agg]
        r = payload["round"]
        outgoing = cl.local_model
        adv = self._adversary.get(agg)
        if adv is not None:
            outgoing = poison(outgoing, adv.kind, adv.param, cl.adversary_rng)
        cid = self.store.put(serialize(outgoing))
        if adv is not None:
            self.poisoned_cids.add(str(cid))
        cl.training_round = None
        ev = self.ledger.submit_model(agg, cid, r)
        if self.config.mode == SYNC:
            if ev is None:
                cl.deferred = True
                self.deferrals.append(
                    DeferralRecord(agg, str(cid), missed_round=self.ledger.round))
            else:
                cl.pull_round = ev.data["round"]
        else:
            for s in self.ledger.assignments[cid]:
                self._enqueue_duty(s, cid, r)
            row = self._pull_and_merge(cl, r)
            self.rows.append(row)
            if r + 1 < self.config.rounds:
                self._schedule(self.now, "round_start", agg, {"round": r + 1})

    def _enqueue_duty(self, scorer, cid, r):
        cl = self.clusters[scorer]
        cost = sample_score_delay(cl.delay, cl.delay_rng)
        done = max(self.now, cl.score_lane_free) + cost
        cl.score_lane_free = done
        self._schedule(done, "score_computed", scorer, {"cid": str(cid), "round": r})

    def _on_phase_tick(self, agg, payload):
        r = payload["round"]
        if payload["tick"] == "end_training":
            for ev in self.ledger.start_scoring(r):
                for s in ev.data["scorers"]:
                    self._enqueue_duty(s, ev.data["cid"], r)
            return
        self.ledger.finalize_round(r)
        for cl in self.clusters:
            if cl.pull_round == r:
                cl.pull_round = None
                self.rows.append(self._pull_and_merge(cl, r))
            else:
                la, ll = evaluate(cl.local_model, self.eval_set)
                ga, gl = evaluate(cl.global_model, self.eval_set)
                self.rows.append(MetricsRow(r, cl.id, self.now, la, ll, ga, gl, ()))
        if r + 1 < self.config.rounds:
            self._schedule(self.now, "round_start", -1, {"round": r + 1})

    def _on_score_computed(self, agg, payload):
        cid, r = payload["cid"], payload["round"]
        value = self._compute_score(agg, cid, r)
        if value is None:
            self.skipped_scores += 1
            return
        try:
            self.ledger.submit_score(agg, Cid(cid), value)
        except LateScoreError:
            self.late_scores += 1

    def _compute_score(self, scorer, cid, r):
        if self.config.scoring == "accuracy":
            model = deserialize(self.store.get(Cid(cid)))
            return accuracy_score(model, self.clusters[scorer].score_test)
        # multikrum: every scorer computes over all models of the round,
        # then reports the value of its assigned cid
        if r not in self._mk_cache:
            entries = self.ledger.submissions.get(r, [])
            models = [deserialize(self.store.get(c)) for _, c in entries]
            f = (self.config.multikrum_f if self.config.multikrum_f is not None
                 else default_byzantine_count(len(models)))
            if len(models) < f + 3:
                self._mk_cache[r] = None  # too few models this round
            else:
                values = multikrum_scores(models, f)
                self._mk_cache[r] = {str(c): v for (_, c), v in zip(entries, values)}
        table = self._mk_cache[r]
        return None if table is None else table[cid]

    # -- pull + merge -----------------------------------------------------

    def _pull_and_merge(self, cl, r) -> MetricsRow:
        latest = self.ledger.get_latest_models_with_scores(cl.id)
        own = None
        others = []
        for cid, (submitter, values) in latest.items():
            cand = Candidate(str(cid), submitter, tuple(values))
            if submitter == cl.id:
                own = cand
            else:
                others.append(cand)
        if own is None:
            own = Candidate("", cl.id, ())
        spec = PolicySpec("self") if r < self.config.warmup_rounds else cl.policy
        selected = sorted(select_models(others, own, spec, rng=cl.policy_rng))
        pulled = [deserialize(self.store.get(Cid(c))) for c in selected]
        target = merge_global(cl.local_model, pulled)
        if cl.algorithm == "fedavg":
            new_global = target
        else:
            delta = linear_combine([(target, 1.0), (cl.global_model, -1.0)])
            cl.yogi, new_global = fedyogi_step(cl.yogi, cl.global_model, delta)
        cl.global_model = new_global
        la, ll = evaluate(cl.local_model, self.eval_set)
        ga, gl = evaluate(new_global, self.eval_set)
        return MetricsRow(r, cl.id, self.now, la, ll, ga, gl, tuple(selected))


def run(config: SimConfig):
    """Execute a full simulation; returns one MetricsRow per (round, agg)."""
    return Simulation(config).run().rows
