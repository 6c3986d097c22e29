"""silofed: ledger-coordinated cross-silo federated learning, simulated.

A protocol library plus a deterministic discrete-event simulator:
content-addressed model exchange, randomized majority scoring, sync/async
round drivers, and pluggable aggregation/scoring policies, exercised on a
toy synthetic classification workload.
"""

__version__ = "0.1.0"

from silofed.aggregation import (FedYogiParams, FedYogiState, fedavg,
                                 fedyogi_step, merge_global)
from silofed.cas import Cid, DiskStore, MemoryStore
from silofed.learner import (Dataset, PartitionSpec, TrainConfig, evaluate,
                             holdout, local_train, make_synthetic, partition)
from silofed.ledger import Ledger, LedgerEvent
from silofed.policy import Candidate, PolicySpec, select_models
from silofed.scoring import accuracy_score, multikrum_scores, reduce_scores
from silofed.sim import (Adversary, DataSpec, DelayModel, MetricsRow,
                         SimConfig, SimResult, Simulation, poison, run)
from silofed.weights import WeightVector, deserialize, linear_combine, serialize
