"""Canned experiment configurations (desk-scale counterparts of the
published runs). Each scenario is an ordered mapping of arm name to
SimConfig; single-run scenarios have one arm.
"""

from __future__ import annotations

from dataclasses import replace

from silofed.aggregation import FedYogiParams
from silofed.learner import PartitionSpec, TrainConfig
from silofed.policy import PolicySpec
from silofed.sim import Adversary, DataSpec, DelayModel, SimConfig

SCENARIO_NAMES = ("collab-vs-self", "sync-vs-async", "byzantine-naive-vs-smart",
                  "iid-baseline", "niid-dirichlet")

_DATA = DataSpec(classes=10, dim=20, samples=3000, eval_samples=1000)
_TRAIN = TrainConfig(epochs=2, lr=0.01, batch_size=32, seed=0)
_PLAIN = DelayModel(base=10.0, jitter=2.0, score_base=1.0)
_STRAGGLER = DelayModel(base=10.0, jitter=2.0, straggler_mult=2.0,
                        straggle_prob=0.5, score_base=1.0)


def _base(n, seed, **overrides) -> SimConfig:
    fields = dict(
        mode="sync",
        n_aggregators=n,
        clients_per_agg=3,
        rounds=40,
        data=_DATA,
        partition=PartitionSpec("dirichlet", alpha=0.5),
        train=_TRAIN,
        policies=tuple(PolicySpec("all") for _ in range(n)),
        algorithms=tuple("fedavg" for _ in range(n)),
        delays=tuple(_PLAIN for _ in range(n)),
        scoring="accuracy",
        fedyogi=FedYogiParams(),
        phases=(18.0, 8.0),
        master_seed=seed,
    )
    fields.update(overrides)
    return SimConfig(**fields)


def scenario(name: str, master_seed: int = 1) -> dict:
    """Configs for a named scenario, keyed by arm name."""
    if name == "collab-vs-self":
        return {
            "all": _base(3, master_seed),
            "self": _base(3, master_seed,
                          policies=tuple(PolicySpec("self") for _ in range(3))),
        }
    if name == "sync-vs-async":
        delays = (_STRAGGLER, _PLAIN, _PLAIN, _PLAIN)
        common = dict(rounds=30, partition=PartitionSpec("iid"), delays=delays)
        return {
            "sync": _base(4, master_seed, **common),
            "async": replace(_base(4, master_seed, **common),
                             mode="async", phases=None),
        }
    if name == "byzantine-naive-vs-smart":
        adversaries = (Adversary(agg=2, kind="signflip", param=1.0),)
        return {
            "naive": _base(3, master_seed, adversaries=adversaries,
                           policies=tuple(PolicySpec("top_k", k=3) for _ in range(3))),
            "smart": _base(3, master_seed, adversaries=adversaries,
                           policies=tuple(PolicySpec("above_average") for _ in range(3))),
        }
    if name == "iid-baseline":
        return {"run": _base(3, master_seed, rounds=20,
                             partition=PartitionSpec("iid"))}
    if name == "niid-dirichlet":
        return {"run": _base(4, master_seed, rounds=30,
                             partition=PartitionSpec("dirichlet", alpha=0.1),
                             policies=tuple(PolicySpec("top_k", k=2, reduce="mean")
                                            for _ in range(4)),
                             algorithms=("fedavg", "fedyogi", "fedavg", "fedyogi"))}
    raise ValueError(f"unknown scenario {name!r}; valid names: {', '.join(SCENARIO_NAMES)}")
