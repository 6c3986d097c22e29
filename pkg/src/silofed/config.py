"""Strict experiment-config parsing.

Configs are YAML with nested sections mirroring SimConfig. Parsing is
strict: unknown keys are rejected with their full key path, and every
constraint violation names the offending key. Defaults are filled for
anything optional so a minimal config is just a mode and an aggregator
count.
"""

from __future__ import annotations

import yaml

from silofed.aggregation import FedYogiParams
from silofed.learner import PartitionSpec, TrainConfig
from silofed.policy import PolicySpec
from silofed.sim import Adversary, DataSpec, DelayModel, SimConfig


class ConfigError(ValueError):
    pass


def _require_mapping(value, path):
    if not isinstance(value, dict):
        raise ConfigError(f"{path}: expected a mapping, got {type(value).__name__}")
    return value


def _check_keys(mapping, path, allowed):
    for key in mapping:
        if key not in allowed:
            raise ConfigError(f"{path}.{key}: unknown key (allowed: {sorted(allowed)})")


def _get(mapping, key, path, default, kind):
    value = mapping.get(key, default)
    if value is None:
        return None
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if not isinstance(value, kind) or isinstance(value, bool) and kind is not bool:
        raise ConfigError(f"{path}.{key}: expected {kind.__name__}, got {value!r}")
    return value


def _per_agg(raw, n, path, build):
    """One entry applied to every aggregator, or a list of exactly n."""
    if isinstance(raw, list):
        if len(raw) != n:
            raise ConfigError(f"{path}: expected {n} entries, got {len(raw)}")
        return tuple(build(item, f"{path}[{i}]") for i, item in enumerate(raw))
    single = build(raw, path)
    return tuple(single for _ in range(n))


def _build_policy(raw, path) -> PolicySpec:
    raw = _require_mapping(raw, path)
    _check_keys(raw, path, {"kind", "k", "reduce", "seed"})
    try:
        return PolicySpec(
            kind=_get(raw, "kind", path, None, str),
            k=_get(raw, "k", path, 0, int),
            reduce=_get(raw, "reduce", path, "median", str),
            seed=_get(raw, "seed", path, 0, int),
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _build_delay(raw, path) -> DelayModel:
    raw = _require_mapping(raw, path)
    _check_keys(raw, path, {"base", "jitter", "straggler_mult",
                            "straggle_prob", "score_base"})
    try:
        return DelayModel(
            base=_get(raw, "base", path, 10.0, float),
            jitter=_get(raw, "jitter", path, 0.0, float),
            straggler_mult=_get(raw, "straggler_mult", path, 1.0, float),
            straggle_prob=_get(raw, "straggle_prob", path, 0.0, float),
            score_base=_get(raw, "score_base", path, 1.0, float),
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _build_algorithm(raw, path) -> str:
    if not isinstance(raw, str):
        raise ConfigError(f"{path}: expected an algorithm name, got {raw!r}")
    return raw


def config_from_dict(doc: dict) -> SimConfig:
    """Validate a parsed config document into a SimConfig."""
    doc = _require_mapping(doc, "config")
    _check_keys(doc, "config", {
        "mode", "aggregators", "clients_per_agg", "rounds", "data",
        "partition", "train", "scoring", "policies", "algorithms", "fedyogi",
        "phases", "delays", "adversaries", "warmup_rounds", "master_seed",
    })
    mode = _get(doc, "mode", "config", None, str)
    if mode is None:
        raise ConfigError("config.mode: required key is missing")
    n = _get(doc, "aggregators", "config", None, int)
    if n is None:
        raise ConfigError("config.aggregators: required key is missing")

    data_raw = _require_mapping(doc.get("data", {}), "config.data")
    _check_keys(data_raw, "config.data", {"classes", "dim", "samples", "eval_samples"})
    part_raw = _require_mapping(doc.get("partition", {}), "config.partition")
    _check_keys(part_raw, "config.partition", {"kind", "alpha"})
    train_raw = _require_mapping(doc.get("train", {}), "config.train")
    _check_keys(train_raw, "config.train", {"epochs", "lr", "batch_size", "seed"})
    score_raw = _require_mapping(doc.get("scoring", {}), "config.scoring")
    _check_keys(score_raw, "config.scoring", {"algorithm", "f"})
    yogi_raw = _require_mapping(doc.get("fedyogi", {}), "config.fedyogi")
    _check_keys(yogi_raw, "config.fedyogi", {"eta", "beta1", "beta2", "tau"})

    phases = None
    if "phases" in doc and doc["phases"] is not None:
        ph = _require_mapping(doc["phases"], "config.phases")
        _check_keys(ph, "config.phases", {"training", "scoring"})
        phases = (_get(ph, "training", "config.phases", None, float),
                  _get(ph, "scoring", "config.phases", None, float))
        if None in phases:
            raise ConfigError("config.phases: needs both training and scoring")
    elif mode == "sync":
        phases = (18.0, 8.0)

    adversaries = []
    for i, raw in enumerate(doc.get("adversaries", []) or []):
        path = f"config.adversaries[{i}]"
        raw = _require_mapping(raw, path)
        _check_keys(raw, path, {"agg", "attack", "param"})
        agg = _get(raw, "agg", path, None, int)
        attack = _get(raw, "attack", path, None, str)
        if agg is None or attack is None:
            raise ConfigError(f"{path}: needs both agg and attack")
        try:
            adversaries.append(Adversary(
                agg=agg, kind=attack,
                param=_get(raw, "param", path, 1.0, float),
            ))
        except ValueError as exc:
            raise ConfigError(f"{path}: {exc}") from exc

    try:
        return SimConfig(
            mode=mode,
            n_aggregators=n,
            clients_per_agg=_get(doc, "clients_per_agg", "config", 3, int),
            rounds=_get(doc, "rounds", "config", 10, int),
            data=DataSpec(
                classes=_get(data_raw, "classes", "config.data", 10, int),
                dim=_get(data_raw, "dim", "config.data", 20, int),
                samples=_get(data_raw, "samples", "config.data", 2000, int),
                eval_samples=_get(data_raw, "eval_samples", "config.data", 1000, int),
            ),
            partition=PartitionSpec(
                kind=_get(part_raw, "kind", "config.partition", "iid", str),
                alpha=_get(part_raw, "alpha", "config.partition", 0.5, float),
            ),
            train=TrainConfig(
                epochs=_get(train_raw, "epochs", "config.train", 2, int),
                lr=_get(train_raw, "lr", "config.train", 0.01, float),
                batch_size=_get(train_raw, "batch_size", "config.train", 32, int),
                seed=_get(train_raw, "seed", "config.train", 0, int),
            ),
            scoring=_get(score_raw, "algorithm", "config.scoring", "accuracy", str),
            multikrum_f=_get(score_raw, "f", "config.scoring", None, int),
            policies=_per_agg(doc.get("policies", {"kind": "all"}), n,
                              "config.policies", _build_policy),
            algorithms=_per_agg(doc.get("algorithms", "fedavg"), n,
                                "config.algorithms", _build_algorithm),
            fedyogi=FedYogiParams(
                eta=_get(yogi_raw, "eta", "config.fedyogi", 0.01, float),
                beta1=_get(yogi_raw, "beta1", "config.fedyogi", 0.9, float),
                beta2=_get(yogi_raw, "beta2", "config.fedyogi", 0.99, float),
                tau=_get(yogi_raw, "tau", "config.fedyogi", 1e-3, float),
            ),
            phases=phases,
            delays=_per_agg(doc.get("delays", {}), n, "config.delays", _build_delay),
            adversaries=tuple(adversaries),
            warmup_rounds=_get(doc, "warmup_rounds", "config", 0, int),
            master_seed=_get(doc, "master_seed", "config", 0, int),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def parse_config(path) -> SimConfig:
    """Load and validate a YAML config file."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: not valid YAML: {exc}") from exc
    if doc is None:
        raise ConfigError(f"{path}: empty config")
    return config_from_dict(doc)


def config_to_dict(cfg: SimConfig) -> dict:
    """Round-trippable plain-dict form of a SimConfig."""
    doc = {
        "mode": cfg.mode,
        "aggregators": cfg.n_aggregators,
        "clients_per_agg": cfg.clients_per_agg,
        "rounds": cfg.rounds,
        "data": {"classes": cfg.data.classes, "dim": cfg.data.dim,
                 "samples": cfg.data.samples, "eval_samples": cfg.data.eval_samples},
        "partition": {"kind": cfg.partition.kind, "alpha": cfg.partition.alpha},
        "train": {"epochs": cfg.train.epochs, "lr": cfg.train.lr,
                  "batch_size": cfg.train.batch_size, "seed": cfg.train.seed},
        "scoring": {"algorithm": cfg.scoring},
        "policies": [{"kind": p.kind, "k": p.k, "reduce": p.reduce, "seed": p.seed}
                     for p in cfg.policies],
        "algorithms": list(cfg.algorithms),
        "fedyogi": {"eta": cfg.fedyogi.eta, "beta1": cfg.fedyogi.beta1,
                    "beta2": cfg.fedyogi.beta2, "tau": cfg.fedyogi.tau},
        "delays": [{"base": d.base, "jitter": d.jitter,
                    "straggler_mult": d.straggler_mult,
                    "straggle_prob": d.straggle_prob, "score_base": d.score_base}
                   for d in cfg.delays],
        "adversaries": [{"agg": a.agg, "attack": a.kind, "param": a.param}
                        for a in cfg.adversaries],
        "warmup_rounds": cfg.warmup_rounds,
        "master_seed": cfg.master_seed,
    }
    if cfg.multikrum_f is not None:
        doc["scoring"]["f"] = cfg.multikrum_f
    if cfg.phases is not None:
        doc["phases"] = {"training": cfg.phases[0], "scoring": cfg.phases[1]}
    return doc


def canonical_bytes(cfg: SimConfig) -> bytes:
    """Canonical config rendering; its digest identifies the run."""
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=True).encode()
