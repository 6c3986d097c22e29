"""Experiment harness CLI.

Verbs:
    silofed run <config.yaml> --out <dir> [--seed S]
    silofed scenario <name> --out <dir> [--seed S]
    silofed validate <config.yaml>

Exit codes: 0 ok, 2 config error, 3 runtime error. The SILOFED_SEED
environment variable overrides the config's master seed; a --seed flag
overrides both.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, replace
from pathlib import Path

from silofed import __version__
from silofed.cas import Cid
from silofed.config import ConfigError, canonical_bytes, parse_config
from silofed.scenarios import SCENARIO_NAMES, scenario
from silofed.sim import SimConfig, Simulation


@dataclass(frozen=True)
class RunManifest:
    config_digest: str
    master_seed: int
    version: str
    paths: dict

    def to_json(self) -> str:
        return json.dumps(
            {"config_digest": self.config_digest, "master_seed": self.master_seed,
             "version": self.version, "paths": self.paths},
            indent=2, sort_keys=True) + "\n"


def run_experiment(config: SimConfig, out_dir) -> RunManifest:
    """Execute one simulation and write metrics.csv, events.log, the
    canonical config copy, and manifest.json into out_dir.

    Partial outputs are removed on failure.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    try:
        result = Simulation(config).run()
        cfg_bytes = canonical_bytes(config)
        paths = {
            "metrics": out / "metrics.csv",
            "events": out / "events.log",
            "config": out / "config.yaml",
            "manifest": out / "manifest.json",
        }
        for key, content in (("metrics", result.metrics_csv().encode()),
                             ("events", result.events_log().encode()),
                             ("config", cfg_bytes)):
            paths[key].write_bytes(content)
            written.append(paths[key])
        manifest = RunManifest(
            config_digest=str(Cid.of(cfg_bytes)),
            master_seed=config.master_seed,
            version=__version__,
            paths={k: str(v) for k, v in paths.items()},
        )
        paths["manifest"].write_text(manifest.to_json())
        written.append(paths["manifest"])
        return manifest
    except BaseException:
        for path in written:
            try:
                path.unlink()
            except OSError:
                pass
        raise


def _seed_override(args) -> int | None:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("SILOFED_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"SILOFED_SEED must be an integer, got {env!r}")
    return None


def _cmd_run(args) -> int:
    config = parse_config(args.config)
    seed = _seed_override(args)
    if seed is not None:
        config = replace(config, master_seed=seed)
    manifest = run_experiment(config, args.out)
    print(f"wrote {args.out} (config digest {manifest.config_digest[:12]}..., "
          f"seed {manifest.master_seed})")
    return 0


def _cmd_scenario(args) -> int:
    try:
        arms = scenario(args.name) if args.seed is None \
            else scenario(args.name, master_seed=args.seed)
    except ValueError as exc:
        raise ConfigError(str(exc))
    for arm, config in arms.items():
        manifest = run_experiment(config, Path(args.out) / arm)
        print(f"arm {arm}: wrote {Path(args.out) / arm} "
              f"(digest {manifest.config_digest[:12]}...)")
    return 0


def _cmd_validate(args) -> int:
    parse_config(args.config)
    print(f"OK: {args.config}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="silofed",
        description="Ledger-coordinated cross-silo FL simulator")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a config file")
    p_run.add_argument("config")
    p_run.add_argument("--out", required=True)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.set_defaults(fn=_cmd_run)

    p_scn = sub.add_parser("scenario", help="run a canned scenario "
                           f"({', '.join(SCENARIO_NAMES)})")
    p_scn.add_argument("name")
    p_scn.add_argument("--out", required=True)
    p_scn.add_argument("--seed", type=int, default=None)
    p_scn.set_defaults(fn=_cmd_scenario)

    p_val = sub.add_parser("validate", help="check a config file")
    p_val.add_argument("config")
    p_val.set_defaults(fn=_cmd_validate)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
