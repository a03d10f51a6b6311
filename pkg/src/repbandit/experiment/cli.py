"""Command-line entry point.

Exit codes: 0 success, 1 configuration error, 2 runtime error, 3 acceptance
check failed (``run --check``).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .config import ConfigError, ExperimentConfig, load_config, parse_seeds
from .presets import DESCRIPTIONS, PRESETS, get_preset
from .runner import run_experiment

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_CHECK = 0, 1, 2, 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="repbandit", description="Multi-task linear bandit experiments.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress at INFO level")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment")
    run.add_argument("--config", help="JSON config file; its keys override the preset")
    run.add_argument("--preset", help="named preset (see list-presets)")
    run.add_argument("--seeds", help="seed range 'a..b' (inclusive), single seed or comma list")
    run.add_argument("--out", help="output directory")
    run.add_argument("--parallel", type=int, default=1, help="worker processes")
    run.add_argument("--check", action="store_true", help="exit with code 3 if the preset's check fails")

    sub.add_parser("list-presets", help="list the named presets")

    val = sub.add_parser("validate", help="validate a config file")
    val.add_argument("--config", required=True)
    return parser


def _resolve(args) -> ExperimentConfig:
    if not args.config and not args.preset:
        raise ConfigError("give --config, --preset or both")
    if args.preset:
        try:
            base = get_preset(args.preset).to_dict()
        except KeyError as exc:
            raise ConfigError(str(exc.args[0])) from None
    else:
        base = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                override = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file {args.config} not found") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.config}: invalid JSON ({exc})") from exc
        if not isinstance(override, dict):
            raise ConfigError("config must be a JSON object")
        base.update(override)
    if args.seeds:
        base["seeds"] = parse_seeds(args.seeds)
    if args.out:
        base["output_dir"] = args.out
    return ExperimentConfig.from_dict(base)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(name)s: %(message)s")

    if args.command == "list-presets":
        for name in PRESETS:
            print(f"{name:16s} {DESCRIPTIONS.get(name, '')}")
        return EXIT_OK

    if args.command == "validate":
        try:
            cfg = load_config(args.config)
        except ConfigError as exc:
            print(f"invalid config: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        print(f"ok: {cfg.scenario}, {len(cfg.policies)} policies x {len(cfg.seeds)} seeds")
        return EXIT_OK

    try:
        cfg = _resolve(args)
        if args.parallel < 1:
            raise ConfigError("--parallel must be >= 1")
        if args.check and cfg.check is None:
            raise ConfigError("this configuration defines no acceptance check")
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        _, doc = run_experiment(cfg, parallel=args.parallel)
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - report any failure as a runtime error
        logging.getLogger(__name__).debug("run failed", exc_info=True)
        print(f"run failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    for label, entry in doc["policies"].items():
        line = f"{label:20s} final regret {entry['final_regret_mean']:.6g} +- {entry['final_regret_std']:.3g}"
        if "mean_reward_mean" in entry:
            line += f"  mean reward {entry['mean_reward_mean']:.3f}"
        print(line)
    print(f"wrote {cfg.output_dir}/{cfg.name}/summary.json")
    if "check" in doc:
        status = "PASS" if doc["check"]["passed"] else "FAIL"
        print(f"check {doc['check']['name']}: {status} ({doc['check']['detail']})")
        if args.check and not doc["check"]["passed"]:
            return EXIT_CHECK
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
