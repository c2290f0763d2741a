"""CLI for macfl."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from typing import Any, Dict, List, Optional, Sequence

from .config import ConfigError, ExperimentConfig, load_config_file, parse_config
from .harness import PRESETS, preset, privacy_report, run_and_emit, run_batch

_LOGGER = logging.getLogger("macfl.cli")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2

LOG_LEVEL_ENV = "MACFL_LOG_LEVEL"

# (config key, argparse type, nargs); flag spelling is the key with dashes
_CONFIG_FLAGS = (
    ("scheme", str, None),
    ("workers", int, None),
    ("rounds", int, None),
    ("gamma", float, None),
    ("eta", float, None),
    ("power_dbm", float, "+"),
    ("gains", float, "+"),
    ("phases", float, "+"),
    ("channel_noise_std", float, None),
    ("epsilon", float, None),
    ("delta", float, None),
    ("sigma", float, None),
    ("g_max", float, None),
    ("beta", float, "+"),
    ("task", str, None),
    ("dimension", int, None),
    ("dataset", str, None),
    ("samples_per_worker", int, None),
    ("heterogeneity", float, None),
    ("spread", float, None),
    ("offset", float, None),
    ("curvature", float, None),
    ("regularization", float, None),
    ("batch_size", int, None),
    ("partition", str, None),
    ("init", str, None),
    ("init_scale", float, None),
    ("server_outage_round", int, None),
    ("seed", int, None),
    ("data_seed", int, None),
    ("out", str, None),
)


class _Parser(argparse.ArgumentParser):
    """Reports bad flags as configuration errors instead of exiting."""

    def error(self, message: str) -> None:  # type: ignore[override]
        raise ConfigError(message)


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    fields = ExperimentConfig.model_fields
    for key, kind, nargs in _CONFIG_FLAGS:
        parser.add_argument(
            f"--{key.replace('_', '-')}",
            dest=key,
            type=kind,
            nargs=nargs,
            default=None,
            help=fields[key].description,
        )


def build_parser(file_values: Optional[Dict[str, Any]] = None) -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="Optional JSON config; explicit flags override its keys.")
    common.add_argument(
        "--log-level",
        default=os.environ.get(LOG_LEVEL_ENV, "INFO"),
        help=f"Logging level (default from {LOG_LEVEL_ENV} or INFO).",
    )

    parser = _Parser(prog="macfl", description="Over-the-air decentralized federated learning simulator.")
    subparsers = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run_parser = subparsers.add_parser(
        "run",
        parents=[common],
        help="Run one experiment or a preset batch and write metrics CSV",
    )
    _add_config_flags(run_parser)
    run_parser.add_argument("--preset", choices=PRESETS, default=None, help="Expand the config into a preset batch.")
    run_parser.add_argument("--threads", type=int, default=None, help="Threads for preset batches.")

    epsilon_parser = subparsers.add_parser("epsilon", parents=[common], help="Print the per-round privacy report as JSON")
    _add_config_flags(epsilon_parser)

    if file_values:
        run_parser.set_defaults(**file_values)
        epsilon_parser.set_defaults(**file_values)
    return parser


# file keys that steer the command rather than the experiment
_COMMAND_KEYS = frozenset({"preset", "threads", "log_level"})


def _config_values(args: argparse.Namespace, file_values: Dict[str, Any]) -> Dict[str, Any]:
    keys = set(ExperimentConfig.model_fields) | (set(file_values) - _COMMAND_KEYS)
    values = {}
    for key in keys:
        value = getattr(args, key, None)
        if isinstance(value, list) and len(value) == 1:
            value = value[0]
        if value is not None:
            values[key] = value
    return values


def _configure_logging(level: str) -> None:
    numeric = logging.getLevelName(str(level).upper())
    if not isinstance(numeric, int):
        raise ConfigError(f"log-level: unknown level {level!r}")
    handler = logging.StreamHandler(sys.stderr)
    formatter = logging.Formatter("[%(asctime)s] %(levelname)s %(name)s %(message)s", "%Y-%m-%d %H:%M:%S")
    formatter.converter = time.gmtime
    handler.setFormatter(formatter)
    root = logging.getLogger()
    root.handlers = [handler]
    root.setLevel(numeric)


def _run(args: argparse.Namespace, values: Dict[str, Any]) -> int:
    if args.preset:
        configs = preset(args.preset, values)
        run_batch(configs, max_workers=args.threads)
        for config in configs:
            print(config.out)
        return EXIT_OK
    config = parse_config(overrides=values)
    run_and_emit(config)
    print(config.out)
    return EXIT_OK


def _epsilon(values: Dict[str, Any]) -> int:
    config = parse_config(overrides=values)
    print(json.dumps(privacy_report(config), indent=2, sort_keys=True))
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    arguments: List[str] = list(sys.argv[1:] if argv is None else argv)
    try:
        config_parser = _Parser(add_help=False)
        config_parser.add_argument("--config")
        config_args, _ = config_parser.parse_known_args(arguments)
        file_values = load_config_file(config_args.config) if config_args.config else {}

        parser = build_parser(file_values)
        args = parser.parse_args(arguments)
        _configure_logging(args.log_level)
        values = _config_values(args, file_values)
        if args.command == "run":
            return _run(args, values)
        return _epsilon(values)
    except ConfigError as exc:
        _LOGGER.error("config error detail=%s", exc)
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        _LOGGER.exception("run failed detail=%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    raise SystemExit(main())
