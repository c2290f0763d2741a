"""Compare seed-averaged gradient norms with the analytical convergence bound."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from macfl.config import ConfigError, load_config_file, parse_config
from macfl.harness import bound_report, write_report


def _print_summary(report: dict) -> None:
    print("bound_summary")
    for key in ("rounds", "data_seed", "empirical_mean", "bound", "holds"):
        print(f"- {key}: {report.get(key)}")
    for violation in report.get("violations") or []:
        print(f"- violation: {violation}")


def main() -> int:
    parser = argparse.ArgumentParser(description="Seed-averaged empirical gradient norm against the convergence bound.")
    parser.add_argument("--config", default=None, help="Optional JSON experiment config.")
    parser.add_argument("--seeds", type=int, default=20, help="Number of seeds (0..seeds-1).")
    parser.add_argument("--curvature", type=float, default=0.25, help="Quadratic curvature (bound needs L small).")
    parser.add_argument("--gamma", type=float, default=None, help="Override the gradient step size.")
    parser.add_argument("--rounds", type=int, default=None, help="Override the number of rounds.")
    parser.add_argument(
        "--output",
        default="results/bound_report.json",
        help="Output report JSON path.",
    )
    args = parser.parse_args()

    try:
        values = load_config_file(args.config) if args.config else {}
        values.setdefault("task", "quadratic")
        values["curvature"] = args.curvature
        if args.gamma is not None:
            values["gamma"] = args.gamma
        if args.rounds is not None:
            values["rounds"] = args.rounds
        config = parse_config(overrides=values)
        report = bound_report(config, seeds=range(args.seeds))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1

    write_report(report, Path(args.output))
    _print_summary(report)
    print(json.dumps({"output": args.output}))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
