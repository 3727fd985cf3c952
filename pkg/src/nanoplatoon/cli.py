"""Command line: ``nanoplatoon run | sweep | validate``.

Log verbosity comes from the ``NANOPLATOON_LOG`` environment variable
(``DEBUG``, ``INFO``, ``WARNING``; default ``WARNING``).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from nanoplatoon.engine import SimulationError
from nanoplatoon.metrics import ExportError
from nanoplatoon.runner import bundled_scenario, parse_seeds, run, sweep, write_sweep
from nanoplatoon.scenario import ScenarioError, apply_overrides, from_dict, load_raw

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_INVALID = 2


def _config_path(value: str) -> str:
    # "@reference" names a bundled scenario
    return str(bundled_scenario(value[1:])) if value.startswith("@") else value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nanoplatoon", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one scenario")
    p.add_argument("--config", required=True, type=_config_path,
                   help="scenario JSON (or @name for a bundled one)")
    p.add_argument("--seed", type=int)
    p.add_argument("--until", type=float, help="end time in time units (default: scenario t_end)")
    p.add_argument("--trace", help="write the run trace here")
    p.add_argument("--out", help="metrics output: .json, .csv, or a stem for both")
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                   help="dotted-path scenario override, repeatable")

    p = sub.add_parser("sweep", help="run a parameter grid over a seed range")
    p.add_argument("--config", required=True, type=_config_path)
    p.add_argument("--grid", required=True, help='JSON file: {"channel.loss_prob": [0, 0.1]}')
    p.add_argument("--seeds", required=True, help="a..b (inclusive) or a,b,c")
    p.add_argument("--out", required=True, help="per-run CSV path")
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("validate", help="check a scenario file and report every problem")
    p.add_argument("--config", required=True, type=_config_path)
    return parser


def _load(args) -> dict:
    data = load_raw(args.config)
    overrides = list(getattr(args, "override", []) or [])
    if getattr(args, "seed", None) is not None:
        overrides.append(f"seed={args.seed}")
    return apply_overrides(data, overrides) if overrides else data


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get("NANOPLATOON_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        if args.command == "validate":
            scenario = from_dict(_load(args))
            sizes = ", ".join(f"{p.id}:{p.size}" for p in scenario.platoons)
            print(f"ok: {len(scenario.platoons)} platoon(s) [{sizes}], t_end={scenario.t_end}")
        elif args.command == "run":
            scenario = from_dict(_load(args))
            report = run(scenario, until=args.until, trace_path=args.trace, out=args.out)
            if args.out is None:
                print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
        elif args.command == "sweep":
            seeds = parse_seeds(args.seeds)
            with open(args.grid) as fh:
                grid = json.load(fh)
            rows = sweep(load_raw(args.config), grid, seeds, workers=args.workers)
            out, summary = write_sweep(rows, list(grid), args.out)
            print(f"{len(rows)} runs -> {out} (summary: {summary})")
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (ExportError, OSError, json.JSONDecodeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except SimulationError as exc:
        print(f"simulation failed: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
