"""Single runs and parameter sweeps on top of :class:`Simulation`."""

from __future__ import annotations

import itertools
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from importlib import resources
from pathlib import Path

from nanoplatoon.engine import to_ticks
from nanoplatoon.metrics import CSV_COLUMNS, MetricsReport, write_text, aggregate, export, rows_to_csv
from nanoplatoon.scenario import Scenario, ScenarioError, apply_overrides, check_paths, from_dict
from nanoplatoon.simulation import Simulation

LOG = logging.getLogger(__name__)


def bundled_scenario(name: str) -> Path:
    """Path of a scenario shipped with the package, e.g. ``reference``."""
    return Path(str(resources.files("nanoplatoon") / "data" / f"{name}.json"))


def output_paths(out) -> list[tuple[Path, str]]:
    out = Path(out)
    if out.suffix.lower() in (".csv", ".json"):
        return [(out, out.suffix.lower()[1:])]
    return [(out.with_name(out.name + ".json"), "json"), (out.with_name(out.name + ".csv"), "csv")]


def run(scenario: Scenario, until: float | None = None, trace_path=None, out=None) -> MetricsReport:
    sim = Simulation(scenario, trace=trace_path is not None)
    report = sim.run(None if until is None else to_ticks(until))
    if trace_path is not None:
        write_text(Path(trace_path), sim.trace_text())
    if out is not None:
        for path, fmt in output_paths(out):
            export(report, path, fmt)
    return report


def parse_seeds(text: str) -> list[int]:
    """``"1..20"`` (inclusive), ``"3"`` or ``"1,4,9"``."""
    text = text.strip()
    if not text:
        return []
    if ".." in text:
        lo, hi = text.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(s) for s in text.split(",") if s.strip()]


def _job(args: tuple[dict, dict]) -> dict:
    data, point = args
    report = Simulation(from_dict(data), trace=False).run()
    return {**point, **report.row()}


def sweep(data: dict, grid: dict[str, list], seeds: list[int], workers: int = 1) -> list[dict]:
    """Run every grid point with every seed.

    ``grid`` maps dotted scenario paths to value lists.  All combinations are
    validated before the first run starts.  Rows come back ordered by grid
    point then seed, whatever the worker count.
    """
    if not seeds:
        raise ScenarioError(["seeds: empty seed list"])
    if not isinstance(grid, dict) or not all(isinstance(v, list) and v for v in grid.values()):
        raise ScenarioError(["grid: expected an object mapping parameter paths to non-empty lists"])
    problems = check_paths(data, list(grid))
    if problems:
        raise ScenarioError(problems)
    keys = list(grid)
    jobs = []
    for values in itertools.product(*(grid[k] for k in keys)):
        point = dict(zip(keys, values))
        overridden = apply_overrides(data, [f"{k}={json.dumps(v)}" for k, v in point.items()])
        for seed in seeds:
            trial = dict(overridden, seed=seed)
            from_dict(trial)  # fail before any run
            jobs.append((trial, point))
    LOG.info("sweep: %d runs (%d grid points x %d seeds)", len(jobs), len(jobs) // len(seeds), len(seeds))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_job, jobs))
    return [_job(j) for j in jobs]


def write_sweep(rows: list[dict], grid_keys: list[str], out) -> tuple[Path, Path]:
    """Per-run CSV at ``out`` plus mean/stddev summary next to it."""
    out = Path(out)
    write_text(out, rows_to_csv(rows, [*grid_keys, *CSV_COLUMNS]))
    summary = aggregate(rows, grid_keys)
    summary_path = out.with_name(out.stem + ".summary.csv")
    if summary:
        write_text(summary_path, rows_to_csv(summary, list(summary[0])))
    return out, summary_path
