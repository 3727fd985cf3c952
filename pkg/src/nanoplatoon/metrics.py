"""Per-run counters, trace replay, export and sweep aggregation."""

from __future__ import annotations

import csv
import io
import json
import math
from collections import defaultdict
from dataclasses import asdict, dataclass, field, fields
from itertools import takewhile
from pathlib import Path

from nanoplatoon.engine import to_units
from nanoplatoon.trace import Record, TraceMeta

BEACON_KIND_NAMES = ("LeaderBeacon", "MemberBeacon")

CSV_COLUMNS = (
    "seed", "t_end", "beacons_sent", "beacons_delivered", "delivery_ratio", "collisions",
    "cancelled_backups", "mean_detect_to_halt", "max_detect_to_halt", "cells_inactivated",
    "false_halts", "cycles_completed", "slot_utilization",
)


class ExportError(OSError):
    pass


@dataclass
class MetricsReport:
    seed: int = 0
    t_end: float = 0.0
    beacons_sent: int = 0
    beacons_delivered: int = 0
    delivery_ratio: float = 0.0
    collisions: int = 0
    cancelled_backups: int = 0
    detection_to_halt_latencies: list[float] = field(default_factory=list)
    cells_inactivated: int = 0
    false_halts: int = 0
    cycles_completed: int = 0
    slot_utilization: float = 0.0
    run_wall_events: int = 0

    @property
    def mean_detect_to_halt(self) -> float:
        lat = self.detection_to_halt_latencies
        return sum(lat) / len(lat) if lat else 0.0

    @property
    def max_detect_to_halt(self) -> float:
        return max(self.detection_to_halt_latencies, default=0.0)

    def row(self) -> dict:
        return {c: getattr(self, c) for c in CSV_COLUMNS}

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> MetricsReport:
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in names})

    def comparable(self) -> dict:
        """Everything the trace determines (engine event count excluded)."""
        d = self.to_dict()
        d.pop("run_wall_events")
        return d


def _finish(report: MetricsReport, n_agents: int, beacons_due: int, tx_count: int,
            slot_width: int, t_end: int) -> MetricsReport:
    # beacons still on the air at t_end are not expected anywhere yet
    expected = beacons_due * max(0, n_agents - 1)
    report.delivery_ratio = report.beacons_delivered / max(1, expected)
    report.slot_utilization = tx_count * slot_width / t_end if t_end > 0 else 0.0
    return report


class MetricsCollector:
    """Online counters fed with every trace record as the run produces it."""

    def __init__(self, meta: TraceMeta) -> None:
        self.meta = meta
        self.platoon_of = {aid: info[0] for aid, info in meta.roster.items()}
        self.report = MetricsReport(seed=meta.seed)
        self.tx_count = 0
        self.beacon_tx_times: list[int] = []
        # (sender, seq) of an accepted alert's Halt -> classification return time
        self._open_halts: dict[tuple[int, int], int] = {}
        self._halt_delivered: dict[tuple[int, int], int] = {}

    def expect_halt(self, leader: int, halt_seq: int, classified_at: int) -> None:
        self._open_halts[(leader, halt_seq)] = classified_at

    def record(self, rec: Record) -> None:
        t, event, platoon, sender, kind, seq, receiver = rec
        r = self.report
        if event == "RX":
            if kind in BEACON_KIND_NAMES:
                r.beacons_delivered += 1
            elif kind == "Halt" and self.platoon_of[receiver] == platoon:
                key = (sender, seq)
                if key in self._open_halts:
                    self._halt_delivered[key] = t
        elif event == "TX":
            self.tx_count += 1
            if kind in BEACON_KIND_NAMES:
                r.beacons_sent += 1
                self.beacon_tx_times.append(t)
        elif event == "CANCELLED":
            r.cancelled_backups += 1
        elif event == "COLLIDED":
            r.collisions += 1
        elif event == "CYCLE":
            r.cycles_completed += 1
        elif event == "TREAT":
            if kind == "Inactivated":
                r.cells_inactivated += 1
            elif kind == "FalseAlarm":
                r.false_halts += 1

    def finalize(self, t_end: int, events_fired: int) -> MetricsReport:
        r = self.report
        r.t_end = to_units(t_end)
        r.run_wall_events = events_fired
        r.detection_to_halt_latencies = [
            to_units(self._halt_delivered[key] - self._open_halts[key])
            for key in sorted(self._halt_delivered, key=lambda k: (self._halt_delivered[k], k))
        ]
        cutoff = t_end - self.meta.slot_width
        due = r.beacons_sent - sum(1 for _ in takewhile(lambda t: t > cutoff, reversed(self.beacon_tx_times)))
        return _finish(r, len(self.meta.roster), due, self.tx_count, self.meta.slot_width, t_end)


def replay(meta: TraceMeta, records: list[Record]) -> MetricsReport:
    """Rebuild a report from a parsed trace without the online collector.

    A latency sample pairs each leader Halt with the DetectionAlert its
    leader received at the instant the Halt went out; the sample ends at
    that Halt's delivery to the leader's own platoon.
    """
    by_event: dict[str, list[Record]] = defaultdict(list)
    for rec in records:
        by_event[rec[1]].append(rec)
    leaders = {aid for aid, (_, role, _) in meta.roster.items() if role == "Leader"}
    platoon_of = {aid: info[0] for aid, info in meta.roster.items()}

    report = MetricsReport(seed=meta.seed, t_end=to_units(meta.t_end))
    report.beacons_sent = sum(1 for r in by_event["TX"] if r[4] in BEACON_KIND_NAMES)
    report.beacons_delivered = sum(1 for r in by_event["RX"] if r[4] in BEACON_KIND_NAMES)
    report.collisions = len(by_event["COLLIDED"])
    report.cancelled_backups = len(by_event["CANCELLED"])
    report.cycles_completed = len(by_event["CYCLE"])
    report.cells_inactivated = sum(1 for r in by_event["TREAT"] if r[4] == "Inactivated")
    report.false_halts = sum(1 for r in by_event["TREAT"] if r[4] == "FalseAlarm")

    alert_rx_at_leader = {(r[0], r[6]) for r in by_event["RX"]
                          if r[4] == "DetectionAlert" and r[6] in leaders}
    alert_tx = {}
    for r in by_event["TX"]:
        if r[4] == "DetectionAlert":
            alert_tx[(r[2], r[0] + meta.slot_width)] = r[0]
    halt_rx = defaultdict(list)
    for r in by_event["RX"]:
        if r[4] == "Halt" and platoon_of[r[6]] == r[2]:
            halt_rx[(r[3], r[5])].append(r[0])
    samples = []
    for halt in (r for r in by_event["TX"] if r[4] == "Halt"):
        t, _, platoon, leader, _, seq, _ = halt
        if (t, leader) not in alert_rx_at_leader:
            continue
        delivered = halt_rx.get((leader, seq))
        if delivered:
            samples.append((max(delivered), leader, seq, alert_tx[(platoon, t)]))
    samples.sort()
    report.detection_to_halt_latencies = [to_units(end - start) for end, _, _, start in samples]
    due = sum(1 for r in by_event["TX"] if r[4] in BEACON_KIND_NAMES and r[0] + meta.slot_width <= meta.t_end)
    return _finish(report, len(meta.roster), due, len(by_event["TX"]), meta.slot_width, meta.t_end)


# -- export ---------------------------------------------------------------

def write_text(path: Path, text: str) -> None:
    try:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise ExportError(f"cannot write {path}: {exc.strerror or exc}") from exc


def rows_to_csv(rows: list[dict], columns: list[str] | tuple[str, ...]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({c: _csv_value(row[c]) for c in columns})
    return buf.getvalue()


def _csv_value(v):
    return repr(v) if isinstance(v, float) else v


def report_to_json(report: MetricsReport) -> str:
    return json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"


def export(report: MetricsReport | list[MetricsReport], path, fmt: str | None = None) -> Path:
    """Write one report (or a list, CSV only) as CSV or JSON.

    ``fmt`` defaults to the file suffix.
    """
    path = Path(path)
    fmt = (fmt or path.suffix.lstrip(".")).lower()
    reports = report if isinstance(report, list) else [report]
    if fmt == "csv":
        write_text(path, rows_to_csv([r.row() for r in reports], CSV_COLUMNS))
    elif fmt == "json":
        if len(reports) != 1:
            raise ValueError("JSON export takes a single report")
        write_text(path, report_to_json(reports[0]))
    else:
        raise ValueError(f"unknown export format {fmt!r}")
    return path


def load_json(path) -> MetricsReport:
    return MetricsReport.from_dict(json.loads(Path(path).read_text()))


def aggregate(rows: list[dict], by: list[str], columns=CSV_COLUMNS[2:]) -> list[dict]:
    """Mean and population stddev of each metric column per group of ``by`` values."""
    groups: dict[tuple, list[dict]] = {}
    for row in rows:
        groups.setdefault(tuple(row[k] for k in by), []).append(row)
    out = []
    for key in sorted(groups, key=lambda k: tuple(map(str, k))):
        members = groups[key]
        entry = dict(zip(by, key))
        entry["runs"] = len(members)
        for col in columns:
            vals = [float(m[col]) for m in members]
            mean = math.fsum(vals) / len(vals)
            entry[f"{col}_mean"] = mean
            entry[f"{col}_std"] = math.sqrt(math.fsum((v - mean) ** 2 for v in vals) / len(vals))
        out.append(entry)
    return out
