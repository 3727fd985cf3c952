"""Tab-separated run trace.

Each line is ``time, event, platoon, sender, kind, seq, receiver`` with ``-``
for empty fields.  Channel events are TX, RX, LOST, COLLIDED and CANCELLED.
Mission events (STATE, CYCLE, TREAT) use the same seven columns so every
metric can be rebuilt from the trace alone; for TREAT the last column holds
the treated segment.

A ``#`` header carries the run parameters and the agent roster.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from nanoplatoon.engine import format_time, to_ticks

FORMAT_TAG = "nanoplatoon-trace v1"

CHANNEL_EVENTS = ("TX", "RX", "LOST", "COLLIDED", "CANCELLED")
MISSION_EVENTS = ("STATE", "CYCLE", "TREAT")

# (time_ticks, event, platoon, sender, kind, seq, receiver); absent fields are "-"
Record = tuple


@dataclass
class TraceMeta:
    seed: int
    t_end: int
    slot_width: int
    beacon_interval: int
    # agent id -> (platoon, role, position)
    roster: dict[int, tuple[int, str, int]] = field(default_factory=dict)

    def header_lines(self) -> list[str]:
        lines = [
            f"# {FORMAT_TAG}",
            f"# seed\t{self.seed}",
            f"# t_end\t{format_time(self.t_end)}",
            f"# slot_width\t{format_time(self.slot_width)}",
            f"# beacon_interval\t{format_time(self.beacon_interval)}",
        ]
        for aid in sorted(self.roster):
            platoon, role, pos = self.roster[aid]
            lines.append(f"# agent\t{aid}\t{platoon}\t{role}\t{pos}")
        return lines


def format_record(rec: Record) -> str:
    t, event, platoon, sender, kind, seq, receiver = rec
    return f"{format_time(t)}\t{event}\t{platoon}\t{sender}\t{kind}\t{seq}\t{receiver}"


def render(meta: TraceMeta, records: list[Record]) -> str:
    lines = meta.header_lines()
    lines.extend(format_record(r) for r in records)
    return "\n".join(lines) + "\n"


def _field(value: str):
    return value if value == "-" or not value.lstrip("-").isdigit() else int(value)


def parse(text: str) -> tuple[TraceMeta, list[Record]]:
    """Inverse of :func:`render`."""
    meta = TraceMeta(seed=0, t_end=0, slot_width=0, beacon_interval=0)
    records: list[Record] = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line:
            continue
        if line.startswith("#"):
            parts = line[2:].split("\t")
            key = parts[0]
            if key == "seed":
                meta.seed = int(parts[1])
            elif key in ("t_end", "slot_width", "beacon_interval"):
                setattr(meta, key, to_ticks(parts[1]))
            elif key == "agent":
                meta.roster[int(parts[1])] = (int(parts[2]), parts[3], int(parts[4]))
            continue
        parts = line.split("\t")
        if len(parts) != 7:
            raise ValueError(f"trace line {lineno}: expected 7 fields, got {len(parts)}")
        records.append((to_ticks(parts[0]), parts[1], *(_field(p) for p in parts[2:])))
    return meta, records
