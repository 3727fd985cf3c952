"""The world a platoon patrols: route graph, diseased segments, detector,
and the per-platoon mission state machine.

Motion is abstract segment traversal.  Positions use exact fractions so
segment boundaries land on whole ticks.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from nanoplatoon.engine import TICKS_PER_UNIT

LOG = logging.getLogger(__name__)


class MissionState(str, enum.Enum):
    PATROL = "PATROL"
    HALTED = "HALTED"
    TREATING = "TREATING"
    EXITING = "EXITING"
    DONE = "DONE"


ALLOWED_TRANSITIONS = {
    MissionState.PATROL: {MissionState.HALTED, MissionState.EXITING},
    MissionState.HALTED: {MissionState.TREATING},
    MissionState.TREATING: {MissionState.PATROL},
    MissionState.EXITING: {MissionState.DONE},
    MissionState.DONE: set(),
}


class ExitRule(str, enum.Enum):
    # cycles >= max_cycles and the cycle just finished had no detection
    CLEAN_CYCLE = "clean_cycle"
    # cycles >= max_cycles, regardless of detections
    COUNT = "count"


class InvalidTransition(RuntimeError):
    pass


def as_fraction(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(str(x))


@dataclass
class RouteGraph:
    """A closed patrol loop plus an exit path leaving from a loop junction.

    ``lengths`` is the traversal time of each segment at unit speed.
    """

    patrol_loop: list[int]
    exit_path: list[int]
    lengths: dict[int, Fraction]

    def __post_init__(self) -> None:
        self.lengths = {int(k): as_fraction(v) for k, v in self.lengths.items()}

    def problems(self) -> list[str]:
        out = []
        if not self.patrol_loop:
            out.append("patrol_loop: must be non-empty")
        if len(set(self.patrol_loop)) != len(self.patrol_loop):
            out.append("patrol_loop: segment ids must be unique")
        if not self.exit_path:
            out.append("exit_path: must be non-empty")
        elif self.exit_path[0] not in self.patrol_loop:
            out.append(f"exit_path: first segment {self.exit_path[0]} is not on the patrol loop")
        for seg in list(self.patrol_loop) + list(self.exit_path):
            if seg not in self.lengths:
                out.append(f"segment {seg} has no length")
        for seg, length in self.lengths.items():
            if length <= 0:
                out.append(f"segment {seg}: length must be > 0")
        return out

    @property
    def junction(self) -> int:
        return self.exit_path[0]


class World:
    """Target-cell counts per segment, shared by every platoon."""

    def __init__(self, cells: dict[int, int]) -> None:
        if any(c < 0 for c in cells.values()):
            raise ValueError("target cell counts must be >= 0")
        self.cells = dict(cells)
        self.initial_total = sum(self.cells.values())

    def count(self, segment: int) -> int:
        return self.cells.get(segment, 0)

    def inactivate(self, segment: int) -> bool:
        """Remove one target cell; False if the segment was already clean."""
        if self.cells.get(segment, 0) <= 0:
            return False
        self.cells[segment] -= 1
        return True

    @property
    def total(self) -> int:
        return sum(self.cells.values())


@dataclass
class DetectorModel:
    true_positive_rate: float
    false_positive_rate: float
    sense_period: int
    compute_round_trip: int

    def problems(self) -> list[str]:
        out = []
        for name in ("true_positive_rate", "false_positive_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                out.append(f"{name}: {v} not in [0, 1]")
        if self.sense_period <= 0:
            out.append("sense_period: must be > 0")
        if self.compute_round_trip < 0:
            out.append("compute_round_trip: must be >= 0")
        return out

    def classify(self, rng: np.random.Generator, target_cells: int) -> bool:
        # one draw per classification regardless of outcome keeps the stream aligned
        u = rng.random()
        rate = self.true_positive_rate if target_cells > 0 else self.false_positive_rate
        return bool(u < rate)


@dataclass
class PlatoonMission:
    """Patrol / halt / treat / exit state machine for one platoon."""

    platoon: int
    route: RouteGraph
    speed: Fraction
    max_cycles: int
    treat_capacity: int | None = None
    treatment_duration: int = 0
    exit_rule: ExitRule = ExitRule.CLEAN_CYCLE
    state: MissionState = MissionState.PATROL
    on_exit_path: bool = False
    index: int = 0
    progress: Fraction = Fraction(0)
    last_update: int = 0
    cycles_completed: int = 0
    detections_this_cycle: int = 0
    exhausted: bool = False
    history: list[tuple[int, MissionState]] = field(default_factory=list)
    # (time, "STATE" | "CYCLE", value) records, drained by the simulation
    journal: list[tuple[int, str, object]] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.speed = as_fraction(self.speed)

    @property
    def segment(self) -> int:
        path = self.route.exit_path if self.on_exit_path else self.route.patrol_loop
        return path[self.index]

    @property
    def moving(self) -> bool:
        return self.state in (MissionState.PATROL, MissionState.EXITING)

    def transition(self, new: MissionState, now: int) -> None:
        if new not in ALLOWED_TRANSITIONS[self.state]:
            raise InvalidTransition(f"platoon {self.platoon}: {self.state.value} -> {new.value}")
        LOG.debug("platoon %d: %s -> %s at %d", self.platoon, self.state.value, new.value, now)
        self.state = new
        self.history.append((now, new))
        self.journal.append((now, "STATE", new.value))

    # -- motion -----------------------------------------------------------

    def advance_motion(self, dt: int, now: int | None = None) -> list[tuple[str, object]]:
        """Move ``dt`` ticks along the route.

        Returns the mission events crossed on the way: ``("cycle", n)`` for
        each completed patrol loop and ``("state", MissionState)`` for exit
        transitions.  Halted or treating platoons do not move.
        """
        events: list[tuple[str, object]] = []
        if not self.moving or dt <= 0:
            return events
        stamp = self.last_update + dt if now is None else now
        self.progress += self.speed * dt / TICKS_PER_UNIT
        while self.moving and self.progress >= self.route.lengths[self.segment]:
            self.progress -= self.route.lengths[self.segment]
            self._next_segment(events, stamp)
        return events

    def _next_segment(self, events: list, now: int) -> None:
        loop = self.route.patrol_loop
        if self.state is MissionState.EXITING:
            if self.on_exit_path or self.segment == self.route.junction:
                nxt = self.index + 1 if self.on_exit_path else 1
                if nxt >= len(self.route.exit_path):
                    self.progress = Fraction(0)
                    self.transition(MissionState.DONE, now)
                    events.append(("state", MissionState.DONE))
                    return
                self.on_exit_path = True
                self.index = nxt
                return
            self.index = (self.index + 1) % len(loop)
            return
        if self.index == len(loop) - 1:
            self.index = 0
            self.cycles_completed += 1
            events.append(("cycle", self.cycles_completed))
            self.journal.append((now, "CYCLE", self.cycles_completed))
            if self.check_exit(now):
                events.append(("state", MissionState.EXITING))
        else:
            self.index += 1

    def ticks_to_boundary(self) -> int | None:
        """Whole ticks until the current segment is left, or None if stopped."""
        if not self.moving or self.speed <= 0:
            return None
        remaining = self.route.lengths[self.segment] - self.progress
        return max(0, math.ceil(remaining / self.speed * TICKS_PER_UNIT))

    def sync(self, now: int) -> list[tuple[str, object]]:
        if now <= self.last_update:
            return []
        events = self.advance_motion(now - self.last_update, now)
        self.last_update = now
        return events

    def snapshot_at(self, now: int) -> tuple[int, float, float]:
        """(segment, progress fraction, speed) projected to ``now`` without mutating.

        Floats are fine here: the snapshot is reported, never integrated.
        """
        seg = self.segment
        length = float(self.route.lengths[seg])
        speed = float(self.speed)
        prog = float(self.progress)
        if self.moving and now > self.last_update:
            prog = min(length, prog + speed * (now - self.last_update) / TICKS_PER_UNIT)
        return seg, prog / length, speed

    # -- exit -------------------------------------------------------------

    def check_exit(self, now: int) -> bool:
        """Evaluated at each loop completion; may start the exit route."""
        done_enough = self.cycles_completed >= self.max_cycles
        clean = self.detections_this_cycle == 0
        self.detections_this_cycle = 0
        if self.state is not MissionState.PATROL or not done_enough:
            return False
        if self.exit_rule is ExitRule.CLEAN_CYCLE and not clean:
            return False
        self.transition(MissionState.EXITING, now)
        return True

    def begin_exit(self, now: int) -> bool:
        if self.state is not MissionState.PATROL:
            return False
        self.transition(MissionState.EXITING, now)
        return True

    # -- halt / treat / resume -------------------------------------------

    def halt(self, now: int) -> list[tuple[str, object]]:
        events = self.sync(now)
        if self.state is not MissionState.PATROL:
            return events
        self.transition(MissionState.HALTED, now)
        self.detections_this_cycle += 1
        return events

    def begin_treatment(self, world: World, segment: int, now: int) -> str:
        """Enter TREATING for an assignment and decide what kind of episode it is.

        Returns ``"treat"`` (real target; completes after treatment_duration),
        ``"false_alarm"`` (clean segment) or ``"exhausted"`` (no capacity
        left).  The last two complete immediately.
        """
        self.transition(MissionState.TREATING, now)
        if world.count(segment) == 0:
            return "false_alarm"
        if self.treat_capacity is not None and self.treat_capacity <= 0:
            self.exhausted = True
            return "exhausted"
        return "treat"

    def apply_treatment(self, world: World, segment: int) -> bool:
        """Finish a real treatment episode; True if a cell was inactivated."""
        if self.state is not MissionState.TREATING:
            raise InvalidTransition(f"platoon {self.platoon}: treatment outside TREATING")
        if self.treat_capacity is not None:
            self.treat_capacity -= 1
        return world.inactivate(segment)

    def resume(self, now: int) -> list[tuple[str, object]]:
        self.transition(MissionState.PATROL, now)
        self.last_update = now
        events: list[tuple[str, object]] = []
        if self.exhausted and self.begin_exit(now):
            events.append(("state", MissionState.EXITING))
        return events
