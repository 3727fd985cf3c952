"""Deterministic discrete-event engine.

Time is kept in integer ticks (``TICKS_PER_UNIT`` ticks per time unit) so
slot arithmetic never drifts.  Events are ordered by ``(fire_at,
priority_class, seq)`` and can be cancelled by handle until they fire.
"""

from __future__ import annotations

import enum
import hashlib
import heapq
import logging
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Any, Callable

import numpy as np

LOG = logging.getLogger(__name__)

TICKS_PER_UNIT = 10


def to_ticks(value: float | int | str | Decimal) -> int:
    """Convert a time in units (e.g. ``100.5``) to an exact tick count.

    Raises ``ValueError`` for negative values or values that are not a whole
    number of ticks.
    """
    d = Decimal(str(value)) * TICKS_PER_UNIT
    if d != d.to_integral_value():
        raise ValueError(f"{value} is not a multiple of 1/{TICKS_PER_UNIT} time unit")
    if d < 0:
        raise ValueError(f"negative time {value}")
    return int(d)


def to_units(ticks: int) -> float:
    return ticks / TICKS_PER_UNIT


def format_time(ticks: int) -> str:
    """Render ticks as a fixed one-decimal string, e.g. 1005 -> '100.5'."""
    return f"{ticks // TICKS_PER_UNIT}.{ticks % TICKS_PER_UNIT}"


class EventKind(enum.Enum):
    TRANSMIT_START = "TransmitStart"
    DELIVERY_AT = "DeliveryAt"
    COMPUTE_RETURN = "ComputeReturn"
    SENSOR_TICK = "SensorTick"
    MOTION_TICK = "MotionTick"
    SCENARIO_COMMAND = "ScenarioCommand"


# Same-timestamp ordering: deliveries before scripted commands before
# transmissions before periodic ticks.
PRIORITY_CLASS = {
    EventKind.DELIVERY_AT: 0,
    EventKind.SCENARIO_COMMAND: 1,
    EventKind.TRANSMIT_START: 2,
    EventKind.COMPUTE_RETURN: 3,
    EventKind.SENSOR_TICK: 3,
    EventKind.MOTION_TICK: 3,
}


@dataclass
class Event:
    id: int
    fire_at: int
    seq: int
    kind: EventKind
    target: int
    payload: Any = None
    cancelled: bool = field(default=False, repr=False)

    @property
    def key(self) -> tuple[int, int, int]:
        return (self.fire_at, PRIORITY_CLASS[self.kind], self.seq)


class EventQueue:
    """Min-heap of events with lazy deletion of cancelled entries."""

    def __init__(self) -> None:
        self._heap: list[tuple[tuple[int, int, int], Event]] = []
        self._pending: dict[int, Event] = {}

    def __len__(self) -> int:
        return len(self._pending)

    def push(self, event: Event) -> None:
        heapq.heappush(self._heap, (event.key, event))
        self._pending[event.id] = event

    def cancel(self, event_id: int) -> bool:
        event = self._pending.pop(event_id, None)
        if event is None:
            return False
        event.cancelled = True
        return True

    def peek_time(self) -> int | None:
        self._drop_cancelled()
        return self._heap[0][1].fire_at if self._heap else None

    def pop(self) -> Event:
        self._drop_cancelled()
        _, event = heapq.heappop(self._heap)
        del self._pending[event.id]
        return event

    def is_pending(self, event_id: int) -> bool:
        return event_id in self._pending

    def get(self, event_id: int) -> Event | None:
        return self._pending.get(event_id)

    def pending(self) -> list[Event]:
        return list(self._pending.values())

    def _drop_cancelled(self) -> None:
        heap = self._heap
        while heap and heap[0][1].cancelled:
            heapq.heappop(heap)


class RandomStreams:
    """Named, independent random substreams derived from one 64-bit seed.

    Each name maps to its own ``numpy.random.Generator``; drawing from one
    stream never shifts another.
    """

    def __init__(self, seed: int) -> None:
        self.seed = int(seed) & (2**64 - 1)
        self._streams: dict[str, np.random.Generator] = {}

    def get(self, name: str) -> np.random.Generator:
        rng = self._streams.get(name)
        if rng is None:
            digest = hashlib.sha256(name.encode()).digest()
            key = tuple(int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4))
            ss = np.random.SeedSequence(self.seed, spawn_key=key)
            rng = self._streams[name] = np.random.default_rng(ss)
        return rng


class SimulationError(RuntimeError):
    """A handler failed; carries the offending event."""

    def __init__(self, event: Event, cause: BaseException) -> None:
        super().__init__(
            f"handler failed for event {event.id} ({event.kind.value}, target={event.target}) "
            f"at t={format_time(event.fire_at)}: {cause!r}"
        )
        self.event = event


@dataclass
class RunSummary:
    events_fired: int
    clock: int


Handler = Callable[[Event], None]


class Engine:
    """Single-threaded event loop.

    ``dispatch`` is called with each fired event; it is usually supplied by
    the simulation that owns the engine.  With ``record=True`` every fired
    event is appended to ``fired`` as ``(id, fire_at, kind, target)``.
    """

    def __init__(self, seed: int = 0, dispatch: Handler | None = None, record: bool = False) -> None:
        self.now = 0
        self.queue = EventQueue()
        self.streams = RandomStreams(seed)
        self.dispatch = dispatch
        self.events_fired = 0
        self.fired: list[tuple[int, int, str, int]] | None = [] if record else None
        self._next_id = 0
        self._next_seq = 0

    def schedule(self, delay: int, kind: EventKind, target: int = 0, payload: Any = None) -> int:
        if delay < 0:
            raise ValueError(f"negative delay {delay}")
        event = Event(self._next_id, self.now + delay, self._next_seq, kind, target, payload)
        self._next_id += 1
        self._next_seq += 1
        self.queue.push(event)
        return event.id

    def unschedule(self, event_id: int | None) -> bool:
        if event_id is None:
            return False
        return self.queue.cancel(event_id)

    def is_pending(self, event_id: int | None) -> bool:
        return event_id is not None and self.queue.is_pending(event_id)

    def pending_event(self, event_id: int | None) -> Event | None:
        return None if event_id is None else self.queue.get(event_id)

    def run_until(self, t_end: int) -> RunSummary:
        if t_end < self.now:
            raise ValueError(f"t_end {t_end} is before current time {self.now}")
        fired = 0
        queue = self.queue
        while True:
            t = queue.peek_time()
            if t is None or t > t_end:
                break
            event = queue.pop()
            self.now = event.fire_at
            if self.fired is not None:
                self.fired.append((event.id, event.fire_at, event.kind.value, event.target))
            try:
                self.dispatch(event)
            except Exception as exc:
                raise SimulationError(event, exc) from exc
            fired += 1
        self.events_fired += fired
        self.now = t_end
        return RunSummary(fired, self.now)
