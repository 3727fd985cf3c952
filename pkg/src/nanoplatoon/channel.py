"""One broadcast medium shared by every platoon.

A frame occupies ``[start, start + slot_width)`` and is delivered at the end
of its airtime.  Frames whose airtimes overlap collide; within a connected
overlap cluster a lone priority frame survives and everything else is lost.
Surviving frames are then dropped independently per receiver with
probability ``loss_prob``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from nanoplatoon.protocol import Message


class Status(str, enum.Enum):
    DELIVERED = "Delivered"
    COLLIDED = "Collided"
    PARTIALLY_LOST = "PartiallyLost"


@dataclass
class ChannelConfig:
    loss_prob: float = 0.0
    collisions_enabled: bool = True
    priority_survives: bool = True
    # (sender, seq) frames dropped at every receiver; used to script a lost beacon
    forced_losses: frozenset[tuple[int, int]] = field(default_factory=frozenset)

    def problems(self) -> list[str]:
        if not 0.0 <= self.loss_prob <= 1.0:
            return [f"loss_prob: {self.loss_prob} not in [0, 1]"]
        return []


@dataclass(eq=False)
class Transmission:
    msg: Message
    start: int
    end: int
    status: Status | None = None

    def overlaps(self, other: Transmission) -> bool:
        return self.start < other.end and other.start < self.end


def overlap_clusters(txs: Iterable[Transmission]) -> list[list[Transmission]]:
    """Connected components of the overlap graph (interval clusters)."""
    ordered = sorted(txs, key=lambda t: (t.start, t.end))
    clusters: list[list[Transmission]] = []
    reach = None
    for tx in ordered:
        if reach is None or tx.start >= reach:
            clusters.append([tx])
            reach = tx.end
        else:
            clusters[-1].append(tx)
            reach = max(reach, tx.end)
    return clusters


def resolve_collisions(active: Sequence[Transmission], cfg: ChannelConfig) -> list[Status]:
    """Collision status of each transmission in ``active``, in input order.

    Statuses are decided per overlap cluster: a cluster of one is delivered;
    otherwise a single priority frame survives (if ``priority_survives``)
    and the rest collide.
    """
    if not cfg.collisions_enabled:
        return [Status.DELIVERED] * len(active)
    result: dict[int, Status] = {}
    for cluster in overlap_clusters(active):
        if len(cluster) == 1:
            result[id(cluster[0])] = Status.DELIVERED
            continue
        prio = [tx for tx in cluster if tx.msg.priority]
        winner = prio[0] if len(prio) == 1 and cfg.priority_survives else None
        for tx in cluster:
            result[id(tx)] = Status.DELIVERED if tx is winner else Status.COLLIDED
    return [result[id(tx)] for tx in active]


class Channel:
    """Tracks frames on the air and decides each frame's fate at its end.

    A frame's status is fixed at the end of its own airtime from the overlap
    cluster known at that moment; every frame that overlaps it has started by
    then.
    """

    def __init__(self, cfg: ChannelConfig, slot_width: int) -> None:
        self.cfg = cfg
        self.slot_width = slot_width
        self.window: list[Transmission] = []

    def start(self, msg: Message, now: int) -> Transmission:
        tx = Transmission(msg, now, now + self.slot_width)
        if self.cfg.collisions_enabled:
            self.window.append(tx)
        return tx

    def finish(self, tx: Transmission) -> Status:
        if not self.cfg.collisions_enabled:
            tx.status = Status.DELIVERED
            return tx.status
        cluster = next(c for c in overlap_clusters(self.window) if any(t is tx for t in c))
        for t, status in zip(cluster, resolve_collisions(cluster, self.cfg)):
            if t is tx:
                tx.status = status
        if all(t.status is not None for t in self.window):
            self.window.clear()
        return tx.status

    def drop_decisions(self, msg: Message, streams: Sequence) -> list[bool]:
        """Per-receiver loss flags; one uniform draw from each receiver's stream."""
        p = self.cfg.loss_prob
        forced = (msg.sender, msg.seq) in self.cfg.forced_losses
        if 0.0 < p < 1.0:
            return [rng.random() < p or forced for rng in streams]
        return [p >= 1.0 or forced] * len(streams)
