"""Slotted leader-based (SLB) beaconing, one state machine per agent.

The leader beacons every ``beacon_interval``.  A follower that hears its
leader drops its pending backup beacon and re-anchors its slot at
``position * slot_offset`` after the leader's transmit start.  Every send
also schedules a backup one interval later, which only fires if the next
leader beacon never arrives.

On top of beaconing, the Vision member can raise a priority detection
alert; the leader answers with Halt and TreatAssign, the Treatment member
reports TreatDone, and the leader broadcasts Resume.  Messages from other
platoons are heard but ignored.

Agents talk to their surroundings through ``net`` (see
:class:`nanoplatoon.simulation.Simulation`), which provides the clock,
scheduling, the channel and the mission hooks.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

from nanoplatoon.mission import MissionState

if TYPE_CHECKING:
    from nanoplatoon.simulation import Simulation

LOG = logging.getLogger(__name__)


class Role(str, enum.Enum):
    LEADER = "Leader"
    VISION = "Vision"
    TREATMENT = "Treatment"
    POWER = "Power"


class MessageKind(str, enum.Enum):
    LEADER_BEACON = "LeaderBeacon"
    MEMBER_BEACON = "MemberBeacon"
    DETECTION_ALERT = "DetectionAlert"
    HALT = "Halt"
    TREAT_ASSIGN = "TreatAssign"
    TREAT_DONE = "TreatDone"
    RESUME = "Resume"


PRIORITY_KINDS = frozenset({
    MessageKind.DETECTION_ALERT,
    MessageKind.HALT,
    MessageKind.TREAT_ASSIGN,
    MessageKind.TREAT_DONE,
    MessageKind.RESUME,
})
BEACON_KINDS = frozenset({MessageKind.LEADER_BEACON, MessageKind.MEMBER_BEACON})


class ProtoPhase(str, enum.Enum):
    IDLE = "Idle"
    BEACONING = "Beaconing"


@dataclass(frozen=True)
class KinematicSnapshot:
    segment_index: int
    segment_progress: float
    speed: float


@dataclass(frozen=True)
class MissionPayload:
    """Segment reference plus the bookkeeping a treatment episode needs."""

    segment: int
    episode: int = 0
    assignee: int | None = None
    outcome: str | None = None


@dataclass(frozen=True)
class Message:
    kind: MessageKind
    platoon: int
    sender: int
    sender_role: Role
    sender_position: int
    seq: int
    vehicle_data: KinematicSnapshot
    mission_payload: MissionPayload | None = None

    @property
    def priority(self) -> bool:
        return self.kind in PRIORITY_KINDS


@dataclass
class SlbConfig:
    """Protocol timing, all in ticks."""

    beacon_interval: int
    slot_offset: int
    slot_width: int

    def problems(self, platoon_size: int | None = None) -> list[str]:
        out = []
        if self.slot_width <= 0:
            out.append("slot_width: must be > 0")
        if self.slot_width > self.slot_offset:
            out.append(f"slot_width ({self.slot_width}) > slot_offset ({self.slot_offset})")
        if self.beacon_interval <= 0:
            out.append("beacon_interval: must be > 0")
        if platoon_size is not None:
            need = platoon_size * self.slot_offset + self.slot_width
            if need > self.beacon_interval:
                out.append(
                    f"platoon size {platoon_size}: {platoon_size} * slot_offset ({self.slot_offset}) "
                    f"+ slot_width ({self.slot_width}) = {need} > beacon_interval ({self.beacon_interval}) [ticks]"
                )
        return out


@dataclass
class Agent:
    id: int
    platoon: int
    role: Role
    position: int
    pending_beacon: int | None = None
    cacc_view: dict[int, KinematicSnapshot] = field(default_factory=dict)
    proto_phase: ProtoPhase = ProtoPhase.IDLE
    halted: bool = False
    next_seq: int = 0
    # Vision: a classification is in flight
    compute_pending: bool = False
    # Treatment: episodes already finished, mapped to the outcome reported
    finished_episodes: dict[int, str] = field(default_factory=dict)
    active_episode: int | None = None

    @property
    def is_leader(self) -> bool:
        return self.role is Role.LEADER

    def make_message(self, net: Simulation, kind: MessageKind,
                     payload: MissionPayload | None = None) -> Message:
        msg = Message(kind, self.platoon, self.id, self.role, self.position, self.next_seq,
                      net.vehicle_data(self), payload)
        self.next_seq += 1
        return msg

    # -- Algorithm 1 handlers ------------------------------------------------

    def on_startup(self, net: Simulation, start_offset: int = 0) -> None:
        if self.is_leader:
            self.pending_beacon = net.schedule_send(self, start_offset)

    def send_beacon(self, net: Simulation) -> Message:
        kind = MessageKind.LEADER_BEACON if self.is_leader else MessageKind.MEMBER_BEACON
        msg = self.make_message(net, kind)
        net.transmit(msg)
        self.proto_phase = ProtoPhase.BEACONING
        self.pending_beacon = net.schedule_send(self, net.slb.beacon_interval)
        if self.is_leader:
            net.leader_tick(self)
        return msg

    def on_message(self, net: Simulation, msg: Message) -> None:
        if msg.platoon != self.platoon:
            return
        self.cacc_view[msg.sender] = msg.vehicle_data
        kind = msg.kind
        if kind is MessageKind.LEADER_BEACON:
            if not self.is_leader:
                self.on_leader_beacon(net, msg)
        elif kind is MessageKind.DETECTION_ALERT:
            if self.is_leader:
                self.leader_handle_alert(net, msg)
        elif kind is MessageKind.TREAT_DONE:
            if self.is_leader:
                self.leader_resume(net, msg)
        elif kind is MessageKind.HALT:
            self.halted = True
        elif kind is MessageKind.RESUME:
            self.halted = False
        elif kind is MessageKind.TREAT_ASSIGN:
            if self.role is not Role.TREATMENT:
                LOG.info("agent %d (%s) ignoring TreatAssign seq %d from %d",
                         self.id, self.role.value, msg.seq, msg.sender)
            elif msg.mission_payload.assignee == self.id:
                self.on_treat_assign(net, msg)

    def on_leader_beacon(self, net: Simulation, msg: Message) -> None:
        if net.unschedule(self.pending_beacon):
            net.note_cancelled(self)
        # delivery happens at leader start + slot_width
        slb = net.slb
        delay = self.position * slb.slot_offset - slb.slot_width
        self.pending_beacon = net.schedule_send(self, delay)

    # -- detection / treatment extensions ---------------------------------

    def raise_detection(self, net: Simulation, segment: int) -> Message:
        if self.role is not Role.VISION:
            raise ValueError(f"agent {self.id} is {self.role.value}; only Vision raises detections")
        msg = self.make_message(net, MessageKind.DETECTION_ALERT, MissionPayload(segment))
        net.transmit(msg)
        return msg

    def leader_handle_alert(self, net: Simulation, alert: Message) -> Message | None:
        mission = net.mission(self.platoon)
        if mission.state is not MissionState.PATROL:
            LOG.debug("leader %d: alert for segment %d ignored in %s",
                      self.id, alert.mission_payload.segment, mission.state.value)
            return None
        episode = net.open_episode(self, alert)
        halt = self.make_message(net, MessageKind.HALT, MissionPayload(alert.mission_payload.segment, episode))
        net.transmit(halt)
        net.halt_platoon(self, alert, halt)
        assign = MissionPayload(alert.mission_payload.segment, episode, net.treatment_assignee(self.platoon))
        net.schedule_send(self, net.slb.slot_width, MessageKind.TREAT_ASSIGN, assign)
        return halt

    def leader_resume(self, net: Simulation, done: Message) -> Message | None:
        mission = net.mission(self.platoon)
        if mission.state is not MissionState.TREATING or done.mission_payload.episode != net.current_episode(self.platoon):
            LOG.info("leader %d: TreatDone (episode %d) ignored in %s",
                     self.id, done.mission_payload.episode, mission.state.value)
            return None
        msg = self.make_message(net, MessageKind.RESUME, done.mission_payload)
        net.transmit(msg)
        net.resume_platoon(self)
        return msg

    def on_treat_assign(self, net: Simulation, msg: Message) -> None:
        payload = msg.mission_payload
        if payload.episode in self.finished_episodes:
            # the leader did not hear our TreatDone; repeat it
            net.schedule_send(self, 0, MessageKind.TREAT_DONE,
                              MissionPayload(payload.segment, payload.episode, self.id,
                                             self.finished_episodes[payload.episode]))
            return
        if self.active_episode == payload.episode:
            return
        self.active_episode = payload.episode
        net.begin_treatment(self, payload)

    def send_command(self, net: Simulation, kind: MessageKind, payload: MissionPayload) -> Message | None:
        """Fire a deferred priority frame (TreatAssign, TreatDone)."""
        if kind is MessageKind.TREAT_ASSIGN and not net.claim_assignment(self.platoon, payload.episode):
            return None
        if kind is MessageKind.TREAT_DONE and payload.outcome is None:
            payload = net.finish_treatment(self, payload)
        if kind is MessageKind.TREAT_DONE:
            self.finished_episodes[payload.episode] = payload.outcome
            self.active_episode = None
        msg = self.make_message(net, kind, payload)
        net.transmit(msg)
        return msg
