"""One simulation run: agents, channel, world and missions on a shared engine."""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from fractions import Fraction

from nanoplatoon.channel import Channel, ChannelConfig, Status
from nanoplatoon.engine import Engine, Event, EventKind, to_ticks
from nanoplatoon.metrics import MetricsCollector, MetricsReport
from nanoplatoon.mission import DetectorModel, ExitRule, MissionState, PlatoonMission, World
from nanoplatoon.protocol import (
    Agent,
    KinematicSnapshot,
    Message,
    MessageKind,
    MissionPayload,
    Role,
)
from nanoplatoon.scenario import CommandSpec, Scenario, detector_model
from nanoplatoon.trace import TraceMeta, render

LOG = logging.getLogger(__name__)


def stable_name(agent: Agent) -> str:
    return f"{agent.platoon}.{agent.position}"


@dataclass
class PlatoonRuntime:
    id: int
    agents: list[Agent]
    mission: PlatoonMission
    detector: DetectorModel
    start_offset: int
    motion_handle: int | None = None
    motion_at: int | None = None
    episode: int = 0
    current_episode: int | None = None
    episode_segment: int | None = None
    retry_at: int = 0
    snapshot: tuple[int, KinematicSnapshot] | None = None

    @property
    def leader(self) -> Agent:
        return self.agents[0]

    def with_role(self, role: Role) -> list[Agent]:
        return [a for a in self.agents if a.role is role]


class Simulation:
    """Build a run from a :class:`Scenario` and drive it.

    Pass ``trace=False`` to skip keeping trace records (metrics are still
    collected).  ``record_events=True`` keeps the engine's fired-event log.
    """

    def __init__(self, scenario: Scenario, trace: bool = True, record_events: bool = False) -> None:
        self.scenario = scenario
        self.slb = scenario.slb_config()
        ch = scenario.channel
        self.channel = Channel(
            ChannelConfig(ch.loss_prob, ch.collisions_enabled, ch.priority_survives,
                          frozenset((f.sender, f.seq) for f in ch.forced_losses)),
            self.slb.slot_width,
        )
        self.engine = Engine(scenario.seed, dispatch=self._dispatch, record=record_events)
        self.world = World({seg.id: seg.target_cells for seg in scenario.world.segments})
        route = scenario.route_graph()

        self.agents: list[Agent] = []
        self.platoons: dict[int, PlatoonRuntime] = {}
        for spec in scenario.platoons:
            m = spec.mission
            mission = PlatoonMission(
                spec.id, route, Fraction(str(spec.speed)), m.max_cycles, m.treat_capacity,
                to_ticks(m.treatment_duration), ExitRule(m.exit_rule),
            )
            agents = [Agent(len(self.agents) + pos, spec.id, Role(r), pos) for pos, r in enumerate(spec.roles)]
            self.agents.extend(agents)
            self.platoons[spec.id] = PlatoonRuntime(
                spec.id, agents, mission, detector_model(spec.detector), to_ticks(spec.start_offset))

        roster = {a.id: (a.platoon, a.role.value, a.position) for a in self.agents}
        self.meta = TraceMeta(scenario.seed, to_ticks(scenario.t_end), self.slb.slot_width,
                              self.slb.beacon_interval, roster)
        self.records: list[tuple] | None = [] if trace else None
        self.metrics = MetricsCollector(self.meta)
        self._fanout: dict[int, tuple[list[Agent], list]] = {}
        self._started = False

    @property
    def now(self) -> int:
        return self.engine.now

    # -- running ----------------------------------------------------------

    def start(self) -> None:
        if self._started:
            return
        self._started = True
        for rt in self.platoons.values():
            rt.mission.last_update = rt.start_offset
            for agent in rt.agents:
                agent.on_startup(self, rt.start_offset)
            for vision in rt.with_role(Role.VISION):
                self.engine.schedule(rt.start_offset + rt.detector.sense_period, EventKind.SENSOR_TICK, vision.id)
            self._reschedule_motion(rt)
        for cmd in self.scenario.scripted_commands:
            self.engine.schedule(to_ticks(cmd.time), EventKind.SCENARIO_COMMAND, cmd.platoon, cmd)

    def run(self, t_end: int | None = None) -> MetricsReport:
        """Run to ``t_end`` ticks (default: the scenario's end) and report.

        A zero-length run (``t_end == 0``) processes nothing, not even the
        events due at time 0.
        """
        horizon = self.meta.t_end if t_end is None else t_end
        if horizon > 0:
            self.start()
            self.engine.run_until(horizon)
        return self.report()

    def report(self) -> MetricsReport:
        return self.metrics.finalize(self.engine.now, self.engine.events_fired)

    def trace_meta(self) -> TraceMeta:
        return dataclasses.replace(self.meta, t_end=self.engine.now)

    def trace_text(self) -> str:
        if self.records is None:
            raise RuntimeError("trace recording was disabled for this run")
        return render(self.trace_meta(), self.records)

    # -- event dispatch ---------------------------------------------------

    def _dispatch(self, ev: Event) -> None:
        kind = ev.kind
        if kind is EventKind.DELIVERY_AT:
            self._deliver(ev.payload)
        elif kind is EventKind.TRANSMIT_START:
            agent = self.agents[ev.target]
            if ev.payload is None:
                agent.send_beacon(self)
            else:
                agent.send_command(self, *ev.payload)
        elif kind is EventKind.SENSOR_TICK:
            self._sense(self.agents[ev.target])
        elif kind is EventKind.COMPUTE_RETURN:
            self._compute_return(self.agents[ev.target], ev.payload)
        elif kind is EventKind.MOTION_TICK:
            rt = self.platoons[ev.target]
            rt.motion_handle = None
            self.mission(rt.id)
        elif kind is EventKind.SCENARIO_COMMAND:
            self._command(self.platoons[ev.target], ev.payload)

    def _emit(self, rec: tuple) -> None:
        self.metrics.record(rec)
        if self.records is not None:
            self.records.append(rec)

    def _deliver(self, tx) -> None:
        msg = tx.msg
        now = self.now
        kind = msg.kind.value
        if self.channel.finish(tx) is Status.COLLIDED:
            self._emit((now, "COLLIDED", msg.platoon, msg.sender, kind, msg.seq, "-"))
            return
        receivers, streams = self._receivers(msg.sender)
        drops = self.channel.drop_decisions(msg, streams)
        any_lost = False
        for agent, lost in zip(receivers, drops):
            if lost:
                any_lost = True
                self._emit((now, "LOST", msg.platoon, msg.sender, kind, msg.seq, agent.id))
                continue
            self._emit((now, "RX", msg.platoon, msg.sender, kind, msg.seq, agent.id))
            agent.on_message(self, msg)
        tx.status = Status.PARTIALLY_LOST if any_lost else Status.DELIVERED

    def _receivers(self, sender: int) -> tuple[list[Agent], list]:
        """Every other agent, with one loss stream per (sender, receiver) pair.

        Streams are named by (platoon, position), so adding or removing other
        platoons never shifts these draws.
        """
        cached = self._fanout.get(sender)
        if cached is None:
            src = self.agents[sender]
            receivers = [a for a in self.agents if a.id != sender]
            streams = [self.engine.streams.get(f"channel-loss/{stable_name(src)}->{stable_name(a)}")
                       for a in receivers]
            cached = self._fanout[sender] = (receivers, streams)
        return cached

    def _sense(self, agent: Agent) -> None:
        rt = self.platoons[agent.platoon]
        mission = rt.mission
        if mission.state is not MissionState.DONE:
            self.engine.schedule(rt.detector.sense_period, EventKind.SENSOR_TICK, agent.id)
        if mission.state is not MissionState.PATROL or agent.compute_pending:
            return
        segment = mission.snapshot_at(self.now)[0]
        rng = self.engine.streams.get(f"detector/{stable_name(agent)}")
        if rt.detector.classify(rng, self.world.count(segment)):
            self._request_classification(rt, agent, segment)

    def _request_classification(self, rt: PlatoonRuntime, agent: Agent, segment: int) -> None:
        agent.compute_pending = True
        self.engine.schedule(rt.detector.compute_round_trip, EventKind.COMPUTE_RETURN, agent.id, segment)

    def _compute_return(self, agent: Agent, segment: int) -> None:
        agent.compute_pending = False
        if self.mission(agent.platoon).state is MissionState.PATROL:
            agent.raise_detection(self, segment)

    def _command(self, rt: PlatoonRuntime, cmd: CommandSpec) -> None:
        mission = self.mission(rt.id)
        if cmd.command == "exit":
            mission.begin_exit(self.now)
        elif cmd.command == "set_speed":
            mission.speed = Fraction(str(cmd.value))
        elif cmd.command == "inject_detection":
            vision = rt.with_role(Role.VISION)
            if vision and mission.state is MissionState.PATROL and not vision[0].compute_pending:
                self._request_classification(rt, vision[0], mission.segment)
        self._drain(rt)
        self._reschedule_motion(rt)

    # -- motion -----------------------------------------------------------

    def _drain(self, rt: PlatoonRuntime) -> None:
        journal = rt.mission.journal
        for t, what, value in journal:
            if what == "STATE":
                self._emit((t, "STATE", rt.id, "-", value, "-", "-"))
            else:
                self._emit((t, "CYCLE", rt.id, "-", "Loop", value, "-"))
        journal.clear()

    def _reschedule_motion(self, rt: PlatoonRuntime) -> None:
        mission = rt.mission
        ticks = mission.ticks_to_boundary()
        target = None if ticks is None else max(self.now, mission.last_update + ticks)
        if target == rt.motion_at and self.engine.is_pending(rt.motion_handle):
            return
        self.engine.unschedule(rt.motion_handle)
        rt.motion_handle = rt.motion_at = None
        if target is not None:
            rt.motion_at = target
            rt.motion_handle = self.engine.schedule(target - self.now, EventKind.MOTION_TICK, rt.id)

    # -- services used by the agents --------------------------------------

    def mission(self, platoon: int) -> PlatoonMission:
        """The platoon's mission, brought up to the current time."""
        rt = self.platoons[platoon]
        rt.mission.sync(self.now)
        self._drain(rt)
        self._reschedule_motion(rt)
        return rt.mission

    def vehicle_data(self, agent: Agent) -> KinematicSnapshot:
        rt = self.platoons[agent.platoon]
        now = self.now
        if rt.snapshot is None or rt.snapshot[0] != now:
            rt.snapshot = (now, KinematicSnapshot(*rt.mission.snapshot_at(now)))
        return rt.snapshot[1]

    def schedule_send(self, agent: Agent, delay: int, kind: MessageKind | None = None,
                      payload: MissionPayload | None = None) -> int:
        return self.engine.schedule(delay, EventKind.TRANSMIT_START, agent.id,
                                    None if kind is None else (kind, payload))

    def unschedule(self, event_id: int | None) -> bool:
        return self.engine.unschedule(event_id)

    def note_cancelled(self, agent: Agent) -> None:
        kind = MessageKind.LEADER_BEACON if agent.is_leader else MessageKind.MEMBER_BEACON
        self._emit((self.now, "CANCELLED", agent.platoon, agent.id, kind.value, "-", "-"))

    def transmit(self, msg: Message) -> None:
        tx = self.channel.start(msg, self.now)
        self._emit((self.now, "TX", msg.platoon, msg.sender, msg.kind.value, msg.seq, "-"))
        self.engine.schedule(self.slb.slot_width, EventKind.DELIVERY_AT, msg.sender, tx)

    def treatment_assignee(self, platoon: int) -> int:
        return self.platoons[platoon].with_role(Role.TREATMENT)[0].id

    def current_episode(self, platoon: int) -> int | None:
        return self.platoons[platoon].current_episode

    def open_episode(self, leader: Agent, alert: Message) -> int:
        rt = self.platoons[leader.platoon]
        rt.episode += 1
        rt.current_episode = rt.episode
        rt.episode_segment = alert.mission_payload.segment
        return rt.episode

    def halt_platoon(self, leader: Agent, alert: Message, halt: Message) -> None:
        rt = self.platoons[leader.platoon]
        rt.mission.halt(self.now)
        leader.halted = True
        self._drain(rt)
        self._reschedule_motion(rt)
        # the alert went out the moment its classification returned
        self.metrics.expect_halt(leader.id, halt.seq, self.now - self.slb.slot_width)
        rt.retry_at = (self.now + self.slb.slot_width + rt.mission.treatment_duration
                       + self.slb.beacon_interval)

    def claim_assignment(self, platoon: int, episode: int) -> bool:
        """True if a TreatAssign for ``episode`` should still go out now."""
        rt = self.platoons[platoon]
        return (episode == rt.current_episode
                and rt.mission.state in (MissionState.HALTED, MissionState.TREATING))

    def leader_tick(self, leader: Agent) -> None:
        rt = self.platoons[leader.platoon]
        if rt.current_episode is None or self.now < rt.retry_at:
            return
        if rt.mission.state not in (MissionState.HALTED, MissionState.TREATING):
            return
        LOG.info("leader %d: re-sending TreatAssign for episode %d", leader.id, rt.current_episode)
        payload = MissionPayload(rt.episode_segment, rt.current_episode, self.treatment_assignee(rt.id))
        self.schedule_send(leader, self.slb.slot_width, MessageKind.TREAT_ASSIGN, payload)
        rt.retry_at = self.now + rt.mission.treatment_duration + self.slb.beacon_interval

    def begin_treatment(self, agent: Agent, payload: MissionPayload) -> None:
        rt = self.platoons[agent.platoon]
        mission = self.mission(rt.id)
        if mission.state is not MissionState.HALTED or payload.episode != rt.current_episode:
            LOG.info("agent %d: TreatAssign episode %d ignored in %s",
                     agent.id, payload.episode, mission.state.value)
            agent.active_episode = None
            return
        outcome = mission.begin_treatment(self.world, payload.segment, self.now)
        self._drain(rt)
        if outcome == "treat":
            self.schedule_send(agent, mission.treatment_duration, MessageKind.TREAT_DONE,
                               dataclasses.replace(payload, outcome=None))
            return
        label = "FalseAlarm" if outcome == "false_alarm" else "Exhausted"
        self._emit((self.now, "TREAT", rt.id, agent.id, label, payload.episode, payload.segment))
        self.schedule_send(agent, 0, MessageKind.TREAT_DONE, dataclasses.replace(payload, outcome=label))

    def finish_treatment(self, agent: Agent, payload: MissionPayload) -> MissionPayload:
        rt = self.platoons[agent.platoon]
        hit = rt.mission.apply_treatment(self.world, payload.segment)
        label = "Inactivated" if hit else "NoTarget"
        self._emit((self.now, "TREAT", rt.id, agent.id, label, payload.episode, payload.segment))
        return dataclasses.replace(payload, outcome=label)

    def resume_platoon(self, leader: Agent) -> None:
        rt = self.platoons[leader.platoon]
        rt.mission.resume(self.now)
        leader.halted = False
        rt.current_episode = None
        self._drain(rt)
        self._reschedule_motion(rt)


def run_scenario(scenario: Scenario, trace: bool = True) -> tuple[MetricsReport, str | None]:
    sim = Simulation(scenario, trace=trace)
    report = sim.run()
    return report, sim.trace_text() if trace else None
