"""Discrete-event simulator of nanorobot platoons running slotted
leader-based beaconing with detection-driven halt/treat/resume missions."""

from nanoplatoon.channel import Channel, ChannelConfig, Status, Transmission, resolve_collisions
from nanoplatoon.engine import Engine, EventKind, RandomStreams, SimulationError, format_time, to_ticks
from nanoplatoon.metrics import MetricsReport, export, replay
from nanoplatoon.mission import DetectorModel, MissionState, PlatoonMission, RouteGraph, World
from nanoplatoon.protocol import Agent, Message, MessageKind, Role, SlbConfig
from nanoplatoon.scenario import Scenario, ScenarioError, from_dict, load_scenario
from nanoplatoon.simulation import Simulation, run_scenario

__version__ = "0.1.0"

__all__ = [
    "Agent", "Channel", "ChannelConfig", "DetectorModel", "Engine", "EventKind", "Message",
    "MessageKind", "MetricsReport", "MissionState", "PlatoonMission", "RandomStreams", "Role",
    "RouteGraph", "Scenario", "ScenarioError", "Simulation", "SimulationError", "SlbConfig",
    "Status", "Transmission", "World", "export", "format_time", "from_dict", "load_scenario",
    "replay", "resolve_collisions", "run_scenario", "to_ticks",
]
