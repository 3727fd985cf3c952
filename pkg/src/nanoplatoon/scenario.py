"""Scenario files: JSON in, validated dataclasses out.

Times are written in time units (``100``, ``0.5``) and must be whole
multiples of one tick.  Unknown keys are errors.  Every problem found is
reported with its field path, not just the first one.
"""

from __future__ import annotations

import copy
import dataclasses
import json
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from nanoplatoon.engine import to_ticks
from nanoplatoon.mission import DetectorModel, ExitRule, RouteGraph
from nanoplatoon.protocol import Role, SlbConfig

COMMANDS = ("exit", "set_speed", "inject_detection")


class ScenarioError(ValueError):
    def __init__(self, problems: list[str]) -> None:
        self.problems = list(problems)
        super().__init__("invalid scenario:\n" + "\n".join(f"  - {p}" for p in self.problems))


@dataclass
class SlbSpec:
    beacon_interval: float = 100.0
    slot_offset: float = 0.5
    slot_width: float = 0.5


@dataclass
class ForcedLoss:
    sender: int
    seq: int


@dataclass
class ChannelSpec:
    loss_prob: float = 0.0
    collisions_enabled: bool = True
    priority_survives: bool = True
    forced_losses: list[ForcedLoss] = field(default_factory=list)


@dataclass
class DetectorSpec:
    true_positive_rate: float = 0.0
    false_positive_rate: float = 0.0
    sense_period: float = 1.0
    compute_round_trip: float = 0.0


@dataclass
class MissionSpec:
    max_cycles: int = 1
    treat_capacity: Optional[int] = None
    treatment_duration: float = 0.0
    exit_rule: str = ExitRule.CLEAN_CYCLE.value


@dataclass
class PlatoonSpec:
    id: int
    size: int
    roles: list[str]
    start_offset: float = 0.0
    speed: float = 1.0
    detector: DetectorSpec = field(default_factory=DetectorSpec)
    mission: MissionSpec = field(default_factory=MissionSpec)


@dataclass
class SegmentSpec:
    id: int
    length: float
    target_cells: int = 0


@dataclass
class WorldSpec:
    patrol_loop: list[int]
    exit_path: list[int]
    segments: list[SegmentSpec]


@dataclass
class CommandSpec:
    time: float
    platoon: int
    command: str
    value: Optional[float] = None


@dataclass
class Scenario:
    platoons: list[PlatoonSpec]
    world: WorldSpec
    slb: SlbSpec = field(default_factory=SlbSpec)
    channel: ChannelSpec = field(default_factory=ChannelSpec)
    scripted_commands: list[CommandSpec] = field(default_factory=list)
    seed: int = 1
    t_end: float = 100.0

    # -- derived, tick-based views ---------------------------------------

    def slb_config(self) -> SlbConfig:
        s = self.slb
        return SlbConfig(to_ticks(s.beacon_interval), to_ticks(s.slot_offset), to_ticks(s.slot_width))

    def route_graph(self) -> RouteGraph:
        w = self.world
        return RouteGraph(list(w.patrol_loop), list(w.exit_path),
                          {seg.id: seg.length for seg in w.segments})

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def detector_model(spec: DetectorSpec) -> DetectorModel:
    return DetectorModel(spec.true_positive_rate, spec.false_positive_rate,
                         to_ticks(spec.sense_period), to_ticks(spec.compute_round_trip))


# -- generic strict builder ----------------------------------------------

_MISSING = object()


def _build(tp, value, path: str, errors: list[str]):
    origin = typing.get_origin(tp)
    if origin is typing.Union:
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if value is None:
            return None
        return _build(args[0], value, path, errors)
    if dataclasses.is_dataclass(tp):
        if not isinstance(value, dict):
            errors.append(f"{path}: expected an object")
            return _MISSING
        hints = typing.get_type_hints(tp)
        known = {f.name: f for f in dataclasses.fields(tp)}
        for key in value:
            if key not in known:
                errors.append(f"{path + '.' if path else ''}{key}: unknown field")
        kwargs = {}
        for name, f in known.items():
            sub = f"{path}.{name}" if path else name
            if name in value:
                built = _build(hints[name], value[name], sub, errors)
                if built is not _MISSING:
                    kwargs[name] = built
            elif f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING:
                errors.append(f"{sub}: required field missing")
        try:
            return tp(**kwargs)
        except TypeError:
            return _MISSING
    if origin is list:
        if not isinstance(value, list):
            errors.append(f"{path}: expected a list")
            return _MISSING
        (item,) = typing.get_args(tp)
        items = [_build(item, v, f"{path}[{i}]", errors) for i, v in enumerate(value)]
        return [v for v in items if v is not _MISSING]
    if tp is bool:
        if not isinstance(value, bool):
            errors.append(f"{path}: expected true/false, got {value!r}")
            return _MISSING
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            errors.append(f"{path}: expected an integer, got {value!r}")
            return _MISSING
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            errors.append(f"{path}: expected a number, got {value!r}")
            return _MISSING
        return value
    if tp is str:
        if not isinstance(value, str):
            errors.append(f"{path}: expected a string, got {value!r}")
            return _MISSING
        return value
    raise TypeError(f"unsupported field type {tp!r}")


def _check_time(value, path: str, errors: list[str]) -> int | None:
    try:
        return to_ticks(value)
    except ValueError as exc:
        errors.append(f"{path}: {exc}")
        return None


def problems(s: Scenario) -> list[str]:
    """Invariant violations of a structurally valid scenario."""
    errors: list[str] = []
    for name in ("beacon_interval", "slot_offset", "slot_width"):
        _check_time(getattr(s.slb, name), f"slb.{name}", errors)
    if errors:
        return errors
    slb = s.slb_config()
    errors += [f"slb: {p}" for p in slb.problems()]
    errors += [f"channel.{p}" for p in _channel_problems(s.channel)]
    _check_time(s.t_end, "t_end", errors)
    if not 0 <= s.seed < 2**64:
        errors.append("seed: must fit in an unsigned 64-bit integer")

    seg_ids = [seg.id for seg in s.world.segments]
    if len(set(seg_ids)) != len(seg_ids):
        errors.append("world.segments: duplicate segment ids")
    for i, seg in enumerate(s.world.segments):
        if seg.target_cells < 0:
            errors.append(f"world.segments[{i}].target_cells: must be >= 0")
    errors += [f"world.{p}" for p in s.route_graph().problems()]

    if not s.platoons:
        errors.append("platoons: at least one platoon is required")
    pids = [p.id for p in s.platoons]
    if len(set(pids)) != len(pids):
        errors.append("platoons: duplicate platoon ids")
    n_agents = sum(p.size for p in s.platoons)
    for i, p in enumerate(s.platoons):
        base = f"platoons[{i}]"
        errors += [f"{base}.{m}" for m in platoon_problems(p, slb)]
    valid_sender = range(n_agents)
    for i, fl in enumerate(s.channel.forced_losses):
        if fl.sender not in valid_sender or fl.seq < 0:
            errors.append(f"channel.forced_losses[{i}]: no agent {fl.sender} / bad seq {fl.seq}")

    for i, cmd in enumerate(s.scripted_commands):
        base = f"scripted_commands[{i}]"
        _check_time(cmd.time, f"{base}.time", errors)
        if cmd.platoon not in pids:
            errors.append(f"{base}.platoon: no platoon {cmd.platoon}")
        if cmd.command not in COMMANDS:
            errors.append(f"{base}.command: {cmd.command!r} not one of {', '.join(COMMANDS)}")
        if cmd.command == "set_speed" and (cmd.value is None or cmd.value < 0):
            errors.append(f"{base}.value: set_speed needs a speed >= 0")
    return errors


def _channel_problems(c: ChannelSpec) -> list[str]:
    if not 0.0 <= c.loss_prob <= 1.0:
        return [f"loss_prob: {c.loss_prob} not in [0, 1]"]
    return []


def platoon_problems(p: PlatoonSpec, slb: SlbConfig, require_mission_roles: bool = True) -> list[str]:
    errors = []
    if p.size < 1:
        errors.append(f"size: must be >= 1, got {p.size}")
    if len(p.roles) != p.size:
        errors.append(f"roles: {len(p.roles)} roles listed for size {p.size}")
    valid = {r.value for r in Role}
    bad = [r for r in p.roles if r not in valid]
    if bad:
        errors.append(f"roles: unknown role(s) {bad}; expected {sorted(valid)}")
    leaders = p.roles.count(Role.LEADER.value)
    if leaders != 1:
        errors.append(f"roles: exactly one Leader required, found {leaders}")
    elif p.roles[0] != Role.LEADER.value:
        errors.append("roles: the Leader must be at position 0")
    if require_mission_roles:
        for role in (Role.VISION, Role.TREATMENT):
            if role.value not in p.roles:
                errors.append(f"roles: at least one {role.value} required")
    errors += slb.problems(p.size)
    _check_time(p.start_offset, "start_offset", errors)
    if p.speed < 0:
        errors.append("speed: must be >= 0")
    det_errors: list[str] = []
    for name in ("sense_period", "compute_round_trip"):
        _check_time(getattr(p.detector, name), f"detector.{name}", det_errors)
    errors += det_errors
    if not det_errors:
        errors += [f"detector.{m}" for m in detector_model(p.detector).problems()]
    m = p.mission
    if m.max_cycles < 0:
        errors.append("mission.max_cycles: must be >= 0")
    if m.treat_capacity is not None and m.treat_capacity < 0:
        errors.append("mission.treat_capacity: must be >= 0 or null")
    _check_time(m.treatment_duration, "mission.treatment_duration", errors)
    if m.exit_rule not in {r.value for r in ExitRule}:
        errors.append(f"mission.exit_rule: {m.exit_rule!r} not one of {[r.value for r in ExitRule]}")
    return errors


def from_dict(data: dict, validate: bool = True) -> Scenario:
    errors: list[str] = []
    scenario = _build(Scenario, data, "", errors)
    if errors or scenario is _MISSING:
        raise ScenarioError(errors or ["scenario: could not be built"])
    if validate:
        errors = problems(scenario)
        if errors:
            raise ScenarioError(errors)
    return scenario


def load_raw(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ScenarioError([f"{path}: {exc.strerror or exc}"]) from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError([f"{path}: JSON parse error at line {exc.lineno} column {exc.colno}: {exc.msg}"]) from exc
    if not isinstance(data, dict):
        raise ScenarioError([f"{path}: top level must be an object"])
    return data


def load_scenario(path, overrides: list[str] | None = None) -> Scenario:
    data = load_raw(path)
    if overrides:
        data = apply_overrides(data, overrides)
    return from_dict(data)


def dumps(s: Scenario) -> str:
    return json.dumps(s.to_dict(), indent=2) + "\n"


# -- dotted-path overrides ------------------------------------------------

def _parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def set_path(data: dict, path: str, value: Any) -> None:
    """Set ``a.b.0.c`` inside nested dicts/lists; the path must already exist
    except for a final key that is a known-but-defaulted scenario field."""
    parts = path.split(".")
    node = data
    for i, part in enumerate(parts[:-1]):
        node = _step(node, part, ".".join(parts[:i + 1]), create=True)
    last = parts[-1]
    if isinstance(node, list):
        idx = _index(node, last, path)
        node[idx] = value
    elif isinstance(node, dict):
        node[last] = value
    else:
        raise ScenarioError([f"override {path}: cannot index into a {type(node).__name__}"])


def _index(node: list, part: str, path: str) -> int:
    if not part.isdigit() or int(part) >= len(node):
        raise ScenarioError([f"override {path}: no list element {part!r}"])
    return int(part)


def _step(node, part: str, path: str, create: bool):
    if isinstance(node, list):
        return node[_index(node, part, path)]
    if isinstance(node, dict):
        if part not in node:
            if not create:
                raise ScenarioError([f"override {path}: no such field"])
            node[part] = {}
        return node[part]
    raise ScenarioError([f"override {path}: cannot index into a {type(node).__name__}"])


def apply_overrides(data: dict, overrides: list[str]) -> dict:
    """Return a copy of ``data`` with ``key.path=value`` overrides applied.

    Values are parsed as JSON when possible (``1.0``, ``true``, ``[1,2]``)
    and taken as strings otherwise.  The result is validated afterwards, so
    misspelled keys surface as unknown-field errors.
    """
    out = copy.deepcopy(data)
    errors = []
    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            errors.append(f"override {item!r}: expected key=value")
            continue
        try:
            set_path(out, key.strip(), _parse_value(raw.strip()))
        except ScenarioError as exc:
            errors += exc.problems
    if errors:
        raise ScenarioError(errors)
    return out


def check_paths(data: dict, paths: list[str]) -> list[str]:
    """Paths (for sweep grids) that would not land on a valid scenario field."""
    errors = []
    for path in paths:
        trial = copy.deepcopy(data)
        try:
            set_path(trial, path, _probe_value(trial, path))
            _build(Scenario, trial, "", probe := [])
            errors += [f"grid {path}: {p}" for p in probe if "unknown field" in p]
        except ScenarioError as exc:
            errors += [f"grid {p}" for p in exc.problems]
    return errors


def _probe_value(data: dict, path: str):
    node = data
    try:
        for part in path.split("."):
            node = node[int(part)] if isinstance(node, list) else node[part]
        return node
    except (KeyError, IndexError, ValueError, TypeError):
        return 0
