"""Process description of a rotary indexing machine.

The machine is described from the product's point of view: an ordered list of
stations (one production step each), the state transitions performed at every
station, the expected duration of each transition and table rotation, and two
sensor mappings, sensor -> transition and sensor -> tool.  Everything is
immutable after loading.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional, Union

import jsonschema

from .errors import (
    DanglingReferenceError,
    OrderError,
    SchemaError,
    UnknownSensor,
    UnknownStep,
)

SCHEMA_VERSION = 1

STATION_ROLES = ("input", "process", "qc", "eject_ok", "eject_nok")
EJECT_ROLES = ("eject_ok", "eject_nok")
SENSOR_KINDS = ("position", "measure", "probe", "ack")
DIRECTIONS = ("below", "above", "missing", "any")

_TOLERANCE = {
    "type": "object",
    "properties": {
        "nominal": {"type": "number"},
        "tol_below": {"type": "number", "minimum": 0},
        "tol_above": {"type": "number", "minimum": 0},
    },
    "required": ["tol_below", "tol_above"],
    "additionalProperties": False,
}

DOCUMENT_SCHEMA = {
    "type": "object",
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "stations": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "properties": {
                    "index": {"type": "integer"},
                    "name": {"type": "string"},
                    "role": {"enum": list(STATION_ROLES)},
                },
                "required": ["index", "role"],
                "additionalProperties": False,
            },
        },
        "transitions": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {
                    "id": {"type": "integer"},
                    "station": {"type": "integer"},
                    "from": {"type": "integer", "minimum": 1},
                    "to": {"type": "integer", "minimum": 1},
                    "name": {"type": "string"},
                    "check": {"type": "boolean"},
                },
                "required": ["id", "station", "from", "to"],
                "additionalProperties": False,
            },
        },
        "timings": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {
                    "transition": {"type": "integer"},
                    "rotation": {"type": "integer"},
                    "duration": {"type": "number", "minimum": 0},
                    "start": {"type": "string"},
                    "complete": {"type": "string"},
                },
                "required": ["duration"],
                "oneOf": [{"required": ["transition"]}, {"required": ["rotation"]}],
                "additionalProperties": False,
            },
        },
        "sensor_to_transition": {
            "type": "object",
            "additionalProperties": {
                "type": "object",
                "properties": {
                    "transition": {"type": "integer"},
                    "label": {"type": "string"},
                    "kind": {"enum": list(SENSOR_KINDS)},
                    "offset": {"type": "number", "minimum": 0},
                },
                "required": ["transition"],
                "additionalProperties": False,
            },
        },
        "sensor_to_tool": {"type": "object", "additionalProperties": {"type": "string"}},
        "causal_rules": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {
                    "trigger": {
                        "type": "object",
                        "properties": {
                            "sensor": {"type": "string"},
                            "direction": {"enum": list(DIRECTIONS)},
                        },
                        "required": ["sensor", "direction"],
                        "additionalProperties": False,
                    },
                    "candidates": {
                        "type": "array",
                        "minItems": 1,
                        "items": {
                            "type": "object",
                            "properties": {
                                "tool": {"type": "string"},
                                "description": {"type": "string"},
                                "step": {"type": "integer"},
                                "discriminator": {
                                    "type": "object",
                                    "properties": {
                                        "sensor": {"type": "string"},
                                        "lower": {"type": "number"},
                                        "upper": {"type": "number"},
                                    },
                                    "required": ["sensor", "lower", "upper"],
                                    "additionalProperties": False,
                                },
                            },
                            "required": ["step"],
                            "oneOf": [{"required": ["tool"]}, {"required": ["description"]}],
                            "additionalProperties": False,
                        },
                    },
                },
                "required": ["trigger", "candidates"],
                "additionalProperties": False,
            },
        },
        "expected_values": {
            "type": "object",
            "properties": {
                "sensors": {
                    "type": "object",
                    "additionalProperties": {**_TOLERANCE, "required": ["nominal", "tol_below", "tol_above"]},
                },
                "timings": {"type": "object", "additionalProperties": _TOLERANCE},
            },
            "additionalProperties": False,
        },
    },
    "required": ["schema_version", "stations", "transitions", "timings", "sensor_to_transition"],
    "additionalProperties": False,
}


@dataclass(frozen=True)
class Station:
    index: int
    role: str
    name: str = ""

    @property
    def is_eject(self) -> bool:
        return self.role in EJECT_ROLES


@dataclass(frozen=True)
class Transition:
    id: int
    station: int
    from_state: int
    to_state: int
    name: str = ""
    check: bool = False  # quality-control inspection, state unchanged


@dataclass(frozen=True)
class Rotation:
    id: int
    from_position: int
    to_position: int


@dataclass(frozen=True)
class Timing:
    """Expected duration of one transition or rotation.

    ``start`` and ``complete`` name the sensors whose events delimit the
    interval.  When either is absent the duration cannot be observed from the
    sensor stream and the window is carried but never evaluated.
    """

    transition: Optional[int]
    rotation: Optional[int]
    duration: float
    start: Optional[str] = None
    complete: Optional[str] = None

    @property
    def id(self) -> str:
        if self.transition is not None:
            return f"T{self.transition}"
        return f"R{self.rotation}"

    @property
    def observable(self) -> bool:
        return self.start is not None and self.complete is not None


@dataclass(frozen=True)
class SensorBinding:
    sensor: str
    transition: int
    label: str = ""
    kind: str = "measure"
    offset: float = 0.0


@dataclass(frozen=True)
class Discriminator:
    """Tell-tale interval at an earlier step; a reading outside it confirms a candidate."""

    sensor: str
    lower: float
    upper: float

    def fires(self, values: Iterable[float]) -> bool:
        values = list(values)
        return bool(values) and not any(self.lower <= v <= self.upper for v in values)


@dataclass(frozen=True)
class CandidateCause:
    step: int
    tool: Optional[str] = None
    description: Optional[str] = None

    def __post_init__(self):
        if (self.tool is None) == (self.description is None):
            raise ValueError("a candidate cause names either a tool or a description")

    @property
    def kind(self) -> str:
        return "tool_fault" if self.tool is not None else "upstream_product_fault"

    @property
    def name(self) -> str:
        return self.tool if self.tool is not None else str(self.description)

    def to_dict(self) -> dict:
        d: dict = {"kind": self.kind, "step": self.step}
        if self.tool is not None:
            d["tool"] = self.tool
        else:
            d["description"] = self.description
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "CandidateCause":
        return cls(step=d["step"], tool=d.get("tool"), description=d.get("description"))


@dataclass(frozen=True)
class CausalRule:
    sensor: str
    direction: str
    candidates: tuple[CandidateCause, ...]
    discriminators: tuple[tuple[CandidateCause, Discriminator], ...] = ()

    def matches(self, sensor: str, direction: str) -> bool:
        return sensor == self.sensor and self.direction in ("any", direction)

    def discriminator_for(self, cause: CandidateCause) -> Optional[Discriminator]:
        for c, d in self.discriminators:
            if c == cause:
                return d
        return None


@dataclass(frozen=True)
class ValidationIssue:
    code: str
    subject: str
    message: str

    def __str__(self) -> str:
        return f"{self.code}({self.subject!r}): {self.message}"


# issue codes raised as DanglingReferenceError / OrderError on load
_REFERENCE_CODES = {
    "UnknownTransition",
    "UnknownStation",
    "ToolSensorNotMapped",
    "UnknownTimingRef",
    "TimingTagSensor",
    "RuleSensor",
    "RuleTool",
    "DiscriminatorSensor",
    "ExpectedSensor",
    "ExpectedTiming",
}
_ORDER_CODES = {"OrderError"}


@dataclass(frozen=True)
class ProcessDescription:
    stations: tuple[Station, ...]
    transitions: tuple[Transition, ...]
    timings: tuple[Timing, ...]
    sensor_to_transition: tuple[SensorBinding, ...]
    sensor_to_tool: tuple[tuple[str, str], ...] = ()
    causal_rules: tuple[CausalRule, ...] = ()

    @property
    def station_count(self) -> int:
        return len(self.stations)

    @property
    def order(self) -> tuple[int, ...]:
        return tuple(s.index for s in self.stations)

    @cached_property
    def rotations(self) -> tuple[Rotation, ...]:
        n = self.station_count
        return tuple(Rotation(i, i, i % n + 1) for i in range(1, n + 1))

    @cached_property
    def _bindings(self) -> dict[str, SensorBinding]:
        return {b.sensor: b for b in self.sensor_to_transition}

    @cached_property
    def _transitions(self) -> dict[int, Transition]:
        return {t.id: t for t in self.transitions}

    @cached_property
    def _tools(self) -> dict[str, str]:
        return dict(self.sensor_to_tool)

    @cached_property
    def _timings(self) -> dict[str, Timing]:
        return {t.id: t for t in self.timings}

    def station(self, step: int) -> Station:
        for s in self.stations:
            if s.index == step:
                return s
        raise UnknownStep(step)

    def transitions_at(self, step: int) -> tuple[Transition, ...]:
        self.station(step)
        return tuple(t for t in self.transitions if t.station == step)

    def binding(self, sensor: str) -> SensorBinding:
        try:
            return self._bindings[sensor]
        except KeyError:
            raise UnknownSensor(sensor) from None

    def has_sensor(self, sensor: str) -> bool:
        return sensor in self._bindings

    def step_of_sensor(self, sensor: str) -> int:
        return self._transitions[self.binding(sensor).transition].station

    def timing(self, timing_id: str) -> Timing:
        return self._timings[timing_id]

    def timings_for_step(self, step: int) -> tuple[Timing, ...]:
        """Timings of the step's transitions followed by its outbound rotation."""
        ids = {t.id for t in self.transitions_at(step)}
        out = [t for t in self.timings if t.transition in ids]
        out += [t for t in self.timings if t.rotation == step]
        return tuple(out)

    def station_with_role(self, role: str) -> Optional[Station]:
        for s in self.stations:
            if s.role == role:
                return s
        return None

    @property
    def sensors(self) -> tuple[str, ...]:
        return tuple(sorted(self._bindings))


def sensors_for_step(m: ProcessDescription, step: int) -> tuple[str, ...]:
    """Sensors mapped onto a transition of ``step``, sorted by id."""
    ids = {t.id for t in m.transitions_at(step)}
    return tuple(sorted(b.sensor for b in m.sensor_to_transition if b.transition in ids))


def tool_for_sensor(m: ProcessDescription, sensor: str) -> Optional[str]:
    m.binding(sensor)
    return m._tools.get(sensor)


def validate(m: ProcessDescription, expected=None) -> list[ValidationIssue]:
    """Check every process-description invariant; an empty list means valid.

    ``expected`` (an ExpectedValueSet) is optional; when given, its sensors
    and timing windows must refer to entries of ``m``.
    """
    issues: list[ValidationIssue] = []

    def add(code, subject, message):
        issues.append(ValidationIssue(code, str(subject), message))

    indices = [s.index for s in m.stations]
    if indices != list(range(1, len(indices) + 1)):
        add("OrderError", indices, "station indices must be 1..n, each once, in ascending order")
    station_ids = set(indices)

    seen_t: set[int] = set()
    for t in m.transitions:
        if t.id in seen_t:
            add("DuplicateTransition", t.id, "transition id declared twice")
        seen_t.add(t.id)
        if t.station not in station_ids:
            add("UnknownStation", t.id, f"transition refers to unknown station {t.station}")
        if t.from_state == t.to_state and not t.check:
            add("NoStateChange", t.id, "from == to requires the transition to be declared a check")

    for s in m.stations:
        if not s.is_eject and not any(t.station == s.index for t in m.transitions):
            add("EmptyStep", s.index, "only eject stations may have no transitions")

    seen_s: set[str] = set()
    for b in m.sensor_to_transition:
        if b.sensor in seen_s:
            add("DuplicateSensor", b.sensor, "sensor mapped onto more than one transition")
        seen_s.add(b.sensor)
        if b.transition not in seen_t:
            add("UnknownTransition", b.sensor, f"sensor mapped onto unknown transition {b.transition}")

    seen_w: set[str] = set()
    for sensor, tool in m.sensor_to_tool:
        if sensor in seen_w:
            add("DuplicateToolSensor", sensor, "sensor mapped onto more than one tool")
        seen_w.add(sensor)
        if sensor not in seen_s:
            add("ToolSensorNotMapped", sensor, f"sensor reports tool {tool!r} but is not mapped onto a transition")

    n_expected = len(m.transitions) + len(m.rotations)
    if len(m.timings) != n_expected:
        add("TimingArity", f"expected={n_expected}, actual={len(m.timings)}",
            f"need one timing per transition and rotation ({n_expected}), got {len(m.timings)}")
    rotation_ids = {r.id for r in m.rotations}
    seen_timing: set[str] = set()
    for tm in m.timings:
        if tm.id in seen_timing:
            add("DuplicateTiming", tm.id, "timing declared twice")
        seen_timing.add(tm.id)
        if tm.transition is not None and tm.transition not in seen_t:
            add("UnknownTimingRef", tm.id, "timing refers to unknown transition")
            continue
        if tm.rotation is not None and tm.rotation not in rotation_ids:
            add("UnknownTimingRef", tm.id, "timing refers to unknown rotation")
            continue
        home = m._transitions[tm.transition].station if tm.transition is not None else tm.rotation
        for tag in (tm.start, tm.complete):
            if tag is None:
                continue
            if tag not in seen_s:
                add("TimingTagSensor", tm.id, f"timing tag {tag!r} is not a mapped sensor")
            elif tag in m._bindings and m._bindings[tag].transition in m._transitions and m.step_of_sensor(tag) != home:
                add("TimingTagStep", tm.id, f"timing tag {tag!r} belongs to another step")

    tools = set(m._tools.values())
    for i, rule in enumerate(m.causal_rules):
        subject = f"rule[{i}]"
        if rule.sensor not in seen_s:
            add("RuleSensor", subject, f"trigger sensor {rule.sensor!r} is not mapped")
            continue
        trigger_step = m.step_of_sensor(rule.sensor) if m._bindings[rule.sensor].transition in m._transitions else None
        for c in rule.candidates:
            if c.tool is not None and c.tool not in tools:
                add("RuleTool", subject, f"candidate tool {c.tool!r} is not reported by any sensor")
            if c.step not in station_ids:
                add("UnknownStation", subject, f"candidate step {c.step} does not exist")
        for c, d in rule.discriminators:
            if d.sensor not in seen_s:
                add("DiscriminatorSensor", subject, f"discriminator sensor {d.sensor!r} is not mapped")
            elif trigger_step is not None and m.step_of_sensor(d.sensor) >= trigger_step:
                add("DiscriminatorOrder", subject,
                    f"discriminator {d.sensor!r} must belong to a step before {trigger_step}")
            if d.lower > d.upper:
                add("EmptyInterval", subject, f"discriminator interval for {c.name!r} is empty")

    if expected is not None:
        for sensor in expected.values:
            if sensor not in seen_s:
                add("ExpectedSensor", sensor, "expected value for a sensor that is not mapped")
        for tid in expected.timing_windows:
            if tid not in seen_timing:
                add("ExpectedTiming", tid, "timing window for an unknown timing")
    return issues


def raise_for_issues(issues: list[ValidationIssue]) -> None:
    if not issues:
        return
    first = issues[0]
    text = "; ".join(str(i) for i in issues)
    if first.code in _ORDER_CODES:
        raise OrderError(text)
    if first.code in _REFERENCE_CODES:
        raise DanglingReferenceError(text)
    raise SchemaError(text)


def read_document(source: Union[Mapping[str, Any], str, Path]) -> dict:
    """Return the parsed, schema-checked JSON document."""
    if isinstance(source, Mapping):
        doc = dict(source)
    else:
        try:
            doc = json.loads(Path(source).read_text())
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{source}: not valid JSON ({exc})") from exc
    try:
        jsonschema.validate(doc, DOCUMENT_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise SchemaError(f"{where}: {exc.message}") from exc
    return doc


def process_description_from_document(doc: Mapping[str, Any]) -> ProcessDescription:
    stations = tuple(Station(s["index"], s["role"], s.get("name", "")) for s in doc["stations"])
    transitions = tuple(
        Transition(t["id"], t["station"], t["from"], t["to"], t.get("name", ""), t.get("check", False))
        for t in doc["transitions"]
    )
    timings = tuple(
        Timing(t.get("transition"), t.get("rotation"), float(t["duration"]), t.get("start"), t.get("complete"))
        for t in doc["timings"]
    )
    bindings = tuple(
        SensorBinding(sensor, b["transition"], b.get("label", ""), b.get("kind", "measure"), float(b.get("offset", 0.0)))
        for sensor, b in doc["sensor_to_transition"].items()
    )
    tools = tuple(doc.get("sensor_to_tool", {}).items())
    rules = []
    for r in doc.get("causal_rules", []):
        cands, discs = [], []
        for c in r["candidates"]:
            cause = CandidateCause(c["step"], c.get("tool"), c.get("description"))
            cands.append(cause)
            if "discriminator" in c:
                d = c["discriminator"]
                discs.append((cause, Discriminator(d["sensor"], float(d["lower"]), float(d["upper"]))))
        rules.append(CausalRule(r["trigger"]["sensor"], r["trigger"]["direction"], tuple(cands), tuple(discs)))
    return ProcessDescription(stations, transitions, timings, bindings, tools, tuple(rules))


def load_process_description(source: Union[Mapping[str, Any], str, Path]) -> ProcessDescription:
    """Load and validate a process description from a JSON file path or a parsed document.

    Raises SchemaError, DanglingReferenceError or OrderError.
    """
    doc = read_document(source)
    m = process_description_from_document(doc)
    raise_for_issues(validate(m))
    return m


def serialize_process_description(m: ProcessDescription, expected=None) -> dict:
    doc: dict[str, Any] = {
        "schema_version": SCHEMA_VERSION,
        "stations": [{"index": s.index, "name": s.name, "role": s.role} for s in m.stations],
        "transitions": [
            {"id": t.id, "station": t.station, "from": t.from_state, "to": t.to_state, "name": t.name, "check": t.check}
            for t in m.transitions
        ],
        "timings": [],
        "sensor_to_transition": {
            b.sensor: {"transition": b.transition, "label": b.label, "kind": b.kind, "offset": b.offset}
            for b in m.sensor_to_transition
        },
        "sensor_to_tool": dict(m.sensor_to_tool),
        "causal_rules": [],
    }
    for tm in m.timings:
        entry: dict[str, Any] = {"transition": tm.transition} if tm.transition is not None else {"rotation": tm.rotation}
        entry["duration"] = tm.duration
        if tm.start is not None:
            entry["start"] = tm.start
        if tm.complete is not None:
            entry["complete"] = tm.complete
        doc["timings"].append(entry)
    for rule in m.causal_rules:
        cands = []
        for c in rule.candidates:
            entry = {"tool": c.tool} if c.tool is not None else {"description": c.description}
            entry["step"] = c.step
            d = rule.discriminator_for(c)
            if d is not None:
                entry["discriminator"] = {"sensor": d.sensor, "lower": d.lower, "upper": d.upper}
            cands.append(entry)
        doc["causal_rules"].append({"trigger": {"sensor": rule.sensor, "direction": rule.direction}, "candidates": cands})
    if expected is not None:
        doc["expected_values"] = expected.to_document(m)
    return doc


def reference_config_path() -> Path:
    return Path(__file__).parent / "data" / "reference_rim.json"
