"""Step-wise and multi-step root-cause diagnosis of a Not-OK product.

Both algorithms walk the product's production steps backwards from the
station that flagged the product, check each step's readings against the
expected values and name the tool (or upstream product fault) behind the
first inconsistency they can explain.  The multi-step variant remembers
faults with several possible causes and settles them with evidence from
earlier steps.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Union

from .constraints import (
    MISSING,
    ExpectedValueSet,
    MemoryEntry,
    TraceEvent,
    Violation,
    ViolationKind,
    build_step_formula,
    check_sat,
    check_sat_with_memory,
    extract_conflict_names,
)
from .errors import TraceIncomplete, UnknownSensorInTrace
from .model import CandidateCause, ProcessDescription, sensors_for_step, tool_for_sensor
from .trace import Trace


class Outcome(str, enum.Enum):
    OK = "ok"
    TIMING_FAULT = "timing_fault"
    DEFINITE_CAUSE = "definite_cause"
    AMBIGUOUS = "ambiguous"
    UNEXPLAINED_VIOLATION = "unexplained_violation"


class FaultClass(str, enum.Enum):
    TIMING = "timing_fault"
    VALUE = "value_fault"


class Algorithm(str, enum.Enum):
    STEPWISE = "stepwise"
    MULTISTEP = "multistep"


class FinalKind(str, enum.Enum):
    RESOLVED = "resolved"
    MULTIPLE_CANDIDATES = "multiple_candidates"
    NO_CAUSE_FOUND = "no_cause_found"


@dataclass(frozen=True)
class StepReport:
    step: int
    outcome: Outcome
    subject: Optional[str] = None
    causes: tuple[CandidateCause, ...] = ()
    violations: tuple[Violation, ...] = ()
    evidence_step: Optional[int] = None  # earlier step that settled an ambiguity

    def __post_init__(self):
        if self.outcome is Outcome.AMBIGUOUS and len(self.causes) < 2:
            raise ValueError("an ambiguous step report needs at least two candidates")

    def to_dict(self) -> dict:
        d = {"step": self.step, "outcome": self.outcome.value}
        if self.subject is not None:
            d["subject"] = self.subject
        if self.causes:
            d["causes"] = [c.to_dict() for c in self.causes]
        if self.violations:
            d["violations"] = [v.to_dict() for v in self.violations]
        if self.evidence_step is not None:
            d["evidence_step"] = self.evidence_step
        return d


@dataclass(frozen=True)
class Final:
    kind: FinalKind
    causes: tuple[CandidateCause, ...] = ()

    @property
    def cause(self) -> Optional[CandidateCause]:
        return self.causes[0] if self.kind is FinalKind.RESOLVED else None


@dataclass(frozen=True)
class DiagnosisReport:
    algorithm: Algorithm
    trigger_station: int
    trigger_sensors: tuple[str, ...]
    steps: tuple[StepReport, ...]
    final: Final

    @property
    def chain(self) -> tuple[int, ...]:
        """Trigger station followed by every step that reported something."""
        out = [self.trigger_station]
        for s in self.steps:
            if s.outcome is not Outcome.OK and s.step not in out:
                out.append(s.step)
        return tuple(out)

    def to_dict(self) -> dict:
        return {
            "algorithm": self.algorithm.value,
            "trigger": {"station": self.trigger_station, "sensors": list(self.trigger_sensors)},
            "steps": [s.to_dict() for s in self.steps],
            "chain": list(self.chain),
            "final": {"kind": self.final.kind.value, "causes": [c.to_dict() for c in self.final.causes]},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def slice_trace_by_step(m: ProcessDescription, k: Union[Trace, Iterable[TraceEvent]]) -> dict[int, list[TraceEvent]]:
    events = k.events if isinstance(k, Trace) else k
    slices: dict[int, list[TraceEvent]] = {s.index: [] for s in m.stations}
    for ev in events:
        if not m.has_sensor(ev.sensor):
            raise UnknownSensorInTrace(ev.sensor)
        slices[m.step_of_sensor(ev.sensor)].append(ev)
    for evs in slices.values():
        evs.sort(key=lambda ev: ev.time)
    return slices


def classify_violation(v: Violation) -> FaultClass:
    return FaultClass.TIMING if v.kind is ViolationKind.TIMING else FaultClass.VALUE


def candidate_causes(v: Violation, m: ProcessDescription) -> list[CandidateCause]:
    """Possible causes of a value violation, from the rule base, W, or the sensor itself."""
    causes: list[CandidateCause] = []
    for rule in m.causal_rules:
        if rule.matches(v.subject, v.direction):
            causes.extend(c for c in rule.candidates if c not in causes)
    if causes:
        return causes
    step = m.step_of_sensor(v.subject)
    tool = tool_for_sensor(m, v.subject)
    if tool is not None:
        return [CandidateCause(step, tool=tool)]
    return [CandidateCause(step, description=v.subject)]


def timing_cause(v: Violation, m: ProcessDescription) -> CandidateCause:
    """The tool driving a late or early transition, found through its tagged sensors."""
    t = m.timing(v.subject)
    if t.transition is not None:
        step = next(tr.station for tr in m.transitions if tr.id == t.transition)
    else:
        step = t.rotation
    for tag in (t.complete, t.start):
        if tag is not None and tool_for_sensor(m, tag) is not None:
            return CandidateCause(step, tool=tool_for_sensor(m, tag))
    return CandidateCause(step, description=v.subject)


def _discriminators(v: Violation, m: ProcessDescription):
    out = []
    for rule in m.causal_rules:
        if rule.matches(v.subject, v.direction):
            out.extend(rule.discriminators)
    return tuple(out)


def _explain_values(violations: Sequence[Violation], m: ProcessDescription) -> list[CandidateCause]:
    # a cause shared by every symptom of the step wins; otherwise keep them all
    per_violation = [candidate_causes(v, m) for v in violations]
    shared = [c for c in per_violation[0] if all(c in other for other in per_violation[1:])]
    if shared:
        return shared
    union: list[CandidateCause] = []
    for causes in per_violation:
        union.extend(c for c in causes if c not in union)
    return union


def _check_trigger(m: ProcessDescription, slices: dict[int, list[TraceEvent]], trigger: int) -> tuple[str, ...]:
    m.station(trigger)
    sensors = sensors_for_step(m, trigger)
    if sensors and not slices[trigger]:
        raise TraceIncomplete(f"trace has no reading from trigger station {trigger} ({', '.join(sensors)})")
    return sensors


def _diagnose(m, e, k, trigger, algorithm: Algorithm) -> DiagnosisReport:
    slices = slice_trace_by_step(m, k)
    trigger_sensors = _check_trigger(m, slices, trigger)
    multistep = algorithm is Algorithm.MULTISTEP
    reports: list[StepReport] = []
    memory: list[MemoryEntry] = []

    for step in range(trigger - 1, 0, -1):
        events = slices[step]
        result = check_sat(build_step_formula(e, m, step), events)
        if result.sat:
            reports.append(StepReport(step, Outcome.OK))
        else:
            timing = [v for v in result.violations if classify_violation(v) is FaultClass.TIMING]
            values = [v for v in result.violations if classify_violation(v) is FaultClass.VALUE]
            names = extract_conflict_names(result)
            if timing:
                first = min(timing, key=lambda v: v.subject)
                reports.append(StepReport(step, Outcome.TIMING_FAULT, first.subject,
                                          (timing_cause(first, m),), result.violations))
            elif m.station(step).role == "qc":
                # quality control only says which characteristic is off, never why
                reports.append(StepReport(step, Outcome.UNEXPLAINED_VIOLATION, names[0], (), result.violations))
            else:
                causes = tuple(_explain_values(values, m))
                if len(causes) == 1:
                    reports.append(StepReport(step, Outcome.DEFINITE_CAUSE, names[0], causes, result.violations))
                else:
                    reports.append(StepReport(step, Outcome.AMBIGUOUS, names[0], causes, result.violations))
                    if multistep:
                        discs = tuple(d for v in values for d in _discriminators(v, m))
                        memory.append(MemoryEntry(step, values[0], causes, discs))

        if multistep and memory:
            resolution = check_sat_with_memory(e, m, events, memory, step=step)
            for conf in resolution.confirmations:
                memory.remove(conf.entry)
                reports.append(StepReport(conf.entry.origin, Outcome.DEFINITE_CAUSE, conf.entry.trigger.subject,
                                          (conf.candidate,), (), evidence_step=step))

    return DiagnosisReport(algorithm, trigger, trigger_sensors, tuple(reports), _final(reports, memory, multistep))


def _final(reports: Sequence[StepReport], memory: Sequence[MemoryEntry], multistep: bool) -> Final:
    settled = {r.step for r in reports if r.evidence_step is not None}
    definite: list[CandidateCause] = []
    open_candidates: list[CandidateCause] = []
    for r in reports:
        if r.outcome in (Outcome.DEFINITE_CAUSE, Outcome.TIMING_FAULT):
            definite.extend(c for c in r.causes if c not in definite)
        elif r.outcome is Outcome.AMBIGUOUS and not (multistep and r.step in settled):
            open_candidates.extend(c for c in r.causes if c not in open_candidates)
    if open_candidates:
        merged = definite + [c for c in open_candidates if c not in definite]
        return Final(FinalKind.MULTIPLE_CANDIDATES, tuple(merged))
    if len(definite) == 1:
        return Final(FinalKind.RESOLVED, tuple(definite))
    if definite:
        return Final(FinalKind.MULTIPLE_CANDIDATES, tuple(definite))
    return Final(FinalKind.NO_CAUSE_FOUND)


def diagnose_stepwise(m: ProcessDescription, e: ExpectedValueSet, k, trigger: int) -> DiagnosisReport:
    """Report every inconsistent step, listing all candidates when a step is ambiguous."""
    return _diagnose(m, e, k, trigger, Algorithm.STEPWISE)


def diagnose_multistep(m: ProcessDescription, e: ExpectedValueSet, k, trigger: int) -> DiagnosisReport:
    """Like :func:`diagnose_stepwise`, but ambiguous faults are held in memory and
    settled by discriminating evidence from earlier steps."""
    return _diagnose(m, e, k, trigger, Algorithm.MULTISTEP)


def _fmt(x: Optional[float]) -> str:
    return "missing" if x is MISSING else f"{x:g}"


def _violation_line(v: Violation) -> str:
    return f"  {v.subject} = {_fmt(v.observed)}, admissible [{_fmt(v.lower)}, {_fmt(v.upper)}]"


_TITLES = {Algorithm.STEPWISE: "Step-wise diagnosis", Algorithm.MULTISTEP: "Multi-step diagnosis"}
_FINAL_TEXT = {
    FinalKind.RESOLVED: "Diagnosis: {}",
    FinalKind.MULTIPLE_CANDIDATES: "Diagnosis: multiple candidates: {}",
    FinalKind.NO_CAUSE_FOUND: "Diagnosis: no cause found",
}


def render_report(r: DiagnosisReport) -> str:
    sensors = ", ".join(r.trigger_sensors)
    lines = [f"{_TITLES[r.algorithm]} triggered by station {r.trigger_station}" + (f" ({sensors})" if sensors else "")]
    for s in r.steps:
        n = s.step
        if s.outcome is Outcome.OK:
            lines.append(f"Step {n}: OK")
        elif s.outcome is Outcome.TIMING_FAULT:
            lines.append(f"Error in step {n}: Timing fault")
            lines.extend(_violation_line(v) for v in s.violations if v.kind is ViolationKind.TIMING)
            lines.append(f"Most likely cause: {s.causes[0].name}")
        elif s.outcome is Outcome.UNEXPLAINED_VIOLATION:
            lines.append(f"Anomaly detected in step {n}: {s.subject}")
            lines.extend(_violation_line(v) for v in s.violations)
        elif s.outcome is Outcome.AMBIGUOUS:
            lines.append(f"Fault found in step {n}")
            lines.extend(_violation_line(v) for v in s.violations)
            lines.append("More than one explanation possible")
            lines.extend(f"  - {c.name}" for c in s.causes)
        elif s.evidence_step is not None:
            lines.append("Explanation for fault in earlier step found!")
            lines.append(f"Error in step {n}: Fault found")
            lines.append(f"Most likely cause: {s.causes[0].name}")
            lines.append(f"  confirmed by evidence from step {s.evidence_step}")
        else:
            lines.append(f"Error in step {n}: Fault found")
            lines.extend(_violation_line(v) for v in s.violations)
            lines.append(f"Most likely cause: {s.causes[0].name}")
    lines.append("Chain: " + " -> ".join(str(n) for n in r.chain))
    lines.append(_FINAL_TEXT[r.final.kind].format(", ".join(c.name for c in r.final.causes)))
    return "\n".join(lines) + "\n"
