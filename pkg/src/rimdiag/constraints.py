"""Consistency checking of measured sensor values against expected ones.

A production step is turned into a conjunction of interval constraints: one
per expected sensor reading and one per timing window.  Deciding it is a
matter of direct interval evaluation, which is what :func:`check_sat` does.
:func:`check_sat_z3` decides the same formula with an SMT solver and reads
the conflicts off unsat cores; it needs the optional ``z3-solver`` package.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

from .errors import NotUnsat
from .model import CandidateCause, Discriminator, ProcessDescription, sensors_for_step

MISSING = None  # observed value of a constrained sensor that never reported


@dataclass(frozen=True)
class ExpectedValue:
    sensor: str
    nominal: float
    tol_below: float = 0.0
    tol_above: float = 0.0

    def __post_init__(self):
        if self.tol_below < 0 or self.tol_above < 0:
            raise ValueError(f"{self.sensor}: tolerances must be non-negative")

    @property
    def lower(self) -> float:
        return self.nominal - self.tol_below

    @property
    def upper(self) -> float:
        return self.nominal + self.tol_above

    @property
    def interval(self) -> tuple[float, float]:
        return (self.lower, self.upper)

    def contains(self, value: float) -> bool:
        return self.lower <= value <= self.upper


@dataclass(frozen=True)
class TimingWindow:
    timing: str
    nominal: float
    tol_below: float = 0.0
    tol_above: float = 0.0

    @property
    def lower(self) -> float:
        return self.nominal - self.tol_below

    @property
    def upper(self) -> float:
        return self.nominal + self.tol_above


@dataclass(frozen=True)
class ExpectedValueSet:
    values: Mapping[str, ExpectedValue]
    timing_windows: Mapping[str, TimingWindow] = field(default_factory=dict)

    @classmethod
    def from_document(cls, section: Mapping, m: ProcessDescription) -> "ExpectedValueSet":
        """Build from the ``expected_values`` part of a config document.

        Timing tolerances are combined with the nominal durations held by ``m``.
        """
        values = {
            s: ExpectedValue(s, float(v["nominal"]), float(v["tol_below"]), float(v["tol_above"]))
            for s, v in section.get("sensors", {}).items()
        }
        windows = {}
        known = {t.id: t for t in m.timings}
        for tid, v in section.get("timings", {}).items():
            nominal = float(v["nominal"]) if "nominal" in v else (known[tid].duration if tid in known else 0.0)
            windows[tid] = TimingWindow(tid, nominal, float(v["tol_below"]), float(v["tol_above"]))
        return cls(values, windows)

    def to_document(self, m: ProcessDescription) -> dict:
        known = {t.id: t for t in m.timings}
        timings = {}
        for tid, w in self.timing_windows.items():
            entry = {"tol_below": w.tol_below, "tol_above": w.tol_above}
            if tid not in known or known[tid].duration != w.nominal:
                entry["nominal"] = w.nominal
            timings[tid] = entry
        return {
            "sensors": {
                s: {"nominal": v.nominal, "tol_below": v.tol_below, "tol_above": v.tol_above}
                for s, v in self.values.items()
            },
            "timings": timings,
        }


@dataclass(frozen=True, order=True)
class TraceEvent:
    time: float
    sensor: str
    value: float

    def __post_init__(self):
        if self.time < 0:
            raise ValueError(f"negative internal time {self.time}")


@dataclass(frozen=True)
class ValueConstraint:
    sensor: str
    lower: float
    upper: float


@dataclass(frozen=True)
class TimingConstraint:
    timing: str
    lower: float
    upper: float
    start: Optional[str] = None
    complete: Optional[str] = None

    @property
    def observable(self) -> bool:
        return self.start is not None and self.complete is not None


@dataclass(frozen=True)
class StepFormula:
    step: int
    value_constraints: tuple[ValueConstraint, ...]
    timing_constraints: tuple[TimingConstraint, ...]


class ViolationKind(str, enum.Enum):
    VALUE = "value"
    TIMING = "timing"


@dataclass(frozen=True)
class Violation:
    kind: ViolationKind
    subject: str
    observed: Optional[float]
    lower: float
    upper: float

    @property
    def admissible(self) -> tuple[float, float]:
        return (self.lower, self.upper)

    @property
    def direction(self) -> str:
        if self.observed is MISSING:
            return "missing"
        return "below" if self.observed < self.lower else "above"

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "subject": self.subject,
            "observed": self.observed,
            "admissible": [self.lower, self.upper],
        }


@dataclass(frozen=True)
class SatResult:
    violations: tuple[Violation, ...] = ()

    @property
    def sat(self) -> bool:
        return not self.violations

    @property
    def status(self) -> str:
        return "sat" if self.sat else "unsat"


def build_step_formula(e: ExpectedValueSet, m: ProcessDescription, step: int) -> StepFormula:
    sensors = sensors_for_step(m, step)  # raises UnknownStep
    timings = m.timings_for_step(step)
    values = tuple(
        ValueConstraint(s, e.values[s].lower, e.values[s].upper) for s in sensors if s in e.values
    )
    windows = tuple(
        TimingConstraint(t.id, e.timing_windows[t.id].lower, e.timing_windows[t.id].upper, t.start, t.complete)
        for t in timings
        if t.id in e.timing_windows
    )
    return StepFormula(step, values, windows)


def derive_duration(c: TimingConstraint, events: Sequence[TraceEvent]) -> Optional[float]:
    """Time from the first start-sensor event to the next complete-sensor event.

    Returns None when the constraint carries no tags or either event is absent.
    """
    if not c.observable:
        return None
    ordered = sorted(events, key=lambda ev: ev.time)
    for i, ev in enumerate(ordered):
        if ev.sensor == c.start:
            for later in ordered[i + 1:]:
                if later.sensor == c.complete:
                    return later.time - ev.time
            return None
    return None


def check_sat(f: StepFormula, k: Sequence[TraceEvent]) -> SatResult:
    """Evaluate every constraint of ``f`` against the step's events.

    A value constraint holds if any reading of its sensor lies in the
    interval; when it fails the last reading (or MISSING) is reported.  All
    violated constraints are returned, value constraints first.
    """
    ordered = sorted(k, key=lambda ev: ev.time)
    readings: dict[str, list[float]] = {}
    for ev in ordered:
        readings.setdefault(ev.sensor, []).append(ev.value)

    violations = []
    for c in f.value_constraints:
        seen = readings.get(c.sensor)
        if not seen:
            violations.append(Violation(ViolationKind.VALUE, c.sensor, MISSING, c.lower, c.upper))
        elif not any(c.lower <= v <= c.upper for v in seen):
            violations.append(Violation(ViolationKind.VALUE, c.sensor, seen[-1], c.lower, c.upper))
    for c in f.timing_constraints:
        d = derive_duration(c, ordered)
        if d is not None and not c.lower <= d <= c.upper:
            violations.append(Violation(ViolationKind.TIMING, c.timing, d, c.lower, c.upper))
    return SatResult(tuple(violations))


def extract_conflict_names(r: SatResult) -> list[str]:
    """Names of the violated constraints: sensors first, then timings, each sorted."""
    if r.sat:
        raise NotUnsat("no conflict in a satisfiable result")
    values = sorted({v.subject for v in r.violations if v.kind is ViolationKind.VALUE})
    timings = sorted({v.subject for v in r.violations if v.kind is ViolationKind.TIMING})
    return values + timings


def check_sat_z3(f: StepFormula, k: Sequence[TraceEvent]) -> SatResult:
    """Same contract as :func:`check_sat`, decided by z3.

    Each constraint is asserted under its own tracking literal.  Unsat cores
    are peeled off until the remainder is satisfiable, so every violated
    constraint is found, not just the first core.
    """
    import z3

    ordered = sorted(k, key=lambda ev: ev.time)
    tracked: dict[str, tuple[object, Violation]] = {}
    solver = z3.Solver()
    solver.set(unsat_core=True)

    def q(x: float):
        return z3.RealVal(repr(float(x)))

    for c in f.value_constraints:
        seen = [ev.value for ev in ordered if ev.sensor == c.sensor]
        x = z3.Real(f"v:{c.sensor}")
        # the sensor's value is one of its readings and lies inside the interval
        body = z3.And(z3.Or([x == q(v) for v in seen]) if seen else z3.BoolVal(False),
                      q(c.lower) <= x, x <= q(c.upper))
        lit = z3.Bool(f"c:v:{c.sensor}")
        observed = seen[-1] if seen else MISSING
        tracked[str(lit)] = (lit, Violation(ViolationKind.VALUE, c.sensor, observed, c.lower, c.upper))
        solver.add(z3.Implies(lit, body))
    for c in f.timing_constraints:
        d = derive_duration(c, ordered)
        if d is None:
            continue
        x = z3.Real(f"t:{c.timing}")
        lit = z3.Bool(f"c:t:{c.timing}")
        tracked[str(lit)] = (lit, Violation(ViolationKind.TIMING, c.timing, d, c.lower, c.upper))
        solver.add(z3.Implies(lit, z3.And(x == q(d), q(c.lower) <= x, x <= q(c.upper))))

    active = dict(tracked)
    failed: set[str] = set()
    while active:
        if solver.check([lit for lit, _ in active.values()]) == z3.sat:
            break
        core = {str(lit) for lit in solver.unsat_core()}
        failed |= core
        for name in core:
            active.pop(name, None)
    order = [name for name in tracked if name in failed]
    return SatResult(tuple(tracked[name][1] for name in order))


@dataclass(frozen=True)
class MemoryEntry:
    """An ambiguous fault remembered until an earlier step discriminates it."""

    origin: int
    trigger: Violation
    candidates: tuple[CandidateCause, ...]
    discriminators: tuple[tuple[CandidateCause, Discriminator], ...] = ()

    def discriminator_for(self, cause: CandidateCause) -> Optional[Discriminator]:
        for c, d in self.discriminators:
            if c == cause:
                return d
        return None


@dataclass(frozen=True)
class Confirmation:
    entry: MemoryEntry
    candidate: CandidateCause


@dataclass(frozen=True)
class MemoryResolution:
    confirmations: tuple[Confirmation, ...] = ()

    @property
    def confirmed(self) -> bool:
        return bool(self.confirmations)

    @property
    def status(self) -> str:
        return "confirmed" if self.confirmed else "still_ambiguous"


def _step_of_events(m: ProcessDescription, k: Iterable[TraceEvent]) -> Optional[int]:
    for ev in k:
        if m.has_sensor(ev.sensor):
            return m.step_of_sensor(ev.sensor)
    return None


def check_sat_with_memory(
    e: ExpectedValueSet,
    m: ProcessDescription,
    k: Sequence[TraceEvent],
    z: Sequence[MemoryEntry],
    step: Optional[int] = None,
) -> MemoryResolution:
    """Try to settle remembered ambiguities with the evidence of one earlier step.

    An entry is confirmed for candidate c when c's discriminator is the only
    one that fires in this step and the tool sensors of every rival candidate
    located in this step read consistently.  ``z`` is not modified.
    """
    if step is None:
        step = _step_of_events(m, k)
    if not z or step is None:
        return MemoryResolution()

    here = set(sensors_for_step(m, step))
    tools = dict(m.sensor_to_tool)
    confirmations = []
    for entry in z:
        if step >= entry.origin:
            continue
        firing = []
        for cand in entry.candidates:
            d = entry.discriminator_for(cand)
            if d is None or d.sensor not in here:
                continue
            if d.fires(ev.value for ev in k if ev.sensor == d.sensor):
                firing.append(cand)
        if len(firing) != 1:
            continue
        winner = firing[0]
        rival_sensors = sorted(
            s for s in here if s in e.values and any(tools.get(s) == r.tool for r in entry.candidates
                                                     if r != winner and r.tool is not None)
        )
        rivals_ok = check_sat(
            StepFormula(step, tuple(ValueConstraint(s, e.values[s].lower, e.values[s].upper) for s in rival_sensors), ()),
            [ev for ev in k if ev.sensor in rival_sensors],
        ).sat
        if rivals_ok:
            confirmations.append(Confirmation(entry, winner))
    return MemoryResolution(tuple(confirmations))
