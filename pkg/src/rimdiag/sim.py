"""Deterministic simulator of the reference eight-station rotary indexing machine.

Two models share one per-station event generator:

* :func:`simulate_product_run` follows a single product through every
  station once, stamping events with internal time (0 on entering step 1).
* :func:`simulate_machine` runs the whole table, every station working on a
  different product in the same cycle, and writes one merged machine log.
  :func:`demux_log` recovers per-product traces from it.

Seeded randomness only jitters readings and durations inside half of their
tolerance band; faults are injected explicitly through :class:`FaultSpec`.
"""

from __future__ import annotations

import datetime as _dt
import enum
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .constraints import ExpectedValueSet, TraceEvent
from .errors import InvalidFault, MalformedLog
from .model import (
    ProcessDescription,
    SensorBinding,
    read_document,
    process_description_from_document,
    raise_for_issues,
    reference_config_path,
    sensors_for_step,
    validate,
)
from .trace import OK, Trace, Verdict

# sensors of the reference machine that the fault roster acts on
JACK_POSITION = "st4.jack_cylinder.position"
PRESSURE = "st4.pressure"
FEEDER_POSITION = "st3.feeder.position"
TIGHTNESS_PROBE = "st6.tightness_probe"
NOK_EJECT = "st8.nok_eject"
JACK_TIMING = "T4"

PRESSURE_DROP = 1.1  # pressure loss when part 2 is not pressed home
RETRACTED = 0.0  # position reported when a timed tool starts its stroke
DEFAULT_DWELL = 2.0
DEFAULT_WALL_CLOCK = _dt.datetime(2023, 4, 27, 11, 18, 58)
VERDICT_OFFSET = 0.5
_DIGITS = 9


class FaultKind(str, enum.Enum):
    NONE = "none"
    TIMING_JACK_CYLINDER = "timing-jack-cylinder"
    PART_WRONG_POSITION = "part-wrong-position"
    PRESSURE_SENSOR_BROKEN = "pressure-sensor-broken"
    JACK_CYLINDER_BROKEN = "jack-cylinder-broken"
    PART_BROKEN = "part-broken"

    @classmethod
    def parse(cls, text: str) -> "FaultKind":
        key = "-".join(text.strip().lower().replace("_", " ").split())
        for kind in cls:
            if key in (kind.value, kind.name.lower().replace("_", "-"), kind.label.lower().replace(" ", "-")):
                return kind
        raise InvalidFault(f"unknown fault kind {text!r}; choose from {', '.join(k.value for k in cls)}")

    @property
    def label(self) -> str:
        return _LABELS[self]


_LABELS = {
    FaultKind.NONE: "None",
    FaultKind.TIMING_JACK_CYLINDER: "Timing Jack Cylinder",
    FaultKind.PART_WRONG_POSITION: "Part in Wrong Position",
    FaultKind.PRESSURE_SENSOR_BROKEN: "Pressure Sensor Broken",
    FaultKind.JACK_CYLINDER_BROKEN: "Jack Cylinder Broken",
    FaultKind.PART_BROKEN: "Part Broken",
}


@dataclass(frozen=True)
class FaultSpec:
    kind: FaultKind = FaultKind.NONE
    magnitude: Optional[float] = None
    target_product: Optional[int] = None

    @classmethod
    def none(cls) -> "FaultSpec":
        return cls(FaultKind.NONE)


NO_FAULT = FaultSpec()


@dataclass(frozen=True)
class MachineConfig:
    process: ProcessDescription
    expected: ExpectedValueSet
    dwell: float = DEFAULT_DWELL

    @property
    def cycle_time(self) -> float:
        return self.dwell + max(t.duration for t in self.process.timings if t.rotation is not None)

    def nominal_value(self, sensor: str) -> float:
        ev = self.expected.values.get(sensor)
        return ev.nominal if ev is not None else 0.0


def load_machine_config(source=None, dwell: float = DEFAULT_DWELL) -> MachineConfig:
    """Load process description and expected values from one config document."""
    doc = read_document(reference_config_path() if source is None else source)
    m = process_description_from_document(doc)
    e = ExpectedValueSet.from_document(doc.get("expected_values", {}), m)
    raise_for_issues(validate(m, e))
    return MachineConfig(m, e, dwell)


def _rng(seed: int, product: int, step: int) -> np.random.Generator:
    return np.random.default_rng([seed, product, step])


def _jitter(rng: np.random.Generator, nominal: float, tol_below: float, tol_above: float) -> float:
    return float(rng.uniform(nominal - 0.5 * tol_below, nominal + 0.5 * tol_above))


def _r(x: float) -> float:
    return round(x, _DIGITS)


def _check_fault(cfg: MachineConfig, fault: FaultSpec) -> None:
    kind, mag = fault.kind, fault.magnitude
    if mag is not None and not math.isfinite(mag):
        raise InvalidFault(f"{kind.value}: magnitude must be finite")
    if kind in (FaultKind.NONE, FaultKind.PART_BROKEN) and mag is not None:
        raise InvalidFault(f"{kind.value} takes no magnitude")
    if kind is FaultKind.NONE:
        return
    m = cfg.process
    for sensor in (JACK_POSITION, PRESSURE, FEEDER_POSITION, TIGHTNESS_PROBE):
        if not m.has_sensor(sensor):
            raise InvalidFault(f"{kind.value}: config has no sensor {sensor!r}")
    if mag is None:
        return
    if kind is FaultKind.TIMING_JACK_CYLINDER:
        w = cfg.expected.timing_windows[JACK_TIMING]
        duration = m.timing(JACK_TIMING).duration + mag
        if duration <= 0 or w.lower <= duration <= w.upper:
            raise InvalidFault(f"jack duration {duration:g} s must fall outside [{w.lower:g}, {w.upper:g}]")
    elif kind is FaultKind.PART_WRONG_POSITION:
        ev = cfg.expected.values[FEEDER_POSITION]
        if mag == 0 or not ev.contains(ev.nominal + mag):
            raise InvalidFault("feeder shift must be non-zero and inside the feeder's nominal tolerance")
    elif kind is FaultKind.JACK_CYLINDER_BROKEN:
        if mag >= cfg.expected.values[PRESSURE].lower:
            raise InvalidFault("pressure with a broken jack cylinder must lie below its tolerance band")


def _station_events(cfg: MachineConfig, step: int, fault: FaultSpec, rng: np.random.Generator) -> list[tuple[float, str, float]]:
    """(offset within dwell, sensor, value) for one product at one station."""
    m, e = cfg.process, cfg.expected
    kind = fault.kind
    sensors = sensors_for_step(m, step)
    timings = {t.transition: t for t in m.timings if t.transition is not None}
    out: list[tuple[float, str, float]] = []
    completion: dict[int, float] = {}

    # durations first, in transition order, so the random stream never depends on the fault
    for tr in m.transitions_at(step):
        t = timings.get(tr.id)
        if t is None or not t.observable:
            continue
        w = e.timing_windows.get(t.id)
        d = _jitter(rng, t.duration, w.tol_below, w.tol_above) if w else t.duration
        if kind is FaultKind.TIMING_JACK_CYLINDER and t.id == JACK_TIMING:
            d = t.duration + (0.35 if fault.magnitude is None else fault.magnitude)
        start = m.binding(t.start).offset
        out.append((start, t.start, RETRACTED))
        completion[tr.id] = start + d
        if not (kind is FaultKind.JACK_CYLINDER_BROKEN and t.complete == JACK_POSITION):
            out.append((start + d, t.complete, cfg.nominal_value(t.complete)))
    tagged = {t.start for t in timings.values() if t.observable} | {t.complete for t in timings.values() if t.observable}

    for sensor in sensors:
        b: SensorBinding = m.binding(sensor)
        ev = e.values.get(sensor)
        value = _jitter(rng, ev.nominal, ev.tol_below, ev.tol_above) if ev is not None else 0.0
        if sensor in tagged:
            continue
        offset = completion.get(b.transition, 0.0) + b.offset
        if sensor == PRESSURE:
            if kind in (FaultKind.PART_WRONG_POSITION, FaultKind.JACK_CYLINDER_BROKEN):
                value = ev.nominal - PRESSURE_DROP
                if kind is FaultKind.JACK_CYLINDER_BROKEN and fault.magnitude is not None:
                    value = fault.magnitude
            elif kind is FaultKind.PRESSURE_SENSOR_BROKEN:
                value = ev.nominal if fault.magnitude is None else fault.magnitude
        elif sensor == FEEDER_POSITION and kind is FaultKind.PART_WRONG_POSITION:
            value = ev.nominal + (0.8 if fault.magnitude is None else fault.magnitude)
        elif sensor == TIGHTNESS_PROBE and kind in _LEAKY:
            value = 0.0
        elif sensor == NOK_EJECT:
            value = 0.0 if kind is FaultKind.NONE else 1.0
        out.append((offset, sensor, value))

    for offset, sensor, _ in out:
        if offset >= cfg.dwell:
            raise InvalidFault(f"{sensor} would report at {offset:g} s, after the {cfg.dwell:g} s dwell")
    return [(_r(o), s, _r(v)) for o, s, v in out]


# faults after which the tightness test reads a leak
_LEAKY = (FaultKind.TIMING_JACK_CYLINDER, FaultKind.PART_WRONG_POSITION, FaultKind.JACK_CYLINDER_BROKEN)


def _verdict(cfg: MachineConfig, fault: FaultSpec) -> Verdict:
    if fault.kind is FaultKind.NONE:
        return OK
    return Verdict.not_ok(cfg.process.step_of_sensor(TIGHTNESS_PROBE))


def _eject_station(cfg: MachineConfig, verdict: Verdict) -> int:
    role = "eject_ok" if verdict.ok else "eject_nok"
    st = cfg.process.station_with_role(role)
    return st.index if st is not None else cfg.process.station_count


def simulate_product_run(cfg: MachineConfig, fault: FaultSpec = NO_FAULT, seed: int = 0, product_id: int = 1) -> Trace:
    """Model 1: one product, station by station, internal time from 0."""
    _check_fault(cfg, fault)
    cycle = cfg.cycle_time
    events = []
    for st in cfg.process.stations:
        base = (st.index - 1) * cycle
        rng = _rng(seed, product_id, st.index)
        for offset, sensor, value in _station_events(cfg, st.index, fault, rng):
            events.append(TraceEvent(_r(base + offset), sensor, value))
    events.sort(key=lambda ev: (ev.time, ev.sensor))
    return Trace(product_id, tuple(events), _verdict(cfg, fault))


@dataclass(frozen=True)
class IndexRecord:
    """The table finished indexing; cycle ``cycle`` starts at ``t``."""

    t: float
    cycle: int


@dataclass(frozen=True)
class EventRecord:
    t: float
    sensor: str
    value: float


@dataclass(frozen=True)
class VerdictRecord:
    t: float
    station: int  # eject station that sorted the product
    verdict: Verdict


MachineLog = tuple  # of IndexRecord | EventRecord | VerdictRecord


def _assign_faults(n_products: int, faults: Sequence[FaultSpec]) -> dict[int, FaultSpec]:
    assigned: dict[int, FaultSpec] = {}
    for i, f in enumerate(faults):
        p = f.target_product if f.target_product is not None else i + 1
        if not 1 <= p <= n_products:
            raise InvalidFault(f"fault targets product {p}, outside 1..{n_products}")
        if f.kind is FaultKind.NONE:
            continue
        if p in assigned:
            raise InvalidFault(f"product {p} has more than one fault")
        assigned[p] = f
    return assigned


def simulate_machine(
    cfg: MachineConfig, n_products: int, faults: Sequence[FaultSpec] = (), seed: int = 0
) -> tuple[list[Trace], MachineLog]:
    """Model 2: the whole table, all stations busy in every cycle.

    Product p enters station 1 in cycle p.  Returns the per-product traces
    as recorded and the merged machine log.
    """
    if n_products < 1:
        raise ValueError("n_products must be at least 1")
    assigned = _assign_faults(n_products, faults)
    for f in assigned.values():
        _check_fault(cfg, f)
    n = cfg.process.station_count
    cycle = cfg.cycle_time
    records: list = []
    per_product: dict[int, list[TraceEvent]] = {p: [] for p in range(1, n_products + 1)}
    verdicts = {p: _verdict(cfg, assigned.get(p, NO_FAULT)) for p in per_product}

    for c in range(1, n_products + n):
        start = _r((c - 1) * cycle)
        records.append(IndexRecord(start, c))
        batch = []
        for st in cfg.process.stations:
            p = c - st.index + 1
            if not 1 <= p <= n_products:
                continue  # empty nest
            fault = assigned.get(p, NO_FAULT)
            entry = _r((p - 1) * cycle)
            for offset, sensor, value in _station_events(cfg, st.index, fault, _rng(seed, p, st.index)):
                batch.append(EventRecord(_r(start + offset), sensor, value))
                per_product[p].append(TraceEvent(_r(start + offset - entry), sensor, value))
            if st.index == _eject_station(cfg, verdicts[p]):
                batch.append(VerdictRecord(_r(start + VERDICT_OFFSET), st.index, verdicts[p]))
        batch.sort(key=lambda r: (r.t, getattr(r, "sensor", "")))
        records.extend(batch)

    traces = [
        Trace(p, tuple(sorted(evs, key=lambda ev: (ev.time, ev.sensor))), verdicts[p])
        for p, evs in per_product.items()
    ]
    return traces, tuple(records)


def demux_log(log: MachineLog, cfg: MachineConfig) -> list[Trace]:
    """Split a machine log into per-product traces, rebasing time to each product's entry."""
    m = cfg.process
    cycle_start: dict[int, float] = {}
    current: Optional[int] = None
    events: dict[int, list[TraceEvent]] = {}
    verdicts: dict[int, Verdict] = {}

    def product_at(station: int, rec) -> int:
        if current is None:
            raise MalformedLog(f"record before the first index cycle: {rec}")
        p = current - station + 1
        if p < 1 or p not in cycle_start:
            raise MalformedLog(f"no product at station {station} in cycle {current}: {rec}")
        return p

    for rec in log:
        if isinstance(rec, IndexRecord):
            cycle_start[rec.cycle] = rec.t
            current = rec.cycle
        elif isinstance(rec, EventRecord):
            if not m.has_sensor(rec.sensor):
                raise MalformedLog(f"unknown sensor in log: {rec.sensor!r}")
            p = product_at(m.step_of_sensor(rec.sensor), rec)
            events.setdefault(p, []).append(TraceEvent(_r(rec.t - cycle_start[p]), rec.sensor, rec.value))
        elif isinstance(rec, VerdictRecord):
            verdicts[product_at(rec.station, rec)] = rec.verdict
        else:
            raise MalformedLog(f"unrecognised log record {rec!r}")

    traces = []
    for p in sorted(set(events) | set(verdicts)):
        if p not in verdicts:
            raise MalformedLog(f"product {p} was never sorted")
        evs = sorted(events.get(p, []), key=lambda ev: (ev.time, ev.sensor))
        traces.append(Trace(p, tuple(evs), verdicts[p]))
    return traces


def _fmt_value(value: float) -> str:
    return str(int(value)) if float(value).is_integer() else repr(float(value))


def render_log_line(ev: TraceEvent, wall_clock: _dt.datetime, m: Optional[ProcessDescription] = None) -> str:
    """``<ctime>   <sensor name> <value phrase>``, e.g. ``... pneumatic cylinder in position 0``."""
    if m is not None and m.has_sensor(ev.sensor):
        b = m.binding(ev.sensor)
        label, kind = b.label or ev.sensor, b.kind
    else:
        label, kind = ev.sensor, "measure"
    if kind == "position":
        phrase = f"{label} in position {_fmt_value(ev.value)}"
    elif kind == "probe":
        phrase = f"{label} reading {_fmt_value(ev.value)}"
    elif kind == "ack":
        phrase = f"{label} reported {_fmt_value(ev.value)}"
    else:
        phrase = f"{label} at {float(ev.value)!r}"
    return f"{wall_clock.ctime()}   {phrase}"


def render_machine_log(log: MachineLog, m: ProcessDescription, start: _dt.datetime = DEFAULT_WALL_CLOCK) -> str:
    lines = []
    for rec in log:
        clock = start + _dt.timedelta(seconds=rec.t)
        if isinstance(rec, IndexRecord):
            lines.append(f"{clock.ctime()}   indexing table in cycle {rec.cycle}")
        elif isinstance(rec, EventRecord):
            lines.append(render_log_line(TraceEvent(rec.t, rec.sensor, rec.value), clock, m))
        else:
            text = "OK" if rec.verdict.ok else f"Not-OK (detected at station {rec.verdict.station})"
            lines.append(f"{clock.ctime()}   station {rec.station} ejected product {text}")
    return "\n".join(lines) + "\n"


def dumps_machine_log(log: MachineLog) -> str:
    lines = []
    for rec in log:
        if isinstance(rec, IndexRecord):
            d = {"type": "index", "t": rec.t, "cycle": rec.cycle}
        elif isinstance(rec, EventRecord):
            d = {"type": "event", "t": rec.t, "sensor": rec.sensor, "value": rec.value}
        else:
            d = {"type": "verdict", "t": rec.t, "station": rec.station,
                 "verdict": "OK" if rec.verdict.ok else "NotOK", "detected_at": rec.verdict.station}
        lines.append(json.dumps(d))
    return "\n".join(lines) + ("\n" if lines else "")


def loads_machine_log(text: str) -> MachineLog:
    out = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            d = json.loads(line)
            kind = d["type"]
            if kind == "index":
                out.append(IndexRecord(float(d["t"]), int(d["cycle"])))
            elif kind == "event":
                out.append(EventRecord(float(d["t"]), d["sensor"], float(d["value"])))
            elif kind == "verdict":
                v = OK if d["verdict"] == "OK" else Verdict.not_ok(d["detected_at"])
                out.append(VerdictRecord(float(d["t"]), int(d["station"]), v))
            else:
                raise MalformedLog(f"line {lineno}: unknown record type {kind!r}")
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedLog(f"line {lineno}: {exc}") from exc
    return tuple(out)


def write_machine_log(log: MachineLog, m: ProcessDescription, prefix: Union[str, Path]) -> tuple[Path, Path]:
    """Write ``<prefix>.log`` (human-readable) and ``<prefix>.jsonl`` (structured)."""
    prefix = Path(prefix)
    text_path, json_path = prefix.with_suffix(".log"), prefix.with_suffix(".jsonl")
    text_path.write_text(render_machine_log(log, m))
    json_path.write_text(dumps_machine_log(log))
    return text_path, json_path
