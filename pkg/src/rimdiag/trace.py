"""Per-product traces and their JSON-lines file format.

One event per line (``t``, ``sensor``, ``value``), followed by a trailer line
carrying the verdict::

    {"t": 0.11, "sensor": "st1.feeder.ack", "value": 1.0}
    ...
    {"product": 1, "verdict": "NotOK", "station": 6}
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

from .constraints import TraceEvent
from .errors import RimDiagError


class TraceFormatError(RimDiagError):
    pass


@dataclass(frozen=True)
class Verdict:
    ok: bool
    station: Optional[int] = None  # detecting station for Not-OK products

    @classmethod
    def not_ok(cls, station: int) -> "Verdict":
        return cls(False, station)

    def __str__(self) -> str:
        return "OK" if self.ok else f"NotOK({self.station})"


OK = Verdict(True)


@dataclass(frozen=True)
class Trace:
    product_id: int
    events: tuple[TraceEvent, ...]
    verdict: Verdict = field(default=OK)

    def __post_init__(self):
        times = [ev.time for ev in self.events]
        if times != sorted(times):
            raise ValueError("trace events must be time-ordered")


def _num(x: float) -> float:
    return float(x)


def dumps_trace(trace: Trace) -> str:
    lines = [
        json.dumps({"t": _num(ev.time), "sensor": ev.sensor, "value": _num(ev.value)})
        for ev in trace.events
    ]
    trailer = {"product": trace.product_id, "verdict": "OK" if trace.verdict.ok else "NotOK"}
    if not trace.verdict.ok:
        trailer["station"] = trace.verdict.station
    lines.append(json.dumps(trailer))
    return "\n".join(lines) + "\n"


def loads_trace(text: str) -> Trace:
    events = []
    verdict = None
    product = 1
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise TraceFormatError(f"line {lineno}: {exc}") from exc
        if verdict is not None:
            raise TraceFormatError(f"line {lineno}: data after the verdict trailer")
        if "verdict" in rec:
            product = int(rec.get("product", 1))
            if rec["verdict"] == "OK":
                verdict = OK
            elif rec["verdict"] == "NotOK":
                verdict = Verdict.not_ok(rec.get("station"))
            else:
                raise TraceFormatError(f"line {lineno}: unknown verdict {rec['verdict']!r}")
            continue
        try:
            events.append(TraceEvent(float(rec["t"]), str(rec["sensor"]), float(rec["value"])))
        except (KeyError, TypeError, ValueError) as exc:
            raise TraceFormatError(f"line {lineno}: bad event {rec!r}") from exc
    if verdict is None:
        raise TraceFormatError("missing verdict trailer")
    try:
        return Trace(product, tuple(events), verdict)
    except ValueError as exc:
        raise TraceFormatError(str(exc)) from exc


def write_trace(trace: Trace, path: Union[str, Path]) -> None:
    Path(path).write_text(dumps_trace(trace))


def read_trace(path: Union[str, Path]) -> Trace:
    return loads_trace(Path(path).read_text())
