"""Fault-injection evaluation of both diagnosis algorithms."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Optional

from .diagnosis import DiagnosisReport, FinalKind, diagnose_multistep, diagnose_stepwise
from .model import CandidateCause
from .sim import FaultKind, FaultSpec, MachineConfig, simulate_product_run

TABLE_FAULTS = (
    FaultKind.TIMING_JACK_CYLINDER,
    FaultKind.PART_WRONG_POSITION,
    FaultKind.PRESSURE_SENSOR_BROKEN,
    FaultKind.JACK_CYLINDER_BROKEN,
    FaultKind.PART_BROKEN,
)

# published outcome: (step-wise correct, multi-step correct)
PUBLISHED = {
    FaultKind.TIMING_JACK_CYLINDER: (True, True),
    FaultKind.PART_WRONG_POSITION: (False, True),
    FaultKind.PRESSURE_SENSOR_BROKEN: (False, False),
    FaultKind.JACK_CYLINDER_BROKEN: (True, True),
    FaultKind.PART_BROKEN: (False, False),
}


@dataclass(frozen=True)
class GroundTruth:
    label: str
    cause: Optional[CandidateCause]  # None: not expressible as a tool or product cause


GROUND_TRUTH = {
    FaultKind.TIMING_JACK_CYLINDER: GroundTruth("jack cylinder too slow", CandidateCause(4, tool="st4.jack_cylinder")),
    FaultKind.PART_WRONG_POSITION: GroundTruth(
        "part 2 misplaced at station 3", CandidateCause(3, description="part in the wrong position")
    ),
    FaultKind.PRESSURE_SENSOR_BROKEN: GroundTruth("sensor broken, product fine", None),
    FaultKind.JACK_CYLINDER_BROKEN: GroundTruth("jack cylinder broken", CandidateCause(4, tool="st4.jack_cylinder")),
    FaultKind.PART_BROKEN: GroundTruth("damaged part fed in", None),
}

CHECK, CROSS = "✓", "×"
ALGORITHM_LABELS = ("Step-wise", "Multi-step")


def is_correct(report: DiagnosisReport, truth: GroundTruth) -> bool:
    return truth.cause is not None and report.final.kind is FinalKind.RESOLVED and report.final.cause == truth.cause


@dataclass(frozen=True)
class EvaluationMatrix:
    rows: dict  # FaultKind -> (bool, bool)
    reports: dict  # FaultKind -> (DiagnosisReport, DiagnosisReport)

    def diff(self, expected=PUBLISHED) -> list[str]:
        out = []
        for kind in TABLE_FAULTS:
            for i, name in enumerate(ALGORITHM_LABELS):
                got, want = self.rows[kind][i], expected[kind][i]
                if got != want:
                    out.append(f"{kind.label} / {name}: expected {_mark(want)}, got {_mark(got)}")
        return out

    def matches_published(self) -> bool:
        return not self.diff()

    def render(self) -> str:
        width = max(len(k.label) for k in TABLE_FAULTS)
        lines = [f"{'Fault':<{width}}  {ALGORITHM_LABELS[0]:^11}  {ALGORITHM_LABELS[1]:^11}"]
        for kind in TABLE_FAULTS:
            a1, a2 = self.rows[kind]
            lines.append(f"{kind.label:<{width}}  {_mark(a1):^11}  {_mark(a2):^11}")
        return "\n".join(line.rstrip() for line in lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["fault", "stepwise", "multistep", "published_stepwise", "published_multistep",
                    "final_stepwise", "final_multistep"])
        for kind in TABLE_FAULTS:
            r1, r2 = self.reports[kind]
            w.writerow([
                kind.value, int(self.rows[kind][0]), int(self.rows[kind][1]),
                int(PUBLISHED[kind][0]), int(PUBLISHED[kind][1]),
                _final_text(r1), _final_text(r2),
            ])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            kind.value: {
                "stepwise": self.rows[kind][0],
                "multistep": self.rows[kind][1],
                "reports": [self.reports[kind][0].to_dict(), self.reports[kind][1].to_dict()],
            }
            for kind in TABLE_FAULTS
        }


def _mark(ok: bool) -> str:
    return CHECK if ok else CROSS


def _final_text(r: DiagnosisReport) -> str:
    names = "; ".join(c.name for c in r.final.causes)
    return f"{r.final.kind.value}:{names}" if names else r.final.kind.value


def trigger_station(cfg: MachineConfig) -> int:
    st = cfg.process.station_with_role("eject_nok")
    return st.index if st is not None else cfg.process.station_count


def evaluate(cfg: MachineConfig, seed: int = 0) -> EvaluationMatrix:
    """Inject each of the five faults, run both algorithms, score against ground truth."""
    rows, reports = {}, {}
    trigger = trigger_station(cfg)
    for kind in TABLE_FAULTS:
        trace = simulate_product_run(cfg, FaultSpec(kind), seed)
        r1 = diagnose_stepwise(cfg.process, cfg.expected, trace, trigger)
        r2 = diagnose_multistep(cfg.process, cfg.expected, trace, trigger)
        truth = GROUND_TRUTH[kind]
        rows[kind] = (is_correct(r1, truth), is_correct(r2, truth))
        reports[kind] = (r1, r2)
    return EvaluationMatrix(rows, reports)
