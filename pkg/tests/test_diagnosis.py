import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rimdiag.constraints import MISSING, TraceEvent, Violation, ViolationKind
from rimdiag.diagnosis import (
    FaultClass,
    FinalKind,
    Outcome,
    candidate_causes,
    classify_violation,
    diagnose_multistep,
    diagnose_stepwise,
    render_report,
    slice_trace_by_step,
)
from rimdiag.errors import TraceIncomplete, UnknownSensorInTrace
from rimdiag.model import CandidateCause
from rimdiag.sim import FaultKind, FaultSpec, simulate_product_run
from rimdiag.trace import Trace, Verdict

JACK = CandidateCause(4, tool="st4.jack_cylinder")
WRONG_POSITION = CandidateCause(3, description="part in the wrong position")
ALGORITHMS = (diagnose_stepwise, diagnose_multistep)


def run(cfg, kind, seed=0, algorithm=diagnose_multistep):
    trace = simulate_product_run(cfg, FaultSpec(kind), seed)
    return algorithm(cfg.process, cfg.expected, trace, 8)


# -- slicing and classification -------------------------------------------

def test_slice_clean_trace(cfg, m):
    slices = slice_trace_by_step(m, simulate_product_run(cfg, seed=1))
    assert sorted(slices) == list(range(1, 9))
    for step, events in slices.items():
        assert all(m.step_of_sensor(ev.sensor) == step for ev in events)
    assert sum(map(len, slices.values())) == len(simulate_product_run(cfg, seed=1).events)


def test_slice_empty(m):
    assert slice_trace_by_step(m, []) == {i: [] for i in range(1, 9)}


def test_slice_ghost(m):
    with pytest.raises(UnknownSensorInTrace):
        slice_trace_by_step(m, [TraceEvent(0.0, "ghost", 1.0)])


def test_classify():
    assert classify_violation(Violation(ViolationKind.TIMING, "R3", 1.4, 0.8, 1.2)) is FaultClass.TIMING
    assert classify_violation(Violation(ViolationKind.VALUE, "st4.pressure", 3.9, 4.5, 5.5)) is FaultClass.VALUE
    assert classify_violation(Violation(ViolationKind.VALUE, "st2.cylinder.position", MISSING, 0, 0)) is FaultClass.VALUE


def test_candidates_from_rule(m):
    v = Violation(ViolationKind.VALUE, "st4.pressure", 3.9, 4.5, 5.5)
    assert candidate_causes(v, m) == [JACK, WRONG_POSITION]


def test_candidates_rule_direction_respected(m):
    v = Violation(ViolationKind.VALUE, "st4.pressure", 6.0, 4.5, 5.5)
    assert candidate_causes(v, m) == [CandidateCause(4, description="st4.pressure")]


def test_candidates_from_tool_map(m):
    v = Violation(ViolationKind.VALUE, "st2.cylinder.position", MISSING, 1, 1)
    assert candidate_causes(v, m) == [CandidateCause(2, tool="st2.pneumatic_cylinder")]


def test_candidates_fallback(m):
    v = Violation(ViolationKind.VALUE, "st6.tightness_probe", 0.0, 1, 1)
    assert candidate_causes(v, m) == [CandidateCause(6, description="st6.tightness_probe")]


# -- both algorithms on the fault roster ----------------------------------

@pytest.mark.parametrize("algorithm", ALGORITHMS)
def test_timing_fault_resolves_to_jack(cfg, algorithm):
    r = run(cfg, FaultKind.TIMING_JACK_CYLINDER, algorithm=algorithm)
    assert r.final.kind is FinalKind.RESOLVED and r.final.cause == JACK
    step4 = next(s for s in r.steps if s.step == 4)
    assert step4.outcome is Outcome.TIMING_FAULT and step4.subject == "T4"
    assert r.chain == (8, 6, 4)


def test_wrong_position_stepwise_ambiguous(cfg):
    r = run(cfg, FaultKind.PART_WRONG_POSITION, algorithm=diagnose_stepwise)
    assert r.final.kind is FinalKind.MULTIPLE_CANDIDATES
    assert set(r.final.causes) == {JACK, WRONG_POSITION}


def test_wrong_position_multistep_resolved(cfg):
    r = run(cfg, FaultKind.PART_WRONG_POSITION)
    assert r.final.kind is FinalKind.RESOLVED and r.final.cause == WRONG_POSITION
    settled = [s for s in r.steps if s.evidence_step is not None]
    assert [(s.step, s.evidence_step) for s in settled] == [(4, 3)]


@pytest.mark.parametrize("algorithm", ALGORITHMS)
@pytest.mark.parametrize("kind", [FaultKind.PRESSURE_SENSOR_BROKEN, FaultKind.PART_BROKEN])
def test_invisible_faults_find_nothing(cfg, kind, algorithm):
    r = run(cfg, kind, algorithm=algorithm)
    assert r.final.kind is FinalKind.NO_CAUSE_FOUND
    assert all(s.outcome is Outcome.OK for s in r.steps)
    assert r.chain == (8,)


@pytest.mark.parametrize("algorithm", ALGORITHMS)
def test_broken_jack_resolves_to_jack(cfg, algorithm):
    r = run(cfg, FaultKind.JACK_CYLINDER_BROKEN, algorithm=algorithm)
    assert r.final.cause == JACK


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), kind=st.sampled_from(list(FaultKind)))
def test_algorithms_agree_unless_ambiguous(cfg, seed, kind):
    r1 = run(cfg, kind, seed, diagnose_stepwise)
    r2 = run(cfg, kind, seed, diagnose_multistep)
    if not any(s.outcome is Outcome.AMBIGUOUS for s in r1.steps):
        assert r1.final == r2.final
    # the multi-step result never has more candidates
    assert len(r2.final.causes) <= len(r1.final.causes)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_clean_trace_finds_nothing(cfg, seed):
    for algorithm in ALGORITHMS:
        r = run(cfg, FaultKind.NONE, seed, algorithm)
        assert r.final.kind is FinalKind.NO_CAUSE_FOUND
        assert all(s.outcome is Outcome.OK for s in r.steps)


def test_backward_order(cfg):
    r = run(cfg, FaultKind.NONE)
    assert [s.step for s in r.steps] == [7, 6, 5, 4, 3, 2, 1]


def test_deterministic(cfg):
    a = run(cfg, FaultKind.PART_WRONG_POSITION, 5).to_json()
    b = run(cfg, FaultKind.PART_WRONG_POSITION, 5).to_json()
    assert a == b
    assert json.loads(a)["final"]["kind"] == "resolved"


def test_timing_takes_precedence_over_values(cfg, m, e):
    trace = simulate_product_run(cfg, FaultSpec(FaultKind.TIMING_JACK_CYLINDER), 0)
    events = [TraceEvent(ev.time, ev.sensor, 3.0 if ev.sensor == "st4.pressure" else ev.value)
              for ev in trace.events]
    r = diagnose_stepwise(m, e, Trace(1, tuple(events), trace.verdict), 8)
    step4 = next(s for s in r.steps if s.step == 4)
    assert step4.outcome is Outcome.TIMING_FAULT
    assert {v.kind for v in step4.violations} == {ViolationKind.TIMING, ViolationKind.VALUE}


def test_missing_trigger_readings(cfg, m, e):
    trace = simulate_product_run(cfg, FaultSpec(FaultKind.PART_BROKEN), 0)
    cut = Trace(1, tuple(ev for ev in trace.events if not ev.sensor.startswith("st8.")), Verdict.not_ok(6))
    with pytest.raises(TraceIncomplete):
        diagnose_stepwise(m, e, cut, 8)


def test_qc_detection_is_not_a_cause(cfg):
    r = run(cfg, FaultKind.TIMING_JACK_CYLINDER)
    step6 = next(s for s in r.steps if s.step == 6)
    assert step6.outcome is Outcome.UNEXPLAINED_VIOLATION
    assert step6.subject == "st6.tightness_probe" and step6.causes == ()


# -- rendering ------------------------------------------------------------

def test_render_timing_fault(cfg):
    text = render_report(run(cfg, FaultKind.TIMING_JACK_CYLINDER, algorithm=diagnose_stepwise))
    assert "Error in step 4: Timing fault" in text
    assert "Most likely cause: st4.jack_cylinder" in text
    assert "Chain: 8 -> 6 -> 4" in text


def test_render_ambiguous(cfg):
    text = render_report(run(cfg, FaultKind.PART_WRONG_POSITION, algorithm=diagnose_stepwise))
    assert "Fault found in step 4\n  st4.pressure = 3.9, admissible [4.5, 5.5]\nMore than one explanation possible" in text
    assert "  - st4.jack_cylinder\n  - part in the wrong position\n" in text


def test_render_resolution(cfg):
    text = render_report(run(cfg, FaultKind.PART_WRONG_POSITION))
    assert "Explanation for fault in earlier step found!" in text
    assert "Most likely cause: part in the wrong position\n  confirmed by evidence from step 3" in text
    assert text.endswith("Diagnosis: part in the wrong position\n")


def test_render_nothing_found(cfg):
    assert render_report(run(cfg, FaultKind.PART_BROKEN)).endswith("Diagnosis: no cause found\n")
