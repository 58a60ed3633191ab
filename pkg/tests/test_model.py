import dataclasses
import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rimdiag.constraints import ExpectedValueSet
from rimdiag.errors import ConfigError, DanglingReferenceError, OrderError, SchemaError, UnknownSensor, UnknownStep
from rimdiag.model import (
    CandidateCause,
    Discriminator,
    load_process_description,
    process_description_from_document,
    read_document,
    sensors_for_step,
    serialize_process_description,
    tool_for_sensor,
    validate,
)


def codes(issues):
    return [i.code for i in issues]


def test_reference_machine_layout(m):
    assert m.station_count == 8
    assert m.order == tuple(range(1, 9))
    assert [s.index for s in m.stations if s.role == "qc"] == [5, 6]
    assert [s.index for s in m.stations if s.is_eject] == [7, 8]
    assert m.station(1).role == "input"


def test_missing_station_is_order_error(ref_doc):
    ref_doc["stations"] = [s for s in ref_doc["stations"] if s["index"] != 3]
    with pytest.raises(OrderError):
        load_process_description(ref_doc)


def test_tool_sensor_without_transition_is_reference_error(ref_doc):
    ref_doc["sensor_to_tool"]["st9.x"] = "st9.tool"
    with pytest.raises(DanglingReferenceError):
        load_process_description(ref_doc)


def test_unknown_key_is_schema_error(ref_doc):
    ref_doc["bogus"] = 1
    with pytest.raises(SchemaError):
        read_document(ref_doc)


def test_unparseable_file(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(ConfigError):
        read_document(p)


def test_reference_validates_clean(m, e):
    assert validate(m) == []
    assert validate(m, e) == []


def test_duplicate_sensor_reported(m):
    dup = dataclasses.replace(m, sensor_to_transition=m.sensor_to_transition + m.sensor_to_transition[:1])
    assert "DuplicateSensor" in codes(validate(dup))


def test_timing_arity(m):
    short = dataclasses.replace(m, timings=m.timings[:-1])
    issues = [i for i in validate(short) if i.code == "TimingArity"]
    assert len(issues) == 1
    assert issues[0].subject == "expected=16, actual=15"


def test_sensors_for_step(m):
    assert set(sensors_for_step(m, 4)) == {"st4.jack_cylinder.position", "st4.pressure"}
    assert sensors_for_step(m, 7) == ()
    with pytest.raises(UnknownStep):
        sensors_for_step(m, 99)


def test_tool_for_sensor(m):
    assert tool_for_sensor(m, "st4.jack_cylinder.position") == "st4.jack_cylinder"
    assert tool_for_sensor(m, "st6.tightness_probe") is None
    with pytest.raises(UnknownSensor):
        tool_for_sensor(m, "nonexistent")


def test_timings_for_step_transition_then_rotation(m):
    assert [t.id for t in m.timings_for_step(4)] == ["T4", "R4"]
    assert m.timing("T4").observable
    assert not m.timing("R4").observable
    assert m.rotations[-1].from_position == 8 and m.rotations[-1].to_position == 1


def test_causal_rule_loaded(m):
    (rule,) = m.causal_rules
    assert rule.matches("st4.pressure", "below")
    assert not rule.matches("st4.pressure", "above")
    assert rule.candidates == (
        CandidateCause(4, tool="st4.jack_cylinder"),
        CandidateCause(3, description="part in the wrong position"),
    )
    d = rule.discriminator_for(rule.candidates[1])
    assert d == Discriminator("st3.feeder.position", 9.5, 10.5)
    assert d.fires([10.8]) and not d.fires([10.1]) and not d.fires([])


def test_candidate_cause_needs_exactly_one_name():
    with pytest.raises(ValueError):
        CandidateCause(1)
    with pytest.raises(ValueError):
        CandidateCause(1, tool="a", description="b")
    c = CandidateCause(3, description="x")
    assert CandidateCause.from_dict(c.to_dict()) == c


def test_round_trip(m, e):
    doc = serialize_process_description(m, e)
    m2 = process_description_from_document(read_document(json.loads(json.dumps(doc))))
    assert m2 == m
    assert ExpectedValueSet.from_document(doc["expected_values"], m2) == e


def test_sensor_partition(m):
    # every sensor belongs to exactly one step
    seen = [s for step in m.order for s in sensors_for_step(m, step)]
    assert sorted(seen) == sorted(m.sensors)
    assert len(seen) == len(set(seen))


@settings(max_examples=50, deadline=None)
@given(n=st.integers(2, 12), k=st.integers(0, 30))
def test_linear_flow(n, k):
    # generated machines: the product visits stations in strict cyclic order
    doc = {
        "schema_version": 1,
        "stations": [{"index": i, "name": f"s{i}", "role": "process"} for i in range(1, n + 1)],
        "transitions": [{"id": i, "station": i, "from": i, "to": i + 1} for i in range(1, n + 1)],
        "timings": [{"transition": i, "duration": 0.5} for i in range(1, n + 1)]
        + [{"rotation": i, "duration": 1.0} for i in range(1, n + 1)],
        "sensor_to_transition": {f"st{i}.s": {"transition": i} for i in range(1, n + 1)},
    }
    m = load_process_description(doc)
    assert m.order == tuple(range(1, n + 1))
    step = k % n + 1
    nxt = next(r.to_position for r in m.rotations if r.from_position == step)
    assert nxt == step % n + 1
    assert sensors_for_step(m, step) == (f"st{step}.s",)
