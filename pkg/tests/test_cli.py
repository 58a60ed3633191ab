import json

import pytest

from rimdiag.cli import EXIT_DEVIATION, EXIT_FAULT_KIND, EXIT_INPUT, EXIT_MISMATCH, EXIT_OK, NOT_TRIGGERED, main
from rimdiag.trace import read_trace


def write_config(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


@pytest.fixture
def trace_for(tmp_path):
    def make(fault, seed=0):
        out = tmp_path / f"{fault}-{seed}.jsonl"
        assert main(["simulate", "--fault", fault, "--seed", str(seed), "--out", str(out)]) == EXIT_OK
        return str(out)

    return make


def test_simulate_clean(tmp_path, ref_doc, capsys):
    cfg = write_config(tmp_path, ref_doc)
    out = tmp_path / "t.jsonl"
    assert main(["simulate", "--config", cfg, "--fault", "none", "--seed", "7", "--out", str(out)]) == EXIT_OK
    assert read_trace(out).verdict.ok


def test_simulate_fault(trace_for):
    trace = read_trace(trace_for("timing-jack-cylinder"))
    assert not trace.verdict.ok and trace.verdict.station == 6


def test_simulate_bogus_fault(tmp_path, capsys):
    assert main(["simulate", "--fault", "bogus", "--out", str(tmp_path / "t.jsonl")]) == EXIT_FAULT_KIND
    assert "unknown fault kind" in capsys.readouterr().err


def test_simulate_bad_magnitude(tmp_path):
    args = ["simulate", "--fault", "part-broken", "--magnitude", "1", "--out", str(tmp_path / "t.jsonl")]
    assert main(args) == EXIT_FAULT_KIND


def test_simulate_log_and_plot(tmp_path):
    args = ["simulate", "--fault", "part-wrong-position", "--out", str(tmp_path / "t.jsonl"),
            "--log", str(tmp_path / "run"), "--products", "4", "--target", "2", "--plot", str(tmp_path / "t.png")]
    assert main(args) == EXIT_OK
    assert (tmp_path / "run.log").read_text().startswith("Thu Apr 27 11:18:58 2023")
    assert (tmp_path / "run.jsonl").stat().st_size > 0
    assert (tmp_path / "t.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_negative_seed(tmp_path):
    assert main(["simulate", "--seed", "-1", "--out", str(tmp_path / "t.jsonl")]) == EXIT_INPUT


def test_diagnose_multistep(trace_for, capsys):
    assert main(["diagnose", "--trace", trace_for("part-wrong-position"), "--algorithm", "multistep"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "part in the wrong position" in out
    assert out.rstrip().endswith("Diagnosis: part in the wrong position")


def test_diagnose_stepwise(trace_for, capsys):
    assert main(["diagnose", "--trace", trace_for("part-wrong-position"), "--algorithm", "stepwise"]) == EXIT_OK
    assert "More than one explanation possible" in capsys.readouterr().out


def test_diagnose_ok_trace(trace_for, capsys):
    assert main(["diagnose", "--trace", trace_for("none")]) == EXIT_OK
    assert capsys.readouterr().out.strip() == NOT_TRIGGERED
    assert "diagnosis not triggered" in NOT_TRIGGERED


def test_diagnose_json(trace_for, tmp_path, capsys):
    out = tmp_path / "r.json"
    args = ["diagnose", "--trace", trace_for("timing-jack-cylinder"), "--format", "json", "--out", str(out)]
    assert main(args) == EXIT_OK
    printed = json.loads(capsys.readouterr().out)
    assert printed == json.loads(out.read_text())
    assert printed["chain"] == [8, 6, 4]
    assert printed["final"] == {"kind": "resolved", "causes": [{"kind": "tool_fault", "step": 4, "tool": "st4.jack_cylinder"}]}


def test_diagnose_foreign_trace(tmp_path):
    p = tmp_path / "ghost.jsonl"
    p.write_text('{"t": 0.1, "sensor": "ghost", "value": 1.0}\n{"product": 1, "verdict": "NotOK", "station": 6}\n')
    assert main(["diagnose", "--trace", str(p)]) == EXIT_MISMATCH


def test_diagnose_incomplete_trace(tmp_path):
    p = tmp_path / "short.jsonl"
    p.write_text('{"t": 0.11, "sensor": "st1.feeder.ack", "value": 1.0}\n{"product": 1, "verdict": "NotOK", "station": 6}\n')
    assert main(["diagnose", "--trace", str(p)]) == EXIT_MISMATCH


def test_diagnose_unreadable_trace(tmp_path):
    p = tmp_path / "bad.jsonl"
    p.write_text("garbage\n")
    assert main(["diagnose", "--trace", str(p)]) == EXIT_INPUT
    assert main(["diagnose", "--trace", str(tmp_path / "absent.jsonl")]) == EXIT_INPUT


def test_evaluate_reference(tmp_path, capsys):
    out = tmp_path / "matrix.csv"
    assert main(["evaluate", "--out", str(out)]) == EXIT_OK
    text = capsys.readouterr().out
    assert "Part in Wrong Position" in text
    rows = out.read_text().splitlines()
    assert rows[0].startswith("fault,stepwise,multistep")
    assert rows[2].startswith("part-wrong-position,0,1,0,1")
    assert out.with_suffix(".png").read_bytes()[:4] == b"\x89PNG"


def test_evaluate_json(capsys):
    assert main(["evaluate", "--format", "json", "--seed", "3"]) == EXIT_OK
    d = json.loads(capsys.readouterr().out)
    assert d["part-broken"]["stepwise"] is False


def test_evaluate_without_discriminators(tmp_path, ref_doc, capsys):
    for rule in ref_doc["causal_rules"]:
        for cand in rule["candidates"]:
            cand.pop("discriminator", None)
    cfg = write_config(tmp_path, ref_doc)
    assert main(["evaluate", "--config", cfg, "--format", "json"]) == EXIT_DEVIATION
    out = capsys.readouterr().out
    d = json.loads(out[: out.index("matrix deviates")])
    assert (d["part-wrong-position"]["stepwise"], d["part-wrong-position"]["multistep"]) == (False, False)
    assert "Part in Wrong Position / Multi-step: expected ✓, got ×" in out


def test_evaluate_invalid_config(tmp_path, ref_doc):
    ref_doc["sensor_to_tool"]["st9.x"] = "ghost"
    assert main(["evaluate", "--config", write_config(tmp_path, ref_doc)]) == EXIT_INPUT


def test_validate_reference(capsys):
    assert main(["validate"]) == EXIT_OK
    assert "ok (8 stations" in capsys.readouterr().out


def test_validate_missing_station(tmp_path, ref_doc, capsys):
    ref_doc["stations"] = [s for s in ref_doc["stations"] if s["index"] != 3]
    assert main(["validate", "--config", write_config(tmp_path, ref_doc)]) != EXIT_OK
    assert "OrderError" in capsys.readouterr().out


def test_validate_unparseable(tmp_path):
    p = tmp_path / "x.json"
    p.write_text("{")
    assert main(["validate", "--config", str(p)]) == EXIT_INPUT


def test_module_entry_point():
    import subprocess
    import sys

    r = subprocess.run([sys.executable, "-m", "rimdiag", "validate"], capture_output=True, text=True)
    assert r.returncode == 0
