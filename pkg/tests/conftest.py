import json

import pytest

from rimdiag.model import reference_config_path
from rimdiag.sim import load_machine_config


@pytest.fixture(scope="session")
def cfg():
    return load_machine_config()


@pytest.fixture(scope="session")
def m(cfg):
    return cfg.process


@pytest.fixture(scope="session")
def e(cfg):
    return cfg.expected


@pytest.fixture
def ref_doc():
    return json.loads(reference_config_path().read_text())


_acceptance = []


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance.py" in report.nodeid:
        _acceptance.append((report.nodeid.split("::")[-1], report.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in _acceptance:
        terminalreporter.write_line(f"{'PASS' if outcome == 'passed' else 'FAIL'}  {name}")
