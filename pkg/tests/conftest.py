import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ginoq.arms import ArmModel
from ginoq.experiments import load_experiment

settings.register_profile("ci", max_examples=30, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "ci"))


@pytest.fixture(scope="session")
def nonindexable():
    return load_experiment("nonindexable_10_7")


@pytest.fixture(scope="session")
def nonindexable_big():
    return load_experiment("nonindexable_100_70")


@pytest.fixture
def two_state_arm():
    # active pushes towards the good state
    reward = np.array([[0.0, 0.0], [1.0, 1.0]])
    P = np.array([[[0.9, 0.1], [0.3, 0.7]], [[0.2, 0.8], [0.1, 0.9]]])
    return ArmModel(reward, P, name="two")


@pytest.fixture(autouse=True)
def _out_root(tmp_path, monkeypatch):
    monkeypatch.setenv("GINOQ_OUT", str(tmp_path / "runs"))


_ACCEPTANCE = []


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line for an acceptance criterion."""

    def report(number, title, ok, detail):
        line = f"acceptance {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
        _ACCEPTANCE.append((number, line))
        print(line)
        return ok

    return report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_ACCEPTANCE):
            terminalreporter.write_line(line)
