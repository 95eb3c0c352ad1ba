import time

import pytest

from duffing_blowup.action_angle import ActionAngleChart
from duffing_blowup.flow import IntegratorConfig
from duffing_blowup.forcing_builder import ScheduleParams, build_profile
from duffing_blowup.potential import EquationParams, PotentialModel


def pytest_configure(config):
    config.acceptance_lines = {}


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.acceptance_lines
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(lines):
        terminalreporter.write_line(lines[k])


@pytest.fixture
def record(request):
    """record(k, ok, detail): one summary line per acceptance criterion."""
    def _record(k, ok, detail):
        line = f"CRITERION {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        request.config.acceptance_lines[k] = line
        print(line)
        return ok
    return _record


@pytest.fixture(scope="session")
def model():
    return PotentialModel()


@pytest.fixture(scope="session")
def chart(model):
    return ActionAngleChart(model)


@pytest.fixture(scope="session")
def flat_model():
    """a(x) = 1: every chart quantity has a closed form."""
    return PotentialModel(EquationParams(3, 2), (1.0,))


@pytest.fixture(scope="session")
def flat_chart(flat_model):
    return ActionAngleChart(flat_model, I_range=(1e-2, 1e9), nodes_per_decade=64)


@pytest.fixture(scope="session")
def default_construction(model, chart):
    """The default staged construction (a few minutes); shared by every test that needs it."""
    t = time.time()
    profile, clog = build_profile(model.params, ScheduleParams(), chart, IntegratorConfig())
    return profile, clog, time.time() - t
