import numpy as np
import pytest

from droneharvest import HomotopyPathPlanner, bundled_scenario, run_homotopy
from droneharvest.scenario import BUNDLED_CASES


@pytest.fixture(scope="session")
def case_scenarios():
    return {name: bundled_scenario(name) for name in BUNDLED_CASES}


@pytest.fixture(scope="session")
def case_traces(case_scenarios):
    return {name: run_homotopy(sc) for name, sc in case_scenarios.items()}


@pytest.fixture(scope="session")
def case1_planner(case_scenarios):
    sc = case_scenarios["case1"]
    return HomotopyPathPlanner().fit(sc.heads_array, start=sc.start)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_layout(rng, J, spread=5.0):
    """Heads and a start point with no coincidences."""
    while True:
        heads = rng.uniform(-spread, spread, size=(J, 2))
        start = rng.uniform(-spread, spread, size=2)
        pts = np.vstack([heads, start])
        d = np.linalg.norm(pts[:, None] - pts[None], axis=-1)
        if np.min(d[np.triu_indices(J + 1, 1)]) > 0.3:
            return heads, start


def pytest_configure(config):
    config.acceptance_lines = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


@pytest.fixture
def report(request):
    """Record one PASS/FAIL line for the acceptance summary, then assert."""
    def _report(criterion, passed, detail):
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {criterion}: {detail}"
        request.config.acceptance_lines.append(line)
        print(line)
        assert passed, line
    return _report
