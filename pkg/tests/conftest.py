import os

import pytest
from hypothesis import HealthCheck, settings

from artifact.config import SystemConfig
from artifact.solver import solve

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", max_examples=500, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def default_cfg():
    return SystemConfig()


@pytest.fixture(scope="session")
def default_solution(default_cfg):
    return solve(default_cfg)


@pytest.fixture(scope="session")
def small_cfg():
    # 4 users, fixed distances, coarse grid: fast to solve and simulate
    return SystemConfig(n_users=4, distances=(120.0, 300.0, 520.0, 760.0), n_cells=401)


@pytest.fixture(scope="session")
def small_solution(small_cfg):
    return solve(small_cfg)


_REPORT_KEY = pytest.StashKey[list]()


@pytest.fixture
def acceptance_report(request):
    """Record one ``PASS``/``FAIL`` line per acceptance criterion."""
    lines = request.config.stash.setdefault(_REPORT_KEY, [])

    def report(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append((number, line))
        print(line)
        return ok

    return report


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_REPORT_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
