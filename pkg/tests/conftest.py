import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from maxocc.mdp import Mdp

settings.register_profile("default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def two_state_switch(gamma: float = 0.5) -> Mdp:
    """Two states, each with {stay, switch}."""
    rows = {(0, 0): [(0, 1.0)], (0, 1): [(1, 1.0)], (1, 0): [(1, 1.0)], (1, 1): [(0, 1.0)]}
    return Mdp.from_rows(2, 2, rows, gamma)


def absorbing_only(n: int = 3, gamma: float = 0.9) -> Mdp:
    return Mdp.from_rows(n, 1, {(s, 0): [(s, 1.0)] for s in range(n)}, gamma)


# one summary line per acceptance criterion, printed at the end of the run
ACCEPTANCE_LINES: dict[str, str] = {}


@pytest.fixture(scope="session")
def acceptance_log():
    def record(criterion: str, passed: bool, detail: str) -> bool:
        line = f"criterion {criterion}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES[criterion] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES, key=lambda k: (int("".join(c for c in k if c.isdigit())), k)):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
