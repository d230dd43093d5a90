import sys

import pytest

from eaem.kinematics import electron_parameters
from eaem.specimen import AnalyticAmplitudes, builtin_composition, default_tabulated_amplitudes


@pytest.fixture(scope="session")
def beam():
    return electron_parameters(300.0)


@pytest.fixture(scope="session")
def analytic():
    return AnalyticAmplitudes()


@pytest.fixture(scope="session")
def tabulated():
    return default_tabulated_amplitudes()


@pytest.fixture(scope="session")
def specimen30():
    return builtin_composition(30.0)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
