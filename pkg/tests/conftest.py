import numpy as np
import pytest

from vibcontrol import (
    build_mapped_grid,
    build_system,
    eigenstates,
    envelope_curve,
    morse_curve,
    two_level_system,
)


@pytest.fixture(scope="session")
def morse_small():
    """A coarse two-channel Morse system (64 points) for fast dynamics tests."""
    m = 2000.0
    g = morse_curve(0.02, 1.0, 3.0, label="g")
    e = morse_curve(0.015, 0.8, 3.4, offset=0.06, label="e")
    grid = build_mapped_grid(envelope_curve(g, e), 0.3, 64, r_min=1.8, r_max=9.0, mass=m)
    system = build_system(g, e, grid, m, 1.0)
    return system, eigenstates(system, "g"), eigenstates(system, "e")


@pytest.fixture
def tls():
    return two_level_system(0.0, 0.1, 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240519)


_CRITERIA = []


def pytest_runtest_logreport(report):
    if report.when == "call":
        _CRITERIA.extend(v for k, v in report.user_properties if k == "criterion")


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_CRITERIA, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
