import sys

import numpy as np
import pytest

from semivirial import build_grid, make_double_well, make_power_well, solve_window, WindowQuery


@pytest.fixture(scope="session")
def harmonic():
    return make_power_well(1, 2.0)


@pytest.fixture(scope="session")
def double_well():
    return make_double_well(1.0, 1.0)


@pytest.fixture(scope="session")
def harmonic_sweep(harmonic):
    """Window pairs around lambda0 = 1 (eps0 = 0.2) at a few hbar values."""
    out = {}
    for hbar in (0.2, 0.1, 0.05):
        grid = build_grid(harmonic, 1.0, 0.2, hbar)
        out[hbar] = (grid, solve_window(grid, harmonic, hbar, WindowQuery.around(1.0, 0.2)))
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    """Repeat the one-line acceptance verdicts at the end of the run."""
    module = sys.modules.get("test_acceptance")
    if module is not None and module.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(module.RESULTS, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
