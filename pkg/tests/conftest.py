import numpy as np
import pytest

from bzpiii import bianchi as bz
from bzpiii.ode import StepControl

TIGHT = StepControl(rtol=1e-12, atol=1e-14)


@pytest.fixture(scope="session")
def tight():
    return TIGHT


@pytest.fixture(scope="session")
def vii0_orbit():
    """VII0 solution with a(1) = 2, a'(1) = 0 on [1, 3]."""
    C = bz.c_matrix(bz.BIANCHI_VII0)
    return C, bz.r_from_c(C), bz.evolve_gamma(C, 2.0, 0.0, (1.0, 3.0), TIGHT)


@pytest.fixture(scope="session")
def vii0_wide():
    """VII0 solution with a(1) = 2, a'(1) = 0.5 on [0.8, 3.2], for grid work on [1, 3]."""
    C = bz.c_matrix(bz.BIANCHI_VII0)
    return bz.evolve_gamma(C, 2.0, 0.5, (0.8, 3.2), TIGHT)


@pytest.fixture
def rng():
    return np.random.default_rng(20261015)


_CRITERIA = []


@pytest.fixture
def criterion(capsys):
    """Record one PASS/FAIL line per acceptance criterion."""

    def report(label: str, ok: bool, detail: str = "") -> None:
        line = f"{'PASS' if ok else 'FAIL'}  {label}" + (f"  ({detail})" if detail else "")
        _CRITERIA.append(line)
        with capsys.disabled():
            print("\n" + line)
        assert ok, line

    return report


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_CRITERIA, key=lambda s: int(s.split("[")[1].split("]")[0])):
            terminalreporter.write_line(line)
