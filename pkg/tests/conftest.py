import os

import numpy as np
import pytest

from robust_halfspace.distributions import DistKind, Distribution

ACCEPTANCE_LINES = []


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def sphere20():
    return Distribution(DistKind.UNIFORM_SPHERE, 20)


@pytest.fixture
def report():
    """Record one PASS/FAIL line for the acceptance summary."""

    def _report(name, passed, detail=""):
        line = f"{'PASS' if passed else 'FAIL'}  {name}" + (f"  ({detail})" if detail else "")
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return _report


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)
    if os.environ.get("ROBUST_HALFSPACE_PURE_PYTHON") not in (None, "", "0"):
        terminalreporter.write_line("(pure-Python kernels)")
