from __future__ import annotations

import math

import numpy as np
import pytest

from acvlab.grid import GridSpec, ScalarField
from acvlab.potential import canonical_quartic
from acvlab.solver import PhaseState, newton_solve

SQRT2 = math.sqrt(2.0)


@pytest.fixture(scope="session")
def well():
    return canonical_quartic()


@pytest.fixture(scope="session")
def kink_1d(well):
    """Converged 1D standing wave, eps = 0.05, h = eps/10 on [-1, 1]."""
    eps = 0.05
    g = GridSpec.box([-1.0], [1.0], 400)
    x = g.coords(0)
    st = PhaseState(ScalarField(g, np.tanh(SQRT2 * x / eps)), eps, well)
    s, _ = newton_solve(st, eps, 1e-10, continuation=False)
    return s


@pytest.fixture(scope="session")
def line_2d(well):
    """Converged flat interface {y = 0}, eps = 0.05 on [-0.5, 0.5]^2, h = eps/10."""
    eps = 0.05
    g = GridSpec.box([-0.5, -0.5], [0.5, 0.5], 200)
    y = g.mesh()[1]
    st = PhaseState(ScalarField(g, np.tanh(SQRT2 * y / eps)), eps, well)
    s, _ = newton_solve(st, eps, 1e-9, continuation=False)
    return s


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("]")[0].split()[-1])):
            terminalreporter.write_line(line)
