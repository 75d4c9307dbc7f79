from __future__ import annotations

import math

import numpy as np
import pytest

from acvlab import grid as gc
from acvlab.grid import GridSpec, ScalarField, VectorField
from acvlab.solver import (
    DivergedError,
    NonConvergenceError,
    PhaseState,
    SolverConfig,
    StateError,
    assumption_report,
    continuation_ladder,
    energy,
    newton_solve,
    relax_flow,
    residual,
    residual_norm,
)

from conftest import SQRT2


def line_grid(n=400):
    return GridSpec.box([-1.0], [1.0], n)


# ---------------------------------------------------------------------------
# state guards

def test_state_guards(well):
    g = line_grid(40)
    with pytest.raises(StateError, match="under-resolved"):
        PhaseState(ScalarField.constant(g, 1.0), 0.1, well)
    g = line_grid(400)
    with pytest.raises(StateError, match="overshoot"):
        PhaseState(ScalarField.constant(g, 1.6), 0.05, well)
    with pytest.raises(StateError, match="either"):
        PhaseState(
            ScalarField.constant(g, 1.0), 0.05, well,
            v=VectorField.constant(g, (1.0,)), rho=ScalarField.constant(g, 0.0),
        )
    with pytest.raises(StateError):
        PhaseState(ScalarField.constant(g, 1.0), -0.05, well)


# ---------------------------------------------------------------------------
# residual

@pytest.mark.parametrize("c", [1.0, -1.0, 0.0])
def test_residual_vanishes_on_critical_constants(well, c):
    g = GridSpec.box((0.0, 0.0), (1.0, 1.0), 40)
    v = VectorField(g, np.random.default_rng(0).standard_normal((2,) + g.node_shape))
    st = PhaseState(ScalarField.constant(g, c), 0.1, well, v=v)
    assert np.all(residual(st).values == 0.0)


def _kink_residual_sup(well, cells):
    eps = 0.05
    g = line_grid(cells)
    x = g.coords(0)
    st = PhaseState(ScalarField(g, np.tanh(SQRT2 * x / eps)), eps, well)
    return float(np.max(np.abs(residual(st).values[5:-5])))


@pytest.mark.xfail(strict=True, reason="stencil truncation eps*h^2/12 * u(4) is about 0.27 at h = eps/10")
def test_residual_of_analytic_kink_at_tenth_eps(well):
    assert _kink_residual_sup(well, 400) <= 1e-1


def test_residual_of_analytic_kink_second_order(well):
    r10, r20 = _kink_residual_sup(well, 400), _kink_residual_sup(well, 800)
    assert r20 <= 1e-1
    assert 3.6 <= r10 / r20 <= 4.4


def test_residual_rejects_nonfinite_result(well):
    g = line_grid(400)
    bad = VectorField(g, np.full((1,) + g.node_shape, 1e308))
    st = PhaseState(ScalarField(g, np.tanh(g.coords(0) / 0.01)), 0.05, well, v=bad)
    with pytest.raises(DivergedError):
        residual(st)


# ---------------------------------------------------------------------------
# Newton

def test_newton_from_smoothed_step(well):
    eps = 0.05
    g = line_grid(400)
    x = g.coords(0)
    st = PhaseState(ScalarField(g, np.clip(x / (2 * eps), -1, 1)), eps, well)
    out, rep = newton_solve(st, eps, 1e-10)
    assert rep.converged
    u = out.u.values
    # align the translation mode, then compare with the analytic wave
    i = int(np.argmax(u > 0))
    x0 = x[i - 1] - u[i - 1] * (x[i] - x[i - 1]) / (u[i] - u[i - 1])
    err = np.max(np.abs(u - np.tanh(SQRT2 * (x - x0) / eps)))
    assert err <= 2e-3  # discretization of the profile at h = eps/10
    assert abs(x0) < 1e-8


def test_newton_from_smoothed_step_fine_grid(well):
    eps = 0.05
    g = line_grid(800)
    x = g.coords(0)
    st = PhaseState(ScalarField(g, np.clip(x / (2 * eps), -1, 1)), eps, well)
    out, _ = newton_solve(st, eps, 1e-10)
    assert np.max(np.abs(out.u.values - np.tanh(SQRT2 * x / eps))) <= 1e-3


def test_newton_on_exact_root(well):
    g = line_grid(400)
    st = PhaseState(ScalarField.constant(g, 1.0), 0.05, well)
    out, rep = newton_solve(st, 0.05, 1e-8, continuation=False)
    assert rep.iterations <= 1
    assert np.all(out.u.values == 1.0)


def test_reported_residual_recomputes(kink_1d, well):
    st = kink_1d.with_u(np.clip(kink_1d.u.values * 1.3, -1.2, 1.2))
    out, rep = newton_solve(st, 0.05, 1e-9)
    assert rep.residual == residual_norm(out)


def test_continuation_rungs_converge_before_descending(well):
    eps = 0.025
    g = line_grid(800)
    x = g.coords(0)
    st = PhaseState(ScalarField(g, np.tanh(x / 0.1)), 0.1, well)
    out, rep = newton_solve(st, eps, 1e-9)
    assert rep.ladder == continuation_ladder(0.1, eps)
    assert rep.ladder[0] == 0.1 and rep.ladder[-1] == eps
    assert all(b / a == pytest.approx(1 / math.sqrt(2)) for a, b in zip(rep.ladder[:-2], rep.ladder[1:-1]))
    assert len(rep.rung_residuals) == len(rep.ladder)
    assert all(r <= 1e-9 for r in rep.rung_residuals)
    assert out.epsilon == eps


def test_nonconvergence_carries_best_state(well):
    g = line_grid(400)
    x = g.coords(0)
    st = PhaseState(ScalarField(g, np.clip(x / 0.1, -1, 1)), 0.05, well)
    cfg = SolverConfig(max_newton=1, relax_steps=0)
    with pytest.raises(NonConvergenceError) as exc:
        newton_solve(st, 0.05, 1e-12, config=cfg, continuation=False)
    best = exc.value.state
    assert isinstance(best, PhaseState)
    assert residual_norm(best) < residual_norm(st)
    assert exc.value.report.rung_iterations == [1]


def test_translation_equivariance_periodic(well):
    eps = 0.05
    g = GridSpec.box([0.0], [2.0], 400, gc.PERIODIC)
    x = g.coords(0)

    def two_kinks(a):
        return np.tanh(SQRT2 * np.sin(np.pi * (x - a)) / (np.pi * eps) * 1.2)

    k = 37
    st1 = PhaseState(ScalarField(g, two_kinks(0.3)), eps, well)
    st2 = PhaseState(ScalarField(g, np.roll(two_kinks(0.3), k)), eps, well)
    u1 = newton_solve(st1, eps, 1e-10, continuation=False)[0].u.values
    u2 = newton_solve(st2, eps, 1e-10, continuation=False)[0].u.values
    assert np.max(np.abs(np.roll(u1, k) - u2)) < 1e-8


def test_prescribed_curvature_circle(well):
    # rho = -2|x|^2 makes r = 1/2 critical for the weighted length 2 pi r exp(-2 r^2)
    eps = 0.04
    g = GridSpec.box((0.0, 0.0), (0.75, 0.75), 188)
    X, Y = g.mesh()
    r = np.hypot(X, Y)
    rho = ScalarField(g, -2.0 * r * r)
    st = PhaseState(ScalarField(g, np.tanh(SQRT2 * (0.5 - r) / eps)), eps, well, rho=rho)
    out, rep = newton_solve(st, eps, 1e-8, continuation=False)
    assert rep.converged
    # radius of the zero crossing along the x axis
    u = out.u.values[:, 0]
    xs = g.coords(0)
    i = int(np.argmax(u < 0))
    r0 = xs[i - 1] + u[i - 1] * (xs[i] - xs[i - 1]) / (u[i - 1] - u[i])
    assert abs(r0 - 0.5) <= 0.03 * 0.5


def test_gradient_check_along_random_directions(well):
    # F(u + t phi) has derivative <residual * e^rho, phi> in the trapezoid product
    g = GridSpec.box((0.0, 0.0), (1.0, 1.0), 48)
    X, Y = g.mesh()
    rho = ScalarField(g, -2.0 * ((X - 0.5) ** 2 + (Y - 0.5) ** 2))
    u0 = np.tanh(SQRT2 * (0.3 - np.hypot(X - 0.5, Y - 0.5)) / 0.1) + 0.05 * np.cos(3 * X)
    st = PhaseState(ScalarField(g, u0), 0.1, well, rho=rho)
    grad = residual(st).values * st.weight()
    rng = np.random.default_rng(7)
    for _ in range(20):
        phi = rng.standard_normal(g.node_shape)
        t = 1e-6
        fd = (energy(st.with_u(u0 + t * phi), weighted=True) - energy(st.with_u(u0 - t * phi), weighted=True)) / (2 * t)
        exact = gc.tree_sum(g.weights * grad * phi)
        assert abs(fd - exact) <= 1e-4 * abs(exact)


# ---------------------------------------------------------------------------
# relaxation

def test_relax_fixed_point(well):
    g = line_grid(400)
    st = PhaseState(ScalarField.constant(g, 1.0), 0.05, well)
    assert np.max(np.abs(relax_flow(st, 10).u.values - 1.0)) < 1e-13


def test_relax_energy_decreases_with_gradient_advection(well):
    g = GridSpec.box((-0.5, -0.5), (0.5, 0.5), 64)
    X, Y = g.mesh()
    rng = np.random.default_rng(3)
    st = PhaseState(
        ScalarField(g, np.clip(rng.standard_normal(g.node_shape) * 0.3, -1, 1)),
        0.1, well, rho=ScalarField(g, -2.0 * (X * X + Y * Y)),
    )
    F = [energy(st, weighted=True)]
    for _ in range(15):
        st = relax_flow(st, 1)
        F.append(energy(st, weighted=True))
    assert all(b <= a + 1e-10 * a for a, b in zip(F, F[1:]))
    assert F[-1] < F[0]


def test_relax_rejects_bad_cfl(well):
    st = PhaseState(ScalarField.constant(line_grid(), 1.0), 0.05, well)
    with pytest.raises(ValueError):
        relax_flow(st, 1, cfl=1.5)


def test_relax_long_run_reaches_steady_state(well):
    eps = 0.05
    g = line_grid(400)
    x = g.coords(0)
    rng = np.random.default_rng(11)
    modes = rng.standard_normal(4)
    u0 = 0.3 * sum(m * np.cos((k + 1) * np.pi * (x + 1) / 4) for k, m in enumerate(modes))
    st = relax_flow(PhaseState(ScalarField(g, np.clip(u0, -1, 1)), eps, well), 3000)
    assert residual_norm(st) < 1e-6
    u = st.u.values
    crossings = int(np.sum(np.diff(np.sign(u)) != 0))
    assert crossings <= 1


# ---------------------------------------------------------------------------
# assumption report

def test_assumption_report_trivial(well):
    g = GridSpec.box((0.0, 0.0), (1.0, 1.0), 40)
    rep = assumption_report(PhaseState(ScalarField.constant(g, 1.0), 0.1, well), 1.5)
    assert rep.energy == 0.0 and rep.v_lq_norm == 0.0 and rep.grad_v_lp_norm == 0.0
    assert rep.sup_norm == 1.0


@pytest.mark.xfail(strict=True, reason="energy error is -1.26e-3 at h = eps/10, second order in h/eps")
def test_assumption_report_standing_wave_energy(kink_1d, well):
    rep = assumption_report(kink_1d, 0.75)
    assert abs(rep.energy - well.sigma) <= 1e-3


def test_standing_wave_energy_at_twentieth_eps(well):
    eps = 0.05
    g = line_grid(800)
    st = PhaseState(ScalarField(g, np.tanh(SQRT2 * g.coords(0) / eps)), eps, well)
    st, _ = newton_solve(st, eps, 1e-10, continuation=False)
    assert abs(assumption_report(st, 0.75).energy - well.sigma) <= 1e-3


def test_assumption_report_constant_velocity(well):
    g = GridSpec.box((0.0, 0.0), (1.0, 1.0), 40)
    st = PhaseState(ScalarField.constant(g, 1.0), 0.1, well, v=VectorField.constant(g, (1.0, 0.0)))
    rep = assumption_report(st, 1.5)
    assert rep.q == pytest.approx(6.0)
    assert rep.v_lq_norm == pytest.approx(1.0, abs=1e-14)
    assert rep.grad_v_lp_norm == 0.0


def test_assumption_report_rejects_p(well):
    g = GridSpec.box((0.0, 0.0), (1.0, 1.0), 40)
    with pytest.raises(ValueError, match="n/2 < p < n"):
        assumption_report(PhaseState(ScalarField.constant(g, 1.0), 0.1, well), 2.0)
