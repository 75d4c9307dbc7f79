from __future__ import annotations

import math

import numpy as np
import pytest

from acvlab.grid import GridSpec, ScalarField
from acvlab.minmax import (
    MountainPassReport,
    PathError,
    PathOfStates,
    init_path,
    refine_saddle,
    relax_path,
    saddle_index,
    weighted_energy,
)
from acvlab.solver import PhaseState, newton_solve, residual_norm

from conftest import SQRT2

EPS = 0.05


def line(cells=800):
    return GridSpec.box([-1.0], [1.0], cells)


def test_weighted_energy_vanishes_on_pure_phases(well):
    g = GridSpec.box((0.0, 0.0), (1.0, 1.0), 40)
    X, Y = g.mesh()
    rho = ScalarField(g, np.sin(3 * X) * Y)
    for c in (-1.0, 1.0):
        assert weighted_energy(ScalarField.constant(g, c), 0.1, well, rho) == 0.0


def test_weighted_energy_of_unstable_constant(well):
    g = GridSpec.box((0.0, 0.0), (1.0, 1.0), 40)
    assert weighted_energy(ScalarField.constant(g, 0.0), 0.1, well) == pytest.approx(10.0, rel=1e-14)


def test_weighted_energy_of_standing_wave(well):
    g = line(800)
    st = PhaseState(ScalarField(g, np.tanh(SQRT2 * g.coords(0) / EPS)), EPS, well)
    st, _ = newton_solve(st, EPS, 1e-10, continuation=False)
    assert abs(weighted_energy(st.u, EPS, well) - well.sigma) <= 1e-3


def test_weighted_energy_applies_weight(well):
    g = GridSpec.box((0.0, 0.0), (1.0, 1.0), 40)
    u = ScalarField.constant(g, 0.0)
    rho = ScalarField.constant(g, math.log(3.0))
    assert weighted_energy(u, 0.1, well, rho) == pytest.approx(30.0, rel=1e-13)


# ---------------------------------------------------------------------------
# paths

def test_linear_path_midpoint_without_jitter(well):
    g = GridSpec.box((0.0, 0.0), (1.0, 1.0), 20)
    p = init_path(g, 16, "linear", 0.1, well, jitter=0.0)
    assert p.m == 16
    assert np.all(p.nodes[8].values == 0.0)
    assert np.all(p.nodes[0].values == -1.0) and np.all(p.nodes[16].values == 1.0)


def test_linear_path_default_jitter_perturbs_midpoint(well):
    g = GridSpec.box((0.0, 0.0), (1.0, 1.0), 20)
    p = init_path(g, 16, "linear", 0.1, well)
    mid = p.nodes[8].values
    assert 0 < np.max(np.abs(mid)) <= 0.05 + 1e-15


def test_linear_path_max_node_energy(well):
    g = GridSpec.box((0.0, 0.0), (2.0, 1.0), 20)
    m, eps = 16, 0.1
    p = init_path(g, m, "linear", eps, well, jitter=0.0)
    s = -1.0 + 2.0 * np.arange(m + 1) / m
    expected = float(np.max(well.W(s))) * g.volume / eps
    assert float(np.max(p.energies())) == pytest.approx(expected, rel=1e-13)
    assert p.max_node() == 8


def test_sweep_seeding_starts_near_minmax_value(well):
    g = GridSpec.box((0.0, 0.0), (1.0, 1.0), 100)
    p = init_path(g, 16, "sweep", 0.05, well)
    # a kink crossing the square has energy close to sigma times the unit cross-section
    assert abs(float(np.max(p.energies())) - well.sigma) <= 0.05 * well.sigma


def test_path_needs_sixteen_segments(well):
    with pytest.raises(PathError):
        init_path(line(400), 15, "linear", EPS, well)


def test_path_rejects_bad_endpoints_and_seeding(well):
    g = line(400)
    nodes = [ScalarField.constant(g, 0.0)] * 17
    with pytest.raises(PathError, match="endpoints"):
        PathOfStates(tuple(nodes), EPS, well)
    with pytest.raises(PathError, match="seeding"):
        init_path(g, 16, "spiral", EPS, well)


def test_d4_symmetry_rejects_asymmetric_rho(well):
    g = GridSpec.box((-0.5, -0.5), (0.5, 0.5), 40)
    X, Y = g.mesh()
    with pytest.raises(PathError, match="invariant"):
        init_path(g, 16, "radial", 0.1, well, ScalarField(g, X), symmetry="d4")


# ---------------------------------------------------------------------------
# relaxation and refinement

@pytest.fixture(scope="module")
def relaxed_1d(well):
    path = init_path(line(800), 16, "linear", EPS, well, seed=1)
    before = [n.values.copy() for n in (path.nodes[0], path.nodes[-1])]
    out, rep = relax_path(path, 2000)
    return path, out, rep, before


def test_relaxation_pins_endpoints(relaxed_1d):
    _, out, _, before = relaxed_1d
    assert np.array_equal(out.nodes[0].values, before[0])
    assert np.array_equal(out.nodes[-1].values, before[1])


def test_relaxation_history_non_increasing(relaxed_1d):
    _, _, rep, _ = relaxed_1d
    h = rep.history
    assert all(b <= a * (1 + 1e-10) for a, b in zip(h, h[1:]))


def test_linear_path_relaxes_to_sigma(relaxed_1d, well):
    path, _, rep, _ = relaxed_1d
    assert rep.history[0] == pytest.approx(float(np.max(path.energies())))
    assert rep.history[0] > 10.0  # about W(0)*|Omega|/eps = 40 before jitter
    assert abs(rep.minmax_value - well.sigma) <= 0.05 * well.sigma


def test_refined_saddle_is_single_kink(relaxed_1d, well):
    _, out, _, _ = relaxed_1d
    rep = MountainPassReport()
    state, srep = refine_saddle(out, rep, probe_count=50)
    assert srep.residual <= 1e-6
    assert rep.residual == residual_norm(state)
    assert abs(rep.saddle_energy - well.sigma) <= 1e-3
    assert rep.nontrivial
    assert rep.saddle_index == 1
    u = state.u.values
    assert int(np.sum(np.diff(np.sign(u)) != 0)) == 1


def test_kink_at_max_node_is_stationary(well):
    g = line(800)
    path = init_path(g, 16, "sweep", EPS, well)
    kink = PhaseState(ScalarField(g, np.tanh(SQRT2 * g.coords(0) / EPS)), EPS, well)
    kink, _ = newton_solve(kink, EPS, 1e-11, continuation=False)
    nodes = list(path.nodes)
    nodes[8] = kink.u
    path = PathOfStates(tuple(nodes), EPS, well)
    # interior translates of the kink are all near-critical with energy about sigma
    assert abs(float(np.max(path.energies())) - well.sigma) <= 1e-3
    out, rep = relax_path(path, 20)
    assert all(abs(v - well.sigma) <= 1e-3 for v in rep.history)
    assert abs(rep.history[-1] - rep.history[0]) <= 1e-6


def test_saddle_index_of_stable_constant(well):
    st = PhaseState(ScalarField.constant(line(400), 1.0), EPS, well)
    idx, vals = saddle_index(st, probe_count=10)
    assert idx == 0
    assert vals[0] == pytest.approx(float(well.d2W(1.0)) / EPS, rel=1e-6)


def test_relax_rejects_zero_sweeps(well):
    with pytest.raises(ValueError):
        relax_path(init_path(line(400), 16, "linear", EPS, well), 0)


@pytest.mark.slow
def test_unit_square_saddle_is_straight_line(well):
    g = GridSpec.box((0.0, 0.0), (1.0, 1.0), 160)
    path = init_path(g, 16, "sweep", EPS, well)
    out, rep = relax_path(path, 500)
    state, srep = refine_saddle(out, rep, probe=False, tol=1e-8)
    assert abs(rep.saddle_energy - well.sigma) <= 0.05 * well.sigma
    # zero set is a straight segment x = const
    u = state.u.values
    xs = g.coords(0)
    cross = []
    for j in range(u.shape[1]):
        col = u[:, j]
        i = int(np.argmax(np.sign(col[1:]) != np.sign(col[:-1])))
        cross.append(xs[i] - col[i] * (xs[i + 1] - xs[i]) / (col[i + 1] - col[i]))
    assert np.ptp(cross) < g.h
