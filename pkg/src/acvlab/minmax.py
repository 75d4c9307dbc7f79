"""Mountain-pass search for the weighted energy by a string method.

A path of states joins ``u = -1`` to ``u = +1``. Each sweep moves every
interior node one stabilized gradient step downhill, then redistributes the
nodes to equal arclength in the energy norm. The highest node is pinned
through the redistribution and no redistributed node may exceed the current
maximum, so the recorded max-node value never increases. Newton refinement
from the highest node then certifies the critical point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.sparse.linalg import LinearOperator, lobpcg

from . import grid as gc
from .grid import GridSpec, ScalarField
from .potential import DoubleWell
from .solver import (
    NonConvergenceError,
    PhaseState,
    ShiftedLaplaceSolver,
    SolveReport,
    SolverConfig,
    _Ops,
    _precond_shift,
    newton_solve,
    residual,
    stabilization_constant,
)

MIN_NODES = 16
# a direct saddle solve that needs more iterations than this is not in Newton's basin
DIRECT_NEWTON = 15


class PathError(ValueError):
    pass


def _energy_values(grid: GridSpec, u: np.ndarray, epsilon: float, well: DoubleWell, ew: np.ndarray | None) -> float:
    gs = gc.grad_sq(ScalarField(grid, u)).values
    dens = 0.5 * epsilon * gs + well.W(u) / epsilon
    if ew is not None:
        dens = dens * ew
    return gc.tree_sum(grid.weights * dens)


def weighted_energy(u: ScalarField, epsilon: float, well: DoubleWell, rho: ScalarField | None = None) -> float:
    """``F(u) = int (eps*|grad u|^2/2 + W(u)/eps) * exp(rho)``."""
    if rho is not None and rho.grid != u.grid:
        raise gc.GridMismatchError("u and rho live on different grids")
    ew = None if rho is None else np.exp(rho.values)
    val = _energy_values(u.grid, u.values, epsilon, well, ew)
    if not math.isfinite(val):
        raise gc.FieldError("weighted energy is not finite")
    return val


@dataclass(frozen=True, eq=False)
class PathOfStates:
    nodes: tuple[ScalarField, ...]
    epsilon: float
    well: DoubleWell
    rho: Optional[ScalarField] = None
    symmetry: Optional[str] = None

    def __post_init__(self):
        nodes = tuple(self.nodes)
        object.__setattr__(self, "nodes", nodes)
        if len(nodes) - 1 < MIN_NODES:
            raise PathError(f"a path needs m >= {MIN_NODES} segments, got {len(nodes) - 1}")
        g = nodes[0].grid
        if any(n.grid != g for n in nodes):
            raise gc.GridMismatchError("path nodes live on different grids")
        if not (np.all(nodes[0].values == -1.0) and np.all(nodes[-1].values == 1.0)):
            raise PathError("path endpoints must be the constants -1 and +1")
        if self.symmetry not in (None, "d4"):
            raise PathError(f"unknown symmetry {self.symmetry!r}")
        if self.symmetry == "d4":
            _check_d4(g, self.rho)

    @property
    def grid(self) -> GridSpec:
        return self.nodes[0].grid

    @property
    def m(self) -> int:
        return len(self.nodes) - 1

    def energies(self) -> np.ndarray:
        ew = None if self.rho is None else np.exp(self.rho.values)
        return np.array([_energy_values(self.grid, n.values, self.epsilon, self.well, ew) for n in self.nodes])

    def max_node(self) -> int:
        return int(np.argmax(self.energies()))


def _check_d4(grid: GridSpec, rho):
    if grid.dim != 2 or grid.node_shape[0] != grid.node_shape[1] or grid.spacing[0] != grid.spacing[1]:
        raise PathError("d4 symmetry needs a square 2D grid")
    if grid.bc[0] != grid.bc[1]:
        raise PathError("d4 symmetry needs the same boundary condition on both axes")
    if rho is not None and np.max(np.abs(_d4_project(rho.values) - rho.values)) > 1e-12 * (1 + np.max(np.abs(rho.values))):
        raise PathError("rho is not invariant under the square's symmetries")


def _d4_project(a: np.ndarray) -> np.ndarray:
    """Average over the eight symmetries of the square."""
    acc = np.zeros_like(a)
    for b in (a, a.T):
        acc += b + b[::-1, :] + b[:, ::-1] + b[::-1, ::-1]
    return acc / 8.0


def _low_frequency(grid: GridSpec, rng: np.random.Generator) -> np.ndarray:
    """Random combination of the lowest non-constant cosine mode of each axis, max 1.

    Each mode is monotone across its axis, so the perturbation seeds a single
    interface rather than a multi-kink state.
    """
    mesh = grid.mesh()
    out = np.zeros(grid.node_shape)
    for a in range(grid.dim):
        L = grid.upper[a] - grid.lower[a]
        out = out + rng.standard_normal() * np.cos(np.pi * (mesh[a] - grid.lower[a]) / L)
    m = np.max(np.abs(out))
    return out / m if m > 0 else out


def init_path(
    grid: GridSpec,
    m: int,
    seeding: str,
    epsilon: float,
    well: DoubleWell,
    rho: ScalarField | None = None,
    *,
    direction=None,
    center=None,
    jitter: float | None = None,
    seed: int = 0,
    symmetry: str | None = None,
) -> PathOfStates:
    """Initial path with ``m`` segments.

    ``linear``: constant nodes ``-1 + 2k/m`` plus a seeded low-frequency
    perturbation of amplitude ``jitter`` (default 0.05) on interior nodes,
    which breaks the symmetry that would otherwise trap the path at ``u = 0``.
    ``sweep``: a kink ``tanh(sqrt2*(c_k - x.e)/eps)`` whose plane crosses the domain.
    ``radial``: a disk ``tanh(sqrt2*(r_k - |x - center|)/eps)`` growing from
    the center until it covers the domain.
    """
    if m < MIN_NODES:
        raise PathError(f"m must be >= {MIN_NODES}, got {m}")
    mesh = grid.mesh()
    s2 = math.sqrt(2.0)
    nodes = [ScalarField.constant(grid, -1.0)]
    if seeding == "linear":
        amp = 0.05 if jitter is None else float(jitter)
        pert = _low_frequency(grid, np.random.default_rng(seed)) if amp else np.zeros(grid.node_shape)
        for k in range(1, m):
            c = -1.0 + 2.0 * k / m
            nodes.append(ScalarField(grid, c + amp * (1 - c * c) * pert))
    elif seeding == "sweep":
        e = np.zeros(grid.dim)
        e[0] = 1.0
        if direction is not None:
            e = np.asarray(direction, dtype=float)
            e = e / np.linalg.norm(e)
        proj = sum(e[a] * mesh[a] for a in range(grid.dim))
        lo, hi = float(proj.min()) - 3 * epsilon, float(proj.max()) + 3 * epsilon
        for k in range(1, m):
            c = hi - (hi - lo) * k / m
            nodes.append(ScalarField(grid, np.tanh(s2 * (proj - c) / epsilon)))
    elif seeding == "radial":
        c0 = np.array([0.5 * (a + b) for a, b in zip(grid.lower, grid.upper)]) if center is None else np.asarray(center, float)
        r = np.sqrt(sum((mesh[a] - c0[a]) ** 2 for a in range(grid.dim)))
        rmax = float(r.max()) + 3 * epsilon
        for k in range(1, m):
            rk = rmax * k / m
            nodes.append(ScalarField(grid, np.tanh(s2 * (rk - r) / epsilon)))
    else:
        raise PathError(f"unknown seeding {seeding!r}; use linear, sweep or radial")
    nodes.append(ScalarField.constant(grid, 1.0))
    return PathOfStates(tuple(nodes), float(epsilon), well, rho, symmetry)


@dataclass
class MountainPassReport:
    minmax_value: float = math.nan
    history: list[float] = field(default_factory=list)
    sweeps: int = 0
    converged: bool = False
    step: float = math.nan
    halvings: int = 0
    max_node: int = -1
    saddle_index: int | None = None
    probe_eigenvalues: list[float] = field(default_factory=list)
    residual: float | None = None
    saddle_energy: float | None = None
    nontrivial: bool | None = None
    candidates: list[dict] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "minmax_value": self.minmax_value,
            "saddle_index": self.saddle_index,
            "residual": self.residual,
            "saddle_energy": self.saddle_energy,
            "nontrivial": self.nontrivial,
            "sweeps": self.sweeps,
            "converged": self.converged,
            "step": self.step,
            "halvings": self.halvings,
            "max_node": self.max_node,
            "probe_eigenvalues": list(self.probe_eigenvalues),
            "history": list(self.history),
            "candidates": list(self.candidates),
        }


class _Stepper:
    """Stabilized preconditioned gradient step on one node.

    ``u' = u - tau * E^-1 P^-1 E G`` with ``E = exp(rho/2)``,
    ``P = (1 + tau*S/eps) - tau*eps*lap`` and ``G`` the weighted-metric
    gradient. Without rho this is the convex-splitting step.
    """

    def __init__(self, path: PathOfStates, tau: float):
        self.path = path
        g = path.grid
        self.tau = tau
        self.S = stabilization_constant(path.well)
        eps = path.epsilon
        self.pre = ShiftedLaplaceSolver(g, 1.0 + tau * self.S / eps, tau * eps)
        self.half = None if path.rho is None else np.exp(0.5 * path.rho.values)
        self.state = PhaseState(ScalarField.constant(g, 0.0), eps, path.well, rho=path.rho)

    def __call__(self, u: np.ndarray) -> np.ndarray:
        G = residual(self.state.with_u(u)).values
        if self.half is None:
            return u - self.tau * self.pre.solve(G)
        return u - self.tau * self.pre.solve(self.half * G) / self.half


def _energy_norm_sq(grid: GridSpec, d: np.ndarray, eps: float, ew) -> float:
    hgrid = replace(grid, bc=tuple(gc.dirichlet(0.0) if b.kind == "dirichlet" else b for b in grid.bc))
    gs = gc.grad_sq(ScalarField(hgrid, d)).values
    dens = 0.5 * eps * gs + 0.5 * d * d / eps
    if ew is not None:
        dens = dens * ew
    return max(gc.tree_sum(grid.weights * dens), 0.0)


def _redistribute(nodes, i0, i1, grid, eps, ew, energy_fn, cap):
    """Equal-arclength redistribution of nodes ``i0..i1`` (ends fixed), in place."""
    seg = [math.sqrt(_energy_norm_sq(grid, nodes[j + 1] - nodes[j], eps, ew)) for j in range(i0, i1)]
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    if total <= 0 or i1 - i0 < 2:
        return
    old = [nodes[j] for j in range(i0, i1 + 1)]
    for k in range(1, i1 - i0):
        t = total * k / (i1 - i0)
        j = int(np.searchsorted(cum, t, side="right") - 1)
        j = min(max(j, 0), len(seg) - 1)
        theta = 0.0 if seg[j] == 0 else (t - cum[j]) / seg[j]
        cand = (1 - theta) * old[j] + theta * old[j + 1]
        if energy_fn(cand) <= cap:
            nodes[i0 + k] = cand


def relax_path(
    path: PathOfStates,
    sweeps: int,
    *,
    step: float | None = None,
    rtol: float = 1e-8,
    window: int = 10,
    step_floor: float = 1e-8,
) -> tuple[PathOfStates, MountainPassReport]:
    """String-method relaxation; returns the relaxed path and its report.

    Stops early once the max-node value changes by less than ``rtol``
    (relative) over ``window`` sweeps.
    """
    if sweeps < 1:
        raise ValueError("sweeps must be >= 1")
    g, eps = path.grid, path.epsilon
    ew = None if path.rho is None else np.exp(path.rho.values)
    energy_fn = lambda u: _energy_values(g, u, eps, path.well, ew)
    tau0 = eps if step is None else float(step)
    tau = tau0
    nodes = [np.array(n.values) for n in path.nodes]
    sym = _d4_project if path.symmetry == "d4" else None
    if sym is not None:
        nodes[1:-1] = [sym(u) for u in nodes[1:-1]]
    E = np.array([energy_fn(u) for u in nodes])
    report = MountainPassReport(history=[float(E.max())])
    stepper = _Stepper(path, tau)
    for sweep in range(sweeps):
        while True:
            if stepper.tau != tau:
                stepper = _Stepper(path, tau)
            trial = [nodes[0]]
            for u in nodes[1:-1]:
                new = stepper(u)
                if sym is not None:
                    new = sym(new)
                trial.append(new)
            trial.append(nodes[-1])
            Et = np.array([energy_fn(u) for u in trial])
            finite = all(np.all(np.isfinite(u)) for u in trial) and np.all(np.isfinite(Et))
            if finite and np.all(Et[1:-1] <= E[1:-1] * (1 + 1e-12) + 1e-300):
                break
            tau *= 0.5
            report.halvings += 1
            if tau < step_floor * tau0:
                report.sweeps = sweep
                report.step = tau
                report.minmax_value = float(E.max())
                report.max_node = int(np.argmax(E))
                raise NonConvergenceError(
                    "path step size reached its floor",
                    PhaseState(ScalarField(g, nodes[report.max_node]), eps, path.well, rho=path.rho),
                    SolveReport(),
                )
        nodes = trial
        kmax = int(np.argmax(Et))
        cap = float(Et[kmax])
        _redistribute(nodes, 0, kmax, g, eps, ew, energy_fn, cap)
        _redistribute(nodes, kmax, len(nodes) - 1, g, eps, ew, energy_fn, cap)
        E = np.array([energy_fn(u) for u in nodes])
        report.history.append(float(E.max()))
        report.sweeps = sweep + 1
        h = report.history
        if len(h) > window and abs(h[-1 - window] - h[-1]) <= rtol * abs(h[-1]):
            report.converged = True
            break
    report.minmax_value = float(E.max())
    report.max_node = int(np.argmax(E))
    report.step = tau
    out = PathOfStates(tuple(ScalarField(g, u) for u in nodes), eps, path.well, path.rho, path.symmetry)
    return out, report


# ---------------------------------------------------------------------------
# saddle refinement and index probing

def _hessian_ops(state: PhaseState):
    g = state.grid
    ops = _Ops(g, state.rho)
    eps = state.epsilon
    d2 = state.well.d2W(state.u.values) / eps
    n = g.n_nodes
    shape = g.node_shape
    B = (g.weights * state.weight()).ravel()

    def jac_block(X):
        X = np.asarray(X).reshape(n, -1)
        out = np.empty_like(X)
        for j in range(X.shape[1]):
            x = X[:, j].reshape(shape)
            out[:, j] = (-eps * ops.lap(x, homogeneous=True) + d2 * x).ravel()
        return out

    return jac_block, B, n


def saddle_index(
    state: PhaseState,
    probe_count: int = 50,
    probe_seed: int = 0,
    tol: float | None = None,
    maxiter: int = 200,
) -> tuple[int, np.ndarray]:
    """Number of non-ascent directions of the Hessian of ``F`` at ``state``.

    Solves the generalized eigenproblem ``K x = lam B x`` (``K`` the
    Hessian of the discrete weighted energy, ``B`` the weighted mass) by
    LOBPCG started from ``probe_count`` seeded random probes, and counts
    Ritz values ``<= tol``. The default tolerance ``1e-6 * W''(1)/eps``
    treats exponentially small eigenvalues, such as the translation mode
    of a kink, as zero.
    """
    jac, Bd, n = _hessian_ops(state)
    k = min(probe_count, max(n // 4, 1))
    rng = np.random.default_rng(probe_seed)
    X = rng.standard_normal((n, k))
    A = LinearOperator((n, n), matvec=lambda x: Bd * jac(x)[:, 0], matmat=lambda X: Bd[:, None] * jac(X), dtype=float)
    Bop = LinearOperator((n, n), matvec=lambda x: Bd * np.ravel(x), matmat=lambda X: Bd[:, None] * X, dtype=float)
    eps = state.epsilon
    pre = ShiftedLaplaceSolver(state.grid, _precond_shift(state.well) / eps, eps)
    M = LinearOperator(
        (n, n),
        matvec=lambda x: pre.solve(np.ravel(x) / Bd).ravel(),
        matmat=lambda X: np.stack([pre.solve(X[:, j] / Bd).ravel() for j in range(X.shape[1])], axis=1),
        dtype=float,
    )
    vals, _ = lobpcg(A, X, B=Bop, M=M, largest=False, tol=1e-8, maxiter=maxiter)
    vals = np.sort(np.real(vals))
    if tol is None:
        tol = 1e-6 * float(state.well.d2W(np.array(1.0))) / eps
    return int(np.sum(vals <= tol)), vals


def refine_saddle(
    path: PathOfStates,
    report: MountainPassReport | None = None,
    *,
    tol: float = 1e-6,
    probe_count: int = 50,
    probe_seed: int = 0,
    probe: bool = True,
    config: SolverConfig | None = None,
    continuation: bool | None = None,
) -> tuple[PhaseState, SolveReport]:
    """Newton from the highest node (``v = grad rho``).

    Newton's basin around a saddle is only a fraction of ``eps`` wide in
    interface position, narrower than the node spacing of a coarse string.
    With ``continuation=None`` a direct solve at ``eps`` is tried first and,
    if it stalls, the solve restarts from the same node with the
    epsilon ladder from ``4*eps``, which widens the basin on the early rungs.
    When ``report`` is given it receives the residual, the saddle energy,
    the nontriviality verdict and, with ``probe``, the saddle index.
    """
    k = path.max_node()
    start = PhaseState(path.nodes[k], path.epsilon, path.well, rho=path.rho)
    if continuation is None:
        base = config or SolverConfig()
        direct = replace(base, max_newton=min(base.max_newton, DIRECT_NEWTON))
        try:
            state, srep = newton_solve(start, path.epsilon, tol, config=direct, continuation=False)
        except NonConvergenceError:
            state, srep = newton_solve(start, path.epsilon, tol, config=config, continuation=True)
    else:
        state, srep = newton_solve(start, path.epsilon, tol, config=config, continuation=continuation)
    if report is not None:
        report.residual = srep.residual
        report.saddle_energy = weighted_energy(state.u, state.epsilon, state.well, state.rho)
        alpha = path.well.alpha
        report.nontrivial = bool(state.u.values.min() < -alpha and state.u.values.max() > alpha)
        if probe:
            idx, vals = saddle_index(state, probe_count, probe_seed)
            report.saddle_index = idx
            report.probe_eigenvalues = [float(v) for v in vals[: min(len(vals), 8)]]
    return state, srep
