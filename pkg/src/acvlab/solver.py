"""Steady states of the advective Allen-Cahn equation.

The canonical form is ``-eps*lap(u) + W'(u)/eps = eps * v . grad(u)``.
When the advection is a gradient ``v = grad(rho)`` the operator is used in
conservative form, ``-eps*exp(-rho)*div(exp(rho)*grad(u)) + W'(u)/eps``,
which is exactly the gradient of the weighted energy
``F(u) = int (eps*|grad u|^2/2 + W(u)/eps) * exp(rho)`` in the
``exp(rho)``-weighted inner product.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy import fft
from scipy.sparse.linalg import LinearOperator, gmres

from . import grid as gc
from . import kernels
from .grid import GridSpec, ScalarField, VectorField
from .potential import DoubleWell

OVERSHOOT = 0.5
MIN_RESOLUTION = 4.0


class StateError(ValueError):
    """A PhaseState invariant does not hold."""


class DivergedError(RuntimeError):
    """Non-finite values appeared during a solve."""


class SchemeError(RuntimeError):
    """Energy increased under a step that must decrease it."""


class NonConvergenceError(RuntimeError):
    """Newton stalled; carries the best iterate and the partial report."""

    def __init__(self, message: str, state: "PhaseState", report: "SolveReport"):
        super().__init__(message)
        self.state = state
        self.report = report


# ---------------------------------------------------------------------------
# state

@dataclass(frozen=True, eq=False)
class PhaseState:
    """Phase field ``u`` with its parameters.

    Advection is given either as a vector field ``v`` or as a potential
    ``rho`` with ``v = grad(rho)``; at most one of the two may be set.
    """

    u: ScalarField
    epsilon: float
    well: DoubleWell
    v: Optional[VectorField] = None
    rho: Optional[ScalarField] = None

    def __post_init__(self):
        g = self.u.grid
        if not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise StateError(f"epsilon must be positive, got {self.epsilon}")
        if self.v is not None and self.rho is not None:
            raise StateError("give either v or rho, not both")
        for f in (self.v, self.rho):
            if f is not None and f.grid != g:
                raise gc.GridMismatchError("advection field lives on a different grid")
        if g.h > self.epsilon / MIN_RESOLUTION * (1 + 1e-12):
            raise StateError(
                f"interface under-resolved: h = {g.h:.4g} > epsilon/{MIN_RESOLUTION:g} = {self.epsilon / MIN_RESOLUTION:.4g}"
            )
        m = self.u.max_abs()
        if m > 1.0 + OVERSHOOT:
            raise StateError(f"|u| reaches {m:.4g}, beyond the overshoot guard 1 + {OVERSHOOT}")

    @property
    def grid(self) -> GridSpec:
        return self.u.grid

    def with_u(self, u) -> "PhaseState":
        if not isinstance(u, ScalarField):
            u = ScalarField(self.grid, u)
        return replace(self, u=u)

    def with_epsilon(self, epsilon: float) -> "PhaseState":
        return replace(self, epsilon=float(epsilon))

    def velocity(self) -> VectorField:
        """``v``, or ``grad(rho)`` by central differences, or zero."""
        if self.v is not None:
            return self.v
        if self.rho is not None:
            return gc.gradient(self.rho)
        return VectorField.constant(self.grid, np.zeros(self.grid.dim))

    def weight(self) -> np.ndarray:
        """``exp(rho)`` at the nodes (ones without rho)."""
        if self.rho is None:
            return np.ones(self.grid.node_shape)
        return np.exp(self.rho.values)


# ---------------------------------------------------------------------------
# array-level operators shared by residual, Jacobian and relaxation

def _homogeneous(grid: GridSpec) -> GridSpec:
    """Same grid with every Dirichlet value set to zero (for increments)."""
    bc = tuple(gc.dirichlet(0.0) if b.kind == "dirichlet" else b for b in grid.bc)
    return replace(grid, bc=bc)


class _Ops:
    """Stencil applications on raw arrays, with the padded weight cached."""

    def __init__(self, grid: GridSpec, rho: Optional[ScalarField]):
        self.grid = grid
        self.hgrid = _homogeneous(grid)
        self.shape3 = grid.node_shape + (1,) * (3 - grid.dim)
        self.inv_h2 = gc._inv(grid, 2)
        self.inv_2h = gc._inv(grid, 1, 2.0)
        self.pe = None
        if rho is not None:
            self.pe = gc.pad_ghosts(grid, np.exp(rho.values), reflect_dirichlet=True)

    def lap(self, a, homogeneous=False):
        g = self.hgrid if homogeneous else self.grid
        out = np.empty(self.shape3)
        p = gc.pad_ghosts(g, a)
        if self.pe is None:
            kernels.impl.laplacian(p, self.inv_h2, out, kernels.threads())
        else:
            kernels.impl.weighted_div(p, self.pe, self.inv_h2, out, kernels.threads())
        return out.reshape(self.grid.node_shape)

    def grad(self, a, homogeneous=False):
        g = self.hgrid if homogeneous else self.grid
        out = np.empty((3,) + self.shape3)
        kernels.impl.gradient(gc.pad_ghosts(g, a), self.inv_2h, out, kernels.threads())
        return out[: self.grid.dim].reshape((self.grid.dim,) + self.grid.node_shape)


def _advect(vcomp, grad):
    return np.einsum("i...,i...->...", vcomp, grad)


def _residual_values(state: PhaseState, ops: _Ops, u: np.ndarray) -> np.ndarray:
    eps, well = state.epsilon, state.well
    r = -eps * ops.lap(u) + well.dW(u) / eps
    if state.v is not None:
        r = r - eps * _advect(state.v.components, ops.grad(u))
    return r


def residual(state: PhaseState) -> ScalarField:
    """``-eps*lap(u) + W'(u)/eps - eps * v . grad(u)`` at every node.

    With ``rho`` set, the first and last terms combine into the weighted
    (conservative) Laplacian of ``exp(rho)``.
    """
    r = _residual_values(state, _Ops(state.grid, state.rho), state.u.values)
    if not np.all(np.isfinite(r)):
        bad = np.argwhere(~np.isfinite(r))[0]
        raise DivergedError(f"residual is non-finite at node {tuple(int(i) for i in bad)}")
    return ScalarField(state.grid, r)


def residual_norm(state: PhaseState) -> float:
    return gc.l2_norm(residual(state))


# ---------------------------------------------------------------------------
# fast-transform solver for (a - b*lap) on the node grid

class ShiftedLaplaceSolver:
    """Exact inverse of ``a*I - b*lap`` with homogeneous boundary closures.

    Neumann axes diagonalize under DCT-I, periodic axes under the FFT and
    Dirichlet axes (boundary nodes free, ghosts clamped) under DST-I.
    """

    def __init__(self, grid: GridSpec, a: float, b: float):
        if a <= 0 or b < 0:
            raise ValueError("need a > 0 and b >= 0")
        self.grid = grid
        eig = np.zeros(())
        for ax in range(grid.dim):
            n = grid.node_shape[ax]
            h2 = grid.spacing[ax] ** 2
            kind = grid.bc[ax].kind
            k = np.arange(n)
            if kind == "neumann":
                lam = 4.0 * np.sin(np.pi * k / (2 * (n - 1))) ** 2 / h2
            elif kind == "periodic":
                lam = 4.0 * np.sin(np.pi * k / n) ** 2 / h2
            else:
                lam = 4.0 * np.sin(np.pi * (k + 1) / (2 * (n + 1))) ** 2 / h2
            eig = np.add.outer(eig, lam)
        self.denom = a + b * eig

    def solve(self, r: np.ndarray) -> np.ndarray:
        x = np.asarray(r, dtype=float).reshape(self.grid.node_shape)
        kinds = [b.kind for b in self.grid.bc]
        for ax, kind in enumerate(kinds):
            if kind == "neumann":
                x = fft.dct(x, type=1, axis=ax)
            elif kind == "periodic":
                x = fft.fft(x, axis=ax)
            else:
                x = fft.dst(x, type=1, axis=ax)
        x = x / self.denom
        for ax, kind in reversed(list(enumerate(kinds))):
            if kind == "neumann":
                x = fft.idct(x, type=1, axis=ax)
            elif kind == "periodic":
                x = fft.ifft(x, axis=ax)
            else:
                x = fft.idst(x, type=1, axis=ax)
        return np.real(x)


# ---------------------------------------------------------------------------
# Newton with epsilon continuation

@dataclass
class SolveReport:
    iterations: int = 0
    residual: float = math.nan
    damping: list[float] = field(default_factory=list)
    ladder: list[float] = field(default_factory=list)
    rung_residuals: list[float] = field(default_factory=list)
    rung_iterations: list[int] = field(default_factory=list)
    converged: bool = False
    rung_states: dict = field(default_factory=dict, repr=False)

    def as_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "residual": self.residual,
            "converged": self.converged,
            "ladder": list(self.ladder),
            "rung_residuals": list(self.rung_residuals),
            "rung_iterations": list(self.rung_iterations),
            "damping": list(self.damping),
        }


@dataclass(frozen=True)
class SolverConfig:
    epsilon: float = 0.05
    tol: float = 1e-8
    max_newton: int = 50
    continuation_factor: float = math.sqrt(2.0)
    relax_steps: int = 5
    stabilization_auto: bool = True
    stabilization: float = 8.0
    krylov_rtol: float = 1e-4
    damping_floor: float = 1e-8


def continuation_ladder(start: float, target: float, factor: float = math.sqrt(2.0)) -> list[float]:
    """Geometric ladder from ``start`` down to ``target`` (inclusive), ratio ``factor``."""
    if factor <= 1:
        raise ValueError("continuation factor must exceed 1")
    ladder = [start]
    while ladder[-1] / factor > target * (1 + 1e-9):
        ladder.append(ladder[-1] / factor)
    if abs(ladder[-1] - target) > 1e-12 * target:
        ladder.append(target)
    return ladder


def _precond_shift(well: DoubleWell) -> float:
    return max(0.5 * float(well.d2W(np.array(-1.0)) + well.d2W(np.array(1.0))), 1.0)


def _newton_rung(state: PhaseState, cfg: SolverConfig, report: SolveReport) -> PhaseState:
    if cfg.relax_steps > 0 and residual_norm(state) > cfg.tol:
        # a few stiff-mode relaxation steps put Newton inside its basin
        S = None if cfg.stabilization_auto else cfg.stabilization
        state = relax_flow(state, cfg.relax_steps, 1.0, stabilization=S, check_energy=False)
    g = state.grid
    ops = _Ops(g, state.rho)
    eps, well = state.epsilon, state.well
    pre = ShiftedLaplaceSolver(g, _precond_shift(well) / eps, eps)
    w = g.weights
    norm = lambda r: math.sqrt(max(gc.tree_sum(w * r * r), 0.0))

    u = np.array(state.u.values)
    r = _residual_values(state, ops, u)
    rn = norm(r)
    best_u, best_rn = u.copy(), rn
    its = 0
    n = u.size
    vcomp = state.v.components if state.v is not None else None
    while rn > cfg.tol:
        if its >= cfg.max_newton:
            report.rung_iterations.append(its)
            raise NonConvergenceError(
                f"Newton reached max_newton={cfg.max_newton} at epsilon={eps:.4g} (residual {best_rn:.3e})",
                state.with_u(best_u),
                report,
            )
        d2 = well.d2W(u) / eps

        def jac(x, d2=d2):
            x = x.reshape(u.shape)
            y = -eps * ops.lap(x, homogeneous=True) + d2 * x
            if vcomp is not None:
                y = y - eps * _advect(vcomp, ops.grad(x, homogeneous=True))
            return y.ravel()

        J = LinearOperator((n, n), matvec=jac, dtype=float)
        M = LinearOperator((n, n), matvec=lambda x: pre.solve(x).ravel(), dtype=float)
        delta, _ = gmres(J, -r.ravel(), rtol=cfg.krylov_rtol, atol=0.0, restart=60, maxiter=20, M=M)
        if not np.all(np.isfinite(delta)):
            raise DivergedError(f"Jacobian solve produced non-finite values at epsilon={eps:.4g}")
        delta = delta.reshape(u.shape)

        lam = 1.0
        while True:
            trial = u + lam * delta
            ok = np.max(np.abs(trial)) <= 1.0 + OVERSHOOT
            if ok:
                rt = _residual_values(state, ops, trial)
                rtn = norm(rt) if np.all(np.isfinite(rt)) else math.inf
                if rtn * rtn <= (1.0 - 2e-4 * lam) * rn * rn:
                    break
            lam *= 0.5
            if lam < cfg.damping_floor:
                report.rung_iterations.append(its)
                raise NonConvergenceError(
                    f"damping floor reached at epsilon={eps:.4g} (residual {best_rn:.3e})",
                    state.with_u(best_u),
                    report,
                )
        u, r, rn = trial, rt, rtn
        its += 1
        report.damping.append(lam)
        if rn < best_rn:
            best_u, best_rn = u.copy(), rn
    report.rung_iterations.append(its)
    report.iterations += its
    return state.with_u(u)


def newton_solve(
    initial: PhaseState,
    target_eps: float | None = None,
    tol: float = 1e-8,
    config: SolverConfig | None = None,
    keep_rungs: bool = False,
    continuation: bool = True,
) -> tuple[PhaseState, SolveReport]:
    """Damped Newton-Krylov with epsilon continuation.

    The ladder runs from ``max(initial.epsilon, 4*target_eps)`` down to
    ``target_eps`` in steps of ``continuation_factor``. Each rung starts with
    ``relax_steps`` steps of :func:`relax_flow`, which damp the stiff
    profile modes without moving the slow interface modes, and is then solved
    to ``||F||_2 <= tol`` before moving on. Linear solves use GMRES
    preconditioned by the exact inverse of ``-eps*lap + s/eps``.
    ``continuation=False`` solves at ``target_eps`` only.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    cfg = replace(config or SolverConfig(), tol=tol)
    target = initial.epsilon if target_eps is None else float(target_eps)
    start = max(initial.epsilon, 4.0 * target) if continuation else target
    report = SolveReport(ladder=continuation_ladder(start, target, cfg.continuation_factor))
    state = initial
    for eps in report.ladder:
        state = state.with_epsilon(eps)
        state = _newton_rung(state, cfg, report)
        rn = residual_norm(state)
        report.rung_residuals.append(rn)
        if keep_rungs:
            report.rung_states[eps] = state
    report.residual = residual_norm(state)
    report.converged = report.residual <= tol
    return state, report


# ---------------------------------------------------------------------------
# energies and relaxation

def energy_density(state: PhaseState) -> ScalarField:
    """``eps*|grad u|^2/2 + W(u)/eps`` with the edge-consistent ``|grad u|^2``."""
    eps = state.epsilon
    gs = gc.grad_sq(state.u).values
    return ScalarField(state.grid, 0.5 * eps * gs + state.well.W(state.u.values) / eps)


def energy(state: PhaseState, weighted: bool = False) -> float:
    dens = energy_density(state).values
    if weighted:
        dens = dens * state.weight()
    return gc.tree_sum(state.grid.weights * dens)


def stabilization_constant(well: DoubleWell) -> float:
    """Largest W'' sampled on [-1.1, 1.1]; makes the splitting energy-stable."""
    return max(well.stabilization(0.1), 0.0)


def relax_flow(
    state: PhaseState,
    steps: int,
    cfl: float = 1.0,
    stabilization: float | None = None,
    check_energy: bool = True,
) -> PhaseState:
    """Stabilized semi-implicit relaxation toward a steady state.

    Each step solves ``(I - tau*eps*L + tau*S/eps) u' = u + tau*(eps*v.grad u - W'(u)/eps + S*u/eps)``
    with time step ``tau = cfl*eps``. With ``rho`` set, ``L`` is the weighted
    Laplacian and the advection is implicit inside it, so the step is a
    convex splitting of the weighted energy and that energy cannot increase.
    """
    if not 0 < cfl <= 1:
        raise ValueError("cfl must lie in (0, 1]")
    if steps < 0:
        raise ValueError("steps must be nonnegative")
    g = state.grid
    eps, well = state.epsilon, state.well
    S = stabilization_constant(well) if stabilization is None else float(stabilization)
    tau = cfl * eps
    ops = _Ops(g, state.rho)
    a = 1.0 + tau * S / eps
    pre = ShiftedLaplaceSolver(g, a, tau * eps)
    n = g.n_nodes
    shape = g.node_shape
    dirichlet_shift = None
    if any(b.kind == "dirichlet" for b in g.bc):
        # ghost values enter the implicit Laplacian as a constant source
        dirichlet_shift = ops.lap(np.zeros(shape))

    def apply(x):
        x = x.reshape(shape)
        return (a * x - tau * eps * ops.lap(x, homogeneous=True)).ravel()

    A = LinearOperator((n, n), matvec=apply, dtype=float)
    M = LinearOperator((n, n), matvec=lambda x: pre.solve(x).ravel(), dtype=float)
    vcomp = state.v.components if state.v is not None else None
    gradient_flow = vcomp is None
    u = np.array(state.u.values)
    F = energy(state, weighted=True) if gradient_flow and check_energy else None
    # absolute floor so round-off at a zero-energy constant is not flagged
    floor = 1e-13 * g.volume / eps
    for k in range(steps):
        rhs = u + tau * (-well.dW(u) / eps + S * u / eps)
        if vcomp is not None:
            rhs = rhs + tau * eps * _advect(vcomp, ops.grad(u))
        if dirichlet_shift is not None:
            rhs = rhs + tau * eps * dirichlet_shift
        if state.rho is None and dirichlet_shift is None:
            new = pre.solve(rhs)
        else:
            x, _ = gmres(A, rhs.ravel(), x0=u.ravel(), rtol=1e-13, atol=0.0, restart=50, maxiter=20, M=M)
            new = x.reshape(shape)
        if not np.all(np.isfinite(new)):
            raise DivergedError(f"relaxation produced non-finite values at step {k}")
        u = new
        if F is not None:
            F_new = energy(state.with_u(u), weighted=True)
            if F_new > F + 1e-10 * abs(F) + floor:
                raise SchemeError(f"weighted energy rose from {F!r} to {F_new!r} at step {k}")
            F = F_new
    return state.with_u(u)


# ---------------------------------------------------------------------------
# assumption monitoring

@dataclass(frozen=True)
class AssumptionReport:
    sup_norm: float
    energy: float
    v_lq_norm: float
    grad_v_lp_norm: float
    p: float
    q: float

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("sup_norm", "energy", "v_lq_norm", "grad_v_lp_norm", "p", "q")}


def _lp(grid: GridSpec, f: np.ndarray, p: float) -> float:
    return gc.tree_sum(grid.weights * np.abs(f) ** p) ** (1.0 / p)


def assumption_report(state: PhaseState, p: float) -> AssumptionReport:
    """Monitored quantities: ``||u||_inf``, the energy, ``||v||_{L^q}`` with ``q = np/(n-p)`` and ``||grad v||_{L^p}``."""
    n = state.grid.dim
    if not (n / 2 < p < n):
        raise ValueError(f"p must satisfy n/2 < p < n (n = {n}), got {p}")
    q = n * p / (n - p)
    g = state.grid
    v = state.velocity()
    vn = np.sqrt(np.einsum("i...,i...->...", v.components, v.components))
    dv2 = np.zeros(g.node_shape)
    for i in range(n):
        gi = gc.gradient(v.component(i)).components
        dv2 = dv2 + np.einsum("i...,i...->...", gi, gi)
    return AssumptionReport(
        sup_norm=state.u.max_abs(),
        energy=energy(state),
        v_lq_norm=_lp(g, vn, q),
        grad_v_lp_norm=_lp(g, np.sqrt(dv2), p),
        p=float(p),
        q=q,
    )
