"""Diffuse-interface diagnostics: energy measure, discrepancy, density ratios,
the radial monotonicity identity, first variation and interface geometry.

Energy densities use the edge-consistent ``|grad u|^2`` of
:func:`acvlab.grid.grad_sq`. The potential term is integrated cellwise by
Simpson's rule on the multilinear interpolant (:func:`acvlab.grid.simpson_nodal`)
rather than lumped at nodes: lumping leaves an O((h/eps)^2) signed
equipartition error across every interface, which the Simpson form cancels
to higher order. Directional quantities (normals, ``(y - x) . grad u``, ``v . grad u``) use
central differences.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import grid as gc
from .grid import FieldError, GridSpec, ScalarField, VectorField
from .solver import PhaseState

GRAD_FLOOR = 1e-12


class DiagnosticError(ValueError):
    pass


# ---------------------------------------------------------------------------
# pointwise densities

def _energy_parts(state: PhaseState):
    eps = state.epsilon
    grad_term = 0.5 * eps * gc.grad_sq(state.u).values
    pot_term = gc.simpson_nodal(state.u, state.well.W).values / eps
    return grad_term, pot_term


@dataclass(frozen=True, eq=False)
class EnergyMeasure:
    """Density ``(1/sigma)(eps*|grad u|^2/2 + W(u)/eps)`` of the measure mu."""

    grid: GridSpec
    density: ScalarField
    sigma: float

    def mass(self) -> float:
        return gc.integrate(self.density)

    def ball_mass(self, center, r: float) -> float:
        return gc.ball_integral(self.density, center, r)


@dataclass(frozen=True, eq=False)
class DiscrepancyField:
    """``xi = eps*|grad u|^2/2 - W(u)/eps``."""

    grid: GridSpec
    xi: ScalarField

    def l1(self) -> float:
        return gc.integrate(self.xi.map(np.abs))


def energy_measure(state: PhaseState) -> EnergyMeasure:
    a, b = _energy_parts(state)
    sigma = state.well.sigma
    return EnergyMeasure(state.grid, ScalarField(state.grid, (a + b) / sigma), sigma)


def discrepancy(state: PhaseState) -> DiscrepancyField:
    a, b = _energy_parts(state)
    return DiscrepancyField(state.grid, ScalarField(state.grid, a - b))


def _unnormalized_energy(state: PhaseState) -> ScalarField:
    a, b = _energy_parts(state)
    return ScalarField(state.grid, a + b)


# ---------------------------------------------------------------------------
# sampling

def sample(grid: GridSpec, values: np.ndarray, points) -> np.ndarray:
    """Multilinear interpolation of node values at physical points (k x dim).

    ``values`` may carry leading component axes, e.g. a vector field's
    ``(dim, *node_shape)`` array.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    values = np.asarray(values, dtype=float)
    lead = values.shape[: values.ndim - grid.dim]
    idx, frac = [], []
    for a in range(grid.dim):
        t = (pts[:, a] - grid.origin[a]) / grid.spacing[a]
        n = grid.node_shape[a]
        if grid.bc[a].kind == "periodic":
            i0 = np.floor(t).astype(int)
            f = t - i0
            idx.append((i0 % n, (i0 + 1) % n))
        else:
            if np.any(t < -1e-9) or np.any(t > n - 1 + 1e-9):
                raise FieldError("sample point outside the domain")
            i0 = np.clip(np.floor(t).astype(int), 0, n - 2)
            f = np.clip(t - i0, 0.0, 1.0)
            idx.append((i0, i0 + 1))
        frac.append(f)
    out = np.zeros(lead + (pts.shape[0],))
    for corner in range(2 ** grid.dim):
        w = np.ones(pts.shape[0])
        ind = []
        for a in range(grid.dim):
            bit = (corner >> a) & 1
            w = w * (frac[a] if bit else 1.0 - frac[a])
            ind.append(idx[a][bit])
        out = out + values[(Ellipsis,) + tuple(ind)] * w
    return out


# ---------------------------------------------------------------------------
# density ratios

@dataclass
class DensityRatioReport:
    center: tuple[float, ...]
    radii: list[float]
    E: list[float]
    mu_ratio: list[float]

    @property
    def E_min(self) -> float:
        return float(min(self.E))

    @property
    def E_max(self) -> float:
        return float(max(self.E))

    @property
    def mu_min(self) -> float:
        return float(min(self.mu_ratio))

    @property
    def mu_max(self) -> float:
        return float(max(self.mu_ratio))


def density_ratio_scan(
    state: PhaseState,
    centers,
    radii: Sequence[float],
    restrict_to_interface: bool = False,
    alpha: float | None = None,
) -> list[DensityRatioReport]:
    """``E(r,x) = r^(1-n) int_{B_r(x)} (eps|grad u|^2/2 + W/eps)`` and ``mu(B_r(x))/r^(n-1)``.

    E carries no 1/sigma; the mu column does. With ``restrict_to_interface``
    only centers with ``|u(x)| <= alpha`` (default the well's alpha) are kept.
    """
    g = state.grid
    n = g.dim
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    radii = [float(r) for r in radii]
    if restrict_to_interface:
        a = state.well.alpha if alpha is None else alpha
        uc = sample(g, state.u.values, centers)
        centers = centers[np.abs(uc) <= a]
    e = _unnormalized_energy(state)
    sigma = state.well.sigma
    out = []
    for c in centers:
        ints = gc.ball_integrals(e, c, radii)
        E = [float(I / r ** (n - 1)) for I, r in zip(ints, radii)]
        mu = [float(I / sigma / r ** (n - 1)) for I, r in zip(ints, radii)]
        out.append(DensityRatioReport(tuple(float(v) for v in c), radii, E, mu))
    return out


def density_estimate(state: PhaseState, centers, r: float) -> np.ndarray:
    """``theta(x) = mu(B_r(x)) / (2r)`` in 2D; needs ``5 eps <= r <= dist(x, boundary)/2``."""
    g = state.grid
    if g.dim != 2:
        raise DiagnosticError("density_estimate is defined in 2D")
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    mu = energy_measure(state)
    out = []
    for c in centers:
        hi = g.distance_to_boundary(c) / 2
        lo = 5 * state.epsilon
        if lo > hi:
            raise DiagnosticError(f"radius window [{lo:.4g}, {hi:.4g}] is empty at center {c.tolist()}")
        if not lo <= r <= hi:
            raise DiagnosticError(f"radius {r} outside the admissible window [{lo:.4g}, {hi:.4g}]")
        out.append(mu.ball_mass(c, r) / (2 * r))
    return np.array(out)


# ---------------------------------------------------------------------------
# monotonicity identity

@dataclass
class MonotonicityReport:
    center: tuple[float, ...]
    radii: list[float]
    E: list[float]
    lhs: list[float]
    defect_term: list[float]
    sphere_term: list[float]
    advection_term: list[float]

    @property
    def residual(self) -> list[float]:
        return [l - (a + b + c) for l, a, b, c in zip(self.lhs, self.defect_term, self.sphere_term, self.advection_term)]


def monotonicity_check(state: PhaseState, center, radii: Sequence[float]) -> MonotonicityReport:
    """Both sides of the radial identity

    ``dE/dr = r^-n int_B (W/eps - eps|grad u|^2/2) + eps r^-(n+1) int_dB ((y-x).grad u)^2
    + eps r^-n int_B (v.grad u)((y-x).grad u)``.

    Sphere integrals are ball-shell difference quotients with half-width h;
    dE/dr is the second-order finite difference of E over the radius grid.
    """
    g = state.grid
    n = g.dim
    radii = np.asarray([float(r) for r in radii])
    if radii.size < 5:
        raise DiagnosticError("monotonicity_check needs at least 5 radii")
    if np.any(np.diff(radii) <= 0):
        raise DiagnosticError("radii must increase")
    if np.min(np.diff(radii)) < 2 * g.h - 1e-12:
        raise DiagnosticError(f"radius spacing {np.min(np.diff(radii)):.4g} is below 2h = {2 * g.h:.4g}")
    center = np.asarray(center, dtype=float)
    dh = g.h
    g.check_ball(center, float(radii[-1]) + dh)
    if radii[0] - dh <= 0:
        raise DiagnosticError("smallest radius must exceed h")
    eps = state.epsilon
    gu = gc.gradient(state.u).components
    mesh = g.mesh()
    yx = np.stack([mesh[a] - center[a] for a in range(n)])
    radial = np.einsum("i...,i...->...", yx, gu)
    a, b = _energy_parts(state)
    e = ScalarField(g, a + b)
    defect = ScalarField(g, b - a)
    sph = ScalarField(g, radial * radial)
    v = state.velocity().components
    adv = ScalarField(g, np.einsum("i...,i...->...", v, gu) * radial)

    allr = sorted(set(radii.tolist()) | set((radii + dh).tolist()) | set((radii - dh).tolist()))
    pos = {r: k for k, r in enumerate(allr)}
    I_e, I_d, I_s, I_a = gc.ball_integrals_multi([e, defect, sph, adv], center, allr)
    E = np.array([I_e[pos[r]] / r ** (n - 1) for r in radii])
    lhs = np.gradient(E, radii, edge_order=2)
    d_t = [I_d[pos[r]] / r**n for r in radii]
    s_t = [eps / r ** (n + 1) * (I_s[pos[r + dh]] - I_s[pos[r - dh]]) / (2 * dh) for r in radii]
    a_t = [eps / r**n * I_a[pos[r]] for r in radii]
    return MonotonicityReport(
        tuple(center.tolist()),
        radii.tolist(),
        E.tolist(),
        lhs.tolist(),
        [float(x) for x in d_t],
        [float(x) for x in s_t],
        [float(x) for x in a_t],
    )


# ---------------------------------------------------------------------------
# first variation

@dataclass
class FirstVariationReport:
    deltaV: float
    curv_pairing: float
    mass: float
    max_grad_g: float

    @property
    def defect(self) -> float:
        return abs(self.deltaV - self.curv_pairing)

    @property
    def relative_defect(self) -> float:
        """Defect over ``||V|| * max|grad g|``."""
        d = self.mass * self.max_grad_g
        return self.defect / d if d > 0 else 0.0


def _check_compact(g: VectorField, cells: int = 2) -> None:
    grid = g.grid
    comp = g.components
    scale = max(float(np.max(np.abs(comp))), 1e-300)
    for a in range(grid.dim):
        if grid.bc[a].kind == "periodic":
            continue
        n = grid.node_shape[a]
        band = np.r_[0 : cells + 1, n - cells - 1 : n]
        if np.max(np.abs(np.take(comp, band, axis=a + 1))) > 1e-14 * scale:
            raise DiagnosticError(f"test field is not zero within {cells} cells of the boundary on axis {a}")


def _normals(grid: GridSpec, gu: np.ndarray):
    norm = np.sqrt(np.einsum("i...,i...->...", gu, gu))
    keep = norm >= GRAD_FLOOR
    nu = np.where(keep, gu / np.where(keep, norm, 1.0), 0.0)
    return nu, keep


def first_variation(state: PhaseState, g: VectorField) -> FirstVariationReport:
    """``deltaV(g) = int grad g : (I - nu x nu) dmu`` and ``-int S_perp(v) . g dV``.

    ``nu = grad u / |grad u|``; nodes with ``|grad u| < 1e-12`` are left out of
    both integrands (they still count toward the mass).
    """
    grid = state.grid
    if g.grid != grid:
        raise gc.GridMismatchError("test field lives on a different grid")
    _check_compact(g)
    n = grid.dim
    mu = energy_measure(state)
    dens = mu.density.values
    gu = gc.gradient(state.u).components
    nu, keep = _normals(grid, gu)
    # Dg[i, j] = d g_i / d x_j
    Dg = np.stack([gc.gradient(g.component(i)).components for i in range(n)])
    div = np.einsum("ii...->...", Dg)
    nDn = np.einsum("i...,ij...,j...->...", nu, Dg, nu)
    integrand = np.where(keep, div - nDn, 0.0) * dens
    v = state.velocity().components
    vn = np.einsum("i...,i...->...", v, nu)
    gn = np.einsum("i...,i...->...", g.components, nu)
    pairing = -gc.tree_sum(grid.weights * np.where(keep, vn * gn, 0.0) * dens)
    gradnorm = np.sqrt(np.einsum("ij...,ij...->...", Dg, Dg))
    return FirstVariationReport(
        deltaV=gc.tree_sum(grid.weights * integrand),
        curv_pairing=pairing,
        mass=mu.mass(),
        max_grad_g=float(np.max(gradnorm)),
    )


# ---------------------------------------------------------------------------
# equipartition and the halving identity

def _window_mask(grid: GridSpec, window) -> np.ndarray:
    lower, upper = (np.asarray(w, dtype=float) for w in window)
    if lower.shape != (grid.dim,) or upper.shape != (grid.dim,):
        raise DiagnosticError("window must be (lower, upper) with one entry per axis")
    for a in range(grid.dim):
        if grid.bc[a].kind == "periodic":
            continue
        if lower[a] <= grid.lower[a] or upper[a] >= grid.upper[a] or lower[a] >= upper[a]:
            raise DiagnosticError(f"window touches the boundary (or is empty) on axis {a}")
    mesh = grid.mesh()
    mask = np.ones(grid.node_shape, dtype=bool)
    for a in range(grid.dim):
        mask &= (mesh[a] >= lower[a]) & (mesh[a] <= upper[a])
    return mask


def _grad_w_norm(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # |grad Phi(u)| = sqrt(W/2)|grad u| = sqrt((W/eps)(eps|grad u|^2/2)), from the same two parts
    return np.sqrt(a * b)


def equipartition_norms(state: PhaseState, window) -> tuple[float, float, float]:
    """L1 norms over the window of ``xi``, ``eps|grad u|^2/2 - |grad w|`` and ``W/eps - |grad w|``."""
    g = state.grid
    mask = _window_mask(g, window).astype(float)
    a, b = _energy_parts(state)
    gw = _grad_w_norm(a, b)
    wts = g.weights * mask
    return (
        gc.tree_sum(wts * np.abs(a - b)),
        gc.tree_sum(wts * np.abs(a - gw)),
        gc.tree_sum(wts * np.abs(b - gw)),
    )


@dataclass
class HalvingReport:
    gradient_part: float
    potential_part: float
    w_part: float

    @property
    def values(self) -> tuple[float, float, float]:
        return (self.gradient_part, self.potential_part, self.w_part)

    @property
    def gaps(self) -> tuple[float, float, float]:
        """Pairwise relative gaps |a-b|/max(|a|,|b|) for (grad, pot), (grad, w), (pot, w)."""
        a, b, c = self.values

        def rel(x, y):
            m = max(abs(x), abs(y))
            return abs(x - y) / m if m > 0 else 0.0

        return (rel(a, b), rel(a, c), rel(b, c))


def halving_check(state: PhaseState, phi: ScalarField) -> HalvingReport:
    """``(1/sigma) int (eps/2)|grad u|^2 phi``, ``(1/sigma) int (W/eps) phi`` and ``(1/sigma) int |grad w| phi``."""
    if phi.grid != state.grid:
        raise gc.GridMismatchError("test function lives on a different grid")
    if np.min(phi.values) < 0:
        raise DiagnosticError("test function must be nonnegative")
    a, b = _energy_parts(state)
    gw = _grad_w_norm(a, b)
    s = state.well.sigma
    wts = state.grid.weights * phi.values
    return HalvingReport(gc.tree_sum(wts * a) / s, gc.tree_sum(wts * b) / s, gc.tree_sum(wts * gw) / s)


# ---------------------------------------------------------------------------
# interface extraction (2D marching squares)

@dataclass
class InterfacePolyline:
    """Ordered vertices of one zero-level-set component with per-vertex geometry.

    ``normals`` are ``grad u/|grad u|`` at the vertices. ``kappa`` is the
    signed curvature with ``H = kappa * normal``. ``normal_inward`` says
    whether the normals point to the concave side on average.
    """

    vertices: np.ndarray
    closed: bool
    normals: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    kappa: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __len__(self) -> int:
        return int(self.vertices.shape[0])

    @property
    def empty(self) -> bool:
        return len(self) == 0

    @property
    def H(self) -> np.ndarray:
        return self.kappa[:, None] * self.normals

    @property
    def normal_inward(self) -> bool:
        return bool(np.mean(self.kappa) > 0) if len(self) else False

    def segment_lengths(self) -> np.ndarray:
        P = self.vertices
        if len(P) < 2:
            return np.zeros(0)
        d = np.diff(P, axis=0)
        if self.closed:
            d = np.vstack([d, P[:1] - P[-1:]])
        return np.hypot(d[:, 0], d[:, 1])

    def arclength_weights(self) -> np.ndarray:
        """Length attributed to each vertex (half of each adjacent segment)."""
        L = self.segment_lengths()
        w = np.zeros(len(self))
        if len(self) < 2:
            return w
        if self.closed:
            w += 0.5 * L
            w += 0.5 * np.roll(L, 1)
        else:
            w[:-1] += 0.5 * L
            w[1:] += 0.5 * L
        return w

    def length(self) -> float:
        return float(np.sum(self.segment_lengths()))

    def mean_radius(self, center=None) -> float:
        c = np.mean(self.vertices, axis=0) if center is None else np.asarray(center, float)
        r = np.hypot(self.vertices[:, 0] - c[0], self.vertices[:, 1] - c[1])
        w = self.arclength_weights()
        return float(np.sum(r * w) / np.sum(w))


def _crossings(grid: GridSpec, u: np.ndarray):
    x, y = grid.coords(0), grid.coords(1)
    pos = u >= 0
    verts = {}
    # edges along axis 0 between (i, j) and (i+1, j): id (0, i, j)
    ch = pos[:-1, :] != pos[1:, :]
    for i, j in np.argwhere(ch):
        u0, u1 = u[i, j], u[i + 1, j]
        t = u0 / (u0 - u1)
        verts[(0, int(i), int(j))] = (x[i] + t * (x[i + 1] - x[i]), y[j])
    ch = pos[:, :-1] != pos[:, 1:]
    for i, j in np.argwhere(ch):
        u0, u1 = u[i, j], u[i, j + 1]
        t = u0 / (u0 - u1)
        verts[(1, int(i), int(j))] = (x[i], y[j] + t * (y[j + 1] - y[j]))
    return verts, pos


def _segments(u: np.ndarray, pos: np.ndarray):
    """Marching-squares segments as pairs of edge ids; saddles resolved by the cell-center mean."""
    code = (
        pos[:-1, :-1].astype(int)
        | (pos[1:, :-1].astype(int) << 1)
        | (pos[1:, 1:].astype(int) << 2)
        | (pos[:-1, 1:].astype(int) << 3)
    )
    segs = []
    for i, j in np.argwhere((code != 0) & (code != 15)):
        c = int(code[i, j])
        bottom, right, top, left = (0, i, j), (1, i + 1, j), (0, i, j + 1), (1, i, j)
        # corners a=(i,j) bit0, b=(i+1,j) bit1, c=(i+1,j+1) bit2, d=(i,j+1) bit3
        edges = []
        if (c & 1) != ((c >> 1) & 1):
            edges.append(bottom)
        if ((c >> 1) & 1) != ((c >> 2) & 1):
            edges.append(right)
        if ((c >> 2) & 1) != ((c >> 3) & 1):
            edges.append(top)
        if ((c >> 3) & 1) != (c & 1):
            edges.append(left)
        if len(edges) == 2:
            segs.append((edges[0], edges[1]))
        else:
            center = 0.25 * (u[i, j] + u[i + 1, j] + u[i + 1, j + 1] + u[i, j + 1])
            if (center >= 0) == bool(c & 1):
                # corner a's phase joins through the center; cut off corners b and d
                segs += [(bottom, right), (top, left)]
            else:
                segs += [(left, bottom), (right, top)]
    return segs


def _link(segs):
    adj: dict = {}
    for a, b in segs:
        adj.setdefault(a, []).append(b)
        adj.setdefault(b, []).append(a)
    seen = set()
    chains = []

    def walk(start):
        chain = [start]
        seen.add(start)
        prev, cur = None, start
        while True:
            nxt = [n for n in adj[cur] if n != prev and n not in seen]
            if not nxt:
                closed = len(chain) > 2 and start in adj[cur] and prev is not None
                return chain, closed
            prev, cur = cur, nxt[0]
            chain.append(cur)
            seen.add(cur)

    for k in adj:
        if len(adj[k]) == 1 and k not in seen:
            chains.append(walk(k))
    for k in adj:
        if k not in seen:
            chains.append(walk(k))
    return chains


def polyline_curvature(poly: InterfacePolyline) -> np.ndarray:
    """Signed curvature from the circle through vertices ``i-2, i, i+2``.

    The curvature vector points toward the circumcenter; ``kappa`` is its
    component along the stored normal. Open polylines copy the nearest
    interior value to their two end vertices on each side.
    """
    P = poly.vertices
    k = len(P)
    if k < 5:
        return np.zeros(k)
    idx = np.arange(k)
    if poly.closed:
        ia, ic = (idx - 2) % k, (idx + 2) % k
    else:
        ia, ic = np.clip(idx - 2, 0, k - 1), np.clip(idx + 2, 0, k - 1)
    A, B, C = P[ia], P[idx], P[ic]
    ab, bc, ca = B - A, C - B, A - C
    cross = ab[:, 0] * bc[:, 1] - ab[:, 1] * bc[:, 0]
    la, lb, lc = (np.hypot(d[:, 0], d[:, 1]) for d in (ab, bc, ca))
    denom = la * lb * lc
    ks = np.where(denom > 0, 2.0 * cross / np.where(denom > 0, denom, 1.0), 0.0)
    t = C - A
    tl = np.hypot(t[:, 0], t[:, 1])
    left = np.stack([-t[:, 1], t[:, 0]], axis=1) / np.where(tl > 0, tl, 1.0)[:, None]
    kappa = ks * np.einsum("ij,ij->i", left, poly.normals)
    if not poly.closed:
        kappa[:2] = kappa[2]
        kappa[-2:] = kappa[-3]
    return kappa


RESAMPLE_SPACING = 4.0


def _resample(P: np.ndarray, closed: bool, spacing: float) -> np.ndarray:
    """Uniform-arclength vertices along the polyline ``P``."""
    Q = np.vstack([P, P[:1]]) if closed else P
    s = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(Q, axis=0).T))])
    L = s[-1]
    n_seg = max(int(round(L / spacing)), 5 if closed else 1)
    t = np.linspace(0.0, L, n_seg + 1)
    if closed:
        t = t[:-1]
    return np.stack([np.interp(t, s, Q[:, 0]), np.interp(t, s, Q[:, 1])], axis=1)


def extract_interfaces(state_or_field, spacing: float | None = RESAMPLE_SPACING) -> list[InterfacePolyline]:
    """All components of ``{u = 0}``, longest first (2D).

    Raw marching-squares vertices sit anywhere from a tiny fraction of a
    cell to more than a cell apart, which makes the 5-vertex circle fit
    noisy. Each component is therefore resampled to uniform arclength
    ``spacing * h`` before curvature is computed; ``spacing=None`` keeps
    the raw vertices.
    """
    u_field = state_or_field.u if isinstance(state_or_field, PhaseState) else state_or_field
    grid = u_field.grid
    if grid.dim != 2:
        raise DiagnosticError("interface extraction is 2D only")
    u = u_field.values
    verts, pos = _crossings(grid, u)
    if not verts:
        return []
    segs = _segments(u, pos)
    gu = gc.gradient(u_field).components
    out = []
    for chain, closed in _link(segs):
        P = np.array([verts[e] for e in chain])
        keep = np.ones(len(P), dtype=bool)
        if len(P) > 1:
            d = np.hypot(*np.diff(P, axis=0).T)
            keep[1:] = d > 1e-12 * grid.h
            if closed and len(P) > 2 and np.hypot(*(P[-1] - P[0])) <= 1e-12 * grid.h:
                keep[-1] = False
        P = P[keep]
        if spacing is not None and len(P) > 1:
            P = _resample(P, closed and len(P) > 2, spacing * grid.h)
        g = sample(grid, gu, P).T
        nrm = np.hypot(g[:, 0], g[:, 1])
        normals = g / np.where(nrm > 0, nrm, 1.0)[:, None]
        poly = InterfacePolyline(P, closed and len(P) > 2, normals)
        poly.kappa = polyline_curvature(poly)
        out.append(poly)
    out.sort(key=lambda p: -len(p))
    return out


def extract_interface(state_or_field, spacing: float | None = RESAMPLE_SPACING) -> InterfacePolyline:
    """Longest component of ``{u = 0}``; an empty polyline when ``u`` has no sign change."""
    polys = extract_interfaces(state_or_field, spacing)
    if not polys:
        return InterfacePolyline(np.zeros((0, 2)), False)
    return polys[0]


@dataclass
class CurvatureComparison:
    defect: np.ndarray
    mean_defect: float
    lq_mean_defect: float
    q: float
    v_normal_lq_integral: float
    mean_kappa: float
    mean_v_normal: float


def curvature_comparison(poly: InterfacePolyline, v: VectorField, p: float = 1.5) -> CurvatureComparison:
    """Per-vertex ``|kappa*nu - (v.nu) nu|`` and ``int_Gamma |v.nu|^q`` with ``q = p(n-1)/(n-p)``.

    ``v`` is sampled at the vertices by bilinear interpolation. Means are
    arclength-weighted.
    """
    if poly.empty:
        raise DiagnosticError("empty interface")
    n = v.grid.dim
    if not (n / 2 < p < n):
        raise DiagnosticError(f"p must satisfy n/2 < p < n (n = {n}), got {p}")
    q = p * (n - 1) / (n - p)
    vs = sample(v.grid, v.components, poly.vertices).T
    vn = np.einsum("ij,ij->i", vs, poly.normals)
    defect = np.abs(poly.kappa - vn)
    w = poly.arclength_weights()
    L = float(np.sum(w))
    return CurvatureComparison(
        defect=defect,
        mean_defect=float(np.sum(defect * w) / L),
        lq_mean_defect=float((np.sum(defect**q * w) / L) ** (1 / q)),
        q=q,
        v_normal_lq_integral=float(np.sum(np.abs(vn) ** q * w)),
        mean_kappa=float(np.sum(poly.kappa * w) / L),
        mean_v_normal=float(np.sum(vn * w) / L),
    )


# ---------------------------------------------------------------------------
# CSV output

def write_csv(path, header: Sequence[str], rows) -> None:
    with Path(path).open("w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for r in rows:
            wr.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])


def write_density_csv(path, reports: Sequence[DensityRatioReport]) -> None:
    rows = []
    for rep in reports:
        for r, E, m in zip(rep.radii, rep.E, rep.mu_ratio):
            rows.append(list(rep.center) + [r, E, m])
    dim = len(reports[0].center) if reports else 2
    write_csv(path, [f"x{a}" for a in range(dim)] + ["r", "E_r_x", "mu_ratio"], rows)


def write_monotonicity_csv(path, rep: MonotonicityReport) -> None:
    rows = zip(rep.radii, rep.E, rep.lhs, rep.defect_term, rep.sphere_term, rep.advection_term, rep.residual)
    write_csv(path, ["r", "E_r_x", "dE_dr", "defect_term", "sphere_term", "advection_term", "residual"], rows)


def write_polyline_csv(path, poly: InterfacePolyline) -> None:
    rows = [(p[0], p[1], k) for p, k in zip(poly.vertices, poly.kappa)]
    write_csv(path, ["x", "y", "kappa"], rows)
