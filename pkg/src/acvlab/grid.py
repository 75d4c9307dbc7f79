"""Uniform Cartesian grids, node-based fields and second-order stencils.

Nodes sit at ``origin + i*h`` along each axis. A non-periodic axis with
``extent`` cells carries ``extent + 1`` nodes; a periodic axis carries
``extent`` nodes and node ``extent`` is identified with node 0. Boundary
closures use one ghost layer: reflection for Neumann, the fixed value for
Dirichlet and wraparound for periodic axes.

Integrals use the cell-average rule: each cell contributes the mean of its
corner values times its volume. On nodes this is the trapezoid rule, which
is what makes the Neumann Laplacian self-adjoint in :func:`inner_product`.
All sums go through a fixed pairwise tree (:func:`tree_sum`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels


class FieldError(ValueError):
    """Base class for invalid field or grid input."""


class NonFiniteFieldError(FieldError):
    def __init__(self, index, value):
        self.index = tuple(int(i) for i in index)
        self.value = value
        super().__init__(f"non-finite value {value!r} at node {self.index}")


class GridMismatchError(FieldError):
    pass


class BallOutsideDomainError(FieldError):
    pass


@dataclass(frozen=True)
class BC:
    """Boundary condition of one axis: ``neumann``, ``dirichlet`` or ``periodic``."""

    kind: str
    value: float = 0.0

    def __post_init__(self):
        if self.kind not in ("neumann", "dirichlet", "periodic"):
            raise FieldError(f"unknown boundary condition {self.kind!r}")

    @property
    def code(self) -> str:
        if self.kind == "neumann":
            return "N"
        if self.kind == "periodic":
            return "P"
        return f"D:{self.value!r}"

    @classmethod
    def from_code(cls, code: str) -> "BC":
        if code == "N":
            return NEUMANN
        if code == "P":
            return PERIODIC
        if code.startswith("D:"):
            return dirichlet(float(code[2:]))
        raise FieldError(f"unknown boundary code {code!r}")


NEUMANN = BC("neumann")
PERIODIC = BC("periodic")


def dirichlet(value: float) -> BC:
    return BC("dirichlet", float(value))


@dataclass(frozen=True)
class GridSpec:
    dim: int
    extents: tuple[int, ...]
    spacing: tuple[float, ...]
    origin: tuple[float, ...]
    bc: tuple[BC, ...]

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise FieldError(f"dimension must be 1, 2 or 3, got {self.dim}")
        object.__setattr__(self, "extents", tuple(int(e) for e in self.extents))
        object.__setattr__(self, "spacing", tuple(float(h) for h in self.spacing))
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))
        bc = self.bc
        if isinstance(bc, BC):
            bc = (bc,) * self.dim
        object.__setattr__(self, "bc", tuple(bc))
        for name in ("extents", "spacing", "origin", "bc"):
            if len(getattr(self, name)) != self.dim:
                raise FieldError(f"{name} must have {self.dim} entries")
        if any(e < 4 for e in self.extents):
            raise FieldError(f"all extents must be >= 4, got {self.extents}")
        if any(not (h > 0 and math.isfinite(h)) for h in self.spacing):
            raise FieldError(f"all spacings must be positive, got {self.spacing}")

    @classmethod
    def box(cls, lower: Sequence[float], upper: Sequence[float], cells: Sequence[int] | int, bc=NEUMANN):
        """Grid covering the box ``[lower, upper]`` with the given cell counts."""
        lower = tuple(float(v) for v in lower)
        upper = tuple(float(v) for v in upper)
        dim = len(lower)
        if isinstance(cells, int):
            cells = (cells,) * dim
        spacing = tuple((b - a) / c for a, b, c in zip(lower, upper, cells))
        return cls(dim, tuple(cells), spacing, lower, bc)

    @property
    def node_shape(self) -> tuple[int, ...]:
        return tuple(
            e if b.kind == "periodic" else e + 1 for e, b in zip(self.extents, self.bc)
        )

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.node_shape))

    @property
    def lower(self) -> tuple[float, ...]:
        return self.origin

    @property
    def upper(self) -> tuple[float, ...]:
        return tuple(o + e * h for o, e, h in zip(self.origin, self.extents, self.spacing))

    @property
    def volume(self) -> float:
        return float(np.prod([e * h for e, h in zip(self.extents, self.spacing)]))

    @property
    def h(self) -> float:
        """Largest spacing."""
        return max(self.spacing)

    def coords(self, axis: int) -> np.ndarray:
        n = self.node_shape[axis]
        return self.origin[axis] + np.arange(n) * self.spacing[axis]

    def mesh(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*[self.coords(a) for a in range(self.dim)], indexing="ij"))

    def node_position(self, index) -> np.ndarray:
        return np.array([self.origin[a] + index[a] * self.spacing[a] for a in range(self.dim)])

    @cached_property
    def weights(self) -> np.ndarray:
        """Trapezoid node weights (read-only); they sum to the domain volume."""
        w = np.ones(())
        for a in range(self.dim):
            wa = np.full(self.node_shape[a], self.spacing[a])
            if self.bc[a].kind != "periodic":
                wa[0] *= 0.5
                wa[-1] *= 0.5
            w = np.multiply.outer(w, wa)
        w = np.ascontiguousarray(w)
        w.flags.writeable = False
        return w

    def distance_to_boundary(self, point) -> float:
        point = np.asarray(point, dtype=float)
        return float(min(min(p - lo, hi - p) for p, lo, hi in zip(point, self.lower, self.upper)))

    def check_ball(self, center, r: float) -> None:
        """Raise :class:`BallOutsideDomainError` unless ``B_r(center)`` lies in the domain."""
        center = np.asarray(center, dtype=float)
        if center.shape != (self.dim,):
            raise FieldError(f"center must have {self.dim} coordinates")
        if not r > 0:
            raise FieldError(f"radius must be positive, got {r}")
        tol = 1e-12 * max(1.0, r)
        for a in range(self.dim):
            low = center[a] - r - self.lower[a]
            high = self.upper[a] - (center[a] + r)
            if low < -tol:
                raise BallOutsideDomainError(
                    f"ball of radius {r} at {center.tolist()} crosses the lower boundary of axis {a} by {-low:.3g}"
                )
            if high < -tol:
                raise BallOutsideDomainError(
                    f"ball of radius {r} at {center.tolist()} crosses the upper boundary of axis {a} by {-high:.3g}"
                )

    def header(self) -> str:
        parts = ["pfield", str(self.dim)]
        parts += [str(e) for e in self.extents]
        parts += [repr(h) for h in self.spacing]
        parts += [repr(o) for o in self.origin]
        parts += [b.code for b in self.bc]
        return " ".join(parts)


def _check_finite(values: np.ndarray) -> None:
    if not np.all(np.isfinite(values)):
        bad = np.argwhere(~np.isfinite(values))[0]
        raise NonFiniteFieldError(bad, values[tuple(bad)])


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Node values of a real function on ``grid``. Immutable."""

    grid: GridSpec
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.size != self.grid.n_nodes:
            raise FieldError(f"expected {self.grid.n_nodes} values, got {v.size}")
        v = np.ascontiguousarray(v.reshape(self.grid.node_shape))
        _check_finite(v)
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @classmethod
    def constant(cls, grid: GridSpec, c: float) -> "ScalarField":
        return cls(grid, np.full(grid.node_shape, float(c)))

    @classmethod
    def from_function(cls, grid: GridSpec, fn) -> "ScalarField":
        return cls(grid, fn(*grid.mesh()))

    def _other(self, other):
        if isinstance(other, ScalarField):
            if other.grid != self.grid:
                raise GridMismatchError("fields live on different grids")
            return other.values
        return other

    def __add__(self, other):
        return ScalarField(self.grid, self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return ScalarField(self.grid, self.values - self._other(other))

    def __rsub__(self, other):
        return ScalarField(self.grid, self._other(other) - self.values)

    def __mul__(self, other):
        return ScalarField(self.grid, self.values * self._other(other))

    __rmul__ = __mul__

    def __neg__(self):
        return ScalarField(self.grid, -self.values)

    def map(self, fn) -> "ScalarField":
        return ScalarField(self.grid, fn(self.values))

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))


@dataclass(frozen=True, eq=False)
class VectorField:
    """``dim`` node-value arrays stacked along the first axis. Immutable."""

    grid: GridSpec
    components: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = np.array(self.components, dtype=float)
        shape = (self.grid.dim,) + self.grid.node_shape
        if c.size != int(np.prod(shape)):
            raise FieldError(f"expected components of shape {shape}")
        c = np.ascontiguousarray(c.reshape(shape))
        _check_finite(c)
        c.flags.writeable = False
        object.__setattr__(self, "components", c)

    @classmethod
    def constant(cls, grid: GridSpec, vec) -> "VectorField":
        vec = np.asarray(vec, dtype=float)
        return cls(grid, np.broadcast_to(vec.reshape((-1,) + (1,) * grid.dim), (grid.dim,) + grid.node_shape))

    def component(self, axis: int) -> ScalarField:
        return ScalarField(self.grid, self.components[axis])

    def dot(self, other: "VectorField") -> ScalarField:
        if other.grid != self.grid:
            raise GridMismatchError("fields live on different grids")
        return ScalarField(self.grid, np.einsum("i...,i...->...", self.components, other.components))

    def norm(self) -> ScalarField:
        return ScalarField(self.grid, np.sqrt(np.einsum("i...,i...->...", self.components, self.components)))

    def __add__(self, other):
        return VectorField(self.grid, self.components + other.components)

    def __mul__(self, s):
        if isinstance(s, ScalarField):
            return VectorField(self.grid, self.components * s.values[None])
        return VectorField(self.grid, self.components * s)

    __rmul__ = __mul__


# ---------------------------------------------------------------------------
# stencils

def _lift(grid: GridSpec, values: np.ndarray) -> np.ndarray:
    return values.reshape(grid.node_shape + (1,) * (3 - grid.dim))


def pad_ghosts(grid: GridSpec, values: np.ndarray, *, reflect_dirichlet: bool = False) -> np.ndarray:
    """Lift to 3D and attach one ghost layer per axis according to the boundary conditions."""
    a = _lift(grid, np.asarray(values, dtype=float))
    n = a.shape
    p = np.empty((n[0] + 2, n[1] + 2, n[2] + 2))
    p[1:-1, 1:-1, 1:-1] = a
    for ax in range(3):
        lo = [slice(1, -1)] * 3
        hi = [slice(1, -1)] * 3
        lo[ax] = 0
        hi[ax] = -1
        src = [slice(None)] * 3
        if ax >= grid.dim:
            first = a[tuple(src[:ax] + [0])]
            last = first
        else:
            kind = grid.bc[ax].kind
            take = lambda i: np.take(a, i, axis=ax)
            if kind == "periodic":
                first, last = take(-1), take(0)
            elif kind == "neumann" or reflect_dirichlet:
                first, last = take(1), take(-2)
            else:
                first = last = grid.bc[ax].value
        p[tuple(lo)] = first
        p[tuple(hi)] = last
    return p


def _inv(grid: GridSpec, power: int, factor: float = 1.0) -> np.ndarray:
    out = np.zeros(3)
    for a in range(grid.dim):
        out[a] = 1.0 / (factor * grid.spacing[a]) ** power
    return out


def laplacian(u: ScalarField) -> ScalarField:
    """(2n+1)-point second-order Laplacian with the grid's ghost policy."""
    g = u.grid
    out = np.empty(g.node_shape + (1,) * (3 - g.dim))
    kernels.impl.laplacian(pad_ghosts(g, u.values), _inv(g, 2), out, kernels.threads())
    return ScalarField(g, out)


def gradient(u: ScalarField) -> VectorField:
    """Central differences, same ghost policy as :func:`laplacian`."""
    g = u.grid
    out = np.empty((3,) + g.node_shape + (1,) * (3 - g.dim))
    kernels.impl.gradient(pad_ghosts(g, u.values), _inv(g, 1, 2.0), out, kernels.threads())
    return VectorField(g, out[: g.dim])


def grad_sq(u: ScalarField) -> ScalarField:
    """Nodal |grad u|^2 as the mean of squared forward and backward differences.

    Its trapezoid integral is exactly the edge-based Dirichlet energy whose
    first variation is the compact Laplacian, so energies built on it are
    variationally consistent with :func:`laplacian`.
    """
    g = u.grid
    out = np.empty(g.node_shape + (1,) * (3 - g.dim))
    kernels.impl.grad_sq(pad_ghosts(g, u.values), _inv(g, 2), out, kernels.threads())
    return ScalarField(g, out)


def weighted_laplacian(u: ScalarField, rho: ScalarField) -> ScalarField:
    """``exp(-rho) div(exp(rho) grad u)`` in conservative form, edge weights by arithmetic mean.

    Equals :func:`laplacian` when ``rho`` is constant. It is minus the
    first variation of ``1/2 int |grad u|^2 exp(rho)`` in the
    ``exp(rho)``-weighted trapezoid inner product (Neumann/periodic axes).
    """
    g = u.grid
    if rho.grid != g:
        raise GridMismatchError("u and rho live on different grids")
    pe = pad_ghosts(g, np.exp(rho.values), reflect_dirichlet=True)
    out = np.empty(g.node_shape + (1,) * (3 - g.dim))
    kernels.impl.weighted_div(pad_ghosts(g, u.values), pe, _inv(g, 2), out, kernels.threads())
    return ScalarField(g, out)


# ---------------------------------------------------------------------------
# quadrature

def tree_sum(a) -> float:
    """Deterministic pairwise-tree sum of a flattened array."""
    return float(kernels.impl.tree_sum(np.ascontiguousarray(np.ravel(a), dtype=float)))


def integrate(f: ScalarField) -> float:
    return tree_sum(f.grid.weights * f.values)


def inner_product(f: ScalarField, g: ScalarField) -> float:
    """Cell-average (trapezoid) approximation of the integral of f*g over the domain."""
    if f.grid != g.grid:
        raise GridMismatchError("fields live on different grids")
    return tree_sum(f.grid.weights * f.values * g.values)


def l2_norm(f: ScalarField) -> float:
    return math.sqrt(max(inner_product(f, f), 0.0))


def cell_average(grid: GridSpec, values: np.ndarray) -> np.ndarray:
    """Mean of the 2^n corner values of every cell; periodic axes wrap."""
    a = np.asarray(values, dtype=float).reshape(grid.node_shape)
    for ax in range(grid.dim):
        if grid.bc[ax].kind == "periodic":
            a = 0.5 * (a + np.roll(a, -1, axis=ax))
        else:
            lo = [slice(None)] * grid.dim
            hi = [slice(None)] * grid.dim
            lo[ax] = slice(0, -1)
            hi[ax] = slice(1, None)
            a = 0.5 * (a[tuple(lo)] + a[tuple(hi)])
    return a


def simpson_nodal(f: ScalarField, fn) -> ScalarField:
    """Nodal field whose trapezoid integral is the cellwise tensor-Simpson integral of ``fn``.

    ``fn`` is applied to the multilinear interpolant of ``f`` at the 3^n
    Simpson points of every cell; each node then takes the mean of the
    Simpson cell means of its adjacent cells. For smooth nonlinear ``fn``
    this removes the O(h^2) lumping error of evaluating ``fn`` at nodes.
    """
    g = f.grid
    a = np.asarray(f.values, dtype=float)
    for ax in range(g.dim):
        if g.bc[ax].kind == "periodic":
            a = np.concatenate([a, np.take(a, [0], axis=ax)], axis=ax)
        lo = np.take(a, range(a.shape[ax] - 1), axis=ax)
        hi = np.take(a, range(1, a.shape[ax]), axis=ax)
        shape = list(a.shape)
        shape[ax] = 2 * a.shape[ax] - 1
        fine = np.empty(shape)
        sl = [slice(None)] * g.dim
        sl[ax] = slice(0, None, 2)
        fine[tuple(sl)] = a
        sl[ax] = slice(1, None, 2)
        fine[tuple(sl)] = 0.5 * (lo + hi)
        a = fine
    c = np.asarray(fn(a), dtype=float)
    for ax in range(g.dim):
        n = (c.shape[ax] - 1) // 2
        e0 = np.take(c, range(0, 2 * n, 2), axis=ax)
        m = np.take(c, range(1, 2 * n, 2), axis=ax)
        e1 = np.take(c, range(2, 2 * n + 1, 2), axis=ax)
        c = (e0 + 4.0 * m + e1) / 6.0
    for ax in range(g.dim):
        if g.bc[ax].kind == "periodic":
            c = 0.5 * (c + np.roll(c, 1, axis=ax))
        else:
            first = np.take(c, [0], axis=ax)
            last = np.take(c, [c.shape[ax] - 1], axis=ax)
            inner = 0.5 * (np.take(c, range(c.shape[ax] - 1), axis=ax) + np.take(c, range(1, c.shape[ax]), axis=ax))
            c = np.concatenate([first, inner, last], axis=ax)
    return ScalarField(g, c)


SUBSAMPLES = {1: 64, 2: 16, 3: 8}


def ball_weights(grid: GridSpec, center, r: float, window_r: float | None = None):
    """Node indices and quadrature weights for integrating over ``B_r(center)``.

    The integrand is the multilinear interpolant of the nodal values, so
    ``sum(w * f[idx])`` is its integral over the ball. Cells fully inside
    contribute the exact cell integral; cells straddling the sphere use a
    fixed power-of-two midpoint subsample (``SUBSAMPLES`` per axis), which
    keeps fully covered subsamples exact and the weights monotone in ``r``.
    The window covers ``B_{window_r}`` (default ``r``); scans over several
    radii pass the largest so every radius shares one index window.
    """
    grid.check_ball(center, r)
    center = np.asarray(center, dtype=float)
    wr = r if window_r is None else max(float(window_r), r)
    edges, idx, nsub = [], [], []
    for a in range(grid.dim):
        h, o, ext = grid.spacing[a], grid.origin[a], grid.extents[a]
        i0 = max(int(math.floor((center[a] - wr - o) / h)) - 1, 0)
        i1 = min(int(math.ceil((center[a] + wr - o) / h)) + 1, ext)
        edges.append(o + np.arange(i0, i1 + 1) * h)
        idx.append(np.arange(i0, i1 + 1) % grid.node_shape[a])
        nsub.append(SUBSAMPLES[grid.dim])
    c3 = np.zeros(3)
    c3[: grid.dim] = center
    for a in range(grid.dim, 3):
        edges.append(np.array([0.0, 0.0]))
        nsub.append(1)
    cshape = tuple(len(e) - 1 for e in edges)
    mom = np.empty(cshape + (8,))
    kernels.impl.ball_moments(
        edges[0], edges[1], edges[2], c3, float(r), np.array(nsub, dtype=np.int64), mom, kernels.threads()
    )
    vol = float(np.prod(grid.spacing))
    w = np.zeros(tuple(n + 1 for n in cshape[: grid.dim]))
    for q in range(2 ** grid.dim):
        # corners along the lifted axes are folded back onto the real ones
        m = mom[..., q] + mom[..., q + 4] if grid.dim < 3 else mom[..., q]
        if grid.dim == 1:
            m = m + mom[..., q + 2] + mom[..., q + 6]
        m = m.reshape(cshape[: grid.dim])
        sl = tuple(slice(1, None) if (q >> a) & 1 else slice(0, -1) for a in range(grid.dim))
        w[sl] += m
    return np.ix_(*idx), w * vol


def ball_integral(f: ScalarField, center, r: float) -> float:
    """Integral over the closed ball of the multilinear interpolant of ``f``."""
    ix, w = ball_weights(f.grid, center, r)
    return tree_sum(w * f.values[ix])


def ball_integrals(f: ScalarField, center, radii) -> np.ndarray:
    """:func:`ball_integral` for several radii over one common node window.

    With a shared window the sums for a nonnegative ``f`` are monotone in
    the radius exactly, not just up to rounding.
    """
    return ball_integrals_multi([f], center, radii)[0]


def ball_integrals_multi(fields: Sequence[ScalarField], center, radii) -> np.ndarray:
    """Ball integrals of several fields on one grid; shape ``(len(fields), len(radii))``."""
    radii = [float(r) for r in radii]
    out = np.empty((len(fields), len(radii)))
    if not radii or not fields:
        return out
    g = fields[0].grid
    if any(f.grid != g for f in fields):
        raise GridMismatchError("fields live on different grids")
    rmax = max(radii)
    g.check_ball(center, rmax)
    for k, r in enumerate(radii):
        ix, w = ball_weights(g, center, r, window_r=rmax)
        for m, f in enumerate(fields):
            out[m, k] = tree_sum(w * f.values[ix])
    return out


# ---------------------------------------------------------------------------
# snapshots

def unfold(f: ScalarField, axes: Sequence[int] | None = None) -> ScalarField:
    """Even reflection of a field across the lower face of each listed axis.

    A mirror-symmetric solution solved on ``[0, L]`` with a Neumann lower
    face is, node for node, the same discrete solution as on ``[-L, L]``,
    because the Neumann ghost is exactly the even reflection. Default axes
    are all axes.
    """
    grid = f.grid
    axes = range(grid.dim) if axes is None else axes
    values = f.values
    extents, origin = list(grid.extents), list(grid.origin)
    for a in axes:
        if grid.bc[a].kind != "neumann" or abs(grid.origin[a]) > 1e-12 * grid.spacing[a]:
            raise FieldError(f"axis {a} must start at 0 with a Neumann face to unfold")
        back = np.flip(np.take(values, range(1, values.shape[a]), axis=a), axis=a)
        values = np.concatenate([back, values], axis=a)
        extents[a] *= 2
        origin[a] = -grid.upper[a]
    return ScalarField(GridSpec(grid.dim, tuple(extents), grid.spacing, tuple(origin), grid.bc), values)


def write_snapshot(path, f: ScalarField) -> None:
    path = Path(path)
    with path.open("w") as fh:
        fh.write(f.grid.header() + "\n")
        np.savetxt(fh, f.values.reshape(1, -1) if f.grid.dim == 1 else f.values.reshape(f.values.shape[0], -1), fmt="%.17g")


def read_snapshot(path) -> ScalarField:
    """Parse a ``pfield`` snapshot; rejects a value count that disagrees with the header."""
    text = Path(path).read_text().split("\n", 1)
    head = text[0].split()
    if not head or head[0] != "pfield":
        raise FieldError("not a pfield snapshot")
    try:
        n = int(head[1])
        rest = head[2:]
        if len(rest) != 4 * n:
            raise FieldError(f"header has {len(rest)} entries after the dimension, expected {4 * n}")
        extents = [int(v) for v in rest[:n]]
        spacing = [float(v) for v in rest[n : 2 * n]]
        origin = [float(v) for v in rest[2 * n : 3 * n]]
        bc = [BC.from_code(c) for c in rest[3 * n :]]
    except (IndexError, ValueError) as exc:
        raise FieldError(f"malformed pfield header: {exc}") from exc
    grid = GridSpec(n, extents, spacing, origin, tuple(bc))
    body = text[1] if len(text) > 1 else ""
    values = np.array(body.split(), dtype=float)
    if values.size != grid.n_nodes:
        raise FieldError(f"snapshot holds {values.size} values, header implies {grid.n_nodes}")
    return ScalarField(grid, values)
