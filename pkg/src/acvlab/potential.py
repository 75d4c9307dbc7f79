"""Double-well potentials, the surface tension constant and the Phi transform."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.interpolate import CubicHermiteSpline, CubicSpline

from .grid import ScalarField

Fn = Callable[[np.ndarray], np.ndarray]

PHI_RANGE = 1.5


class QuadratureError(RuntimeError):
    pass


class PotentialRangeError(ValueError):
    """Phase values so far outside [-1, 1] that the solve must have diverged."""


@dataclass(frozen=True, eq=False)
class DoubleWell:
    """A double-well potential with its first two derivatives.

    ``gamma`` is the interior critical point, and ``W'' >= kappa`` is claimed
    for ``|s| >= alpha``. Tabulated wells set ``tabulated`` so the
    validation report can flag the interpolant's limited smoothness.
    """

    W: Fn
    dW: Fn
    d2W: Fn
    gamma: float
    alpha: float
    kappa: float
    name: str = "custom"
    tabulated: bool = False

    def scaled(self, c: float) -> "DoubleWell":
        """The well ``c * W`` (sigma scales by sqrt(c), kappa by c)."""
        return DoubleWell(
            lambda s: c * self.W(s),
            lambda s: c * self.dW(s),
            lambda s: c * self.d2W(s),
            self.gamma,
            self.alpha,
            c * self.kappa,
            name=f"{c}*{self.name}",
            tabulated=self.tabulated,
        )

    @cached_property
    def constants(self) -> "WellConstants":
        return sigma_constant(self)

    @property
    def sigma(self) -> float:
        return self.constants.sigma

    def stabilization(self, margin: float = 0.1) -> float:
        """Largest sampled W'' on ``[-1 - margin, 1 + margin]``."""
        s = np.linspace(-1 - margin, 1 + margin, 2001)
        return float(np.max(self.d2W(s)))

    @cached_property
    def _phi_table(self):
        return _build_phi_table(self)


def canonical_quartic() -> DoubleWell:
    """W(u) = (1 - u^2)^2 with gamma = 0, alpha = 0.7, kappa = 1.88."""
    return DoubleWell(
        W=lambda u: (1.0 - u * u) ** 2,
        dW=lambda u: -4.0 * u * (1.0 - u * u),
        d2W=lambda u: 12.0 * u * u - 4.0,
        gamma=0.0,
        alpha=0.7,
        kappa=1.88,
        name="quartic",
    )


def tabulated_well(s, w, *, gamma: float, alpha: float, kappa: float, name: str = "table") -> DoubleWell:
    """Well from samples on a uniform grid covering at least [-1.5, 1.5], by cubic spline."""
    s = np.asarray(s, dtype=float)
    w = np.asarray(w, dtype=float)
    if s.ndim != 1 or s.shape != w.shape or s.size < 8:
        raise ValueError("well table needs two equal-length columns with at least 8 rows")
    ds = np.diff(s)
    if np.any(ds <= 0) or np.ptp(ds) > 1e-9 * max(1.0, abs(ds[0])) + 1e-12:
        raise ValueError("well table must use a uniform, increasing s-grid")
    if s[0] > -PHI_RANGE or s[-1] < PHI_RANGE:
        raise ValueError(f"well table must cover [-{PHI_RANGE}, {PHI_RANGE}]")
    spline = CubicSpline(s, w)
    d1 = spline.derivative(1)
    d2 = spline.derivative(2)
    return DoubleWell(
        W=lambda u: spline(u),
        dW=lambda u: d1(u),
        d2W=lambda u: d2(u),
        gamma=gamma,
        alpha=alpha,
        kappa=kappa,
        name=name,
        tabulated=True,
    )


def read_well_file(path, *, gamma: float, alpha: float, kappa: float) -> DoubleWell:
    data = np.loadtxt(Path(path), ndmin=2)
    if data.shape[1] != 2:
        raise ValueError(f"{path}: expected two columns (s, W(s))")
    return tabulated_well(data[:, 0], data[:, 1], gamma=gamma, alpha=alpha, kappa=kappa, name=str(path))


@dataclass(frozen=True)
class WellConstants:
    sigma: float
    phi_at_one: float


def _root_2w(well: DoubleWell):
    return lambda s: math.sqrt(max(2.0 * float(well.W(s)), 0.0))


def sigma_constant(well: DoubleWell, rtol: float = 1e-8) -> WellConstants:
    """sigma = int_{-1}^{1} sqrt(2 W(s)) ds by adaptive Gauss-Kronrod quadrature."""
    f = _root_2w(well)
    val, err, info = integrate.quad(f, -1.0, 1.0, epsabs=0.0, epsrel=rtol * 1e-2, limit=200, full_output=True)[:3]
    if not (val > 0 and math.isfinite(val)) or err > rtol * abs(val):
        raise QuadratureError(f"sigma quadrature did not converge (value {val}, error {err})")
    return WellConstants(sigma=val, phi_at_one=val / 2.0)


# ---------------------------------------------------------------------------
# Phi(s) = int_{-1}^{s} sqrt(W/2)

_PHI_NODES = 3001


def _build_phi_table(well: DoubleWell):
    s = np.linspace(-PHI_RANGE, PHI_RANGE, _PHI_NODES)
    deriv = np.sqrt(np.maximum(well.W(s), 0.0) / 2.0)
    g = lambda t: math.sqrt(max(float(well.W(t)), 0.0) / 2.0)
    # cumulative integral by 5-point Gauss-Legendre per table interval
    xg, wg = np.polynomial.legendre.leggauss(5)
    a, b = s[:-1], s[1:]
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    pts = mid[:, None] + half[:, None] * xg[None, :]
    vals = np.sqrt(np.maximum(well.W(pts), 0.0) / 2.0)
    pieces = (vals * wg[None, :]).sum(axis=1) * half
    cum = np.concatenate([[0.0], np.cumsum(pieces)])
    i_m1 = int(np.argmin(np.abs(s + 1.0)))
    anchor = cum[i_m1] - integrate.quad(g, -1.0, s[i_m1], epsabs=1e-14)[0]
    return CubicHermiteSpline(s, cum - anchor, deriv)


def phi(s, well: DoubleWell) -> np.ndarray:
    """Pointwise Phi; values outside [-1.5, 1.5] are rejected as a diverged state."""
    s = np.asarray(s, dtype=float)
    if s.size and np.max(np.abs(s)) > PHI_RANGE:
        raise PotentialRangeError(
            f"phase value {float(s.flat[np.argmax(np.abs(s))]):.4g} outside [-{PHI_RANGE}, {PHI_RANGE}]"
        )
    return well._phi_table(s)


def phi_transform(u: ScalarField, well: DoubleWell) -> ScalarField:
    """w = Phi(u) as a field."""
    return ScalarField(u.grid, phi(u.values, well))


# ---------------------------------------------------------------------------
# hypothesis validation

@dataclass
class HypothesisCheck:
    name: str
    passed: bool
    worst_margin: float
    worst_at: float
    detail: str = ""


@dataclass
class ValidationReport:
    checks: list[HypothesisCheck]
    smoothness_note: str = ""

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> HypothesisCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def summary(self) -> str:
        lines = [
            f"{c.name}: {'pass' if c.passed else 'FAIL'} (worst margin {c.worst_margin:.4g} at s={c.worst_at:.4g}) {c.detail}".rstrip()
            for c in self.checks
        ]
        if self.smoothness_note:
            lines.append(self.smoothness_note)
        return "\n".join(lines)


def validate_hypotheses(well: DoubleWell, samples: int = 4001, tol: float = 1e-9) -> ValidationReport:
    """Check (a) wells at +-1, (b) sign pattern of W' around gamma, (c) W'' >= kappa for |s| >= alpha.

    Sampling is uniform over [-2, 2]. Each check reports its worst margin
    (negative means violated) and where it occurred.
    """
    if samples < 1000:
        raise ValueError("validation needs at least 1000 samples")
    s = np.linspace(-2.0, 2.0, samples)
    W, dW, d2W = well.W(s), well.dW(s), well.d2W(s)
    checks = []

    # (a) nonnegative, zero value and slope at +-1
    ends = np.array([-1.0, 1.0])
    end_vals = np.abs(well.W(ends))
    end_slopes = np.abs(well.dW(ends))
    i = int(np.argmin(W))
    margins = [(float(W[i]), float(s[i]))]
    margins += [(-float(v), float(e)) for v, e in zip(end_vals, ends)]
    margins += [(-float(v), float(e)) for v, e in zip(end_slopes, ends)]
    worst = min(margins)
    interior = s[(np.abs(s) < 1.0) & (np.abs(np.abs(s) - 1.0) > 1e-6)]
    strict = bool(np.all(well.W(interior) > 0))
    ok_a = worst[0] >= -tol and strict
    checks.append(
        HypothesisCheck("a", ok_a, worst[0], worst[1], "" if strict else "W vanishes inside (-1, 1)")
    )

    # (b) W' > 0 on (-1, gamma), W' < 0 on (gamma, 1)
    left = (s > -1.0) & (s < well.gamma)
    right = (s > well.gamma) & (s < 1.0)
    cand = []
    if np.any(left):
        j = np.argmin(dW[left])
        cand.append((float(dW[left][j]), float(s[left][j])))
    if np.any(right):
        j = np.argmin(-dW[right])
        cand.append((float(-dW[right][j]), float(s[right][j])))
    worst_b = min(cand) if cand else (0.0, well.gamma)
    ok_b = -1.0 < well.gamma < 1.0 and worst_b[0] > 0
    checks.append(HypothesisCheck("b", ok_b, worst_b[0], worst_b[1]))

    # (c) W'' >= kappa on |s| >= alpha
    mask = np.abs(s) >= well.alpha
    m = d2W[mask] - well.kappa
    j = int(np.argmin(m))
    ok_c = 0.0 < well.alpha < 1.0 and well.kappa > 0 and m[j] >= -tol
    checks.append(HypothesisCheck("c", bool(ok_c), float(m[j]), float(s[mask][j])))

    note = ""
    if well.tabulated:
        note = "tabulated well: cubic-spline interpolant is C2, not C3; smoothness assumed, not verified"
    return ValidationReport(checks, note)
