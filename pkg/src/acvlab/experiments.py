"""Named experiments: solve, diagnose, write reports and snapshots.

Every runner returns a :class:`RunResult` whose checks carry the acceptance
thresholds. Reports hold no timings, so identical configs give identical
files.
"""

from __future__ import annotations

import hashlib
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import minimize_scalar

from . import grid as gc
from . import kernels
from . import varifold as vf
from .config import ExperimentConfig, line_check_grid, load_config, parse_text, rho_spec, rung_overrides, v_spec
from .grid import GridSpec, ScalarField, VectorField
from .minmax import init_path, refine_saddle, relax_path, weighted_energy
from .solver import NonConvergenceError, PhaseState, SolverConfig, assumption_report, energy, newton_solve, residual

STATUS_ORDER = {"pass": 0, "fail": 1, "nonconverged": 3}


@dataclass
class Check:
    criterion: int | None
    name: str
    passed: bool
    value: float
    bound: str
    detail: str = ""

    def line(self) -> str:
        tag = f"[criterion {self.criterion}] " if self.criterion is not None else ""
        extra = f"; {self.detail}" if self.detail else ""
        return f"{tag}{self.name}: {'PASS' if self.passed else 'FAIL'} ({self.value:.6g} vs {self.bound}{extra})"


@dataclass
class RunResult:
    experiment: str
    outdir: Path
    checks: list[Check] = field(default_factory=list)
    metrics: dict = field(default_factory=dict)
    files: list[str] = field(default_factory=list)
    nonconverged: str | None = None

    @property
    def status(self) -> str:
        if self.nonconverged is not None:
            return "nonconverged"
        return "pass" if all(c.passed for c in self.checks) else "fail"

    def check(self, criterion, name, passed, value, bound, detail=""):
        self.checks.append(Check(criterion, name, bool(passed), float(value), bound, detail))

    def criterion_passed(self, n: int) -> bool:
        cs = [c for c in self.checks if c.criterion == n]
        return bool(cs) and all(c.passed for c in cs)

    def as_dict(self, cfg: ExperimentConfig) -> dict:
        out = {
            "experiment": self.experiment,
            "status": self.status,
            "config": dict(sorted(cfg.raw.items())),
            "checks": [asdict(c) for c in self.checks],
            "metrics": _jsonable(self.metrics),
            "files": sorted(self.files),
        }
        if self.nonconverged is not None:
            out["error"] = self.nonconverged
        return out


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    return x


def log(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


def write_report(res: RunResult, cfg: ExperimentConfig) -> Path:
    path = res.outdir / "report.json"
    res.files.append("report.json")
    path.write_text(json.dumps(res.as_dict(cfg), indent=2, sort_keys=False) + "\n")
    return path


def _snapshot(res: RunResult, name: str, f: ScalarField) -> None:
    gc.write_snapshot(res.outdir / name, f)
    res.files.append(name)


def _csv(res: RunResult, name: str, header, rows) -> None:
    vf.write_csv(res.outdir / name, header, rows)
    res.files.append(name)


def solver_config(cfg: ExperimentConfig) -> SolverConfig:
    return SolverConfig(tol=cfg["tol"], max_newton=cfg["max_newton"])


def _nonconverged(res: RunResult, exc: NonConvergenceError, name: str = "best_state.pfield") -> None:
    res.nonconverged = str(exc)
    res.metrics["solver"] = exc.report.as_dict()
    _snapshot(res, name, exc.state.u)


# ---------------------------------------------------------------------------
# standing wave

def kink(x, center: float, epsilon: float) -> np.ndarray:
    return np.tanh(math.sqrt(2.0) * (np.asarray(x) - center) / epsilon)


def aligned_sup_error(x: np.ndarray, u: np.ndarray, epsilon: float) -> tuple[float, float]:
    """``min_c max|u - tanh(sqrt2 (x - c)/eps)|`` and the minimizing shift."""
    i = int(np.argmax(u >= 0))
    c0 = x[i - 1] - u[i - 1] * (x[i] - x[i - 1]) / (u[i] - u[i - 1]) if 0 < i else x[0]
    h = x[1] - x[0]
    f = lambda c: float(np.max(np.abs(u - kink(x, c, epsilon))))
    r = minimize_scalar(f, bounds=(c0 - h, c0 + h), method="bounded", options={"xatol": 1e-12})
    return float(r.fun), float(r.x)


def run_standing_wave(cfg: ExperimentConfig, res: RunResult) -> None:
    eps, well = cfg["epsilon"], cfg.well()
    g = cfg.grid(eps)
    x = g.coords(0)
    u0 = ScalarField(g, np.clip(x / (2 * eps), -1.0, 1.0))
    st = PhaseState(u0, eps, well, v=v_spec(cfg, g), rho=rho_spec(cfg, g))
    try:
        s, rep = newton_solve(st, eps, cfg["tol"], config=solver_config(cfg), continuation=False)
    except NonConvergenceError as exc:
        _nonconverged(res, exc)
        return
    sigma = well.sigma
    sup, shift = aligned_sup_error(x, s.u.values, eps)
    E = energy(s)
    mass = vf.energy_measure(s).mass()
    xi = vf.discrepancy(s)
    res.metrics.update(
        sigma=sigma,
        h=g.h,
        solver=rep.as_dict(),
        energy=E,
        energy_error=E - sigma,
        energy_diagnostic=mass * sigma,
        mass=mass,
        sup_error=sup,
        shift=shift,
        xi_l1=xi.l1(),
        xi_sup=float(np.max(np.abs(xi.xi.values))),
    )
    res.check(1, "Newton converged", rep.converged, rep.residual, f"<= {cfg['tol']:g}")
    res.check(1, "aligned sup error", sup <= 1e-3, sup, "<= 1e-3")
    res.check(1, "energy - sigma", abs(E - sigma) <= 1e-3, E - sigma, "|.| <= 1e-3")
    res.check(1, "xi L1", xi.l1() <= 1e-2, xi.l1(), "<= 1e-2")
    ex = kink(x, shift, eps)
    _csv(res, "profile.csv", ["x", "u", "kink", "xi"], zip(x, s.u.values, ex, xi.xi.values))
    _snapshot(res, "u.pfield", s.u)


# ---------------------------------------------------------------------------
# 2D line interface

def _line_state(cfg: ExperimentConfig, g: GridSpec, eps: float):
    y = g.mesh()[1]
    st = PhaseState(ScalarField(g, np.tanh(math.sqrt(2.0) * y / eps)), eps, cfg.well(), v=v_spec(cfg, g), rho=rho_spec(cfg, g))
    return newton_solve(st, eps, cfg["tol"], config=solver_config(cfg), continuation=False)


def _line_centers(cfg: ExperimentConfig, eps: float) -> np.ndarray:
    span = cfg["center_span"]
    xs = np.linspace(-span, span, cfg["center_count"])
    return np.array([(x, y) for x in xs for y in (-0.5 * eps, 0.0, 0.5 * eps)])


def _density(cfg: ExperimentConfig, s: PhaseState, eps: float):
    radii = np.linspace(cfg["r_min"], cfg["r_max"], cfg["r_count"])
    reps = vf.density_ratio_scan(s, _line_centers(cfg, eps), radii, restrict_to_interface=True)
    E = np.array([r.E for r in reps])
    M = np.array([r.mu_ratio for r in reps])
    return reps, E, M


def run_line_2d(cfg: ExperimentConfig, res: RunResult) -> None:
    eps = cfg["epsilon"]
    g = cfg.grid(eps)
    try:
        s, rep = _line_state(cfg, g, eps)
    except NonConvergenceError as exc:
        _nonconverged(res, exc)
        return
    sigma = s.well.sigma
    reps, E, M = _density(cfg, s, eps)
    res.metrics.update(sigma=sigma, h=g.h, solver=rep.as_dict(), centers=len(reps))
    if not reps:
        res.check(2, "interface centers", False, 0, ">= 1")
        return
    e_rel = float(np.max(np.abs(E / (2 * sigma) - 1)))
    m_rel = float(np.max(np.abs(M / 2 - 1)))
    res.metrics.update(E_min=E.min(), E_max=E.max(), mu_min=M.min(), mu_max=M.max())
    res.check(2, "E(r,x) = 2 sigma", e_rel <= 0.05, e_rel, "max rel. error <= 0.05")
    res.check(2, "mu(B_r)/r = 2", m_rel <= 0.05, m_rel, "max rel. error <= 0.05")
    vf.write_density_csv(res.outdir / "density.csv", reps)
    res.files.append("density.csv")

    e2 = cfg["check_epsilon"]
    if e2 is not None:
        g2 = line_check_grid(cfg)
        try:
            s2, rep2 = _line_state(cfg, g2, e2)
        except NonConvergenceError as exc:
            _nonconverged(res, exc, "best_state_check.pfield")
            return
        reps2, E2, M2 = _density(cfg, s2, e2)
        lo, hi = M.min(), M.max()
        lo2, hi2 = (M2.min(), M2.max()) if reps2 else (math.nan, math.nan)
        res.metrics.update(check_solver=rep2.as_dict(), check_mu_min=lo2, check_mu_max=hi2, check_h=g2.h)
        ratio = max(lo / lo2, hi2 / hi) if reps2 else math.inf
        res.check(
            2,
            f"window at eps={e2:g} within 1.25x eps={eps:g} window",
            ratio <= 1.25,
            ratio,
            "<= 1.25",
            f"[{lo2:.4f}, {hi2:.4f}] vs [{lo:.4f}, {hi:.4f}]",
        )
        vf.write_density_csv(res.outdir / "density_check.csv", reps2)
        res.files.append("density_check.csv")

    radii = np.arange(cfg["mono_r_min"], cfg["mono_r_max"] + 1e-9, cfg["mono_spacing"] * g.h)
    worst, min_sph = 0.0, math.inf
    for k, rp in enumerate(reps):
        m = vf.monotonicity_check(s, rp.center, radii)
        rel = np.abs(m.residual) / np.maximum(np.abs(m.lhs), sigma)
        worst = max(worst, float(rel.max()))
        min_sph = min(min_sph, float(min(m.sphere_term)))
        vf.write_monotonicity_csv(res.outdir / f"monotonicity_{k:02d}.csv", m)
        res.files.append(f"monotonicity_{k:02d}.csv")
    res.metrics.update(monotonicity_max_rel_residual=worst, monotonicity_min_sphere=min_sph, monotonicity_radii=len(radii))
    res.check(3, "monotonicity residual", worst <= 0.05, worst, "<= 5% of max(|lhs|, sigma)")
    res.check(3, "sphere term", min_sph >= 0, min_sph, ">= 0")
    _snapshot(res, "u.pfield", s.u)


# ---------------------------------------------------------------------------
# prescribed mean curvature circle

def test_field(grid: GridSpec, seed, radius: float = 0.5, bumps: int = 3) -> VectorField:
    """Sum of compact bumps ``a (1 - d^2/s^2)_+^3`` centered near the circle of the given radius."""
    rng = np.random.default_rng(seed)
    X, Y = grid.mesh()
    out = np.zeros((2,) + grid.node_shape)
    for _ in range(bumps):
        th = rng.uniform(0, 2 * np.pi)
        c = radius * np.array([np.cos(th), np.sin(th)]) + rng.normal(0, 0.02, 2)
        s = rng.uniform(0.06, 0.15)
        b = np.clip(1 - ((X - c[0]) ** 2 + (Y - c[1]) ** 2) / s**2, 0, None) ** 3
        out += rng.normal(size=2)[:, None, None] * b
    return VectorField(grid, out)


def _quadrant_grid(cfg: ExperimentConfig, eps: float, cells_per_eps: float) -> GridSpec:
    L = cfg["upper"][0]
    n = int(math.ceil(L * cells_per_eps / eps - 1e-9))
    return GridSpec(2, (n, n), (L / n, L / n), (0.0, 0.0), cfg.boundary())


def _solve_grid(cfg: ExperimentConfig, eps: float) -> GridSpec:
    if cfg["symmetry"] == "quadrant":
        return _quadrant_grid(cfg, eps, cfg["cells_per_eps"] or cfg["min_resolution"])
    return cfg.grid(eps)


def _full(cfg: ExperimentConfig, u: ScalarField) -> ScalarField:
    return gc.unfold(u) if cfg["symmetry"] == "quadrant" else u


def _circle_geometry(state: PhaseState, p: float, R: float = 0.5) -> dict:
    poly = vf.extract_interface(state)
    out = {"closed": bool(poly.closed), "vertices": len(poly)}
    if poly.empty:
        return out
    cc = vf.curvature_comparison(poly, state.velocity(), p)
    out.update(
        radius=poly.mean_radius((0.0, 0.0)),
        length=poly.length(),
        curvature_defect=cc.mean_defect,
        mean_kappa=cc.mean_kappa,
        mean_v_normal=cc.mean_v_normal,
        q=cc.q,
        v_normal_lq_integral=cc.v_normal_lq_integral,
        v_normal_lq_reference=2.0**cc.q * 2 * math.pi * R,
    )
    return out


def circle_rung(cfg_text: str, eps: float, outdir: str) -> dict:
    """Solve one rung of the circle ladder and compute its diagnostics (picklable entry point)."""
    cfg = load_config(None, parse_text(cfg_text))
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    gq = _solve_grid(cfg, eps)
    st = PhaseState(
        ScalarField(gq, np.tanh(math.sqrt(2.0) * (0.5 - np.hypot(*gq.mesh())) / eps)),
        eps,
        cfg.well(),
        rho=rho_spec(cfg, gq),
        v=v_spec(cfg, gq),
    )
    try:
        s, rep = newton_solve(st, eps, cfg["tol"], config=solver_config(cfg))
    except NonConvergenceError as exc:
        gc.write_snapshot(out / "best_state.pfield", exc.state.u)
        return {"epsilon": eps, "status": "nonconverged", "error": str(exc), "solver": exc.report.as_dict()}
    gc.write_snapshot(out / "u.pfield", s.u)
    u = _full(cfg, s.u)
    g = u.grid
    S = PhaseState(u, eps, s.well, rho=rho_spec(cfg, g), v=v_spec(cfg, g))
    p = cfg["p"]
    geo = _circle_geometry(S, p)
    poly = vf.extract_interface(S)
    if not poly.empty:
        vf.write_polyline_csv(out / "polyline.csv", poly)
    fv = [vf.first_variation(S, test_field(g, [cfg["seed"], k], cfg["test_field_radius"])) for k in range(cfg["test_fields"])]
    vf.write_csv(
        out / "first_variation.csv",
        ["field", "deltaV", "curv_pairing", "mass", "max_grad_g", "relative_defect"],
        [(k, r.deltaV, r.curv_pairing, r.mass, r.max_grad_g, r.relative_defect) for k, r in enumerate(fv)],
    )
    w = cfg["window"]
    equip = vf.equipartition_norms(S, ([-w, -w], [w, w]))
    halv = vf.halving_check(S, ScalarField.constant(g, 1.0))
    xi = vf.discrepancy(S).xi.values
    ar = assumption_report(S, p)
    return {
        "epsilon": eps,
        "status": "pass",
        "h": g.h,
        "solver": rep.as_dict(),
        **geo,
        "fv_relative_defects": [r.relative_defect for r in fv],
        "equipartition": list(equip),
        "halving_values": list(halv.values),
        "halving_gaps": list(halv.gaps),
        "xi_sup_plus": float(max(np.max(xi), 0.0)),
        "weighted_energy": weighted_energy(S.u, eps, S.well, S.rho),
        "assumptions": ar.as_dict(),
    }


def circle_minmax(cfg_text: str, eps: float, outdir: str) -> dict:
    """String method plus saddle refinement for the circle (picklable entry point)."""
    cfg = load_config(None, parse_text(cfg_text))
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    # the string only needs the minimum resolution
    gq = _quadrant_grid(cfg, eps, cfg["min_resolution"]) if cfg["symmetry"] == "quadrant" else cfg.grid(eps)
    rho = rho_spec(cfg, gq)
    center = (0.0, 0.0)
    path = init_path(gq, cfg["path_nodes"], cfg["path_seeding"], eps, cfg.well(), rho, center=center, seed=cfg["seed"])
    path, mrep = relax_path(path, cfg["sweeps"])
    vf.write_csv(out / "path_energies.csv", ["node", "energy"], enumerate(path.energies()))
    vf.write_csv(out / "history.csv", ["sweep", "max_node_energy"], enumerate(mrep.history))
    try:
        s, srep = refine_saddle(
            path,
            mrep,
            tol=cfg["refine_tol"],
            probe_count=cfg["probe_count"],
            probe_seed=cfg["probe_seed"],
            config=solver_config(cfg),
        )
    except NonConvergenceError as exc:
        gc.write_snapshot(out / "best_state.pfield", exc.state.u)
        return {"status": "nonconverged", "error": str(exc), "minmax": mrep.as_dict()}
    gc.write_snapshot(out / "saddle.pfield", s.u)
    u = _full(cfg, s.u)
    S = PhaseState(u, eps, s.well, rho=rho_spec(cfg, u.grid))
    geo = _circle_geometry(S, cfg["p"])
    scale = 4.0 if cfg["symmetry"] == "quadrant" else 1.0
    sigma = s.well.sigma
    return {
        "status": "pass",
        "epsilon": eps,
        "h": gq.h,
        "minmax": mrep.as_dict(),
        "value_full_domain": scale * mrep.minmax_value,
        "sharp_interface_value": sigma * 2 * math.pi * 0.5 * math.exp(-2 * 0.25),
        "refine": srep.as_dict(),
        **geo,
    }


def _ratio(a: float, b: float) -> float:
    return a / b if b > 0 else (0.0 if a == 0 else math.inf)


def run_circle_pmc(cfg: ExperimentConfig, res: RunResult) -> None:
    ladder = sorted(cfg.epsilons, reverse=True)
    text = cfg.to_text()
    jobs = [(circle_rung, text, eps, str(res.outdir / f"eps_{eps:g}")) for eps in ladder]
    if cfg["minmax"]:
        jobs.append((circle_minmax, text, ladder[-1], str(res.outdir / "minmax")))
    results = _map(jobs, cfg["workers"])
    rungs = results[: len(ladder)]
    for eps in ladder:
        d = f"eps_{eps:g}"
        res.files += [f"{d}/{f.name}" for f in sorted((res.outdir / d).iterdir())]
    res.metrics["rungs"] = rungs
    bad = [r for r in rungs if r["status"] != "pass"]
    if bad:
        res.nonconverged = bad[0]["error"]
        return
    fin = rungs[-1]
    R_rel = abs(fin.get("radius", math.nan) - 0.5) / 0.5
    res.check(4, "solver: closed interface", fin["closed"], float(fin["closed"]), "closed polyline")
    res.check(4, "solver: mean radius", R_rel <= 0.03, fin.get("radius", math.nan), "0.5 +- 3%")
    res.check(4, "solver: curvature defect", fin.get("curvature_defect", math.inf) <= 0.1, fin.get("curvature_defect", math.nan), "<= 0.1")

    if cfg["minmax"]:
        mm = results[-1]
        res.metrics["minmax"] = mm
        res.files += [f"minmax/{f.name}" for f in sorted((res.outdir / "minmax").iterdir())]
        if mm["status"] != "pass":
            res.nonconverged = mm["error"]
            return
        R_rel = abs(mm.get("radius", math.nan) - 0.5) / 0.5
        res.check(4, "minmax: closed interface", mm["closed"], float(mm["closed"]), "closed polyline")
        res.check(4, "minmax: mean radius", R_rel <= 0.03, mm.get("radius", math.nan), "0.5 +- 3%")
        res.check(4, "minmax: curvature defect", mm.get("curvature_defect", math.inf) <= 0.1, mm.get("curvature_defect", math.nan), "<= 0.1")
        res.check(4, "minmax: refined residual", mm["refine"]["residual"] <= 1e-6, mm["refine"]["residual"], "<= 1e-6")

    by_eps = {r["epsilon"]: r for r in rungs}
    # first variation at the last two rungs
    if len(ladder) >= 2:
        a, b = by_eps[ladder[-2]], by_eps[ladder[-1]]
        worst = max(max(a["fv_relative_defects"]), max(b["fv_relative_defects"]))
        res.check(5, "first variation defect", worst <= 0.05, worst, "<= 0.05 ||V|| max|grad g|")
        shrink = max(_ratio(y, x) for x, y in zip(a["fv_relative_defects"], b["fv_relative_defects"]))
        res.check(5, f"defect shrink eps={ladder[-2]:g} -> {ladder[-1]:g}", shrink <= 0.75, shrink, "ratio <= 0.75 per field")
    # equipartition and halving trends over every halving
    names = ("xi", "grad - |grad w|", "pot - |grad w|")
    eq_worst, gap_worst = 0.0, 0.0
    for e0, e1 in zip(ladder[:-1], ladder[1:]):
        for k in range(3):
            eq_worst = max(eq_worst, _ratio(by_eps[e1]["equipartition"][k], by_eps[e0]["equipartition"][k]))
            gap_worst = max(gap_worst, _ratio(by_eps[e1]["halving_gaps"][k], by_eps[e0]["halving_gaps"][k]))
    if len(ladder) >= 2:
        res.check(7, "equipartition norm ratio per halving", eq_worst <= 0.75, eq_worst, "<= 0.75", ", ".join(names))
        res.check(8, "halving gap ratio per halving", gap_worst <= 0.75, gap_worst, "<= 0.75")
    g_fin = max(fin["halving_gaps"])
    res.check(8, f"halving gaps at eps={ladder[-1]:g}", g_fin <= 0.1, g_fin, "<= 0.1")
    q = fin.get("q", math.nan)
    res.check(9, "q = p(n-1)/(n-p)", abs(q - 3.0) <= 1e-12, q, "= 3")
    lq, ref = fin.get("v_normal_lq_integral", math.nan), fin.get("v_normal_lq_reference", math.nan)
    rel = abs(lq - ref) / ref
    res.check(9, "int |v.nu|^q over the interface", rel <= 0.1, lq, f"{ref:.6g} +- 10%")

    header = ["epsilon", "h", "radius", "curvature_defect", "xi_l1", "grad_minus_gradw_l1", "pot_minus_gradw_l1",
              "halving_grad", "halving_pot", "halving_w", "max_gap", "fv_max_relative_defect", "v_normal_lq_integral",
              "xi_sup_plus", "weighted_energy"]
    rows = [
        [r["epsilon"], r["h"], r.get("radius", math.nan), r.get("curvature_defect", math.nan), *r["equipartition"],
         *r["halving_values"], max(r["halving_gaps"]), max(r["fv_relative_defects"]), r.get("v_normal_lq_integral", math.nan),
         r["xi_sup_plus"], r["weighted_energy"]]
        for r in rungs
    ]
    _csv(res, "trends.csv", header, rows)


# ---------------------------------------------------------------------------
# mountain pass

def run_minmax(cfg: ExperimentConfig, res: RunResult) -> None:
    eps, well = cfg["epsilon"], cfg.well()
    g = cfg.grid(eps)
    rho = rho_spec(cfg, g)
    path = init_path(g, cfg["path_nodes"], cfg["path_seeding"], eps, well, rho, jitter=cfg.get("jitter"), seed=cfg["seed"])
    path, mrep = relax_path(path, cfg["sweeps"])
    _csv(res, "path_energies.csv", ["node", "energy"], enumerate(path.energies()))
    _csv(res, "history.csv", ["sweep", "max_node_energy"], enumerate(mrep.history))
    try:
        s, srep = refine_saddle(
            path,
            mrep,
            tol=cfg["refine_tol"],
            probe_count=cfg["probe_count"],
            probe_seed=cfg["probe_seed"],
            config=solver_config(cfg),
        )
    except NonConvergenceError as exc:
        res.metrics["minmax"] = mrep.as_dict()
        _nonconverged(res, exc)
        return
    _snapshot(res, "saddle.pfield", s.u)
    sigma = well.sigma
    res.metrics.update(sigma=sigma, h=g.h, minmax=mrep.as_dict(), refine=srep.as_dict())
    if rho is None:
        # a flat interface spans the cross-section orthogonal to the first axis
        cross = float(np.prod([b - a for a, b in zip(g.lower[1:], g.upper[1:])])) if g.dim > 1 else 1.0
        ref = sigma * cross
        rel = abs(mrep.minmax_value - ref) / ref
        res.metrics["reference_value"] = ref
        res.check(6, "min-max value", rel <= 0.05, mrep.minmax_value, f"{ref:.6g} +- 5%")
    h = np.asarray(mrep.history)
    rise = float(np.max(np.diff(h) / np.abs(h[1:]))) if h.size > 1 else 0.0
    res.check(6, "max-node history non-increasing", rise <= 1e-10, rise, "relative rise <= 1e-10")
    res.check(6, "refined saddle residual", srep.residual <= 1e-6, srep.residual, "<= 1e-6")
    res.check(6, "saddle nontrivial", mrep.nontrivial, float(mrep.nontrivial), "min u < -alpha < alpha < max u")
    res.check(6, "saddle index", mrep.saddle_index == 1, mrep.saddle_index, "= 1")


# ---------------------------------------------------------------------------
# infrastructure properties

def _cos_field(g: GridSpec) -> np.ndarray:
    return np.prod([np.cos(np.pi * m) for m in g.mesh()], axis=0)


def laplacian_adjointness(cfg: ExperimentConfig, seed: int = 0) -> float:
    """Worst ``|<Lu,w> - <u,Lw>| / (||Lu|| ||w||)`` over Neumann and periodic grids."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for bc in (gc.NEUMANN, gc.PERIODIC):
        g = GridSpec.box(cfg["lower"], cfg["upper"], cfg["cells"], bc)
        u = ScalarField(g, rng.standard_normal(g.node_shape))
        w = ScalarField(g, rng.standard_normal(g.node_shape))
        Lu, Lw = gc.laplacian(u), gc.laplacian(w)
        a, b = gc.inner_product(Lu, w), gc.inner_product(u, Lw)
        worst = max(worst, abs(a - b) / (gc.l2_norm(Lu) * gc.l2_norm(w)))
    return worst


def convergence_factors(cfg: ExperimentConfig, cells=(32, 64, 128)) -> dict[str, list[float]]:
    """Error ratios under grid halving for the Laplacian and ``|grad u|^2`` of ``prod cos(pi x_i)``."""
    errs = {"laplacian": [], "grad_sq": []}
    for n in cells:
        g = GridSpec.box(cfg["lower"], cfg["upper"], n, gc.NEUMANN)
        mesh = g.mesh()
        u = ScalarField(g, _cos_field(g))
        lap_exact = -g.dim * np.pi**2 * u.values
        gs_exact = sum(
            (np.pi * np.sin(np.pi * mesh[a]) * np.prod([np.cos(np.pi * mesh[b]) for b in range(g.dim) if b != a], axis=0)) ** 2
            for a in range(g.dim)
        )
        errs["laplacian"].append(float(np.max(np.abs(gc.laplacian(u).values - lap_exact))))
        errs["grad_sq"].append(float(np.max(np.abs(gc.grad_sq(u).values - gs_exact))))
    return {k: [e[i] / e[i + 1] for i in range(len(e) - 1)] for k, e in errs.items()}


def gradient_check(cfg: ExperimentConfig, seed: int = 0, t: float = 1e-5) -> float:
    """Relative gap between a central difference of ``F`` and ``<grad F, d>``.

    The discrete gradient of the weighted energy is the nodal residual times
    the quadrature weights and ``exp(rho)``.
    """
    rng = np.random.default_rng(seed)
    eps = cfg["epsilon"]
    g = cfg.grid(eps)
    well = cfg.well()
    mesh = g.mesh()
    rho = ScalarField(g, -0.5 * sum(m * m for m in mesh))
    u = ScalarField(g, np.tanh(np.sin(3 * mesh[0]) + 0.2 * rng.standard_normal(g.node_shape)))
    d = rng.standard_normal(g.node_shape)
    st = PhaseState(u, eps, well, rho=rho)
    grad = g.weights * np.exp(rho.values) * residual(st).values
    F = lambda a: weighted_energy(ScalarField(g, a), eps, well, rho)
    fd = (F(u.values + t * d) - F(u.values - t * d)) / (2 * t)
    an = float(np.sum(grad * d))
    return abs(fd - an) / abs(an)


def _fingerprint(cfg: ExperimentConfig) -> str:
    """Hash of stencils, reductions, ball quadrature and a short solve."""
    rng = np.random.default_rng(1)
    g = GridSpec.box((0.0, 0.0), (1.0, 1.0), 64)
    u = ScalarField(g, np.tanh(rng.standard_normal(g.node_shape)))
    X, Y = g.mesh()
    r = np.hypot(X - 0.5, Y - 0.5)
    # rho = -8|x - c|^2 holds a circle of radius 1/4 in equilibrium
    rho = ScalarField(g, -8 * r * r)
    hsh = hashlib.sha256()
    for a in (gc.laplacian(u).values, gc.grad_sq(u).values, gc.weighted_laplacian(u, rho).values, gc.gradient(u).components):
        hsh.update(np.ascontiguousarray(a).tobytes())
    hsh.update(np.float64(gc.integrate(u)).tobytes())
    hsh.update(gc.ball_integrals(u, (0.5, 0.5), [0.1, 0.2, 0.3]).tobytes())
    st = PhaseState(ScalarField(g, np.tanh(math.sqrt(2) * (0.25 - r) / 0.1)), 0.1, cfg.well(), rho=rho)
    s, _ = newton_solve(st, 0.1, 1e-8, continuation=False)
    hsh.update(s.u.values.tobytes())
    return hsh.hexdigest()


def run_infra(cfg: ExperimentConfig, res: RunResult) -> None:
    adj = laplacian_adjointness(cfg, cfg["seed"])
    res.check(10, "Laplacian adjointness", adj <= 1e-10, adj, "<= 1e-10")
    fac = convergence_factors(cfg)
    res.metrics["convergence_factors"] = fac
    for name, fs in fac.items():
        lo, hi = min(fs), max(fs)
        res.check(10, f"{name} convergence factors", 3.6 <= lo and hi <= 4.4, lo if lo < 3.6 else hi, "in [3.6, 4.4]",
                  ", ".join(f"{f:.4f}" for f in fs))
    gr = gradient_check(cfg, cfg["seed"])
    res.check(10, "F_eps gradient vs central difference", gr <= 1e-4, gr, "relative <= 1e-4")
    prints = {}
    for n in (1, 2, 4):
        with kernels.use_threads(n):
            prints[f"threads={n}"] = _fingerprint(cfg)
    if kernels.compiled_available():
        for name in ("cython", "python"):
            with kernels.use_backend(name):
                prints[f"backend={name}"] = _fingerprint(cfg)
    same = len(set(prints.values())) == 1
    res.metrics["fingerprints"] = prints
    res.check(10, "bitwise determinism (threads 1/2/4, backends)", same, len(set(prints.values())), "1 distinct result",
              "" if kernels.compiled_available() else "compiled backend unavailable, threads only")


# ---------------------------------------------------------------------------
# sweep and dispatch

def _call(job):
    fn, *args = job
    return fn(*args)


def _map(jobs: list, workers: int) -> list:
    if workers <= 1 or len(jobs) <= 1:
        return [_call(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        return list(pool.map(_call, jobs))


def _rung_job(text: str, outdir: str) -> dict:
    cfg = load_config(None, parse_text(text))
    r = run_experiment(cfg, Path(outdir))
    return {"status": r.status, "checks": [asdict(c) for c in r.checks], "metrics": _jsonable(r.metrics), "error": r.nonconverged}


def _scalars(d: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in d.items():
        if isinstance(v, dict):
            out.update(_scalars(v, f"{prefix}{k}."))
        elif isinstance(v, (int, float, bool)) and not isinstance(v, bool):
            out[prefix + k] = v
    return out


def run_sweep(cfg: ExperimentConfig, res: RunResult) -> None:
    ladder = cfg["ladder"]
    jobs = []
    for eps in ladder:
        sub = load_config(cfg["base"], rung_overrides(cfg, eps))
        jobs.append((_rung_job, sub.to_text(), str(res.outdir / f"eps_{eps:g}")))
    rungs = _map(jobs, cfg["workers"])
    scal = [_scalars(r["metrics"]) for r in rungs]
    keys = sorted(set().union(*scal))
    _csv(res, "trends.csv", ["epsilon", "status"] + keys, [[e, r["status"]] + [s.get(k, "") for k in keys] for e, r, s in zip(ladder, rungs, scal)])
    for eps, r in zip(ladder, rungs):
        d = f"eps_{eps:g}"
        res.files += [f"{d}/{f.name}" for f in sorted((res.outdir / d).iterdir())]
        for c in r["checks"]:
            res.checks.append(Check(c["criterion"], f"eps={eps:g}: {c['name']}", c["passed"], c["value"], c["bound"], c["detail"]))
        if r["status"] == "nonconverged" and res.nonconverged is None:
            res.nonconverged = f"eps={eps:g}: {r['error']}"
    res.metrics["rungs"] = [{"epsilon": e, "status": r["status"]} for e, r in zip(ladder, rungs)]


RUNNERS = {
    "standing-wave": run_standing_wave,
    "line-2d": run_line_2d,
    "circle-pmc": run_circle_pmc,
    "minmax-1d": run_minmax,
    "minmax-2d": run_minmax,
    "sweep": run_sweep,
    "infra": run_infra,
}


def _clear_previous(outdir: Path) -> None:
    """Delete the files a previous report in ``outdir`` lists, and nothing else."""
    old = outdir / "report.json"
    if not old.is_file():
        return
    try:
        files = json.loads(old.read_text()).get("files", [])
    except (ValueError, AttributeError):
        return
    for name in files:
        p = outdir / name
        if p.is_file() and outdir.resolve() in p.resolve().parents:
            p.unlink()
    for d in sorted({(outdir / n).parent for n in files}, key=lambda q: len(q.parts), reverse=True):
        if d != outdir and d.is_dir() and not any(d.iterdir()):
            d.rmdir()


def run_experiment(cfg: ExperimentConfig, outdir: Path | None = None) -> RunResult:
    """Run one validated config and write ``report.json`` into its output directory."""
    outdir = Path(outdir) if outdir is not None else cfg.output_dir
    _clear_previous(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    res = RunResult(cfg.experiment, outdir)
    (outdir / "config.txt").write_text(cfg.to_text())
    res.files.append("config.txt")
    RUNNERS[cfg.experiment](cfg, res)
    write_report(res, cfg)
    return res
