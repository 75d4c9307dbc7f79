"""Flat ``key = value`` experiment configs: parsing, defaults and validation."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import grid as gc
from .potential import DoubleWell, canonical_quartic, read_well_file, validate_hypotheses

EXPERIMENTS = ("standing-wave", "line-2d", "circle-pmc", "minmax-1d", "minmax-2d", "sweep", "infra")
OUTPUT_ENV = "ACVLAB_OUTPUT_ROOT"


class ConfigError(ValueError):
    """Invalid config; ``key`` names the offending entry."""

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(t) for t in text.split(",") if t.strip())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(t) for t in text.split(",") if t.strip())


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_float(text: str) -> float | None:
    return None if text.strip().lower() in ("", "none") else float(text)


# key -> parser; every accepted key is listed here
PARSERS = {
    "experiment": str,
    "base": str,
    "epsilon": float,
    "ladder": _floats,
    "lower": _floats,
    "upper": _floats,
    "cells": _ints,
    "cells_per_eps": _opt_float,
    "min_resolution": float,
    "bc": str,
    "well": str,
    "well_gamma": float,
    "well_alpha": float,
    "well_kappa": float,
    "well_scale": float,
    "p": float,
    "rho": str,
    "v": str,
    "output": str,
    "seed": int,
    "tol": float,
    "max_newton": int,
    "workers": int,
    "symmetry": str,
    # line-2d
    "check_epsilon": _opt_float,
    "r_min": float,
    "r_max": float,
    "r_count": int,
    "center_count": int,
    "center_span": float,
    "mono_r_min": float,
    "mono_r_max": float,
    "mono_spacing": float,
    # circle-pmc
    "test_fields": int,
    "test_field_radius": float,
    "window": float,
    "minmax": _bool,
    # minmax
    "path_nodes": int,
    "path_seeding": str,
    "sweeps": int,
    "probe_seed": int,
    "probe_count": int,
    "jitter": float,
    "refine_tol": float,
}

COMMON = {
    "bc": "neumann",
    "well": "quartic",
    "well_gamma": "0",
    "well_alpha": "0.7",
    "well_kappa": "1.88",
    "well_scale": "1",
    "rho": "none",
    "v": "none",
    "seed": "0",
    "tol": "1e-8",
    "max_newton": "50",
    "min_resolution": "8",
    "cells_per_eps": "none",
    "symmetry": "none",
    "workers": "1",
}

DEFAULTS = {
    "standing-wave": {
        "epsilon": "0.05",
        "lower": "-1",
        "upper": "1",
        "cells_per_eps": "10",
    },
    "line-2d": {
        "epsilon": "0.02",
        "lower": "-0.5,-0.5",
        "upper": "0.5,0.5",
        "cells": "256,256",
        "min_resolution": "5",
        "check_epsilon": "0.01",
        "r_min": "0.1",
        "r_max": "0.4",
        "r_count": "13",
        "center_count": "5",
        "center_span": "0.1",
        "mono_r_min": "0.1",
        "mono_r_max": "0.3",
        "mono_spacing": "4",
    },
    "circle-pmc": {
        "ladder": "0.08,0.04,0.02",
        "p": "1.5",
        "lower": "-0.75,-0.75",
        "upper": "0.75,0.75",
        "cells_per_eps": "20",
        "rho": "radial:-2",
        "symmetry": "quadrant",
        "test_fields": "10",
        "test_field_radius": "0.5",
        "window": "0.65",
        "minmax": "true",
        "path_nodes": "16",
        "path_seeding": "radial",
        "sweeps": "60",
        "probe_seed": "0",
        "probe_count": "10",
        "refine_tol": "1e-6",
    },
    "minmax-1d": {
        "epsilon": "0.05",
        "lower": "-1",
        "upper": "1",
        "cells": "400",
        "path_nodes": "16",
        "path_seeding": "linear",
        "jitter": "0.05",
        "seed": "1",
        "sweeps": "2000",
        "probe_seed": "0",
        "probe_count": "50",
        "refine_tol": "1e-8",
    },
    "minmax-2d": {
        "epsilon": "0.05",
        "lower": "0,0",
        "upper": "1,1",
        "cells": "160,160",
        "path_nodes": "16",
        "path_seeding": "sweep",
        "jitter": "0.05",
        "sweeps": "500",
        "probe_seed": "0",
        "probe_count": "10",
        "refine_tol": "1e-8",
    },
    "sweep": {
        "base": "standing-wave",
        "ladder": "0.08,0.056,0.04",
    },
    "infra": {
        "lower": "0,0",
        "upper": "1,1",
        "cells": "32,32",
        "epsilon": "0.25",
    },
}

@dataclass
class ExperimentConfig:
    """Parsed config: raw text values plus typed accessors."""

    experiment: str
    raw: dict[str, str] = field(default_factory=dict)
    given: frozenset = frozenset()

    def __getitem__(self, key: str):
        if key not in self.raw:
            raise ConfigError(key, "missing")
        try:
            return PARSERS[key](self.raw[key])
        except ValueError as exc:
            raise ConfigError(key, f"cannot parse {self.raw[key]!r} ({exc})") from None

    def get(self, key: str, default=None):
        return self[key] if key in self.raw else default

    def with_values(self, **values) -> "ExperimentConfig":
        raw = dict(self.raw)
        raw.update({k: str(v) for k, v in values.items()})
        return ExperimentConfig(raw.get("experiment", self.experiment), raw, self.given | set(values))

    def to_text(self) -> str:
        return "".join(f"{k} = {self.raw[k]}\n" for k in sorted(self.raw))

    # -- derived quantities -------------------------------------------------

    @property
    def dim(self) -> int:
        return len(self["lower"])

    @property
    def epsilons(self) -> tuple[float, ...]:
        if "ladder" in self.raw and self.experiment in ("circle-pmc", "sweep"):
            return self["ladder"]
        return (self["epsilon"],)

    @property
    def output_dir(self) -> Path:
        root = self.raw.get("output") or os.environ.get(OUTPUT_ENV) or "runs"
        return Path(root) / self.experiment

    def boundary(self) -> gc.BC:
        text = self["bc"].strip().lower()
        if text == "neumann":
            return gc.NEUMANN
        if text == "periodic":
            return gc.PERIODIC
        if text.startswith("dirichlet:"):
            return gc.dirichlet(float(text.split(":", 1)[1]))
        raise ConfigError("bc", f"unknown boundary condition {text!r}")

    def grid(self, epsilon: float | None = None) -> gc.GridSpec:
        """Grid for one epsilon: ``cells_per_eps`` (if set) overrides ``cells``."""
        lo, hi = np.asarray(self["lower"]), np.asarray(self["upper"])
        if lo.shape != hi.shape or np.any(hi <= lo):
            raise ConfigError("upper", "must exceed lower componentwise, with one entry per axis")
        cpe = self["cells_per_eps"]
        if cpe is not None:
            eps = self.epsilons[-1] if epsilon is None else epsilon
            cells = tuple(int(math.ceil((b - a) * cpe / eps - 1e-9)) for a, b in zip(lo, hi))
        else:
            cells = self["cells"]
            if len(cells) == 1:
                cells = cells * len(lo)
            if len(cells) != len(lo):
                raise ConfigError("cells", f"needs {len(lo)} entries")
        return gc.GridSpec.box(tuple(lo), tuple(hi), cells, self.boundary())

    def well(self) -> DoubleWell:
        text = self["well"]
        if text == "quartic":
            q = canonical_quartic()
            w = replace(q, gamma=self["well_gamma"], alpha=self["well_alpha"], kappa=self["well_kappa"])
        elif text.startswith("file:"):
            try:
                w = read_well_file(
                    text[5:], gamma=self["well_gamma"], alpha=self["well_alpha"], kappa=self["well_kappa"]
                )
            except (OSError, ValueError) as exc:
                raise ConfigError("well", str(exc)) from None
        else:
            raise ConfigError("well", f"unknown well {text!r}; use quartic or file:<path>")
        scale = self["well_scale"]
        return w if scale == 1.0 else w.scaled(scale)


def parse_text(text: str, origin: str = "<text>") -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{origin}:{n}", "expected key = value")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k] = v
    return out


def parse_overrides(items) -> dict[str, str]:
    out = {}
    for item in items:
        if "=" not in item:
            raise ConfigError(item, "override must look like key=value")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def load_config(source: str | None = None, overrides: dict[str, str] | None = None) -> ExperimentConfig:
    """Build a config from an experiment name or a config file, plus overrides.

    Defaults fill every key the source leaves out. Unknown keys raise
    :class:`ConfigError`.
    """
    given: dict[str, str] = {}
    if source is not None:
        p = Path(source)
        if source in EXPERIMENTS:
            given["experiment"] = source
        elif p.is_file():
            given.update(parse_text(p.read_text(), str(p)))
        else:
            raise ConfigError("experiment", f"{source!r} is neither an experiment name nor a config file")
    given.update(overrides or {})
    name = given.get("experiment")
    if name not in EXPERIMENTS:
        raise ConfigError("experiment", f"unknown experiment {name!r}; choose from {', '.join(EXPERIMENTS)}")
    for k in given:
        if k not in PARSERS:
            raise ConfigError(k, "unknown key")
    raw = dict(COMMON)
    raw.update(DEFAULTS[name])
    raw.update(given)
    if "p" not in raw and "lower" in raw:
        # midpoint of the admissible range (n/2, n)
        raw["p"] = repr(0.75 * len(_floats(raw["lower"])))
    cfg = ExperimentConfig(name, raw, frozenset(given))
    for k in raw:
        cfg[k]  # parse every value once so bad values fail early
    return cfg


# ---------------------------------------------------------------------------
# validation

@dataclass
class Finding:
    key: str
    ok: bool
    message: str


@dataclass
class ValidationResult:
    findings: list[Finding]

    @property
    def ok(self) -> bool:
        return all(f.ok for f in self.findings)

    def errors(self) -> list[Finding]:
        return [f for f in self.findings if not f.ok]

    def summary(self) -> str:
        return "\n".join(f"{'ok  ' if f.ok else 'FAIL'} {f.key}: {f.message}" for f in self.findings)


def validate(cfg: ExperimentConfig) -> ValidationResult:
    """Check resolution, exponent range, field specs and well hypotheses without running."""
    out: list[Finding] = []

    def check(key, ok, msg):
        out.append(Finding(key, bool(ok), msg))

    try:
        if cfg.experiment == "sweep":
            base = cfg["base"]
            if base not in EXPERIMENTS or base in ("sweep", "infra"):
                check("base", False, f"cannot sweep {base!r}")
                return ValidationResult(out)
            check("base", True, base)
            for eps in cfg["ladder"]:
                sub = load_config(base, rung_overrides(cfg, eps))
                for f in validate(sub).findings:
                    out.append(Finding(f.key, f.ok, f"[epsilon={eps:g}] {f.message}"))
            return ValidationResult(out)

        eps_all = cfg.epsilons
        check("epsilon", all(e > 0 for e in eps_all), f"values {', '.join(f'{e:g}' for e in eps_all)}")
        res = cfg["min_resolution"]
        for e in eps_all:
            h = cfg.grid(e).h
            check(
                "cells" if cfg["cells_per_eps"] is None else "cells_per_eps",
                h <= e / res * (1 + 1e-9),
                f"h = {h:.4g} vs eps/{res:g} = {e / res:.4g} at eps = {e:g}",
            )
        if cfg.experiment == "line-2d" and cfg["check_epsilon"] is not None:
            e2 = cfg["check_epsilon"]
            h2 = line_check_grid(cfg).h
            check("check_epsilon", h2 <= e2 / res * (1 + 1e-9), f"h = {h2:.4g} vs eps/{res:g} = {e2 / res:.4g}")
        n = cfg.dim
        p = cfg["p"]
        check("p", n / 2 < p < n, f"n/2 < p < n needs {n / 2:g} < p < {n}, got p = {p:g}")
        check("tol", cfg["tol"] > 0, f"tol = {cfg['tol']:g}")
        if cfg.raw["rho"] != "none" and cfg.raw["v"] != "none":
            check("v", False, "give either rho or v, not both")
        rho_spec(cfg, cfg.grid(eps_all[-1]))
        v_spec(cfg, cfg.grid(eps_all[-1]))
        if "path_nodes" in cfg.raw:
            check("path_nodes", cfg["path_nodes"] >= 16, f"m = {cfg['path_nodes']} (at least 16)")
            check("sweeps", cfg["sweeps"] >= 1, f"sweeps = {cfg['sweeps']}")
        if cfg["symmetry"] not in ("none", "quadrant"):
            check("symmetry", False, f"unknown symmetry {cfg['symmetry']!r}")
        elif cfg["symmetry"] == "quadrant":
            lo, hi = np.asarray(cfg["lower"]), np.asarray(cfg["upper"])
            sym = np.allclose(lo, -hi) and cfg.boundary().kind == "neumann"
            check(
                "symmetry",
                sym,
                "quadrant of a box centered at 0" if sym else "quadrant symmetry needs a box centered at 0 with Neumann faces",
            )
            if sym and cfg.raw["rho"].split(":")[0] not in ("radial", "none"):
                check("rho", False, "quadrant symmetry needs a mirror-symmetric rho (radial or none)")
        rep = validate_hypotheses(cfg.well())
        for c in rep.checks:
            check(
                f"well ({c.name})",
                c.passed,
                f"worst margin {c.worst_margin:.4g} at s = {c.worst_at:.4g}" + (f" {c.detail}" if c.detail else ""),
            )
        if rep.smoothness_note:
            check("well", True, rep.smoothness_note)
    except ConfigError as exc:
        check(exc.key, False, str(exc).split(": ", 1)[-1])
    except gc.FieldError as exc:
        check("grid", False, str(exc))
    return ValidationResult(out)


def rung_overrides(cfg: ExperimentConfig, epsilon: float) -> dict[str, str]:
    """Overrides that turn a sweep config into the config of one rung."""
    skip = {"experiment", "base", "ladder", "workers", "output"}
    out = {k: cfg.raw[k] for k in cfg.given if k not in skip}
    out["epsilon"] = repr(float(epsilon))
    return out


def line_check_grid(cfg: ExperimentConfig) -> gc.GridSpec:
    """The finer grid of the line-2d uniformity check: same h/eps as the main grid."""
    g = cfg.grid()
    ratio = cfg["epsilon"] / cfg["check_epsilon"]
    cells = tuple(int(round(c * ratio)) for c in g.extents)
    return gc.GridSpec.box(g.lower, g.upper, cells, cfg.boundary())


# ---------------------------------------------------------------------------
# rho / v fields

def rho_spec(cfg: ExperimentConfig, grid: gc.GridSpec) -> gc.ScalarField | None:
    """``none``, ``radial:c`` (c|x|^2), ``affine:b1,..`` (b.x) or ``snapshot:<path>``."""
    text = cfg["rho"].strip()
    if text == "none":
        return None
    kind, _, arg = text.partition(":")
    mesh = grid.mesh()
    try:
        if kind == "radial":
            c = float(arg)
            return gc.ScalarField(grid, c * sum(m * m for m in mesh))
        if kind == "affine":
            b = _floats(arg)
            if len(b) != grid.dim:
                raise ConfigError("rho", f"affine rho needs {grid.dim} coefficients")
            return gc.ScalarField(grid, sum(bi * m for bi, m in zip(b, mesh)))
        if kind == "snapshot":
            f = gc.read_snapshot(arg)
            if f.grid != grid:
                raise ConfigError("rho", f"snapshot grid {f.grid.header()} differs from the experiment grid")
            return f
    except (OSError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError("rho", str(exc)) from None
    raise ConfigError("rho", f"unknown rho spec {text!r}")


def v_spec(cfg: ExperimentConfig, grid: gc.GridSpec) -> gc.VectorField | None:
    """``none`` or ``constant:v1,..``."""
    text = cfg["v"].strip()
    if text == "none":
        return None
    kind, _, arg = text.partition(":")
    if kind == "constant":
        try:
            vals = _floats(arg)
        except ValueError as exc:
            raise ConfigError("v", str(exc)) from None
        if len(vals) != grid.dim:
            raise ConfigError("v", f"constant v needs {grid.dim} components")
        comp = np.stack([np.full(grid.node_shape, c) for c in vals])
        return gc.VectorField(grid, comp)
    raise ConfigError("v", f"unknown v spec {text!r}")
