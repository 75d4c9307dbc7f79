"""Command-line driver: ``acvlab run | validate | report``.

Exit codes: 0 every check passed, 1 some acceptance check failed,
2 invalid config (nothing written), 3 solver nonconvergence (partial
report and best state written), 4 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from .config import EXPERIMENTS, OUTPUT_ENV, ConfigError, load_config, parse_overrides, validate
from .experiments import RunResult, log, run_experiment

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NONCONVERGED, EXIT_IO = 0, 1, 2, 3, 4


def _split(items: list[str]) -> tuple[list[str], list[str]]:
    """Separate experiment names / config files from ``key=value`` overrides."""
    sources = [s for s in items if "=" not in s]
    overrides = [s for s in items if "=" in s]
    return sources, overrides


def _load_all(items: list[str]):
    sources, overrides = _split(items)
    ov = parse_overrides(overrides)
    if not sources:
        return [load_config(None, ov)]
    return [load_config(s, ov) for s in sources]


def cmd_run(args) -> int:
    try:
        cfgs = _load_all(args.items)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for cfg in cfgs:
        v = validate(cfg)
        if not v.ok:
            print(f"{cfg.experiment}: invalid config", file=sys.stderr)
            for f in v.errors():
                print(f"  {f.key}: {f.message}", file=sys.stderr)
            return EXIT_CONFIG
    code = EXIT_OK
    for cfg in cfgs:
        t0 = time.perf_counter()
        try:
            res = run_experiment(cfg)
        except OSError as exc:
            print(f"{cfg.experiment}: I/O error: {exc}", file=sys.stderr)
            return EXIT_IO
        log(f"{cfg.experiment}: finished in {time.perf_counter() - t0:.1f} s, reports in {res.outdir}")
        _print_result(res)
        if res.status == "nonconverged":
            code = max(code, EXIT_NONCONVERGED)
        elif res.status == "fail":
            code = max(code, EXIT_FAIL)
    return code


def _print_result(res: RunResult) -> None:
    print(f"== {res.experiment}: {res.status.upper()}")
    for c in res.checks:
        print("  " + c.line())
    if res.nonconverged:
        print(f"  nonconverged: {res.nonconverged}")


def cmd_validate(args) -> int:
    try:
        cfgs = _load_all(args.items)
    except ConfigError as exc:
        print(f"config error: {exc}")
        return EXIT_CONFIG
    code = EXIT_OK
    for cfg in cfgs:
        v = validate(cfg)
        print(f"== {cfg.experiment}: {'valid' if v.ok else 'INVALID'}")
        for line in v.summary().splitlines():
            print("  " + line)
        if not v.ok:
            code = EXIT_CONFIG
    return code


def _format_checks(checks: list[dict]) -> list[str]:
    out = []
    for c in checks:
        tag = f"[criterion {c['criterion']}] " if c.get("criterion") is not None else ""
        extra = f"; {c['detail']}" if c.get("detail") else ""
        out.append(f"{tag}{c['name']}: {'PASS' if c['passed'] else 'FAIL'} ({c['value']:.6g} vs {c['bound']}{extra})")
    return out


def _format_metrics(d, indent: int = 2) -> list[str]:
    out = []
    pad = " " * indent
    for k, v in d.items():
        if isinstance(v, dict):
            out.append(f"{pad}{k}:")
            out += _format_metrics(v, indent + 2)
        elif isinstance(v, list) and v and isinstance(v[0], dict):
            out.append(f"{pad}{k}: [{len(v)} entries]")
        elif isinstance(v, list) and len(v) > 8:
            head = ", ".join(f"{x:.6g}" if isinstance(x, float) else str(x) for x in v[:4])
            out.append(f"{pad}{k}: [{head}, ... {len(v)} values]")
        elif isinstance(v, float):
            out.append(f"{pad}{k}: {v:.6g}")
        else:
            out.append(f"{pad}{k}: {v}")
    return out


def cmd_report(args) -> int:
    p = Path(args.path)
    if p.is_dir():
        p = p / "report.json"
    try:
        rep = json.loads(p.read_text())
    except OSError as exc:
        print(f"cannot read {p}: {exc}", file=sys.stderr)
        return EXIT_IO
    except json.JSONDecodeError as exc:
        print(f"{p} is not a report: {exc}", file=sys.stderr)
        return EXIT_IO
    print(f"== {rep['experiment']}: {rep['status'].upper()}")
    if rep.get("error"):
        print(f"  error: {rep['error']}")
    print("checks:")
    for line in _format_checks(rep.get("checks", [])):
        print("  " + line)
    if args.metrics:
        print("metrics:")
        for line in _format_metrics(rep.get("metrics", {})):
            print(line)
    print("files: " + ", ".join(rep.get("files", [])))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="acvlab",
        description="Advective Allen-Cahn experiments and varifold diagnostics.",
        epilog=f"Experiments: {', '.join(EXPERIMENTS)}. Output root: 'output' key, else ${OUTPUT_ENV}, else ./runs.",
    )
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run experiments and write reports")
    r.add_argument("items", nargs="+", metavar="EXPERIMENT|CONFIG|key=value")
    r.set_defaults(func=cmd_run)
    v = sub.add_parser("validate", help="check configs and well hypotheses without running")
    v.add_argument("items", nargs="+", metavar="EXPERIMENT|CONFIG|key=value")
    v.set_defaults(func=cmd_validate)
    p = sub.add_parser("report", help="pretty-print a report.json")
    p.add_argument("path", help="run directory or report.json")
    p.add_argument("--metrics", action="store_true", help="also print the metrics")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
