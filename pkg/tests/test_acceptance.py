"""Acceptance criteria 1-10.

Each criterion runs the experiment that covers it, with its shipped default
configuration, and prints one ``[criterion N] PASS/FAIL`` line followed by the
individual checks. Tolerances live in the experiment runners and are not
adjusted here.
"""
from __future__ import annotations

import pytest

from acvlab.config import load_config, validate
from acvlab.experiments import run_experiment

from conftest import ACCEPTANCE_LINES

pytestmark = [pytest.mark.acceptance, pytest.mark.slow]

_cache: dict = {}


def _run(name, tmp_path_factory):
    if name not in _cache:
        cfg = load_config(name)
        assert validate(cfg).ok
        _cache[name] = run_experiment(cfg, tmp_path_factory.mktemp(name) / name)
    return _cache[name]


@pytest.mark.parametrize(
    "n, experiments",
    [
        (1, ["standing-wave"]),
        (2, ["line-2d"]),
        (3, ["line-2d"]),
        (4, ["circle-pmc"]),
        (5, ["circle-pmc"]),
        (6, ["minmax-1d", "minmax-2d"]),
        (7, ["circle-pmc"]),
        (8, ["circle-pmc"]),
        (9, ["circle-pmc"]),
        (10, ["infra"]),
    ],
)
def test_criterion(n, experiments, tmp_path_factory):
    results = [_run(name, tmp_path_factory) for name in experiments]
    checks = [c for res in results for c in res.checks if c.criterion == n]
    stalled = [f"{res.experiment}: did not converge: {res.nonconverged}" for res in results if res.nonconverged]
    ok = not stalled and all(res.criterion_passed(n) for res in results)
    verdict = f"[criterion {n}] {'PASS' if ok else 'FAIL'} ({', '.join(experiments)})"
    ACCEPTANCE_LINES.append(verdict)
    print("\n" + verdict)
    for line in stalled + ["    " + c.line() for c in checks]:
        print(line)
    assert not stalled, "\n".join(stalled)
    assert ok, "\n".join(c.line() for c in checks if not c.passed)
