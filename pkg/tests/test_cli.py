from __future__ import annotations

import json
import subprocess
import sys

import pytest

from acvlab.cli import EXIT_CONFIG, EXIT_FAIL, EXIT_IO, EXIT_NONCONVERGED, EXIT_OK, main
from acvlab.config import ConfigError, load_config, parse_overrides, parse_text, validate


# ---------------------------------------------------------------------------
# config parsing and validation

def test_parse_text_skips_comments_and_blanks():
    text = "# header\nexperiment = line-2d\n\nepsilon = 0.03  # trailing\n"
    assert parse_text(text) == {"experiment": "line-2d", "epsilon": "0.03"}
    with pytest.raises(ConfigError):
        parse_text("epsilon 0.03")


def test_config_file_and_overrides(tmp_path):
    f = tmp_path / "run.cfg"
    f.write_text("experiment = standing-wave\nepsilon = 0.04\n")
    cfg = load_config(str(f), parse_overrides(["tol=1e-9"]))
    assert cfg.experiment == "standing-wave"
    assert cfg["epsilon"] == 0.04 and cfg["tol"] == 1e-9
    assert cfg["p"] == 0.75  # midpoint of (1/2, 1) in 1D
    assert cfg.grid().h == pytest.approx(0.004)


def test_unknown_key_and_bad_value_name_the_key():
    with pytest.raises(ConfigError) as exc:
        load_config("standing-wave", {"epsilom": "0.05"})
    assert exc.value.key == "epsilom"
    with pytest.raises(ConfigError) as exc:
        load_config("standing-wave", {"epsilon": "small"})
    assert exc.value.key == "epsilon"
    with pytest.raises(ConfigError):
        load_config("nonexistent-experiment")


@pytest.mark.parametrize("name", ["standing-wave", "line-2d", "circle-pmc", "minmax-1d", "minmax-2d", "sweep", "infra"])
def test_default_configs_validate(name):
    assert validate(load_config(name)).ok


def test_validate_rejects_sobolev_exponent():
    v = validate(load_config("circle-pmc", {"p": "2"}))
    assert not v.ok
    assert [f.key for f in v.errors()] == ["p"]


def test_validate_reports_well_margin():
    v = validate(load_config("standing-wave", {"well_kappa": "10"}))
    bad = v.errors()
    assert [f.key for f in bad] == ["well (c)"]
    assert "worst margin" in bad[0].message and "-8.12" in bad[0].message


def test_validate_rejects_underresolved_grid():
    v = validate(load_config("standing-wave", {"cells_per_eps": "1"}))
    assert [f.key for f in v.errors()] == ["cells_per_eps"]


def test_validate_rejects_both_advection_fields():
    v = validate(load_config("minmax-2d", {"rho": "radial:-2", "v": "constant:1,0"}))
    assert "v" in [f.key for f in v.errors()]


def test_validate_quadrant_symmetry_needs_centered_box():
    v = validate(load_config("circle-pmc", {"lower": "0,0", "upper": "1,1"}))
    assert "symmetry" in [f.key for f in v.errors()]


def test_sweep_validates_each_rung():
    v = validate(load_config("sweep", {"ladder": "0.08,0.04", "cells_per_eps": "2"}))
    assert not v.ok
    assert all("[epsilon=" in f.message for f in v.errors())


# ---------------------------------------------------------------------------
# commands and exit codes

def test_validate_command(capsys):
    assert main(["validate", "circle-pmc"]) == EXIT_OK
    assert "valid" in capsys.readouterr().out
    assert main(["validate", "circle-pmc", "p=2"]) == EXIT_CONFIG
    assert main(["validate", "no-such-thing"]) == EXIT_CONFIG


def test_malformed_config_writes_nothing(tmp_path):
    out = tmp_path / "runs"
    code = main(["run", "standing-wave", "cells_per_eps=1", f"output={out}"])
    assert code == EXIT_CONFIG
    assert not out.exists()


def test_run_pass_writes_reports(tmp_path, capsys):
    assert main(["run", "minmax-1d", f"output={tmp_path}"]) == EXIT_OK
    d = tmp_path / "minmax-1d"
    rep = json.loads((d / "report.json").read_text())
    assert rep["status"] == "pass"
    assert all(c["passed"] for c in rep["checks"])
    for f in rep["files"]:
        assert (d / f).is_file()
    assert "== minmax-1d: PASS" in capsys.readouterr().out


def test_run_failing_check_exits_one(tmp_path):
    assert main(["run", "standing-wave", f"output={tmp_path}"]) == EXIT_FAIL
    rep = json.loads((tmp_path / "standing-wave" / "report.json").read_text())
    assert rep["status"] == "fail"


def test_run_nonconvergence_exits_three(tmp_path):
    assert main(["run", "standing-wave", "max_newton=1", f"output={tmp_path}"]) == EXIT_NONCONVERGED
    d = tmp_path / "standing-wave"
    rep = json.loads((d / "report.json").read_text())
    assert rep["status"] == "nonconverged"
    assert rep["error"]
    assert (d / "best_state.pfield").is_file()


def test_run_io_error_exits_four(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("not a directory")
    assert main(["run", "infra", f"output={blocker}"]) == EXIT_IO


def test_output_root_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("ACVLAB_OUTPUT_ROOT", str(tmp_path / "envroot"))
    assert main(["run", "infra"]) == EXIT_OK
    assert (tmp_path / "envroot" / "infra" / "report.json").is_file()


def test_rerun_reproduces_report_bitwise(tmp_path):
    d = tmp_path / "minmax-1d"
    main(["run", "minmax-1d", f"output={tmp_path}"])
    first = {p.name: p.read_bytes() for p in d.iterdir()}
    main(["run", "minmax-1d", f"output={tmp_path}"])
    second = {p.name: p.read_bytes() for p in d.iterdir()}
    assert first == second


def test_rerun_removes_only_previous_outputs(tmp_path):
    d = tmp_path / "standing-wave"
    main(["run", "standing-wave", "max_newton=1", f"output={tmp_path}"])
    assert (d / "best_state.pfield").is_file()
    (d / "notes.txt").write_text("keep me")
    main(["run", "standing-wave", f"output={tmp_path}"])
    assert not (d / "best_state.pfield").exists()
    assert (d / "notes.txt").read_text() == "keep me"


def test_sweep_layout(tmp_path):
    code = main(["run", "sweep", "ladder=0.08,0.056,0.04", f"output={tmp_path}"])
    assert code == EXIT_FAIL  # the standing-wave energy check fails at h = eps/10
    d = tmp_path / "sweep"
    for e in ("0.08", "0.056", "0.04"):
        assert (d / f"eps_{e}" / "report.json").is_file()
        assert (d / f"eps_{e}" / "profile.csv").is_file()
    lines = (d / "trends.csv").read_text().splitlines()
    assert lines[0].startswith("epsilon,status")
    assert len(lines) == 4
    rep = json.loads((d / "report.json").read_text())
    assert any(c["name"].startswith("eps=0.056: ") for c in rep["checks"])


def test_report_command(tmp_path, capsys):
    main(["run", "infra", f"output={tmp_path}"])
    capsys.readouterr()
    assert main(["report", str(tmp_path / "infra"), "--metrics"]) == EXIT_OK
    out = capsys.readouterr().out
    assert out.startswith("== infra: PASS")
    assert "[criterion 10]" in out and "metrics:" in out
    assert main(["report", str(tmp_path / "missing")]) == EXIT_IO


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "acvlab", "validate", "infra"], capture_output=True, text=True)
    assert r.returncode == 0
    assert "infra: valid" in r.stdout
