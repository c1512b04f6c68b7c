import csv
import io
import json
import os
import shutil
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from fpspatial.cli import HELP, build_parser, main
from fpspatial.config import ConfigError, apply_overrides

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def write_json(path: Path, obj) -> Path:
    path.write_text(json.dumps(obj))
    return path


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def read_csv(path: Path) -> list[dict]:
    return list(csv.DictReader(io.StringIO(path.read_text())))


SIM = {
    "model": {"kind": "m_dependent_gaussian_ma", "marginal": {"density": "normal", "params": [0, 1]},
              "m": 1, "d": 2},
    "region": {"rectangle": [8, 8]},
    "seed": 7,
}


# -- simulate ---------------------------------------------------------------------


def test_simulate_writes_one_row_per_site(tmp_path, capsys):
    cfg = write_json(tmp_path / "c.json", SIM)
    code, out, _ = run(["simulate", cfg, "-o", tmp_path / "out"], capsys)
    assert code == 0
    lines = (tmp_path / "out" / "field.csv").read_text().split("\n")
    assert lines[0] == "i1,i2,value" and lines[-1] == ""
    assert len(lines) - 1 == 64 + 1


def test_simulate_twice_is_byte_identical(tmp_path, capsys):
    cfg = write_json(tmp_path / "c.json", SIM)
    run(["simulate", cfg, "-o", tmp_path / "a"], capsys)
    run(["simulate", cfg, "-o", tmp_path / "b", "--threads", "4"], capsys)
    assert (tmp_path / "a" / "field.csv").read_bytes() == (tmp_path / "b" / "field.csv").read_bytes()


def test_simulate_missing_marginal_names_the_key(tmp_path, capsys):
    bad = json.loads(json.dumps(SIM))
    del bad["model"]["marginal"]
    code, _, err = run(["simulate", write_json(tmp_path / "c.json", bad), "-o", tmp_path / "o"], capsys)
    assert code == 2
    assert "marginal" in err
    assert not (tmp_path / "o").exists()


def test_simulate_dimension_mismatch(tmp_path, capsys):
    bad = dict(SIM, region={"rectangle": [8, 8, 8]})
    code, _, err = run(["simulate", write_json(tmp_path / "c.json", bad)], capsys)
    assert code == 2 and "region" in err


# -- estimate ---------------------------------------------------------------------


def estimate_cfg(tmp_path: Path, rows: str, **extra) -> Path:
    (tmp_path / "data.csv").write_text(rows)
    return write_json(tmp_path / "e.json", {"data": "data.csv", "bin_width": 0.1, **extra})


def test_estimate_fixture_value(tmp_path, capsys):
    code, _, _ = run(["estimate", CONFIGS / "estimate_fixture.json", "-o", tmp_path], capsys)
    assert code == 0
    poly = read_csv(tmp_path / "polygon.csv")
    at = [r for r in poly if abs(float(r["x"]) - 0.1) < 1e-12]
    assert len(at) == 1 and float(at[0]["fp_value"]) == pytest.approx(3.75, abs=1e-12)
    hist = read_csv(tmp_path / "histogram.csv")
    assert [(r["k"], r["count"]) for r in hist] == [("1", "2"), ("2", "1"), ("3", "1")]
    xs = [float(r["x"]) for r in poly]
    assert xs[0] <= 0.02 - 0.1 and xs[-1] >= 0.27 + 0.1


def test_estimate_single_observation_integrates_to_one(tmp_path, capsys):
    cfg = estimate_cfg(tmp_path, "0.437\n", points_per_bin=20)
    assert run(["estimate", cfg, "-o", tmp_path / "o"], capsys)[0] == 0
    poly = read_csv(tmp_path / "o" / "polygon.csv")
    x = np.array([float(r["x"]) for r in poly])
    y = np.array([float(r["fp_value"]) for r in poly])
    # the grid contains every polygon knot, so the trapezoid rule is exact up to rounding
    assert np.sum((y[1:] + y[:-1]) / 2 * np.diff(x)) == pytest.approx(1.0, abs=1e-9)


def test_estimate_normalized_needs_density(tmp_path, capsys):
    code, _, err = run(["estimate", estimate_cfg(tmp_path, "0.1\n0.2\n", normalized=True)], capsys)
    assert code == 2 and "simulation mode required" in err


def test_estimate_normalized_with_density(tmp_path, capsys):
    cfg = estimate_cfg(tmp_path, "0.02\n0.06\n0.13\n0.27\n", normalized=True,
                       density={"density": "uniform", "params": [0, 1]})
    assert run(["estimate", cfg, "-o", tmp_path / "o"], capsys)[0] == 0
    poly = read_csv(tmp_path / "o" / "polygon.csv")
    at = [r for r in poly if abs(float(r["x"]) - 0.1) < 1e-12][0]
    assert float(at["fn_value"]) == pytest.approx(5.3033, abs=1e-4)


@pytest.mark.parametrize("rows,needle", [
    ("value\n0.1\n0.2\nabc\n", "line 4"),
    ("0.1\n0.2\nabc\n", "line 3"),
    ("value\n0.1\nnan\n", "line 3"),
    ("", "no observations"),
    ("value\n", "no observations"),
])
def test_estimate_rejects_bad_input(tmp_path, capsys, rows, needle):
    code, _, err = run(["estimate", estimate_cfg(tmp_path, rows), "-o", tmp_path / "o"], capsys)
    assert code == 2 and needle in err
    assert not (tmp_path / "o").exists()


def test_estimate_picks_named_column(tmp_path, capsys):
    cfg = estimate_cfg(tmp_path, "i1,obs,other\n0,0.02,9\n1,0.06,9\n", column="obs")
    assert run(["estimate", cfg, "-o", tmp_path / "o"], capsys)[0] == 0
    hist = read_csv(tmp_path / "o" / "histogram.csv")
    assert [r["k"] for r in hist] == ["1"]


def test_estimate_reads_simulated_field(tmp_path, capsys):
    run(["simulate", write_json(tmp_path / "c.json", SIM), "-o", tmp_path], capsys)
    cfg = write_json(tmp_path / "e.json", {"data": "field.csv", "bin_width": 0.5})
    assert run(["estimate", cfg, "-o", tmp_path / "o"], capsys)[0] == 0
    total = sum(int(r["count"]) for r in read_csv(tmp_path / "o" / "histogram.csv"))
    assert total == 64


# -- experiments and diagnostics --------------------------------------------------


def test_blocking_table_finite_range_has_zero_tail_column(tmp_path, capsys):
    cfg = write_json(tmp_path / "l.json", {
        "profile": {"kind": "alpha", "tau": "inf", "decay": {"type": "finite_range", "m0": 2}},
        "d": 2, "b_schedule": [1e-2, 1e-3, 1e-4]})
    assert run(["lemma-mn", cfg, "-o", tmp_path], capsys)[0] == 0
    rows = read_csv(tmp_path / "lemma_mn.csv")
    assert [float(r["tail_ratio"]) for r in rows] == [0.0, 0.0, 0.0]


def test_boundary_rate_fails_under_assert(tmp_path, capsys):
    cfg = write_json(tmp_path / "h.json", {
        "profile": {"kind": "alpha", "tau": "inf", "decay": {"type": "polynomial", "theta": 4}},
        "d": 2})
    assert run(["check-hypotheses", cfg, "-o", tmp_path], capsys)[0] == 0
    report = json.loads((tmp_path / "hypotheses.json").read_text())
    assert report["passed"] is False
    assert run(["check-hypotheses", cfg, "-o", tmp_path, "--assert"], capsys)[0] == 4


def test_hypotheses_config_passes(tmp_path, capsys):
    assert run(["check-hypotheses", CONFIGS / "hypotheses.json", "-o", tmp_path, "--assert"], capsys)[0] == 0
    report = json.loads((tmp_path / "hypotheses.json").read_text())
    assert report["results"]["thm1_i"]["sum"] == pytest.approx(1.6449340668, abs=1e-8)


def small_experiment(tmp_path: Path, **extra) -> Path:
    cfg = json.loads((CONFIGS / "clt_ma_normal.json").read_text())
    cfg.update(region={"rectangle": [16, 16]}, bin_width=0.0625, replicates=30, **extra)
    return write_json(tmp_path / "x.json", cfg)


def test_refused_profile_exits_5_unless_overridden(tmp_path, capsys):
    bad = {"kind": "alpha", "tau": "inf", "decay": {"type": "polynomial", "theta": 4, "cap": 0.25}}
    cfg = small_experiment(tmp_path, mixing_profile=bad)
    code, _, err = run(["clt", cfg, "-o", tmp_path / "o"], capsys)
    assert code == 5 and "--override-hypotheses" in err
    assert not (tmp_path / "o").exists()
    assert run(["clt", cfg, "-o", tmp_path / "o", "--override-hypotheses"], capsys)[0] == 0
    report = json.loads((tmp_path / "o" / "clt_report.json").read_text())
    assert any("override" in w for w in report["warnings"])


def test_experiment_outputs_do_not_depend_on_threads(tmp_path, capsys):
    cfg = small_experiment(tmp_path)
    for cmd in ("variance", "clt"):
        run([cmd, cfg, "-o", tmp_path / "one", "--threads", "1"], capsys)
        run([cmd, cfg, "-o", tmp_path / "many", "--threads", "3"], capsys)
    for name in ("variance_report.json", "variance_statistics.csv", "clt_report.json", "clt_statistics.csv"):
        assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "many" / name).read_bytes()


def test_sweep_rejects_gamma_and_sizes(tmp_path, capsys):
    cfg = write_json(tmp_path / "s.json", json.loads((CONFIGS / "sweep_iid_normal.json").read_text()))
    code, _, err = run(["sweep", cfg, "--set", "sweep.gamma=1"], capsys)
    assert code == 2 and "gamma" in err
    code, _, err = run(["sweep", cfg, "--set", "sweep.sizes=[[16,16],[8,8]]"], capsys)
    assert code == 2 and "sizes" in err


def test_overrides_are_applied(tmp_path, capsys):
    cfg = small_experiment(tmp_path)
    run(["variance", cfg, "-o", tmp_path / "o", "--set", "replicates=12", "--set", "outputs.report=r.json"], capsys)
    report = json.loads((tmp_path / "o" / "r.json").read_text())
    assert report["replicates"] == 12


def test_apply_overrides_parses_json_values():
    cfg = apply_overrides({"a": {"b": 1}}, ["a.b=[1, 2]", "a.c=text", "d=true"])
    assert cfg == {"a": {"b": [1, 2], "c": "text"}, "d": True}
    with pytest.raises(ConfigError):
        apply_overrides({}, ["novalue"])


# -- exit codes and help ----------------------------------------------------------


def test_missing_config_file_exits_2(tmp_path, capsys):
    code, _, err = run(["simulate", tmp_path / "absent.json"], capsys)
    assert code == 2


def test_malformed_json_exits_2(tmp_path, capsys):
    (tmp_path / "c.json").write_text("{not json")
    assert run(["simulate", tmp_path / "c.json"], capsys)[0] == 2


@pytest.mark.skipif(os.geteuid() == 0, reason="root can write anywhere")
def test_unwritable_output_exits_3_as_user(tmp_path, capsys):
    out = tmp_path / "ro"
    out.mkdir()
    out.chmod(0o500)
    assert run(["simulate", write_json(tmp_path / "c.json", SIM), "-o", out], capsys)[0] == 3


def test_output_path_blocked_by_file_exits_3(tmp_path, capsys):
    (tmp_path / "blocker").write_text("")
    code, _, err = run(["simulate", write_json(tmp_path / "c.json", SIM), "-o", tmp_path / "blocker" / "x"], capsys)
    assert code == 3 and "I/O" in err


KEYS = {
    "simulate": ["model", "region", "seed", "replicate", "outputs.field", "marginal"],
    "estimate": ["data", "column", "bin_width", "points_per_bin", "normalized", "density",
                 "outputs.histogram", "outputs.polygon"],
    "variance": ["model", "region", "bin_width", "eval_points", "replicates", "master_seed", "workers",
                 "mixing_profile", "override_hypotheses", "checks.scaled_variance", "outputs.report",
                 "outputs.statistics"],
    "clt": ["eval_points", "replicates", "master_seed", "checks.ks_alpha", "checks.max_offdiag"],
    "sweep": ["sweep.sizes", "sweep.gamma", "checks.scaled_variance", "checks.require_approaching_one",
              "outputs.table", "outputs.report"],
    "lemma-mn": ["profile", "d", "b_schedule", "variant", "checks.strict", "outputs.table", "outputs.report"],
    "check-hypotheses": ["profile", "d", "theorems", "outputs.report"],
}


@pytest.mark.parametrize("cmd", sorted(HELP))
def test_help_lists_every_config_key(cmd, capsys):
    with pytest.raises(SystemExit) as exc:
        build_parser().parse_args([cmd, "--help"])
    assert exc.value.code == 0
    text = capsys.readouterr().out
    for key in KEYS[cmd]:
        assert key in text, key


def test_console_script_runs(tmp_path):
    exe = shutil.which("fpspatial")
    cmd = [exe] if exe else [sys.executable, "-m", "fpspatial.cli"]
    cfg = write_json(tmp_path / "c.json", SIM)
    res = subprocess.run(cmd + ["simulate", str(cfg), "-o", str(tmp_path)], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    assert (tmp_path / "field.csv").exists()
