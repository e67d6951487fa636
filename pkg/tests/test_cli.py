import json
import math
import subprocess
import sys

import numpy as np
import pytest

from cavitymimo import __version__
from cavitymimo.cli import main
from cavitymimo.config import ExperimentConfig, expand_profile, parse_profile_spec
from cavitymimo.errors import ConfigError
from cavitymimo.model import DeterministicProfile, exact_mean_no_crosstalk
from cavitymimo.output import read_csv


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def load(path):
    return json.loads(path.read_text())


# --- configuration ------------------------------------------------------------------

@pytest.mark.parametrize("text, expected", [
    ("constant:0.2", [0.2, 0.2, 0.2]),
    ("linspace:0.5:1.5", [0.5, 1.0, 1.5]),
    ("list:1,2,3", [1.0, 2.0, 3.0]),
    ("0.7", [0.7, 0.7, 0.7]),
    ("[1, 2, 3]", [1.0, 2.0, 3.0]),
])
def test_profile_specs(text, expected):
    assert expand_profile(parse_profile_spec(text, "h0"), 3, "h0").tolist() == expected


@pytest.mark.parametrize("text", ["ramp:1:2", "linspace:1", "list:a,b", "{bad json"])
def test_bad_profile_specs(text):
    with pytest.raises(ConfigError) as err:
        expand_profile(parse_profile_spec(text, "loss"), 3, "loss")
    assert err.value.field == "loss"


def test_profile_length_mismatch_names_field():
    with pytest.raises(ConfigError) as err:
        expand_profile([1.0, 2.0], 3, "h0")
    assert err.value.field == "h0"


def test_config_file_with_overrides(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"n": 3, "gamma": 0.1, "h0": [1, 2, 3], "runs": 50}))
    cfg = ExperimentConfig.load(path, {"gamma": 0.4, "seed": None})
    assert cfg.n == 3 and cfg.gamma == 0.4 and cfg.seed == 0
    assert cfg.resolved()["h0"] == [1.0, 2.0, 3.0]


@pytest.mark.parametrize("data, field", [
    ({"n": 0}, "n"),
    ({"runs": 1.5}, "runs"),
    ({"bogus": 1}, "bogus"),
    ({"damping": 2.0}, "damping"),
    ({"loss": -1.0}, "loss"),
    ({"alpha": "x"}, "alpha"),
])
def test_config_validation_names_field(data, field):
    with pytest.raises(ConfigError) as err:
        ExperimentConfig.from_mapping(data)
    assert err.value.field == field


# --- mc -----------------------------------------------------------------------------

def test_mc_outputs(tmp_path, capsys):
    code, out, _ = run(["mc", "--runs", "3000", "--seed", "7", "--out", str(tmp_path)], capsys)
    assert code == 0
    summary = load(tmp_path / "mc_summary.json")
    assert summary["count"] == 3000
    assert summary["config"]["seed"] == 7
    assert summary["version"] == __version__
    for key in ("mean", "variance", "var_i1", "var_i2", "covar", "ks_statistic", "rejected",
                "standard_error"):
        assert key in summary
    header, data = read_csv(tmp_path / "mc_cdf.csv")
    assert header == ["value", "cdf_empirical", "cdf_gaussian"]
    assert np.all(np.diff(data[:, 1]) >= 0) and data[-1, 1] == 1.0
    assert json.loads(out)["count"] == 3000


def test_mc_gamma_zero_variance(tmp_path, capsys):
    code, _, _ = run(["mc", "--gamma", "0", "--runs", "500", "--out", str(tmp_path)], capsys)
    assert code == 0
    summary = load(tmp_path / "mc_summary.json")
    assert summary["variance"] == 0.0
    assert summary["ks_statistic"] is None


def test_mc_malformed_profile_exit_2(tmp_path, capsys):
    code, _, err = run(["mc", "--n", "6", "--h0", "list:1,2,3", "--out", str(tmp_path)], capsys)
    assert code == 2
    assert "h0" in err


def test_mc_bad_config_file_exit_2(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    code, _, err = run(["mc", "--config", str(path), "--out", str(tmp_path)], capsys)
    assert code == 2 and "config" in err


def test_mc_singular_regime_exit_3(tmp_path, capsys):
    code, _, err = run(["mc", "--n", "2", "--gamma", "0", "--h0", "0", "--loss", "0",
                        "--runs", "100", "--out", str(tmp_path)], capsys)
    assert code == 3 and "singular" in err


def test_figures_written(tmp_path, capsys):
    code, _, _ = run(["mc", "--runs", "2000", "--figures", "--out", str(tmp_path)], capsys)
    assert code == 0
    assert (tmp_path / "mc_cdf.png").stat().st_size > 0


# --- replica --------------------------------------------------------------------------

def test_replica_r_star(tmp_path, capsys):
    code, out, _ = run(["replica", "--rho0", "2", "--out", str(tmp_path)], capsys)
    assert code == 0
    doc = load(tmp_path / "replica.json")
    assert doc["config"]["rho0"] == 2.0
    for v in doc["variants"]:
        assert v["converged"] and v["residual"] < 1e-12 and v["residual_recheck"] < 1e-12
        assert {"t", "r", "p", "iterations", "mean_log_det"} <= set(v)
    assert doc["variance"]["method"] == "analytic"
    assert json.loads(out)["mean"] == doc["mean"]


def test_replica_gamma_zero_closed_form(tmp_path, capsys):
    code, _, _ = run(["replica", "--gamma", "0", "--out", str(tmp_path)], capsys)
    assert code == 0
    doc = load(tmp_path / "replica.json")
    prof = DeterministicProfile(np.linspace(0.5, 1.5, 6), np.full(6, 0.2))
    assert doc["mean"] == pytest.approx(exact_mean_no_crosstalk(prof, doc["config"]["rho"]),
                                        abs=1e-12)
    assert doc["closed_form_mean"] == pytest.approx(doc["mean"], abs=1e-12)
    assert abs(doc["variance"]["var_total"]) < 1e-10


STIFF = ["--gamma", "8", "--loss", "0.01", "--rho0", "100", "--damping", "1",
         "--max-iter", "2000"]


def test_replica_direct_failure_exit_4(tmp_path, capsys):
    code, _, err = run(["replica", *STIFF, "--out", str(tmp_path)], capsys)
    assert code == 4 and "residual" in err
    doc = load(tmp_path / "replica.json")
    assert doc["converged"] is False


def test_replica_continuation_rescues(tmp_path, capsys):
    code, _, _ = run(["replica", *STIFF, "--continuation", "--out", str(tmp_path)], capsys)
    assert code == 0
    doc = load(tmp_path / "replica.json")
    assert all(v["converged"] and v["residual"] < 1e-12 for v in doc["variants"])


# --- compare --------------------------------------------------------------------------

def test_compare_gamma_zero_exact_match(tmp_path, capsys):
    code, _, _ = run(["compare", "--gamma", "0", "--runs", "2000", "--out", str(tmp_path)],
                     capsys)
    assert code == 0
    doc = load(tmp_path / "compare_summary.json")
    assert doc["exact_match_case"] is True and doc["ks_analytic"] is None
    header, data = read_csv(tmp_path / "compare_cdf.csv")
    assert header == ["value", "cdf_empirical", "cdf_gaussian_analytic", "cdf_gaussian_mc"]


def test_compare_injected_variance_mismatch_exit_5(tmp_path, capsys):
    code, _, err = run(["compare", "--runs", "20000", "--inject-variance-scale", "3",
                        "--out", str(tmp_path)], capsys)
    assert code == 5 and "variance_within_5pct" in err
    doc = load(tmp_path / "compare_summary.json")
    assert doc["passed"] is False and doc["checks"]["variance_within_5pct"] is False


def test_compare_reports_all_statistics(tmp_path, capsys):
    run(["compare", "--runs", "20000", "--out", str(tmp_path)], capsys)
    doc = load(tmp_path / "compare_summary.json")
    for key in ("ks_analytic", "ks_mc", "mean_delta", "mean_delta_in_se", "variance_rel_delta",
                "checks", "thresholds"):
        assert key in doc
    assert doc["variance_rel_delta"] < 0.1


# --- scattering-check -------------------------------------------------------------------

def test_scattering_check_defaults(tmp_path, capsys):
    code, _, _ = run(["scattering-check", "--draws", "20", "--out", str(tmp_path)], capsys)
    assert code == 0
    doc = load(tmp_path / "scattering_check.json")
    assert all(r["lossless_unitarity_deviation"] < 1e-12 for r in doc["rows"])
    for n in (2, 4, 8):
        gaps = [s["max_gap"] for s in doc["alpha_sweep"] if s["n"] == n]
        assert len(gaps) == 4 and all(b < a for a, b in zip(gaps, gaps[1:]))


def test_scattering_check_non_scalar_loss_is_informational(tmp_path, capsys):
    code, _, _ = run(["scattering-check", "--draws", "10", "--loss", "linspace:0.1:0.9",
                      "--out", str(tmp_path)], capsys)
    assert code == 0
    doc = load(tmp_path / "scattering_check.json")
    assert all(r["gram_deviation_configured_loss"] > 1e-6 for r in doc["rows"])
    assert not any(r["configured_loss_is_scalar"] for r in doc["rows"])
    assert "gram_deviation_configured_loss" in doc["informational"]


# --- determinism and provenance ------------------------------------------------------------

@pytest.mark.parametrize("command", [["mc"], ["compare"], ["replica"]])
def test_outputs_byte_identical(tmp_path, capsys, command):
    args = [*command, "--runs", "5000", "--seed", "3", "--chunks", "3"]
    a, b = tmp_path / "a", tmp_path / "b"
    run([*args, "--out", str(a)], capsys)
    run([*args, "--out", str(b)], capsys)
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(p.name for p in b.iterdir())
    for name in names:
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_every_file_embeds_config_and_version(tmp_path, capsys):
    run(["compare", "--runs", "3000", "--out", str(tmp_path)], capsys)
    for path in tmp_path.iterdir():
        text = path.read_text()
        if path.suffix == ".json":
            doc = json.loads(text)
            assert doc["version"] == __version__ and doc["config"]["runs"] == 3000
        else:
            assert f"# artifact: cavitymimo {__version__}" in text
            assert '"runs": 3000' in text


def test_csv_floats_round_trip(tmp_path, capsys):
    run(["mc", "--runs", "1000", "--out", str(tmp_path)], capsys)
    lines = [ln for ln in (tmp_path / "mc_cdf.csv").read_text().splitlines()
             if not ln.startswith("#")][1:]
    for ln in lines[:50]:
        for token in ln.split(","):
            assert repr(float(token)) == token


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "cavitymimo", "--version"],
                         capture_output=True, text=True, check=True)
    assert __version__ in res.stdout
    res = subprocess.run([sys.executable, "-m", "cavitymimo", "mc", "--runs", "0"],
                         capture_output=True, text=True)
    assert res.returncode == 2 and "runs" in res.stderr
