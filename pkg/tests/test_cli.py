import json
import subprocess
import sys

import numpy as np
import pytest

from lassolab.cli import run
from lassolab.config import ExperimentConfig


@pytest.fixture
def design_csv(tmp_path):
    path = tmp_path / "d.csv"
    assert run(["gen", "--kind", "equicorrelated", "--r", "0.5", "--n", "100", "--p", "20",
                "--seed", "7", "--out", str(path)]) == 0
    return path


def test_gen_deterministic(tmp_path, design_csv):
    again = tmp_path / "again.csv"
    run(["gen", "--kind", "equicorrelated", "--r", "0.5", "--n", "100", "--p", "20", "--seed", "7", "--out", str(again)])
    assert again.read_bytes() == design_csv.read_bytes()


def test_diag(tmp_path, design_csv):
    out = tmp_path / "diag.json"
    assert run(["diag", "--design", str(design_csv), "--S", "1,2,3", "--L", "6", "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert rep["schema"] == 1 and rep["S"] == [1, 2, 3]
    assert rep["phi2"] <= rep["lambda1_min2"] + 1e-8
    assert rep["lambda1_min2"] >= rep["lambda_min2"] - 1e-8 >= rep["lambda1_min2"] / 3 - 2e-8
    assert rep["phi2_re"] <= rep["phi2"] + 1e-6


def test_cover_and_entropy(tmp_path):
    d = tmp_path / "small.csv"
    run(["gen", "--kind", "ar1_toeplitz", "--r", "0.6", "--n", "30", "--p", "5", "--out", str(d)])
    out, csv = tmp_path / "c.json", tmp_path / "c.csv"
    assert run(["cover", "--design", str(d), "--signs", "--out", str(out), "--csv", str(csv)]) == 0
    prof = json.loads(out.read_text())
    assert prof["covering_exact"] is not None and len(prof["radii"]) == 11
    assert csv.read_text().splitlines()[0] == "radius,packing,covering_upper,covering_exact"
    eo = tmp_path / "e.json"
    assert run(["entropy", "--design", str(d), "--m", "1", "--K", "2", "--sigma", "1", "--out", str(eo)]) == 0
    ent = json.loads(eo.read_text())
    assert ent["constants"]["K0"] == pytest.approx(228.3278, abs=1e-3)
    assert {r["delta"] for r in ent["table"]} == {0.1, 0.25, 0.5}


def test_lasso_and_oracle(tmp_path, design_csv):
    beta0 = ",".join(["1", "-1", "0.5"] + ["0"] * 17)
    out = tmp_path / "fit.json"
    assert run(["lasso", "--design", str(design_csv), "--beta0", beta0, "--sigma", "0.5",
                "--lambda", "0.1", "--out", str(out)]) == 0
    fit = json.loads(out.read_text())
    assert fit["converged"] and len(fit["beta_hat"]) == 20
    o = tmp_path / "oracle.json"
    assert run(["oracle", "--design", str(design_csv), "--beta0", beta0, "--S", "1,2,3", "--alpha", "0.5",
                "--lambda0", "0.1", "--lambda-rule", "classic", "--out", str(o)]) == 0
    rep = json.loads(o.read_text())
    assert set(rep["rhs_terms"]) == {"estimation", "ell1", "tuning", "approx"}
    assert rep["rhs_total"] == pytest.approx(sum(rep["rhs_terms"].values()), abs=1e-12)


def test_verify_config_and_threads(tmp_path):
    beta0 = [2.0, -1.5, 1.0, 0.5] + [0.05] * 6
    cfg = ExperimentConfig(
        design={"kind": "equicorrelated", "n": 60, "p": 10, "params": {"r": 0.8}, "seed": 1},
        noise={"kind": "gaussian", "scale": 0.5}, alpha=0.5, lambda_rule="classic", c=2.0,
        S=[1, 2, 3, 4], beta0=beta0, lambda0="pilot", pilot_draws=40, draws=20, seed=5,
    )
    path = tmp_path / "exp.json"
    path.write_text(cfg.to_json())
    a, b, c = tmp_path / "a.json", tmp_path / "b.json", tmp_path / "c.csv"
    assert run(["verify", "--config", str(path), "--out", str(a), "--csv", str(c)]) == 0
    assert run(["verify", "--config", str(path), "--threads", "3", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    rep = json.loads(a.read_text())
    assert rep["schema"] == 1 and rep["aggregates"]["violations_given_certificate"] == 0
    assert len(c.read_text().splitlines()) == 21


def test_probcheck(tmp_path, design_csv):
    out = tmp_path / "p.json"
    assert run(["probcheck", "--design", str(design_csv), "--alpha", "1", "--lambda0", "1000",
                "--draws", "50", "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert rep["failure_frequency"] == 0.0 and rep["exact_sup"]


def test_config_round_trip():
    cfg = ExperimentConfig(alpha=0.5, S=[2, 5], beta0=[0.0] * 20, lambda0=0.25,
                           entropy={"source": "eigen", "m": 1, "K": 2.0, "t": 2.0})
    assert ExperimentConfig.from_json(cfg.to_json()) == cfg
    assert ExperimentConfig.from_json(cfg.to_json()).to_json() == cfg.to_json()


def test_exit_codes(tmp_path, design_csv, capsys):
    assert run(["nonsense"]) == 2
    assert run(["diag", "--design", str(design_csv), "--S", "1", "--bogus"]) == 2
    assert run(["diag", "--design", str(design_csv), "--S", "1,1"]) == 1
    assert run(["diag", "--design", str(tmp_path / "missing.csv"), "--S", "1"]) == 1
    bad = tmp_path / "big.csv"
    np.savetxt(bad, np.full((3, 2), 5.0), delimiter=",")
    assert run(["diag", "--design", str(bad), "--S", "1"]) == 1
    assert run(["diag", "--design", str(bad), "--S", "1", "--rescale"]) == 0
    bad_cfg = tmp_path / "bad.json"
    bad_cfg.write_text('{"unknown": 1}')
    assert run(["verify", "--config", str(bad_cfg)]) == 1


def test_console_entry_point(tmp_path):
    out = tmp_path / "d.csv"
    proc = subprocess.run([sys.executable, "-m", "lassolab", "gen", "--kind", "orthonormal", "--n", "5", "--p", "2",
                           "--out", str(out)], capture_output=True, text=True)
    assert proc.returncode == 0 and out.exists()
    assert "gen: wrote" in proc.stdout
