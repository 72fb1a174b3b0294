"""Tests for the mfpca command line."""
import json
import logging

import numpy as np
import pandas as pd
import pytest

from mfpca.cli import build_parser, main, resolve_options
from mfpca.ingest import write_sample
from mfpca.sim import SimConfig, generate


@pytest.fixture(autouse=True)
def logging_config(caplog):
    caplog.set_level(logging.DEBUG)


def sample_csv(tmp_path, n_subjects=100):
    cfg = SimConfig(
        n_subjects=n_subjects, n_points=31, sigma=0.2, n_components=(2, 2), seed=4
    )
    sample, _ = generate(cfg)
    return write_sample(sample, tmp_path / "sample.csv")


def fitted(tmp_path):
    fit_dir = tmp_path / "fit"
    code = main(
        [
            "fit",
            "--input",
            str(sample_csv(tmp_path)),
            "--no-smooth",
            "--n1",
            "2",
            "--n2",
            "2",
            "--out-dir",
            str(fit_dir),
        ]
    )
    assert code == 0
    return fit_dir


def test_preprocess_writes_curves(tmp_path):
    """Test band power curves and the preprocessing report."""
    signal = tmp_path / "night.txt"
    t = np.arange(3 * 3750) / 125.0
    np.savetxt(signal, np.sin(2 * np.pi * 2.0 * t))
    out = tmp_path / "curves"
    assert main(["preprocess", f"s1:v2={signal}", "--out-dir", str(out)]) == 0
    frame = pd.read_csv(out / "s1_v2.csv", dtype={"subject_id": str, "visit_id": str})
    assert list(frame["visit_id"]) == ["v2"] * 3
    assert np.all(frame["value"] >= 0.99)
    report = json.loads((out / "preprocess.json").read_text())
    assert report["t_range"] == pytest.approx([0.0, 90 / 3600])
    assert report["files"][0]["windows"] == 3


def test_preprocess_bad_rate(tmp_path, capsys):
    """Test that an invalid sampling rate exits with the argument error code."""
    signal = tmp_path / "night.txt"
    signal.write_text("1\n2\n")
    assert main(["preprocess", str(signal), "--rate", "0"]) == 2
    assert "mfpca preprocess: config:" in capsys.readouterr().err


def test_preprocess_empty_signal(tmp_path):
    """Test that an empty signal exits with the insufficient data code."""
    signal = tmp_path / "empty.txt"
    signal.write_text("")
    assert main(["preprocess", str(signal), "--out-dir", str(tmp_path)]) == 3


def test_fit_writes_result_directory(tmp_path):
    """Test the tables and summary of a fit run."""
    fit_dir = fitted(tmp_path)
    summary = json.loads((fit_dir / "summary.json").read_text())
    assert summary["n_components"] == [2, 2]
    assert summary["scores"]["method"] == "pcp"
    assert 0 < summary["rho_w"] < 1
    scores = pd.read_csv(fit_dir / "scores_level1.csv")
    assert len(scores) == 100
    assert {"xi_1", "xi_2", "xi_sd_1", "xi_sd_2"} <= set(scores.columns)


def test_fit_input_errors(tmp_path):
    """Test missing and absent input tables."""
    assert main(["fit", "--out-dir", str(tmp_path)]) == 2
    missing = str(tmp_path / "missing.csv")
    assert main(["fit", "--input", missing, "--out-dir", str(tmp_path)]) != 0
    assert not (tmp_path / "summary.json").exists()


def test_bootstrap_from_fit_directory(tmp_path):
    """Test the bootstrap command on a written fit and its replicate check."""
    fit_dir = fitted(tmp_path)
    assert main(["bootstrap", "--fit-dir", str(fit_dir), "--n", "0"]) == 2
    out = tmp_path / "boot"
    args = ["bootstrap", "--fit-dir", str(fit_dir), "--n", "3", "--out-dir", str(out)]
    assert main(args) == 0
    result = json.loads((out / "bootstrap.json").read_text())
    assert result["n_boot"] == 3
    assert result["hypothesis"] == "h1"
    assert len(pd.read_csv(out / "bootstrap_replicates.csv")) == 3


def test_regress_on_fitted_scores(tmp_path):
    """Test the logistic regression command on the scores of a fit."""
    fit_dir = fitted(tmp_path)
    rng = np.random.default_rng(6)
    outcomes = pd.DataFrame(
        {
            "subject_id": [str(i + 1) for i in range(100)],
            "outcome": rng.integers(0, 2, 100),
            "age": rng.normal(60, 8, 100),
        }
    )
    outcomes.to_csv(tmp_path / "outcomes.csv", index=False)
    out = tmp_path / "regress"
    args = [
        "regress",
        "--fit-dir",
        str(fit_dir),
        "--outcomes",
        str(tmp_path / "outcomes.csv"),
        "--covariates",
        "age",
        "--components",
        "1",
        "--out-dir",
        str(out),
    ]
    assert main(args) == 0
    table = pd.read_csv(out / "regression.csv")
    assert list(table["term"]) == ["(Intercept)", "xi_1", "age"]
    assert len(pd.read_csv(out / "beta_curve.csv")) == 31
    bad = args[:-2] + ["--components", "5", "--out-dir", str(out)]
    assert main(bad) == 2


def test_simulate_study(tmp_path):
    """Test a small simulation study from the command line."""
    out = tmp_path / "sim"
    args = [
        "simulate",
        "--subjects",
        "40",
        "--points",
        "31",
        "--sigma",
        "0.2",
        "--reps",
        "2",
        "--components",
        "1",
        "1",
        "--no-smooth",
        "--out-dir",
        str(out),
    ]
    assert main(args) == 0
    rmse = pd.read_csv(out / "simulation_rmse.csv", dtype={"replicate": str})
    assert list(rmse["replicate"]) == ["0", "1", "pooled"]
    eigenvalues = pd.read_csv(out / "simulation_eigenvalues.csv")
    assert list(eigenvalues.columns) == ["replicate", "lambda1_1", "lambda2_1", "rho_w"]


def test_config_file_precedence(tmp_path, caplog):
    """Test that flags override the config file, which overrides defaults."""
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"seed": 5, "reps": 3, "n-basis": 12, "bogus": 1}))
    argv = ["simulate", "--config", str(config), "--reps", "4"]
    args = build_parser().parse_args(argv)
    options = resolve_options(args)
    assert options["seed"] == 5
    assert options["reps"] == 4
    assert options["n_basis"] == 12
    assert options["subjects"] == 200
    assert "bogus" not in options
    assert "Ignoring unknown config key 'bogus'" in caplog.text


def test_invalid_threads(tmp_path):
    """Test that a nonpositive worker count is rejected."""
    assert main(["simulate", "--threads", "0", "--out-dir", str(tmp_path)]) == 2
