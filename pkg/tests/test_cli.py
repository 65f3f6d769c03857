import csv
import io
import json
import math

import pytest
from click.testing import CliRunner

from smcibm import cli
from smcibm.__version__ import __version__
from smcibm.formats import load_model, load_samples
from smcibm.model import exact_moments


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def model_file(runner, tmp_path):
    path = tmp_path / "model.json"
    result = runner.invoke(cli.cli, ["gen-model", "--graph", "grid:2x3", "--seed", "4", "--out", str(path)])
    assert result.exit_code == 0, result.output
    return path


@pytest.fixture
def sample_file(runner, tmp_path, model_file):
    path = tmp_path / "samples.csv"
    args = ["sample", "--model", str(model_file), "-m", "40", "--seed", "2",
            "--anneal-sweeps", "20", "--equilibration-sweeps", "5", "--out", str(path)]
    result = runner.invoke(cli.cli, args)
    assert result.exit_code == 0, result.stderr
    return path


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_version(runner):
    result = runner.invoke(cli.cli, ["--version"])
    assert result.exit_code == 0
    assert __version__ in result.output


def test_gen_model_to_stdout(runner):
    result = runner.invoke(cli.cli, ["gen-model", "--graph", "path:3", "--bias-range=-0.1,0.1", "--seed", "1"])
    assert result.exit_code == 0
    data = json.loads(result.stdout)
    assert data["n"] == 3
    assert all(abs(b) <= 0.1 for b in data["bias"])


def test_gen_model_rejects_bad_interval(runner):
    result = runner.invoke(cli.cli, ["gen-model", "--coupling-range", "0.3"])
    assert result.exit_code == 1
    assert "interval" in result.stderr


def test_sample_writes_header_and_rows(sample_file):
    text = sample_file.read_text()
    assert text.startswith("# n=6 m=40 seed=2")
    assert load_samples(str(sample_file)).points.shape == (40, 6)


def test_sampling_is_reproducible(runner, tmp_path, model_file, sample_file):
    again = tmp_path / "again.csv"
    args = ["sample", "--model", str(model_file), "-m", "40", "--seed", "2",
            "--anneal-sweeps", "20", "--equilibration-sweeps", "5", "--out", str(again)]
    assert runner.invoke(cli.cli, args).exit_code == 0
    assert again.read_bytes() == sample_file.read_bytes()


def test_estimate_table(runner, model_file, sample_file):
    args = ["estimate", "--model", str(model_file), "--samples", str(sample_file),
            "--method", "smci1", "--target", "0", "--target", "0,1"]
    result = runner.invoke(cli.cli, args)
    assert result.exit_code == 0, result.stderr
    table = rows(result.stdout)
    assert [r["target"] for r in table] == ["0", "0 1"]
    assert all(r["method"] == "smci1" and r["M"] == "40" for r in table)
    assert all(-1.0 <= float(r["estimate"]) <= 1.0 for r in table)


def test_estimate_exact_needs_no_samples(runner, model_file):
    result = runner.invoke(cli.cli, ["estimate", "--model", str(model_file), "--method", "exact", "--target", "2"])
    assert result.exit_code == 0, result.stderr
    expected = exact_moments(load_model(str(model_file))).means[2]
    assert float(rows(result.stdout)[0]["estimate"]) == pytest.approx(expected, abs=1e-12)


def test_estimate_reports_capacity_errors(runner, model_file, sample_file):
    args = ["estimate", "--model", str(model_file), "--samples", str(sample_file),
            "--method", "smci3", "--cap", "2", "--target", "0"]
    result = runner.invoke(cli.cli, args)
    assert result.exit_code == 1
    assert "Error" in result.stderr


def test_estimate_without_samples_fails(runner, model_file):
    result = runner.invoke(cli.cli, ["estimate", "--model", str(model_file), "--method", "mci", "--target", "0"])
    assert result.exit_code == 1
    assert "empty sample set" in result.stderr


def test_exact_table(runner, model_file, tmp_path):
    out = tmp_path / "exact.csv"
    result = runner.invoke(cli.cli, ["exact", "--model", str(model_file), "--covariance", "--out", str(out)])
    assert result.exit_code == 0, result.stderr
    table = rows(out.read_text())
    params = load_model(str(model_file))
    assert len(table) == params.n + len(params.graph.edges)
    assert table[0]["j"] == ""
    chi = exact_moments(params).covariances(params.graph)
    assert float(table[params.n]["value"]) == pytest.approx(chi[0], abs=1e-12)


def test_exact_capacity(runner, model_file):
    result = runner.invoke(cli.cli, ["exact", "--model", str(model_file), "--cap", "3"])
    assert result.exit_code == 1


def test_learn_trace(runner, tmp_path, sample_file):
    out_model = tmp_path / "learned.json"
    args = ["learn", "--graph", "grid:2x3", "--data", str(sample_file), "--method", "pcd-smci1",
            "--steps", "6", "--record-every", "2", "--out-model", str(out_model)]
    result = runner.invoke(cli.cli, args)
    assert result.exit_code == 0, result.stderr
    table = rows(result.stdout)
    assert [r["step"] for r in table] == ["2", "4", "6"]
    assert all(float(r["mae"]) >= 0 for r in table)
    assert "final MAE" in result.stderr
    assert load_model(str(out_model)).n == 6


def test_learn_rejects_mismatched_graph(runner, sample_file):
    result = runner.invoke(cli.cli, ["learn", "--graph", "path:4", "--data", str(sample_file), "--steps", "2"])
    assert result.exit_code == 1
    assert "vertices" in result.stderr


def test_inference_experiment_with_config_file(runner, tmp_path):
    config = tmp_path / "cfg.json"
    config.write_text(json.dumps({
        "graph": "grid:2x3",
        "trials": 2,
        "sizes": [5, 10],
        "methods": ["mci", "smci1", "ais"],
        "anneal-sweeps": 10,
        "equilibration_sweeps": 2,
        "ais-chains": 4,
        "ais-step": 0.1,
    }))
    out = tmp_path / "rows.csv"
    summary = tmp_path / "summary.json"
    args = ["experiment", "inference", "--config", str(config), "--seed", "3",
            "--out", str(out), "--summary", str(summary)]
    result = runner.invoke(cli.cli, args)
    assert result.exit_code == 0, result.stderr
    table = rows(out.read_text())
    assert len(table) == 2 * (2 * 2 + 1)
    assert {r["method"] for r in table} == {"mci", "smci1", "ais"}
    assert all(math.isfinite(float(r["value"])) for r in table)
    data = json.loads(summary.read_text())
    assert data["config"]["seed"] == 3
    assert data["config"]["ais_chains"] == 4
    assert "MAE" in result.stderr

    again = tmp_path / "again.csv"
    args[args.index(str(out))] = str(again)
    assert runner.invoke(cli.cli, args).exit_code == 0
    assert again.read_bytes() == out.read_bytes()


def test_config_file_must_be_an_object(runner, tmp_path):
    config = tmp_path / "cfg.json"
    config.write_text("[1, 2]")
    result = runner.invoke(cli.cli, ["experiment", "inference", "--config", str(config)])
    assert result.exit_code == 2


def test_learning_experiment_small(runner):
    args = ["experiment", "learning", "--graph", "grid:2x2", "--trials", "1", "--data-size", "40",
            "--steps", "4", "--record-every", "2", "--methods", "fixed-smci1"]
    result = runner.invoke(cli.cli, args)
    assert result.exit_code == 0, result.stderr
    table = rows(result.stdout)
    assert [(r["method"], r["step"]) for r in table] == [("fixed-smci1", "2"), ("fixed-smci1", "4")]
