"""CLI smoke tests driving the real subcommands on miniature configs."""
import json
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from orchardnav.cli import main
from orchardnav.world import world_from_json

FAST = [
    "--set", "stack.rates.dynamics_hz=200",
    "--set", "stack.rates.estimator_hz=50",
    "--set", "stack.camera.width=16",
    "--set", "stack.camera.height=16",
    "--set", "vae.resolution=16",
    "--set", "vae.channels=[4, 8]",
    "--set", "vae.latent_dim=4",
    "--set", "vae_data.frames=24",
    "--set", "vae_data.epochs=2",
    "--set", "policy_hyper.epochs=2",
    "--set", "dagger.iterations=1",
    "--set", "dagger.workers=1",
]


@pytest.fixture(scope="module")
def runner():
    return CliRunner()


@pytest.fixture(scope="module")
def suite_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("suite") / "mini.toml"
    path.write_text(
        '[[corridor]]\nname = "mini"\nseed = 811\nrow_length = 9.0\n'
        'branch_density = 0.2\npalette = "summer_sunny"\n')
    return str(path)


def test_gen_world_writes_versioned_json(runner, tmp_path):
    out = tmp_path / "world.json"
    result = runner.invoke(main, ["gen-world", "--seed", "5", "--out", str(out)])
    assert result.exit_code == 0, result.output
    world = world_from_json(out.read_text())
    assert len(world.trees) > 0


def test_gen_world_rejects_bad_override(runner, tmp_path):
    result = runner.invoke(main, ["gen-world", "--set", "world.row_spacing=-2",
                                  "--out", str(tmp_path / "w.json")])
    assert result.exit_code != 0


@pytest.fixture(scope="module")
def pipeline_dir(runner, suite_path, tmp_path_factory):
    """collect-vae-data -> train-vae -> dagger -> evaluate, all miniature."""
    root = tmp_path_factory.mktemp("pipeline")
    data = root / "vae_data"
    result = runner.invoke(main, ["collect-vae-data", *FAST, "--frames", "24",
                                  "--suite", suite_path, "--out", str(data)])
    assert result.exit_code == 0, result.output
    assert len(list((data / "frames").glob("*.png"))) == 24
    assert (data / "index.jsonl").exists()

    encoder = root / "encoder"
    result = runner.invoke(main, ["train-vae", *FAST, "--data", str(data),
                                  "--out", str(encoder)])
    assert result.exit_code == 0, result.output
    assert (encoder / "vae.rrnn").exists()

    run = root / "dagger_run"
    result = runner.invoke(main, ["dagger", *FAST, "--expert", "oracle",
                                  "--iterations", "1", "--encoder", str(encoder),
                                  "--suite", suite_path, "--seed", "3",
                                  "--out", str(run), "--persist-demos"])
    assert result.exit_code == 0, result.output
    return root


def test_dagger_artifacts(pipeline_dir):
    run = pipeline_dir / "dagger_run"
    iterations = json.loads((run / "iterations.json").read_text())
    assert [r["iteration_index"] for r in iterations] == [0, 1]
    assert (run / "controller" / "manifest.json").exists()
    assert (run / "dataset" / "manifest.json").exists()
    assert (run / "config.json").exists()


def test_evaluate_reports_mean_distance(runner, suite_path, pipeline_dir, tmp_path):
    out = tmp_path / "eval"
    result = runner.invoke(main, [
        "evaluate", *FAST, "--suite", suite_path, "--controller",
        str(pipeline_dir / "dagger_run" / "controller"), "--flights", "2",
        "--seed", "4", "--out", str(out)])
    assert result.exit_code == 0, result.output
    summary = json.loads((out / "summary.json").read_text())
    assert summary["flights"] == 2
    assert summary["mean_distance_m"] >= 0
    assert (out / "report" / "summary.json").exists()


def test_replay_verdict_bit_identical(runner, suite_path, pipeline_dir, tmp_path):
    eval_dir = tmp_path / "eval_replay"
    result = runner.invoke(main, [
        "evaluate", *FAST, "--suite", suite_path, "--controller",
        str(pipeline_dir / "dagger_run" / "controller"), "--flights", "1",
        "--seed", "9", "--out", str(eval_dir)])
    assert result.exit_code == 0, result.output
    log_path = next(eval_dir.glob("flight_*.jsonl"))
    result = runner.invoke(main, ["replay", str(log_path)])
    assert result.exit_code == 0, result.output
    assert "bit-identical" in result.output


def test_replay_detects_tampering(runner, suite_path, pipeline_dir, tmp_path):
    eval_dir = tmp_path / "eval_tamper"
    runner.invoke(main, [
        "evaluate", *FAST, "--suite", suite_path, "--controller",
        str(pipeline_dir / "dagger_run" / "controller"), "--flights", "1",
        "--seed", "10", "--out", str(eval_dir)])
    log_path = next(eval_dir.glob("flight_*.jsonl"))
    lines = log_path.read_text().splitlines()
    doc = json.loads(lines[5])
    doc["action"] = 0.9  # falsify an applied command
    lines[5] = json.dumps(doc)
    log_path.write_text("\n".join(lines) + "\n")
    result = runner.invoke(main, ["replay", str(log_path)])
    assert result.exit_code == 1
    assert "MISMATCH" in result.output
