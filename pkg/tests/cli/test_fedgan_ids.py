from __future__ import annotations

import json
import math

import numpy as np
import pytest
from typer.testing import CliRunner

from fedgan_ids.cli.fedgan_ids import app
from fedgan_ids.constants import (
    CENTRAL_CHECKPOINT_NAME,
    CLUSTER_CHECKPOINT_TEMPLATE,
    METRICS_FILE_NAME,
    SUMMARY_FILE_NAME,
)
from fedgan_ids.gan.mlp import ParamVector
from fedgan_ids.gan.model import Batch, GanModel, Label, ParamPair
from fedgan_ids.io.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from fedgan_ids.io.config_file import write_config
from fedgan_ids.io.features import write_feature_csv
from fedgan_ids.io.metrics import render_record
from fedgan_ids.models.config import SimConfig
from fedgan_ids.simulation.harness import run_simulation

runner = CliRunner()


@pytest.fixture
def config_file(tmp_path, scenario: SimConfig):
    path = tmp_path / "scenario.json"
    write_config(path, scenario)
    return path


@pytest.fixture
def simulated(tmp_path, config_file):
    out = tmp_path / "run"
    result = runner.invoke(
        app, ["simulate", "--config", str(config_file), "--out", str(out), "-q"]
    )
    assert result.exit_code == 0, result.output
    return out


def test_simulate_writes_every_output(simulated, scenario: SimConfig):
    metrics_lines = (simulated / METRICS_FILE_NAME).read_text().splitlines()
    assert metrics_lines
    expected = [render_record(line) for line in run_simulation(scenario).lines()]
    assert metrics_lines == expected
    summary = json.loads((simulated / SUMMARY_FILE_NAME).read_text())
    assert summary["kind"] == "summary"
    assert (simulated / SUMMARY_FILE_NAME).read_text().strip() == expected[-1]

    central = load_checkpoint(simulated / CENTRAL_CHECKPOINT_NAME)
    assert central.model.model_hash == summary["central_model_hash"]
    for cluster_id in ("A", "B"):
        path = simulated / CLUSTER_CHECKPOINT_TEMPLATE.format(cluster_id=cluster_id)
        checkpoint = load_checkpoint(path)
        hashes = summary["cluster_model_hashes"]
        assert checkpoint.model.model_hash == hashes[cluster_id]
        assert checkpoint.config_digest == central.config_digest


def test_seed_flag_overrides_the_config_file(tmp_path, config_file, scenario):
    out = tmp_path / "reseeded"
    result = runner.invoke(
        app,
        ["simulate", "-c", str(config_file), "-o", str(out), "--seed", "11", "-q"],
    )
    assert result.exit_code == 0, result.output
    reseeded = run_simulation(scenario.model_copy(update={"seed": 11}))
    assert (out / SUMMARY_FILE_NAME).read_text().strip() == render_record(
        reseeded.summary
    )


def test_missing_config_is_a_usage_error(tmp_path):
    result = runner.invoke(
        app,
        ["simulate", "-c", str(tmp_path / "absent.json"), "-o", str(tmp_path)],
    )
    assert result.exit_code == 2


def test_invalid_config_is_reported_with_its_key(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"clusters": [{"C": 1.5}]}))
    result = runner.invoke(
        app, ["simulate", "-c", str(path), "-o", str(tmp_path / "out"), "-q"]
    )
    assert result.exit_code == 2
    assert "clusters[0].C" in result.output
    assert not (tmp_path / "out").exists()


def test_quiet_and_verbose_conflict(tmp_path, config_file):
    result = runner.invoke(
        app, ["simulate", "-c", str(config_file), "-o", str(tmp_path), "-q", "-v"]
    )
    assert result.exit_code == 2


def test_help_lists_flags():
    result = runner.invoke(app, ["simulate", "--help"])
    assert result.exit_code == 0
    for flag in ("--config", "--out", "--seed", "--quiet"):
        assert flag in result.output


def test_inspect_queue_shows_a_round(simulated):
    trace = str(simulated / METRICS_FILE_NAME)
    result = runner.invoke(
        app,
        ["inspect-queue", "-t", trace, "-r", "1", "--tier", "proxy", "--server", "A"],
    )
    assert result.exit_code == 0, result.output
    assert "round 1" in result.output

    result = runner.invoke(app, ["inspect-queue", "-t", trace, "-r", "1", "--json"])
    assert result.exit_code == 0, result.output
    reports = [json.loads(line) for line in result.output.splitlines()]
    assert {r["round_index"] for r in reports} == {1}
    assert {r["server_id"] for r in reports} == {"A", "B", "central"}

    missing = runner.invoke(app, ["inspect-queue", "-t", trace, "-r", "999"])
    assert missing.exit_code == 2


def shifted(model: GanModel, delta: float) -> GanModel:
    generator, discriminator = model.params
    return model.with_params(
        ParamPair(
            ParamVector(generator.spec, generator.values + delta),
            ParamVector(discriminator.spec, discriminator.values + delta),
        )
    )


@pytest.fixture
def two_checkpoints(tmp_path, small_model: GanModel):
    first = tmp_path / "first.fgck"
    second = tmp_path / "second.fgck"
    save_checkpoint(first, Checkpoint(small_model, sample_count=3))
    save_checkpoint(second, Checkpoint(shifted(small_model, 1.0), sample_count=5))
    return first, second


def test_aggregate_of_one_checkpoint_is_the_checkpoint(tmp_path, two_checkpoints):
    first, _ = two_checkpoints
    out = tmp_path / "out.fgck"
    result = runner.invoke(app, ["aggregate", "-i", str(first), "-o", str(out)])
    assert result.exit_code == 0, result.output
    assert (
        load_checkpoint(out).model.model_hash
        == load_checkpoint(first).model.model_hash
    )


def test_uniform_impacts_match_plain_averaging(tmp_path, two_checkpoints):
    first, second = two_checkpoints
    inputs = ["-i", str(first), "-i", str(second)]
    outputs = {}
    for name, impacts in (
        ("plain", []),
        ("ones", ["--impacts", "1", "--impacts", "1"]),
        ("sevens", ["--impacts", "7", "--impacts", "7"]),
    ):
        outputs[name] = tmp_path / f"{name}.fgck"
        result = runner.invoke(
            app, ["aggregate", *inputs, *impacts, "-o", str(outputs[name])]
        )
        assert result.exit_code == 0, result.output
    plain = outputs["plain"].read_bytes()
    assert outputs["ones"].read_bytes() == plain
    assert outputs["sevens"].read_bytes() == plain

    merged = load_checkpoint(outputs["plain"])
    assert merged.sample_count == 8
    generator, _ = merged.model.params
    original, _ = load_checkpoint(first).model.params
    np.testing.assert_allclose(generator.values, original.values + 5 / 8)


def test_aggregate_refuses_mismatched_impacts(tmp_path, two_checkpoints):
    first, second = two_checkpoints
    result = runner.invoke(
        app,
        [
            "aggregate",
            "-i",
            str(first),
            "-i",
            str(second),
            "--impacts",
            "1",
            "-o",
            str(tmp_path / "out.fgck"),
        ],
    )
    assert result.exit_code == 2


def toy_dataset(path, seed: int = 42) -> None:
    rng = np.random.default_rng(seed)
    angles = rng.uniform(0.0, 2 * math.pi, 200)
    ring = np.column_stack((np.cos(angles), np.sin(angles))) * 5.0
    ring += rng.normal(0.0, 0.3, size=ring.shape)
    write_feature_csv(
        path,
        Batch(
            np.vstack((rng.normal(size=(400, 2)), ring)),
            (Label.GENUINE,) * 400 + (Label.MALICIOUS,) * 200,
        ),
    )


def test_trained_model_detects_its_training_attacks(tmp_path):
    data = tmp_path / "toy.csv"
    model = tmp_path / "toy.fgck"
    toy_dataset(data)
    result = runner.invoke(
        app,
        [
            "train-local",
            "-d",
            str(data),
            "-o",
            str(model),
            "--steps",
            "1000",
            "--batch-size",
            "64",
            "--seed",
            "3",
            "--semi-supervised",
            "-q",
        ],
    )
    assert result.exit_code == 0, result.output
    assert load_checkpoint(model).sample_count == 400

    result = runner.invoke(
        app, ["eval", "--checkpoint", str(model), "-d", str(data), "--json"]
    )
    assert result.exit_code == 0, result.output
    evaluation = json.loads(result.output.strip().splitlines()[-1])
    assert evaluation["auc"] > 0.9
    assert (evaluation["genuine_count"], evaluation["attack_count"]) == (400, 200)


def test_eval_refuses_unreadable_inputs(tmp_path, small_model: GanModel):
    checkpoint = tmp_path / "model.fgck"
    save_checkpoint(checkpoint, Checkpoint(small_model))
    data = tmp_path / "wide.csv"
    data.write_text("a,b,c,label\n1,2,3,genuine\n")
    result = runner.invoke(
        app, ["eval", "--checkpoint", str(checkpoint), "-d", str(data)]
    )
    assert result.exit_code == 2
    garbage = tmp_path / "garbage.fgck"
    garbage.write_bytes(b"not a checkpoint")
    toy = tmp_path / "toy.csv"
    toy_dataset(toy)
    result = runner.invoke(
        app, ["eval", "--checkpoint", str(garbage), "-d", str(toy)]
    )
    assert result.exit_code == 2


def test_aggregate_takes_several_values_after_one_flag(tmp_path, two_checkpoints):
    first, second = two_checkpoints
    names = ("plain", "ones", "sevens")
    outputs = {name: tmp_path / f"{name}.fgck" for name in names}
    commands = {
        "plain": ["--inputs", str(first), str(second)],
        "ones": ["--inputs", str(first), str(second), "--impacts", "1", "1"],
        "sevens": ["-i", str(first), "-i", str(second), "--impacts", "7", "7"],
    }
    for name, args in commands.items():
        result = runner.invoke(app, ["aggregate", *args, "--out", str(outputs[name])])
        assert result.exit_code == 0, result.output
    plain = outputs["plain"].read_bytes()
    assert outputs["ones"].read_bytes() == plain
    assert outputs["sevens"].read_bytes() == plain
    assert load_checkpoint(outputs["plain"]).sample_count == 8

    result = runner.invoke(
        app,
        [
            "aggregate",
            "--inputs",
            str(first),
            str(second),
            "--impacts",
            "1",
            "--out",
            str(tmp_path / "short.fgck"),
        ],
    )
    assert result.exit_code == 2


@pytest.mark.parametrize("threshold", ["0", "1.0", "1.5", "-0.2"])
def test_eval_refuses_thresholds_outside_the_unit_interval(
    tmp_path, small_model: GanModel, threshold
):
    checkpoint = tmp_path / "model.fgck"
    save_checkpoint(checkpoint, Checkpoint(small_model))
    data = tmp_path / "toy.csv"
    toy_dataset(data)
    result = runner.invoke(
        app,
        [
            "eval",
            "--checkpoint",
            str(checkpoint),
            "-d",
            str(data),
            "--threshold",
            threshold,
        ],
    )
    assert result.exit_code == 2


def test_eval_accepts_a_threshold_inside_the_unit_interval(
    tmp_path, small_model: GanModel
):
    checkpoint = tmp_path / "model.fgck"
    save_checkpoint(checkpoint, Checkpoint(small_model))
    data = tmp_path / "toy.csv"
    toy_dataset(data)
    result = runner.invoke(
        app,
        [
            "eval",
            "--checkpoint",
            str(checkpoint),
            "-d",
            str(data),
            "--threshold",
            "0.3",
        ],
        catch_exceptions=False,
    )
    assert result.exit_code == 0, result.output


def test_eval_refuses_a_csv_that_is_not_utf8(tmp_path, small_model: GanModel):
    checkpoint = tmp_path / "model.fgck"
    save_checkpoint(checkpoint, Checkpoint(small_model))
    data = tmp_path / "latin.csv"
    data.write_bytes(b"f0,f1,label\n1.0,2.0,genuine\n\xff\xfe,2.0,genuine\n")
    result = runner.invoke(
        app, ["eval", "--checkpoint", str(checkpoint), "-d", str(data)]
    )
    assert result.exit_code == 2
    assert "line 3" in result.output


@pytest.mark.slow
def test_default_scenario_reruns_byte_for_byte(tmp_path):
    config = tmp_path / "default.json"
    config.write_text("{}\n")
    runs = []
    for name in ("first", "second"):
        out = tmp_path / name
        result = runner.invoke(
            app, ["simulate", "-c", str(config), "-o", str(out), "-q"]
        )
        assert result.exit_code == 0, result.output
        runs.append({path.name: path.read_bytes() for path in out.iterdir()})

    first, second = runs
    expected = {
        METRICS_FILE_NAME,
        SUMMARY_FILE_NAME,
        CENTRAL_CHECKPOINT_NAME,
        *(CLUSTER_CHECKPOINT_TEMPLATE.format(cluster_id=c) for c in ("A", "B")),
    }
    assert expected <= set(first)
    assert first.keys() == second.keys()
    for name in first:
        assert first[name] == second[name], name
