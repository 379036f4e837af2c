import json
import os

import numpy as np
import pytest

from heavecast.cli import EXIT_CONFIG, EXIT_DATA, EXIT_IO, main
from heavecast.config import DEFAULTS, resolve_config, write_snapshot
from heavecast.tables import read_table
from heavecast.waves import read_record_csv

# every training knob shrunk so one synth+train+eval pipeline runs in seconds
MICRO = [
    "-O", "duration=240",
    "-O", "trim_seconds=30",
    "-O", "seeds_per_state=2",
    "-O", "n_components=64",
    "-O", "m=5",
    "-O", "m_list=5",
    "-O", "lstm_hidden=6",
    "-O", "fc_width=4",
    "-O", "num_fc_blocks=1",
    "-O", "max_epochs=3",
    "-O", "batch_size=128",
    "-O", "folds=0",
    "-O", "mc_replicas=40",
    "-O", "coverage_replicas=16",
    "-O", "coverage_window_stride=20",
]


def run_cli(*args) -> int:
    return main(list(args))


@pytest.fixture(scope="module")
def pipeline_dir(tmp_path_factory):
    out = str(tmp_path_factory.mktemp("run"))
    assert run_cli("synth", "--out", out, *MICRO) == 0
    assert run_cli("train", "--out", out, *MICRO) == 0
    return out


def test_synth_outputs_and_manifest(pipeline_dir):
    cases = os.path.join(pipeline_dir, "cases")
    with open(os.path.join(cases, "folds.json")) as fh:
        manifest = json.load(fh)
    assert len(manifest["folds"]) == 2
    assert len(manifest["test_cases"]) == 2
    assert len(manifest["cases"]) == 6
    record = read_record_csv(os.path.join(cases, "case00.csv"))
    assert set(record.channels) == {"eta", "heave"}
    # 240 s minus the 30 s trim at dt = 0.775
    assert record.n_samples == int(240 / 0.775) - int(30 / 0.775)
    psd = read_table(os.path.join(cases, "case00_psd.csv"))
    assert list(psd) == ["omega", "psd_eta", "psd_eta_target", "psd_heave", "psd_heave_target"]


def test_default_manifest_is_eight_folds(tmp_path):
    out = str(tmp_path / "full")
    assert run_cli("synth", "--out", out, "-O", "n_components=64") == 0
    with open(os.path.join(out, "cases", "folds.json")) as fh:
        manifest = json.load(fh)
    assert len(manifest["folds"]) == 8
    assert len(manifest["cases"]) == 18
    assert len(manifest["test_cases"]) == 2
    # 30-minute cases keep 28 minutes after the 2-minute trim
    record = read_record_csv(os.path.join(out, "cases", "case00.csv"))
    assert record.n_samples * record.dt == pytest.approx(28 * 60, abs=2.0)


def test_train_artifacts(pipeline_dir):
    models = os.path.join(pipeline_dir, "models")
    names = sorted(os.listdir(models))
    assert "ckpt_m005_nl0.0_fold0.wmck" in names
    assert "curve_m005_nl0.0_fold0.csv" in names
    summary = read_table(os.path.join(models, "train_summary.csv"))
    assert summary["m"] == ["5"]
    curve = read_table(os.path.join(models, "curve_m005_nl0.0_fold0.csv"))
    assert list(curve) == ["epoch", "lr", "train_mse", "val_mse", "val_ev"]
    assert len(curve["epoch"]) == 3


def test_predict_command(pipeline_dir):
    ckpt = os.path.join(pipeline_dir, "models", "ckpt_m005_nl0.0_fold0.wmck")
    assert (
        run_cli(
            "predict", "--out", pipeline_dir, "--checkpoint", ckpt, "--case", "case04",
            "--anchor", "30", "--write-replicas", "--force", *MICRO,
        )
        == 0
    )
    pred_dir = os.path.join(pipeline_dir, "predictions")
    mc = read_table(os.path.join(pred_dir, "prediction_mc.csv"))
    assert list(mc) == ["point", "mean", "std", "ci_lo", "ci_hi"]
    assert len(mc["point"]) == 5
    point = read_table(os.path.join(pred_dir, "prediction_point.csv"))
    assert list(point) == ["point", "deterministic", "truth"]
    metrics = read_table(os.path.join(pred_dir, "prediction_metrics.csv"))
    assert metrics["anchor"] == ["30"]
    assert os.path.exists(os.path.join(pred_dir, "replicas.wmmc"))


def test_predict_rejects_inadmissible_anchor(pipeline_dir):
    ckpt = os.path.join(pipeline_dir, "models", "ckpt_m005_nl0.0_fold0.wmck")
    code = run_cli(
        "predict", "--out", pipeline_dir, "--checkpoint", ckpt, "--case", "case04",
        "--anchor", "2", "--force", *MICRO,
    )
    assert code == EXIT_DATA


def test_eval_command(pipeline_dir):
    assert run_cli("eval", "--out", pipeline_dir, "--force", *MICRO) == 0
    metrics = os.path.join(pipeline_dir, "metrics")
    ev = read_table(os.path.join(metrics, "ev_vs_horizon.csv"))
    assert list(ev) == ["m", "mean_ev", "std_ev", "n_windows"]
    coverage = read_table(os.path.join(metrics, "coverage.csv"))
    assert 0.0 <= float(coverage["coverage"][0]) <= 1.0
    for name in (
        "ci_timeseries.csv",
        "gaussianity_by_replicas.csv",
        "covariance_matrix.csv",
        "covariance_spacing.csv",
        "covariance_summary.csv",
    ):
        table = read_table(os.path.join(metrics, name))
        assert table  # parseable with a non-empty header


def test_noise_sweep_command(pipeline_dir):
    code = run_cli(
        "noise-sweep", "--out", pipeline_dir, "--force", *MICRO,
        "-O", "train_noise_levels=0.0", "-O", "test_noise_levels=0.0,0.5",
    )
    assert code == 0
    table = read_table(os.path.join(pipeline_dir, "noise_sweep", "noise_sweep.csv"))
    assert list(table) == ["train_noise_level", "test_noise_level", "m", "mean_ev", "std_ev", "n_windows"]
    assert table["test_noise_level"] == ["0.0", "0.5"]
    # clean test inputs never score below noisy ones for the same model
    assert float(table["mean_ev"][0]) >= float(table["mean_ev"][1])


def test_noise_sweep_requires_checkpoints(pipeline_dir):
    code = run_cli(
        "noise-sweep", "--out", pipeline_dir, "--force", *MICRO, "-O", "train_noise_levels=0.9",
    )
    assert code == EXIT_DATA


def test_gradcheck_command(capsys):
    assert run_cli("gradcheck", "--seed", "1") == 0
    out = capsys.readouterr().out
    assert "overall max rel err" in out


def test_exit_codes():
    assert run_cli("synth", "--out", "/tmp/nonexistent-unused", "-O", "bogus_key=1") == EXIT_CONFIG
    assert run_cli("train", "--out", "/tmp/definitely-missing-run-dir") == EXIT_DATA


def test_force_flag_guards_outputs(tmp_path):
    out = str(tmp_path / "guard")
    assert run_cli("synth", "--out", out, *MICRO) == 0
    assert run_cli("synth", "--out", out, *MICRO) == EXIT_IO
    assert run_cli("synth", "--out", out, "--force", *MICRO) == 0


def test_synth_rerun_is_bit_identical(tmp_path):
    a = str(tmp_path / "a")
    b = str(tmp_path / "b")
    assert run_cli("synth", "--out", a, *MICRO) == 0
    assert run_cli("synth", "--out", b, *MICRO) == 0
    for name in sorted(os.listdir(os.path.join(a, "cases"))):
        if name.endswith(".config"):
            continue
        with open(os.path.join(a, "cases", name), "rb") as fh:
            bytes_a = fh.read()
        with open(os.path.join(b, "cases", name), "rb") as fh:
            bytes_b = fh.read()
        assert bytes_a == bytes_b, name


def test_rerun_from_snapshot_matches(tmp_path):
    a = str(tmp_path / "a")
    assert run_cli("synth", "--out", a, *MICRO) == 0
    snapshot = os.path.join(a, "cases", "synth.config")
    b = str(tmp_path / "b")
    assert run_cli("synth", "--out", b, "--config", snapshot) == 0
    with open(os.path.join(a, "cases", "case03.csv"), "rb") as fh:
        bytes_a = fh.read()
    with open(os.path.join(b, "cases", "case03.csv"), "rb") as fh:
        bytes_b = fh.read()
    assert bytes_a == bytes_b


def test_config_layering(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("m = 7\nseed = 5\n")
    cfg = resolve_config(config_path=str(path), environ={"HEAVECAST_M": "9"}, overrides={"seed": "11"})
    assert cfg["m"] == 9  # env beats file
    assert cfg["seed"] == 11  # override beats everything
    assert cfg["dt"] == DEFAULTS["dt"]


def test_snapshot_round_trip(tmp_path):
    cfg = resolve_config(overrides={"m_list": "20,40", "lstm_shortcuts": "false"})
    path = tmp_path / "snap.cfg"
    write_snapshot(cfg, path)
    back = resolve_config(config_path=str(path))
    assert back.values == cfg.values


def test_desk_profile_flag():
    cfg = resolve_config(desk_profile=True)
    assert cfg["lstm_hidden"] == 32
    assert cfg["fc_width"] == 16
    assert cfg["max_epochs"] == 60
