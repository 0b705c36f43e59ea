import hashlib
import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

from qdnn_lab.checkpoint import load_checkpoint
from qdnn_lab.cli import main

QUICK_DATA = ["--rings", "2", "--points-per-semicircle", "20", "--subsamples", "3", "--data-seed", "7"]
QUICK_TRAIN = ["--epochs", "2", "--batch-size", "64", "--lr", "0.02", "--eval-density", "25", "--seed", "0"]


def run(*argv):
    return main(list(argv))


@pytest.fixture()
def workdir(tmp_path):
    assert run("gen-data", "--out-dir", str(tmp_path), *QUICK_DATA) == 0
    return tmp_path


@pytest.fixture()
def float_ckpt(workdir):
    assert (
        run(
            "train", "--out-dir", str(workdir), "--width", "12", "--depth", "3",
            *QUICK_TRAIN, "--name", "float",
        )
        == 0
    )
    return workdir / "float.ckpt.json"


def _sha(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def test_gen_data_counts(tmp_path, capsys):
    assert run("gen-data", "--out-dir", str(tmp_path)) == 0
    out = capsys.readouterr().out
    assert "core=2000 total=20000" in out
    assert (tmp_path / "train.csv").exists()
    assert (tmp_path / "train.meta.json").exists()


def test_gen_data_rings_flag(tmp_path, capsys):
    assert run("gen-data", "--out-dir", str(tmp_path), "--rings", "1") == 0
    assert "core=400" in capsys.readouterr().out


def test_gen_data_rerun_identical(tmp_path):
    run("gen-data", "--out-dir", str(tmp_path), *QUICK_DATA)
    first = _sha(tmp_path / "train.csv")
    run("gen-data", "--out-dir", str(tmp_path), *QUICK_DATA)
    assert _sha(tmp_path / "train.csv") == first


def test_gen_data_bad_spec_nonzero_exit(tmp_path, capsys):
    assert run("gen-data", "--out-dir", str(tmp_path), "--rings", "0") == 1
    assert "error:" in capsys.readouterr().err


def test_train_writes_checkpoint_and_metrics(float_ckpt, workdir):
    assert float_ckpt.exists()
    metrics = (workdir / "float.metrics.csv").read_text().splitlines()
    assert metrics[0] == "epoch,iteration,lr,train_loss,eval_accuracy,lip_loss"
    assert len(metrics) == 3  # header + 2 epochs


def test_retrain_records_quant_metadata(float_ckpt, workdir):
    assert (
        run(
            "retrain", "--out-dir", str(workdir), "--checkpoint", "float.ckpt.json",
            "--wbits", "2", *QUICK_TRAIN, "--name", "w2",
        )
        == 0
    )
    doc = json.loads((workdir / "w2.ckpt.json").read_text())
    assert doc["quant"]["weight_bits"] == 2
    deltas = [layer["delta"] for layer in doc["quant"]["layers"]]
    assert all(d is not None and d > 0 for d in deltas)


def test_retrain_lip_flag_logs_nonzero_lip(float_ckpt, workdir):
    assert (
        run(
            "retrain", "--out-dir", str(workdir), "--checkpoint", "float.ckpt.json",
            "--wbits", "2", "--abits", "2", "--lip", "1e-4", *QUICK_TRAIN, "--name", "w2a2lip",
        )
        == 0
    )
    rows = (workdir / "w2a2lip.metrics.csv").read_text().splitlines()[1:]
    lip_col = [float(r.split(",")[5]) for r in rows]
    assert all(v > 0 for v in lip_col)


def test_finetune_iteration_count(float_ckpt, workdir):
    run(
        "retrain", "--out-dir", str(workdir), "--checkpoint", "float.ckpt.json",
        "--wbits", "2", *QUICK_TRAIN, "--name", "w2",
    )
    assert (
        run(
            "finetune", "--out-dir", str(workdir), "--checkpoint", "w2.ckpt.json",
            "--cycles", "3", "--cycle-epochs", "2", *QUICK_TRAIN, "--name", "clr",
        )
        == 0
    )
    doc = json.loads((workdir / "clr.ckpt.json").read_text())
    steps_per_epoch = (640 + 63) // 64
    assert doc["extra"]["iterations"] == 3 * 2 * steps_per_epoch
    assert doc["extra"]["cycles"] == 3


def test_eval_reproduces_recorded_accuracy(float_ckpt, workdir, capsys):
    recorded = json.loads(float_ckpt.read_text())["extra"]["final_accuracy"]
    assert (
        run(
            "eval", "--out-dir", str(workdir), "--checkpoint", "float.ckpt.json",
            "--density", "25",
        )
        == 0
    )
    out = capsys.readouterr().out
    accuracy = float(out.split("accuracy=")[1])
    assert accuracy == pytest.approx(recorded, abs=5e-5)
    report = (workdir / "report.csv").read_text().splitlines()
    assert report[0].startswith("model,width,depth")
    assert len(report) == 2


def test_eval_missing_checkpoint_nonzero(workdir, capsys):
    assert run("eval", "--out-dir", str(workdir), "--checkpoint", "nope.json") == 1
    assert "error:" in capsys.readouterr().err


def test_map_writes_expected_ppm(float_ckpt, workdir):
    assert (
        run(
            "map", "--out-dir", str(workdir), "--checkpoint", "float.ckpt.json",
            "--res", "41", "--map-out", "m.ppm",
        )
        == 0
    )
    blob = (workdir / "m.ppm").read_bytes()
    assert blob.startswith(b"P6\n41 41\n255\n")
    assert len(blob) == len(b"P6\n41 41\n255\n") + 3 * 41 * 41


def test_map_quarter_window(float_ckpt, workdir):
    run(
        "map", "--out-dir", str(workdir), "--checkpoint", "float.ckpt.json",
        "--res", "21", "--quarter", "--map-out", "q.ppm",
    )
    # quarter window must equal an explicit bottom-right window render
    run(
        "map", "--out-dir", str(workdir), "--checkpoint", "float.ckpt.json",
        "--res", "21", "--window", "0", "1.1", "-1.1", "0", "--map-out", "w.ppm",
    )
    assert _sha(workdir / "q.ppm") == _sha(workdir / "w.ppm")


def test_config_file_with_flag_override(tmp_path, capsys):
    cfg = {"dataset": {"ring_count": 1, "points_per_semicircle": 10, "subsamples_per_core": 2}}
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(cfg))
    assert run("gen-data", "--out-dir", str(tmp_path), "--config", str(cfg_path)) == 0
    assert "core=40 total=120" in capsys.readouterr().out
    # flag overrides the file value
    assert run("gen-data", "--out-dir", str(tmp_path), "--config", str(cfg_path), "--rings", "2") == 0
    assert "core=80 total=240" in capsys.readouterr().out


def test_config_unknown_key_rejected(tmp_path, capsys):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({"dataset": {"bogus": 1}}))
    assert run("gen-data", "--out-dir", str(tmp_path), "--config", str(cfg_path)) == 1
    assert "unknown keys" in capsys.readouterr().err


def test_console_entry_point():
    out = subprocess.run(
        [sys.executable, "-m", "qdnn_lab.cli", "--help"], capture_output=True, text=True
    )
    assert out.returncode == 0
    assert "gen-data" in out.stdout and "reproduce" in out.stdout


def test_reproduce_fig1_quick_and_deterministic(tmp_path):
    def run_once(sub):
        out = tmp_path / sub
        assert (
            run(
                "reproduce", "fig1", "--out-dir", str(out),
                "--epochs", "2", "--density", "40", "--res", "41", "--seed", "1",
            )
            == 0
        )
        names = [
            "fig1_dataset.ppm", "fig1_128-3.ppm", "fig1_128-4.ppm", "fig1_256-3.ppm",
            "fig1_summary.csv",
        ]
        return {n: _sha(out / n) for n in names}

    first = run_once("a")
    second = run_once("b")
    assert first == second
    summary = (tmp_path / "a" / "fig1_summary.csv").read_text().splitlines()
    assert len(summary) == 4  # header + 3 models
