import json
import os

import pytest

from afddim.cli import main

CONFIG_DIR = os.path.join(os.path.dirname(__file__), os.pardir, "configs")


def test_util(capsys):
    assert main(["util", "--N", "12", "20", "--M", "16", "256", "--bits", "80", "96"]) == 0
    out = capsys.readouterr().out
    assert "0.9524" in out and "DISCREPANCY" in out


def test_alloc_flags(capsys):
    assert main(["alloc", "--c", "1", "4", "--p-total", "1"]) == 0
    out = capsys.readouterr().out
    assert "0.6125741133" in out and "kkt residual" in out


def test_alloc_config(capsys):
    assert main(["alloc", "--config", os.path.join(CONFIG_DIR, "alloc_example.yaml")]) == 0


def test_mi_bits(tmp_path, capsys):
    assert main(["mi", "--M", "4", "--snr-db", "40", "--out", str(tmp_path)]) == 0
    row = (tmp_path / "mi_bits.csv").read_text().splitlines()[1].split(",")
    assert abs(float(row[2]) - 2.0) < 1e-6


def test_simulate_writes_outputs(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("M: [4]\nN: [4]\nH: [2]\nsnr_db: [5]\ntrials: 3\n")
    out = tmp_path / "run"
    assert main(["simulate", "--config", str(cfg), "--seed", "5", "--out", str(out),
                 "--detector", "ml", "--steps", "2"]) == 0
    assert {"results.csv", "timings.csv", "plotdata"} <= set(os.listdir(out))
    rows = (out / "results.csv").read_text().splitlines()
    assert len(rows) == 2 and ",ml,2," in rows[1]


def test_train_small(tmp_path, capsys):
    cfg = tmp_path / "t.yaml"
    cfg.write_text("M: 4\nhops: 3\ncount: 300\nvalidation: 100\nepochs: 1\nhidden: 8\n")
    assert main(["train", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "train_report.json").read_text())
    assert len(rep["loss_history"]) == 1
    assert (tmp_path / "model.json").exists()


@pytest.mark.parametrize("argv", [
    ["simulate", "--config", "/nonexistent.yaml"],
    ["alloc", "--c", "1", "-2", "--p-total", "1"],
    ["alloc"],
    ["util", "--N", "0"],
])
def test_errors_exit_nonzero(argv, capsys):
    assert main(argv) != 0
    assert "error" in capsys.readouterr().err


def test_bad_config_key(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("hops: 3\n")
    assert main(["simulate", "--config", str(cfg)]) == 2
