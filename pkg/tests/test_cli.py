import csv
import json
import shutil

import numpy as np
import pytest

from reram_guard.cli import main
from reram_guard.model_io import load_model, save_model
from reram_guard.nn import Flatten, Linear, ModelGraph, ReLU


@pytest.fixture(scope="module")
def tiny_model_dir(tmp_path_factory):
    rng = np.random.default_rng(0)
    model = ModelGraph("tiny", (28, 28), [Flatten(), Linear(rng.normal(size=(784, 16)) * 0.05, np.zeros(16)), ReLU(),
                                          Linear(rng.normal(size=(16, 10)), np.zeros(10))])
    return save_model(model, tmp_path_factory.mktemp("cli") / "tiny")


def test_run_writes_results(tiny_model_dir, tmp_path, capsys):
    out = tmp_path / "res"
    code = main(["run", "--seed", "1", "--model", str(tiny_model_dir), "--subset", "20", "--rates", "0,0.1",
                 "--ks", "4", "--trials", "2", "--no-timing", "--out", str(out)])
    assert code == 0
    rows = list(csv.reader((tmp_path / "res.csv").open()))
    assert len(rows) == 5 and rows[0][0] == "rate"
    assert all(r[-1] == "0.000000" for r in rows[1:])
    summary = json.loads((tmp_path / "res.json").read_text())
    assert summary["config"]["seed"] == 1 and summary["check_mode"] == "every-mvm"
    assert "wrote" in capsys.readouterr().out


def test_run_from_config(tiny_model_dir, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"seed": 9, "model_dir": str(tiny_model_dir), "subset": 10, "rates": [0.05],
                               "ks": [2], "trials": 1, "output": str(tmp_path / "o")}))
    assert main(["run", "--config", str(cfg), "--seed", "2", "--no-guard"]) == 0
    summary = json.loads((tmp_path / "o.json").read_text())
    assert summary["config"]["seed"] == 2 and summary["check_mode"] == "off"


def test_seed_required(tiny_model_dir):
    with pytest.raises(SystemExit) as e:
        main(["run", "--model", str(tiny_model_dir)])
    assert e.value.code != 0


@pytest.mark.parametrize("extra", [["--rates", "0.1,2"], ["--model", "/nonexistent/model"], []])
def test_run_errors_exit_nonzero(tiny_model_dir, tmp_path, capsys, extra):
    argv = ["run", "--seed", "0", "--model", str(tiny_model_dir), "--subset", "5", "--trials", "1", "--ks", "4"]
    if extra:
        argv += ["--out", str(tmp_path / "r")] + extra
    assert main(argv) != 0
    assert "error" in capsys.readouterr().err


def test_corrupt_model_exit_nonzero(tiny_model_dir, tmp_path, capsys):
    bad = tmp_path / "bad"
    shutil.copytree(tiny_model_dir, bad)
    p = bad / "layer1.weights.f32"
    p.write_bytes(p.read_bytes()[:-1])
    assert main(["hist", "--model", str(bad), "--samples", "2"]) != 0
    assert "length" in capsys.readouterr().err


def test_hist(tiny_model_dir, tmp_path):
    out = tmp_path / "h.json"
    assert main(["hist", "--model", str(tiny_model_dir), "--samples", "10", "--out", str(out)]) == 0
    h = json.loads(out.read_text())
    assert len(h["pooled"]) == 256
    assert sum(h["pooled"]) == sum(layer["codes_emitted"] for layer in h["layers"].values())


def test_train(tmp_path, capsys):
    out = tmp_path / "m"
    assert main(["train", "--out", str(out), "--epochs", "1", "--hidden", "8"]) == 0
    model = load_model(out)
    assert model.layers[1].weights.shape == (784, 8)
    assert "test accuracy" in capsys.readouterr().out


def test_train_missing_data(tmp_path, capsys):
    assert main(["train", "--mnist-dir", str(tmp_path), "--out", str(tmp_path / "m")]) != 0
    assert "error" in capsys.readouterr().err
