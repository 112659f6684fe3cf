import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from metakrr.cli import main
from metakrr.serialize import load_json, save_json


WORLD_CFG = {
    "schema_version": 1,
    "d": 2,
    "s_true": 2,
    "n_tasks": 5,
    "kernel": {"family": "gaussian", "params": {"bandwidth": 1.0}},
    "dist": {"kind": "uniform_box", "scale": 1.0},
    "sigma_y": 0.3,
    "seed": 11,
}


@pytest.fixture()
def world_file(tmp_path):
    cfg_path = tmp_path / "world_cfg.json"
    save_json(cfg_path, WORLD_CFG)
    out = tmp_path / "world.json"
    assert main(["synth", "--config", str(cfg_path), "--out", str(out)]) == 0
    return out


@pytest.fixture()
def model_file(tmp_path, world_file):
    cfg = {
        "schema_version": 1,
        "world": str(world_file),
        "n": 15,
        "lambda": 0.05,
        "s": 2,
    }
    cfg_path = tmp_path / "pretrain_cfg.json"
    save_json(cfg_path, cfg)
    out = tmp_path / "model.json"
    assert main(["pretrain", "--config", str(cfg_path), "--out", str(out)]) == 0
    return out


def write_target_csv(path, X, Y=None):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        d = X.shape[1]
        header = [f"x{i}" for i in range(d)] + (["y"] if Y is not None else [])
        writer.writerow(header)
        for i in range(X.shape[0]):
            row = list(X[i]) + ([Y[i]] if Y is not None else [])
            writer.writerow(row)


class TestSynth:
    def test_writes_valid_world(self, world_file):
        data = load_json(world_file)
        assert data["schema_version"] == 1
        assert len(data["anchors"]) == 2
        assert len(data["task_coeffs"]) == 5

    def test_byte_identical_reruns(self, tmp_path, world_file):
        cfg_path = tmp_path / "world_cfg.json"
        out2 = tmp_path / "world2.json"
        main(["synth", "--config", str(cfg_path), "--out", str(out2)])
        assert out2.read_bytes() == world_file.read_bytes()

    def test_seed_override_changes_world(self, tmp_path, world_file):
        cfg_path = tmp_path / "world_cfg.json"
        out2 = tmp_path / "world_seeded.json"
        main(["synth", "--config", str(cfg_path), "--seed", "99", "--out", str(out2)])
        assert out2.read_bytes() != world_file.read_bytes()


class TestPretrain:
    def test_model_round_trips(self, model_file):
        from metakrr.subspace import SubspaceModel

        model = SubspaceModel.from_dict(load_json(model_file))
        assert model.s == 2
        assert model.n_tasks == 5

    def test_inline_world_config(self, tmp_path):
        cfg = {
            "schema_version": 1,
            "world": WORLD_CFG,
            "n": 12,
            "lambda": 0.05,
            "s": 1,
        }
        cfg_path = tmp_path / "cfg.json"
        save_json(cfg_path, cfg)
        out = tmp_path / "model.json"
        assert main(["pretrain", "--config", str(cfg_path), "--out", str(out)]) == 0
        assert load_json(out)["s"] == 1


class TestInfer:
    def test_predictions_file(self, tmp_path, model_file):
        rng = np.random.default_rng(0)
        X = rng.uniform(-1, 1, size=(20, 2))
        Y = rng.normal(size=20)
        target_csv = tmp_path / "target.csv"
        write_target_csv(target_csv, X, Y)
        out = tmp_path / "pred.csv"
        assert main([
            "infer", "--model", str(model_file), "--target-data", str(target_csv),
            "--lambda-star", "0.1", "--out", str(out),
        ]) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "y_pred"
        assert len(lines) == 21
        # match the library path
        from metakrr.inference import fit_target, predict_target
        from metakrr.subspace import SubspaceModel

        model = SubspaceModel.from_dict(load_json(model_file))
        tm = fit_target(model, X, Y, 0.1)
        expected = predict_target(tm, X)
        got = np.array([float(v) for v in lines[1:]])
        assert np.allclose(got, expected, atol=1e-15)

    def test_auto_lambda_and_predict_grid(self, tmp_path, model_file):
        rng = np.random.default_rng(1)
        X = rng.uniform(-1, 1, size=(40, 2))
        Y = rng.normal(size=40)
        target_csv = tmp_path / "target.csv"
        write_target_csv(target_csv, X, Y)
        grid_csv = tmp_path / "grid.csv"
        write_target_csv(grid_csv, rng.uniform(-1, 1, size=(7, 2)))
        out = tmp_path / "pred.csv"
        saved = tmp_path / "target_model.json"
        assert main([
            "infer", "--model", str(model_file), "--target-data", str(target_csv),
            "--predict-data", str(grid_csv), "--save-model", str(saved),
            "--out", str(out),
        ]) == 0
        assert len(out.read_text().splitlines()) == 8
        assert "beta_target" in load_json(saved)

    def test_missing_labels_is_an_error(self, tmp_path, model_file):
        X = np.zeros((5, 2))
        target_csv = tmp_path / "target.csv"
        write_target_csv(target_csv, X)
        with pytest.raises(ValueError, match="'y' column"):
            main([
                "infer", "--model", str(model_file),
                "--target-data", str(target_csv), "--out", str(tmp_path / "p.csv"),
            ])


class TestRates:
    def test_json_payload(self, tmp_path, capsys):
        assert main([
            "rates", "--r", "0.5", "--p", "0.2", "--alpha", "0.4",
            "--n", "100", "--N", "10",
        ]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["regime"]["regime"] in {"A", "B1", "B2", "EXP"}
        assert "krr_optimal_lambda" in payload
        assert len(payload["gain_rows"]) == 4

    def test_out_file(self, tmp_path):
        out = tmp_path / "rates.json"
        main([
            "rates", "--r", "0.5", "--p", "0.2", "--alpha", "0.4",
            "--n", "100", "--N", "10", "--out", str(out),
        ])
        assert json.loads(out.read_text())["n"] == 100


class TestExperimentAndReport:
    def test_experiment_writes_csv_and_summary(self, tmp_path):
        # the experiment grid supplies n_tasks (N axis) and seeds itself
        world = {k: v for k, v in WORLD_CFG.items()
                 if k not in ("n_tasks", "seed", "schema_version")}
        cfg = {
            "world": world,
            "N_values": [4],
            "n_values": [12],
            "n_T_values": [10],
            "lambda_values": [0.05],
            "s_values": [2],
            "seeds": [0, 1],
            "mc_samples": 100,
        }
        cfg_path = tmp_path / "exp.json"
        save_json(cfg_path, cfg)
        out = tmp_path / "report.csv"
        assert main(["experiment", "--config", str(cfg_path), "--out", str(out)]) == 0
        rows = out.read_text().splitlines()
        assert len(rows) == 3
        summary = load_json(str(out) + ".summary.json")
        assert summary["n_records"] == 2 and summary["n_failed"] == 0

    def test_report_slope_from_csv(self, tmp_path, capsys):
        # synthesize a report with a known slope
        from metakrr.harness import REPORT_COLUMNS

        path = tmp_path / "r.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS)
            writer.writeheader()
            for N in (2, 4, 8, 16):
                for seed in range(6):
                    writer.writerow({
                        "config_hash": "x", "seed": seed, "N": N, "n": 3,
                        "n_T": 5, "s": 1, "lambda": 0.1, "lambda_mode": "fixed",
                        "lambda_star": 0.1, "sin_theta_hs": 1.0 / N,
                        "status": "ok",
                    })
        assert main(["report", "--in", str(path), "--x", "N", "--y", "sin_theta_hs"]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["slopes"]["sin_theta_hs~N"]["slope"] == pytest.approx(-1.0, abs=1e-9)


def test_console_entrypoint_runs():
    proc = subprocess.run(
        [sys.executable, "-m", "metakrr.cli", "rates", "--r", "0.5", "--p", "0.1",
         "--alpha", "0.2", "--n", "50", "--N", "5"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["n"] == 50
