import json
import sys
from pathlib import Path

import numpy as np

from pcadapt.cli import main
from pcadapt.cloud import load_xyz, save_xyz
from pcadapt.rng import stream

STUB = str(Path(__file__).parent / "stub_server.py")


def test_gen_data_and_train_classifier(tmp_path, capsys):
    data_dir = tmp_path / "data"
    rc = main(["gen-data", "--out", str(data_dir), "--classes", "sphere,cube",
               "--per-class", "4", "--points", "64", "--seed", "1"])
    assert rc == 0
    index = json.loads((data_dir / "index.json").read_text())
    assert len(index["items"]) == 8
    assert load_xyz(data_dir / index["items"][0]["file"]).shape == (64, 3)

    model_path = tmp_path / "model.json"
    rc = main(["train-classifier", "--data", str(data_dir), "--out", str(model_path),
               "--hidden", "8", "--epochs", "30", "--lr", "0.2", "--seed", "0"])
    assert rc == 0
    assert json.loads(model_path.read_text())["format"] == 1


def test_corrupt_command(tmp_path):
    src = tmp_path / "in.xyz"
    pts = stream(1, "cli").standard_normal((100, 3))
    save_xyz(src, pts)
    out = tmp_path / "out.xyz"
    rc = main(["corrupt", "--in", str(src), "--out", str(out),
               "--kind", "density_dec", "--severity", "2", "--seed", "3"])
    assert rc == 0
    assert load_xyz(out).shape == (70, 3)


def test_corrupt_command_bad_kind_exit_code(tmp_path):
    src = tmp_path / "in.xyz"
    save_xyz(src, np.zeros((4, 3)) + np.arange(4)[:, None])
    rc = main(["corrupt", "--in", str(src), "--out", str(tmp_path / "o.xyz"),
               "--kind", "fog"])
    assert rc == 2


def test_adapt_command_with_trace(tmp_path):
    rng = stream(2, "cli")
    clean = rng.standard_normal((48, 3))
    noisy = clean + 0.05 * rng.standard_normal((48, 3))
    clean_path = tmp_path / "clean.xyz"
    noisy_path = tmp_path / "noisy.xyz"
    save_xyz(clean_path, clean)
    save_xyz(noisy_path, noisy)
    out = tmp_path / "adapted.xyz"
    trace = tmp_path / "trace.csv"
    cfg = tmp_path / "adapt.json"
    cfg.write_text(json.dumps({"steps": 5, "votes": 1, "knn_k": 3}))
    rc = main(["adapt", "--in", str(noisy_path), "--out", str(out),
               "--source", str(clean_path), "--config", str(cfg),
               "--seed", "4", "--trace", str(trace)])
    assert rc == 0
    assert load_xyz(out).shape == (48, 3)
    header = trace.read_text().splitlines()[0]
    assert header == "step,loss,chamfer_term,reg_term,lr,lambda"


def test_run_and_report_commands(tmp_path):
    cfg = {
        "seed": 3,
        "classes": ["sphere", "cube"],
        "n_train_per_class": 4,
        "n_eval_per_class": 2,
        "n_points": 48,
        "hidden": 8,
        "train_epochs": 10,
        "train_lr": 0.1,
        "train_batch": 4,
        "corruptions": [["gaussian", 5]],
        "scenario": {"batch_size": 1, "order": "iid_shuffled",
                     "imbalance_ratio": 1.0, "n_instances": 4, "seed": 0},
        "adapt": {"steps": 4, "votes": 1},
        "denoiser": "auto",
    }
    cfg_path = tmp_path / "run.json"
    cfg_path.write_text(json.dumps(cfg))
    out_dir = tmp_path / "out"
    rc = main(["run", "--config", str(cfg_path), "--out", str(out_dir)])
    assert rc == 0
    report = json.loads((out_dir / "report.json").read_text())
    assert "gaussian:5" in report["sections"]
    timing = json.loads((out_dir / "timing.json").read_text())
    assert "per_instance_seconds" in timing

    csv_path = tmp_path / "report.csv"
    rc = main(["report", "--in", str(out_dir / "report.json"), "--out", str(csv_path)])
    assert rc == 0
    lines = csv_path.read_text().splitlines()
    assert lines[0].startswith("corruption,")
    assert lines[1].startswith("gaussian:5,")


def test_run_bad_config_exit_code(tmp_path):
    cfg_path = tmp_path / "bad.json"
    cfg_path.write_text(json.dumps({"bogus": 1}))
    rc = main(["run", "--config", str(cfg_path), "--out", str(tmp_path / "o")])
    assert rc == 2


def test_denoiser_check_pass_and_fuzz(tmp_path):
    rng = stream(5, "cli")
    src = tmp_path / "src.xyz"
    save_xyz(src, rng.standard_normal((12, 3)))
    rc = main(["denoiser-check",
               "--server-cmd", f"{sys.executable} {STUB} empirical {src}",
               "--source", str(src), "--requests", "20", "--fuzz", "50", "--seed", "1"])
    assert rc == 0


def test_denoiser_check_detects_nonconforming_server(tmp_path):
    rng = stream(6, "cli")
    src = tmp_path / "src.xyz"
    save_xyz(src, rng.standard_normal((10, 3)))
    rc = main(["denoiser-check",
               "--server-cmd", f"{sys.executable} {STUB} zero",
               "--source", str(src), "--requests", "5", "--seed", "1"])
    assert rc == 4


def test_denoiser_check_protocol_error_exit_code(tmp_path):
    rng = stream(7, "cli")
    src = tmp_path / "src.xyz"
    save_xyz(src, rng.standard_normal((10, 3)))
    rc = main(["denoiser-check",
               "--server-cmd", f"{sys.executable} {STUB} badjson",
               "--source", str(src), "--requests", "5", "--seed", "1"])
    assert rc == 3


def test_corrupt_command_ply_output(tmp_path):
    from pcadapt.cloud import load_ply

    src = tmp_path / "in.xyz"
    save_xyz(src, stream(8, "cli").standard_normal((50, 3)))
    out = tmp_path / "out.ply"
    rc = main(["corrupt", "--in", str(src), "--out", str(out),
               "--kind", "gaussian", "--severity", "2", "--seed", "1"])
    assert rc == 0
    assert load_ply(out).shape == (50, 3)
