from __future__ import annotations

import csv
import json
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

import main as cli
from conftest import make_store, smooth_image
from datagen import DatasetStore, load_image, overlap_preset, save_image


def run_cli(capsys, *argv: str):
    code = cli.main([str(a) for a in argv])
    captured = capsys.readouterr()
    payload = json.loads(captured.out) if code == 0 else None
    return code, payload, captured.err


def gen_args(out: Path, *extra: str):
    return ("gen-data", "--procedural", "--out", out, "--count", "4", "--patch", "16", "--seed", "1", *extra)


def test_gen_data_is_reproducible(tmp_path, capsys):
    code_a, payload, _ = run_cli(capsys, *gen_args(tmp_path / "a", "--rho", "2"))
    code_b, _, _ = run_cli(capsys, *gen_args(tmp_path / "b", "--rho", "2"))
    assert code_a == code_b == 0
    assert payload["count"] == 4 and payload["train"] + payload["test"] == 4
    assert payload["std"] > 0

    for path in (tmp_path / "a").rglob("*"):
        if path.is_file():
            assert path.read_bytes() == (tmp_path / "b" / path.relative_to(tmp_path / "a")).read_bytes()


def test_gen_data_default_rho_and_zero_rho(tmp_path, capsys):
    _, payload, _ = run_cli(capsys, *gen_args(tmp_path / "d"))
    assert payload["rho"] == 4.0

    code, _, _ = run_cli(capsys, *gen_args(tmp_path / "z", "--rho", "0"))
    assert code == 0
    store = DatasetStore(tmp_path / "z")
    assert all(not np.any(s.truth.d) for s in store.load_split("all"))


def test_gen_data_preset(tmp_path, capsys):
    code, payload, _ = run_cli(
        capsys, "gen-data", "--procedural", "--out", tmp_path / "p", "--count", "1", "--preset", "large"
    )
    assert code == 0
    assert payload["rho"] == overlap_preset("large") and payload["patch_size"] == 128


def test_gen_data_from_directory_with_augmentation(tmp_path, capsys):
    src = tmp_path / "images"
    for i in range(2):
        save_image(src / f"img{i}.png", smooth_image(40, 48, phase=i))
    code, payload, _ = run_cli(
        capsys, "gen-data", "--src-dir", src, "--out", tmp_path / "d", "--count", "3", "--patch", "16", "--augment"
    )
    assert code == 0
    manifest = DatasetStore(tmp_path / "d").manifest
    assert manifest["source"]["kind"] == "directory" and manifest["config"]["augment"]["enabled"]


def test_gen_data_reads_json5_config(tmp_path, capsys):
    cfg = tmp_path / "gen.json5"
    cfg.write_text("{\n  // 程序图像\n  procedural: true,\n  count: 5,\n  patch: 16,\n  rho: 1.5,\n}\n", encoding="utf-8")
    code, payload, _ = run_cli(capsys, "gen-data", "--config", cfg, "--out", tmp_path / "d", "--count", "2")
    assert code == 0
    assert payload["count"] == 2 and payload["rho"] == 1.5


@pytest.mark.parametrize(
    "argv",
    [
        ("gen-data", "--procedural", "--count", "2"),
        ("gen-data", "--procedural", "--src-dir", "x", "--out", "y"),
        ("gen-data", "--procedural", "--out", "y", "--rho", "1", "--preset", "small"),
        ("gen-data", "--procedural", "--out", "y", "--preset", "huge"),
        ("gen-data", "--procedural", "--out", "y", "--patch", "16", "--rho", "9"),
        ("gen-data", "--procedural", "--out", "y", "--bogus"),
        ("frobnicate",),
        (),
    ],
)
def test_usage_errors_exit_1(tmp_path, capsys, argv):
    code, _, err = run_cli(capsys, *argv)
    assert code == 1
    assert err.strip().splitlines()[-1].startswith("error:")


def test_missing_config_file_is_usage_error(tmp_path, capsys):
    code, _, _ = run_cli(capsys, "gen-data", "--config", tmp_path / "nope.json5", "--out", tmp_path / "d")
    assert code == 1


def test_data_errors_exit_2(tmp_path, capsys):
    code, _, err = run_cli(capsys, "gen-data", "--src-dir", tmp_path / "missing", "--out", tmp_path / "d")
    assert code == 2
    assert err.strip().splitlines()[-1].startswith("error: source directory not found")

    code, _, _ = run_cli(capsys, "eval", "--data", tmp_path / "nothing")
    assert code == 2


def test_train_one_iteration(tmp_path, capsys, tiny_store):
    code, payload, _ = run_cli(
        capsys, "train", "--data", tiny_store.root, "--out", tmp_path / "out", "--iters", "1", "--batch", "4"
    )
    assert code == 0
    assert payload["iterations"] == 1 and len(payload["checkpoints"]) == 1
    rows = (tmp_path / "out" / "train_log.csv").read_text(encoding="utf-8").strip().splitlines()
    assert len(rows) == 2
    assert Path(payload["checkpoint"]).exists()


def test_train_supervised_without_truth_fails(tmp_path, capsys, tiny_store):
    samples = [replace(s, truth=None) for s in tiny_store.load_split("all")]
    store = DatasetStore(tmp_path / "unlabeled")
    store.write(samples, tiny_store.config, tiny_store.manifest["splits"], tiny_store.stats)

    code, _, err = run_cli(capsys, "train", "--data", store.root, "--out", tmp_path / "o", "--mode", "supervised", "--iters", "1")
    assert code == 2
    assert "ground truth" in err
    assert not list((tmp_path / "o" / "checkpoints").glob("*.bin"))


def test_eval_zero_on_identical_pairs(tmp_path, capsys):
    store = make_store(tmp_path / "flat", count=4, rho=0.0)
    code, payload, _ = run_cli(capsys, "eval", "--data", store.root, "--estimator", "zero", "--split", "all")
    assert code == 0
    assert payload["mean_rmse"] == 0.0 and payload["count"] == 4
    assert payload["benchmark"]["timed_count"] == 3


def test_eval_missing_checkpoint(tmp_path, capsys, tiny_store):
    code, _, err = run_cli(capsys, "eval", "--data", tiny_store.root, "--estimator", f"net:{tmp_path / 'x.bin'}")
    assert code == 2
    assert "checkpoint" in err


def test_eval_align_report(tmp_path, capsys, tiny_store):
    report = tmp_path / "report"
    code, payload, _ = run_cli(
        capsys, "eval", "--data", tiny_store.root, "--estimator", "align", "--align-iters", "4", "--report", report
    )
    assert code == 0
    with (report / "per_sample.csv").open(encoding="utf-8") as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == payload["count"] == 3
    assert all(r["iterations"] for r in rows)
    assert json.loads((report / "summary.json").read_text(encoding="utf-8"))["estimator"] == "align"


def test_eval_trained_network_with_sweep(tmp_path, capsys, tiny_store):
    run_cli(capsys, "train", "--data", tiny_store.root, "--out", tmp_path / "t", "--iters", "1", "--batch", "4")
    ckpt = next((tmp_path / "t" / "checkpoints").glob("*.bin"))
    code, payload, _ = run_cli(
        capsys,
        "eval",
        "--data",
        tiny_store.root,
        "--estimator",
        f"net:{ckpt}",
        "--sweep",
        "--sweep-count",
        "2",
        "--report",
        tmp_path / "r",
    )
    assert code == 0
    assert set(payload["sweep"]) == {"small", "moderate", "large"}
    assert (tmp_path / "r" / "sweep_large" / "summary.json").exists()


def test_warp_identity_and_zero_delta(tmp_path, capsys):
    src = save_image(tmp_path / "in.png", smooth_image(24, 32))
    code, payload, _ = run_cli(capsys, "warp", "--image", src, "--h", "1 0 0 0 1 0 0 0 1", "--out", tmp_path / "a.png")
    assert code == 0 and payload["size"] == [32, 24]
    np.testing.assert_array_equal(load_image(tmp_path / "a.png"), load_image(src))

    code, _, _ = run_cli(
        capsys, "warp", "--image", src, "--delta", "0,0,0,0,0,0,0,0", "--corners", "4 4 20 4 20 20 4 20", "--out", tmp_path / "b.png"
    )
    assert code == 0
    np.testing.assert_array_equal(load_image(tmp_path / "b.png"), load_image(src))


def test_warp_there_and_back(tmp_path, capsys):
    src = save_image(tmp_path / "in.png", smooth_image(64, 64))
    h = np.array([[1.01, 0.02, 1.3], [-0.015, 0.99, -0.7], [1e-4, -5e-5, 1.0]])
    h_inv = np.linalg.inv(h)
    run_cli(capsys, "warp", "--image", src, "--h", " ".join(map(repr, h.ravel())), "--out", tmp_path / "there.png")
    run_cli(
        capsys, "warp", "--image", tmp_path / "there.png", "--h", " ".join(map(repr, h_inv.ravel())), "--out", tmp_path / "back.png"
    )
    original = load_image(src)
    back = load_image(tmp_path / "back.png")
    assert np.max(np.abs(back[10:-10, 10:-10] - original[10:-10, 10:-10])) < 0.02 + 2 / 255


def test_warp_errors(tmp_path, capsys):
    src = save_image(tmp_path / "in.png", smooth_image(8, 8))
    code, _, err = run_cli(capsys, "warp", "--image", src, "--h", "0 0 0 0 0 0 0 0 0", "--out", tmp_path / "o.png")
    assert code == 3 and "homography" in err
    code, _, _ = run_cli(capsys, "warp", "--image", src, "--h", "1 2", "--out", tmp_path / "o.png")
    assert code == 1
    code, _, _ = run_cli(capsys, "warp", "--image", src, "--delta", "0 0 0 0 0 0 0 0", "--out", tmp_path / "o.png")
    assert code == 1


def test_align_command(capsys, tiny_store):
    code, payload, _ = run_cli(capsys, "align", "--data", tiny_store.root, "--index", "1", "--iters", "20")
    assert code == 0
    assert payload["sample_id"] == 10
    assert payload["loss"] <= payload["initial_loss"]
    assert len(payload["delta"]) == 8 and payload["rmse"] >= 0.0

    code, _, _ = run_cli(capsys, "align", "--data", tiny_store.root, "--index", "99")
    assert code == 1
