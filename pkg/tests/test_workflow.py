from __future__ import annotations

import json

import pytest

import main as cli
from utils.errors import ConfigError
from workflow.checkpoint import append_log, completed_nodes, init_run_dir, load_latest_state, run_dir, save_state
from workflow.graph import NODE_ORDER, next_node_after, route_decider

RUN_ARGS = [
    "run",
    "--procedural",
    "--count",
    "6",
    "--patch",
    "16",
    "--rho",
    "2",
    "--iters",
    "2",
    "--batch",
    "2",
    "--run-id",
    "t1",
]


def test_next_node_after():
    assert next_node_after("generate_data") == "train"
    assert next_node_after("train") == "evaluate"
    assert next_node_after("evaluate") == "summarize"
    assert next_node_after("summarize") == "end"
    assert next_node_after("unknown") == "generate_data"
    assert NODE_ORDER[0] == "generate_data"


def test_route_decider_defaults_to_start():
    assert route_decider({}) == "generate_data"
    assert route_decider({"resume_from": "evaluate"}) == "evaluate"


def test_run_dir_layout_and_latest_state(runs_dir):
    paths = init_run_dir("r0")
    assert paths["root"] == runs_dir / "r0"
    assert all(paths[name].is_dir() for name in ("states", "logs", "dataset", "checkpoints", "reports"))

    with pytest.raises(FileNotFoundError):
        load_latest_state("r0")

    save_state("r0", "generate_data", {"outputs": {"dataset": "x"}})
    save_state("r0", "train", {"outputs": {"checkpoint": "y"}})
    node, state = load_latest_state("r0")
    assert node == "train" and state["outputs"]["checkpoint"] == "y"

    log = append_log("r0", "first\nsecond")
    lines = log.read_text(encoding="utf-8").splitlines()
    assert len(lines) == 2 and lines[1].endswith("second")


def test_latest_state_follows_pipeline_order(runs_dir):
    save_state("r1", "train", {"outputs": {"checkpoint": "y"}})
    # 之后重写较早的节点，恢复点不倒退
    save_state("r1", "generate_data", {"outputs": {"dataset": "x"}})
    assert completed_nodes("r1") == ["generate_data", "train"]
    node, state = load_latest_state("r1")
    assert node == "train" and state["outputs"]["checkpoint"] == "y"

    payload = json.loads((run_dir("r1") / "states" / "state_train.json").read_text(encoding="utf-8"))
    assert payload["run_id"] == "r1" and payload["step"] == NODE_ORDER.index("train")

    with pytest.raises(ValueError):
        save_state("r1", "bogus", {})


@pytest.mark.parametrize("run_id", ["", "..", "a/b"])
def test_run_dir_rejects_bad_ids(runs_dir, run_id):
    with pytest.raises(ConfigError):
        run_dir(run_id)


def test_full_run_and_resume(runs_dir, capsys):
    assert cli.main(RUN_ARGS) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["run_id"] == "t1"

    root = run_dir("t1")
    assert root == runs_dir / "t1"
    for node in NODE_ORDER:
        assert (root / "states" / f"state_{node}.json").exists()
    for key in ("net", "zero"):
        assert (root / "reports" / key / "summary.json").exists()

    summary = json.loads((root / "reports" / "run_summary.json").read_text(encoding="utf-8"))
    assert summary["run_id"] == "t1"
    assert set(summary["evaluate"]) == {"net", "zero"}
    assert summary["dataset"]["count"] == 6
    assert summary["completed_nodes"] == NODE_ORDER[:-1]
    assert payload["outputs"]["summary"] == str(root / "reports" / "run_summary.json")

    log = (root / "logs" / "run.log").read_text(encoding="utf-8")
    assert "[generate_data] start" in log and "[summarize] end" in log

    # 已完成的 run 直接结束
    assert cli.main(["run", "--resume", "t1"]) == 0
    assert json.loads(capsys.readouterr().out)["run_id"] == "t1"
    assert "resuming from end" in (root / "logs" / "run.log").read_text(encoding="utf-8")


def test_resume_reruns_only_missing_nodes(runs_dir, capsys):
    assert cli.main(RUN_ARGS) == 0
    capsys.readouterr()
    root = run_dir("t1")
    summary_path = root / "reports" / "run_summary.json"
    (root / "states" / "state_summarize.json").unlink()
    summary_path.unlink()
    dataset_mtime = (root / "dataset" / "manifest.json").stat().st_mtime_ns

    assert cli.main(["run", "--resume", "t1"]) == 0
    assert summary_path.exists()
    assert (root / "dataset" / "manifest.json").stat().st_mtime_ns == dataset_mtime
    assert "resuming from summarize" in (root / "logs" / "run.log").read_text(encoding="utf-8")


def test_resume_unknown_run_is_data_error(runs_dir, capsys):
    assert cli.main(["run", "--resume", "missing"]) == 2
    assert "No state files" in capsys.readouterr().err


def test_run_rejects_bad_options(runs_dir, capsys):
    assert cli.main(["run", "--procedural", "--mode", "sideways"]) == 1
    assert cli.main(["run", "--count", "4"]) == 1
