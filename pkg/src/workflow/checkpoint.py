"""
运行目录与节点状态：每个节点结束后把完整状态写到 states/state_<node>.json，
恢复时取流水线中走得最远的节点，从它的下一个节点继续
"""

from __future__ import annotations

import json
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Tuple

from utils.config import get_settings
from utils.errors import ConfigError

RUN_SUBDIRS = ("states", "logs", "dataset", "checkpoints", "reports")

NODE_ORDER: List[str] = [
    "generate_data",
    "train",
    "evaluate",
    "summarize",
]


def run_dir(run_id: str) -> Path:
    if not run_id or run_id in (".", "..") or "/" in run_id or "\\" in run_id:
        raise ConfigError(f"invalid run id {run_id!r}")
    return get_settings().runs_dir / run_id


def init_run_dir(run_id: str) -> Dict[str, Path]:
    root = run_dir(run_id)
    paths = {"root": root}
    for name in RUN_SUBDIRS:
        path = root / name
        path.mkdir(parents=True, exist_ok=True)
        paths[name] = path
    return paths


def save_state(run_id: str, node_name: str, state_dict: Dict[str, Any]) -> Path:
    if node_name not in NODE_ORDER:
        raise ValueError(f"unknown workflow node {node_name!r}")
    state_path = init_run_dir(run_id)["states"] / f"state_{node_name}.json"
    payload = {
        "run_id": run_id,
        "node_name": node_name,
        "step": NODE_ORDER.index(node_name),
        "saved_at": datetime.now().isoformat(timespec="milliseconds"),
        "state": state_dict,
    }
    state_path.write_text(json.dumps(payload, ensure_ascii=False, indent=2, default=str), encoding="utf-8")
    return state_path


def completed_nodes(run_id: str) -> List[str]:
    """已写出状态的节点，按流水线顺序"""
    states_dir = run_dir(run_id) / "states"
    return [node for node in NODE_ORDER if (states_dir / f"state_{node}.json").exists()]


def load_latest_state(run_id: str) -> Tuple[str, Dict[str, Any]]:
    states_dir = run_dir(run_id) / "states"
    if not states_dir.exists():
        raise FileNotFoundError(f"No states directory found for run_id={run_id}")

    done = completed_nodes(run_id)
    if not done:
        raise FileNotFoundError(f"No state files found for run_id={run_id}")

    # 取流水线中最靠后的已完成节点
    node_name = done[-1]
    payload = json.loads((states_dir / f"state_{node_name}.json").read_text(encoding="utf-8"))
    return node_name, payload["state"]


def append_log(run_id: str, message: str) -> Path:
    log_path = init_run_dir(run_id)["logs"] / "run.log"
    timestamp = datetime.now().isoformat(sep=" ", timespec="milliseconds")
    with log_path.open("a", encoding="utf-8") as f:
        for line in message.splitlines() or [""]:
            f.write(f"[{timestamp}] {line}\n")
    return log_path
