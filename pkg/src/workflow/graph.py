from __future__ import annotations

import json
import time
import traceback
from pathlib import Path
from typing import Any, Dict, TypedDict

from langgraph.graph import END, StateGraph

from datagen import DatasetStore, GenConfig, build_dataset, make_source
from evaluation import (
    DirectAlignEstimator,
    NetworkEstimator,
    ZeroDeltaEstimator,
    evaluate,
    json_safe,
    speed_benchmark,
    write_reports,
)
from train import TrainConfig, train_loop
from workflow.checkpoint import NODE_ORDER, append_log, completed_nodes, init_run_dir, save_state


class WorkflowState(TypedDict, total=False):
    run_id: str
    config: Dict[str, Any]
    outputs: Dict[str, Any]
    progress: Dict[str, Any]
    resume_from: str


def _log_node_start(run_id: str, node_name: str) -> None:
    append_log(run_id, f"[{node_name}] start")


def _log_node_end(run_id: str, node_name: str, elapsed: float, details: str = "") -> None:
    suffix = f" {details}" if details else ""
    append_log(run_id, f"[{node_name}] end ({elapsed:.2f}s){suffix}")


def _log_node_error(run_id: str, node_name: str, exc: BaseException) -> None:
    append_log(run_id, f"[{node_name}] error: {exc}")
    append_log(run_id, traceback.format_exc().strip())


def _finish(state: WorkflowState, node_name: str, start: float, details: str, **updates: Any) -> WorkflowState:
    run_id = state["run_id"]
    next_state: WorkflowState = {**state, **updates}
    state_path = save_state(run_id, node_name, json_safe(dict(next_state)))
    _log_node_end(run_id, node_name, time.time() - start, f"{details} state={state_path}")
    return next_state


def generate_data_node(state: WorkflowState) -> WorkflowState:
    run_id = state["run_id"]
    _log_node_start(run_id, "generate_data")
    start = time.time()

    try:
        config = state.get("config", {})
        gen_cfg = GenConfig(**config.get("gen", {}))
        src_dir = config.get("src_dir")
        source = make_source(gen_cfg, Path(src_dir) if src_dir else None)
        paths = init_run_dir(run_id)
        store = build_dataset(source, gen_cfg, paths["dataset"], workers=int(config.get("workers", 1)))

        outputs = {**state.get("outputs", {}), "dataset": str(store.root)}
        progress = dict(state.get("progress", {}))
        mean, std = store.stats
        progress["generate_data"] = {"count": gen_cfg.count, "rho": gen_cfg.rho, "mean": mean, "std": std}
        return _finish(
            state,
            "generate_data",
            start,
            f"samples={gen_cfg.count} rho={gen_cfg.rho:.3f} dataset={store.root}",
            outputs=outputs,
            progress=progress,
        )
    except Exception as exc:
        _log_node_error(run_id, "generate_data", exc)
        raise


def train_node(state: WorkflowState) -> WorkflowState:
    run_id = state["run_id"]
    _log_node_start(run_id, "train")
    start = time.time()

    try:
        config = state.get("config", {})
        train_cfg = TrainConfig(**config.get("train", {}))
        paths = init_run_dir(run_id)
        store = DatasetStore(Path(state["outputs"]["dataset"]))
        report = train_loop(train_cfg, store, paths["root"])

        outputs = {**state.get("outputs", {}), "checkpoint": str(report.checkpoint), "train_log": str(report.log_path)}
        progress = dict(state.get("progress", {}))
        progress["train"] = report.to_dict()
        return _finish(
            state,
            "train",
            start,
            f"mode={train_cfg.mode} iterations={len(report.losses)} checkpoint={report.checkpoint}",
            outputs=outputs,
            progress=progress,
        )
    except Exception as exc:
        _log_node_error(run_id, "train", exc)
        raise


def evaluate_node(state: WorkflowState) -> WorkflowState:
    run_id = state["run_id"]
    _log_node_start(run_id, "evaluate")
    start = time.time()

    try:
        config = state.get("config", {})
        eval_cfg = config.get("eval", {})
        per_corner = bool(eval_cfg.get("per_corner", False))
        paths = init_run_dir(run_id)
        store = DatasetStore(Path(state["outputs"]["dataset"]))
        samples = store.load_split("test")

        estimators = [
            NetworkEstimator.from_checkpoint(Path(state["outputs"]["checkpoint"])),
            ZeroDeltaEstimator(),
        ]
        if eval_cfg.get("align"):
            estimators.append(DirectAlignEstimator(iterations=int(eval_cfg.get("align_iterations", 500))))

        summaries: Dict[str, Any] = {}
        for estimator in estimators:
            key = estimator.name.split(":", 1)[0]
            result = evaluate(estimator, samples, per_corner=per_corner)
            bench = speed_benchmark(estimator, samples)
            write_reports(result, paths["reports"] / key, bench)
            summaries[key] = {**result.summary(), "samples_per_second": bench.samples_per_second}
            append_log(run_id, f"[evaluate] {key}: mean={result.mean:.4f} median={result.median:.4f}")

        progress = dict(state.get("progress", {}))
        progress["evaluate"] = summaries
        return _finish(
            state,
            "evaluate",
            start,
            f"estimators={list(summaries)} reports={paths['reports']}",
            progress=progress,
        )
    except Exception as exc:
        _log_node_error(run_id, "evaluate", exc)
        raise


def summarize_node(state: WorkflowState) -> WorkflowState:
    run_id = state["run_id"]
    _log_node_start(run_id, "summarize")
    start = time.time()

    try:
        progress = dict(state.get("progress", {}))
        evals = progress.get("evaluate", {})
        net_mean = evals.get("net", {}).get("mean_rmse")
        zero_mean = evals.get("zero", {}).get("mean_rmse")

        summary: Dict[str, Any] = {
            "run_id": run_id,
            "dataset": progress.get("generate_data"),
            "train": progress.get("train"),
            "evaluate": evals,
            "completed_nodes": completed_nodes(run_id),
        }
        if isinstance(net_mean, float) and isinstance(zero_mean, float) and zero_mean > 0:
            summary["improvement_over_zero"] = 1.0 - net_mean / zero_mean

        summary_path = init_run_dir(run_id)["reports"] / "run_summary.json"
        summary_path.write_text(json.dumps(json_safe(summary), ensure_ascii=False, indent=2), encoding="utf-8")

        outputs = {**state.get("outputs", {}), "summary": str(summary_path)}
        return _finish(state, "summarize", start, f"summary={summary_path}", outputs=outputs)
    except Exception as exc:
        _log_node_error(run_id, "summarize", exc)
        raise


def route_node(state: WorkflowState) -> WorkflowState:
    return state


def route_decider(state: WorkflowState) -> str:
    return state.get("resume_from", "generate_data")


def build_workflow():
    """数据生成 -> 训练 -> 评测 -> 汇总；route 节点按 resume_from 跳转"""
    graph = StateGraph(WorkflowState)

    graph.add_node("route", route_node)
    graph.add_node("generate_data", generate_data_node)
    graph.add_node("train", train_node)
    graph.add_node("evaluate", evaluate_node)
    graph.add_node("summarize", summarize_node)

    graph.set_entry_point("route")
    graph.add_conditional_edges(
        "route",
        route_decider,
        {
            "generate_data": "generate_data",
            "train": "train",
            "evaluate": "evaluate",
            "summarize": "summarize",
            "end": END,
        },
    )

    graph.add_edge("generate_data", "train")
    graph.add_edge("train", "evaluate")
    graph.add_edge("evaluate", "summarize")
    graph.add_edge("summarize", END)

    return graph.compile()


def next_node_after(node_name: str) -> str:
    if node_name not in NODE_ORDER:
        return "generate_data"
    idx = NODE_ORDER.index(node_name)
    if idx + 1 >= len(NODE_ORDER):
        return "end"
    return NODE_ORDER[idx + 1]
