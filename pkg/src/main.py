#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
统一 CLI 入口：数据生成 / 训练 / 评测 / 单对配准 / warp，以及 LangGraph 全流程 (checkpoint/resume)

成功时在 stdout 输出一个 JSON 对象；失败时在 stderr 输出一行诊断信息，
退出码 1 = 用法错误，2 = 数据错误，3 = 数值错误。
"""

from __future__ import annotations

import argparse
import hashlib
import json
import re
import sys
import traceback
from datetime import datetime
from pathlib import Path
from typing import Any, Callable, Dict, List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from datagen import (
    AugmentConfig,
    DatasetStore,
    GenConfig,
    build_dataset,
    load_image,
    make_source,
    overlap_preset,
    save_image,
    source_from_description,
)
from evaluation import align_pair, evaluate, fourpt_rmse, json_safe, overlap_sweep, parse_estimator, speed_benchmark
from evaluation import write_reports
from geom import CornerSet, FourPointDelta, Homography, h4pt_to_h
from train import TrainConfig, train_loop
from utils.config import configure_logging, get_settings, load_config_file, merge_options
from utils.errors import EXIT_DATA, EXIT_USAGE, HomographyError, UsageError
from warp import warp_image
from workflow.checkpoint import append_log, init_run_dir, load_latest_state
from workflow.graph import build_workflow, next_node_after


class _ArgumentParser(argparse.ArgumentParser):
    """用法错误统一走 UsageError (退出码 1)"""

    def error(self, message: str):  # type: ignore[override]
        self.print_usage(sys.stderr)
        raise UsageError(message)


class _Options(BaseModel):
    model_config = ConfigDict(extra="forbid")


class GenDataOptions(_Options):
    src_dir: Optional[Path] = None
    procedural: bool = False
    out: Path
    count: int = Field(default=1000, ge=1)
    patch: int = Field(default=128, ge=2)
    rho: Optional[float] = Field(default=None, ge=0.0)
    preset: Optional[str] = None
    seed: int = 0
    augment: bool = False
    test_fraction: float = 0.1
    workers: Optional[int] = Field(default=None, ge=1)

    @model_validator(mode="after")
    def _check_source(self) -> "GenDataOptions":
        if (self.src_dir is None) == (not self.procedural):
            raise ValueError("exactly one of --src-dir and --procedural is required")
        if self.rho is not None and self.preset is not None:
            raise ValueError("--rho and --preset are mutually exclusive")
        return self

    def resolve_rho(self) -> float:
        if self.preset is not None:
            return overlap_preset(self.preset, self.patch)
        return self.rho if self.rho is not None else self.patch / 4.0

    def gen_config(self) -> GenConfig:
        return GenConfig(
            patch_size=self.patch,
            rho=self.resolve_rho(),
            seed=self.seed,
            count=self.count,
            test_fraction=self.test_fraction,
            augment=AugmentConfig(enabled=self.augment),
        )


class TrainOptions(_Options):
    data: Path
    out: Path
    mode: Literal["supervised", "unsupervised"] = "unsupervised"
    iters: int = Field(default=1000, ge=1)
    batch: int = Field(default=128, ge=1)
    lr: Optional[float] = Field(default=None, gt=0.0)
    seed: int = 0
    init: Optional[Path] = None
    checkpoint_every: Optional[int] = Field(default=None, ge=1)
    arch: Literal["auto", "vgg", "toy"] = "auto"

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            mode=self.mode,
            batch_size=self.batch,
            lr=self.lr,
            iterations=self.iters,
            seed=self.seed,
            checkpoint_every=self.checkpoint_every or self.iters,
            arch=self.arch,
            init_checkpoint=self.init,
        )


class EvalOptions(_Options):
    data: Path
    estimator: str = "zero"
    report: Optional[Path] = None
    split: str = "test"
    per_corner: bool = False
    sweep: bool = False
    sweep_count: int = Field(default=100, ge=1)
    align_iters: int = Field(default=500, ge=1)
    align_lr: float = Field(default=0.05, gt=0.0)
    workers: Optional[int] = Field(default=None, ge=1)


class WarpOptions(_Options):
    image: Path
    out: Path
    h: Optional[str] = None
    delta: Optional[str] = None
    corners: Optional[str] = None

    @model_validator(mode="after")
    def _check_source(self) -> "WarpOptions":
        if (self.h is None) == (self.delta is None):
            raise ValueError("exactly one of --h and --delta is required")
        if self.delta is not None and self.corners is None:
            raise ValueError("--delta requires --corners")
        return self


class AlignOptions(_Options):
    data: Path
    index: int = Field(default=0, ge=0)
    split: str = "test"
    iters: int = Field(default=500, ge=1)
    lr: float = Field(default=0.05, gt=0.0)


class RunOptions(GenDataOptions):
    out: Optional[Path] = None
    src_dir: Optional[Path] = None
    run_id: Optional[str] = None
    mode: Literal["supervised", "unsupervised"] = "unsupervised"
    iters: int = Field(default=1000, ge=1)
    batch: int = Field(default=128, ge=1)
    lr: Optional[float] = Field(default=None, gt=0.0)
    arch: Literal["auto", "vgg", "toy"] = "auto"
    align: bool = False


def _parse_floats(text: str, count: int, flag: str) -> np.ndarray:
    parts = [p for p in re.split(r"[\s,]+", text.strip()) if p]
    try:
        values = np.array([float(p) for p in parts], dtype=np.float64)
    except ValueError as exc:
        raise UsageError(f"{flag} expects {count} numbers: {exc}") from exc
    if values.size != count:
        raise UsageError(f"{flag} expects {count} numbers, got {values.size}")
    return values


def _options(args: argparse.Namespace, model: type, keys: List[str]) -> Any:
    explicit = {k: getattr(args, k, None) for k in keys}
    merged = merge_options(load_config_file(args.config), explicit)
    return model(**merged)


def _emit(payload: Dict[str, Any]) -> int:
    print(json.dumps(json_safe(payload), ensure_ascii=False))
    return 0


def cmd_gen_data(args: argparse.Namespace) -> int:
    opts: GenDataOptions = _options(args, GenDataOptions, list(GenDataOptions.model_fields))
    cfg = opts.gen_config()
    source = make_source(cfg, opts.src_dir)
    store = build_dataset(source, cfg, opts.out, workers=opts.workers or get_settings().workers)
    mean, std = store.stats
    return _emit(
        {
            "dataset": str(store.root),
            "count": cfg.count,
            "rho": cfg.rho,
            "patch_size": cfg.patch_size,
            "train": len(store.split_ids("train")),
            "test": len(store.split_ids("test")),
            "mean": mean,
            "std": std,
        }
    )


def cmd_train(args: argparse.Namespace) -> int:
    opts: TrainOptions = _options(args, TrainOptions, list(TrainOptions.model_fields))
    store = DatasetStore(opts.data)
    report = train_loop(opts.train_config(), store, opts.out)
    return _emit(report.to_dict())


def cmd_eval(args: argparse.Namespace) -> int:
    opts: EvalOptions = _options(args, EvalOptions, list(EvalOptions.model_fields))
    workers = opts.workers or get_settings().workers
    store = DatasetStore(opts.data)
    estimator = parse_estimator(opts.estimator, iterations=opts.align_iters, lr=opts.align_lr)
    samples = store.load_split(opts.split)

    result = evaluate(estimator, samples, per_corner=opts.per_corner, workers=workers)
    bench = speed_benchmark(estimator, samples)
    payload: Dict[str, Any] = {**result.summary(), "benchmark": vars(bench)}
    if opts.report is not None:
        meta = {"dataset": str(store.root), "split": opts.split}
        payload["reports"] = {k: str(v) for k, v in write_reports(result, opts.report, bench, meta).items()}

    if opts.sweep:
        base = store.config.model_copy(update={"count": opts.sweep_count, "augment": AugmentConfig()})
        description = store.manifest.get("source", {})
        sweep = overlap_sweep(
            estimator,
            lambda cfg: source_from_description(description, cfg),
            base,
            per_corner=opts.per_corner,
            workers=workers,
        )
        payload["sweep"] = {name: res.summary() for name, res in sweep.items()}
        if opts.report is not None:
            for name, res in sweep.items():
                write_reports(res, opts.report / f"sweep_{name}")
    return _emit(payload)


def cmd_warp(args: argparse.Namespace) -> int:
    opts: WarpOptions = _options(args, WarpOptions, list(WarpOptions.model_fields))
    img = load_image(opts.image, grayscale=False)
    if opts.h is not None:
        h = Homography(_parse_floats(opts.h, 9, "--h").reshape(3, 3))
    else:
        corners = CornerSet(_parse_floats(opts.corners, 8, "--corners"))
        h = h4pt_to_h(corners, FourPointDelta(_parse_floats(opts.delta, 8, "--delta")))

    height, width = img.shape[:2]
    warped = warp_image(img, h, width, height)
    save_image(opts.out, warped)
    return _emit({"out": str(opts.out), "h": h.tolist(), "size": [width, height]})


def cmd_align(args: argparse.Namespace) -> int:
    opts: AlignOptions = _options(args, AlignOptions, list(AlignOptions.model_fields))
    store = DatasetStore(opts.data)
    ids = store.split_ids(opts.split)
    if opts.index >= len(ids):
        raise UsageError(f"--index {opts.index} is out of range for split {opts.split!r} ({len(ids)} samples)")
    sample = store.read(ids[opts.index])

    res = align_pair(sample.image_a, sample.corners_a, sample.patch_b, opts.iters, opts.lr)
    payload: Dict[str, Any] = {
        "sample_id": sample.sample_id,
        "delta": res.delta.flat().tolist(),
        "iterations": res.iterations,
        "best_iteration": res.best_iteration,
        "initial_loss": res.initial_loss,
        "loss": res.loss,
    }
    if sample.truth is not None:
        payload["rmse"] = fourpt_rmse(res.delta, sample.truth)
    return _emit(payload)


def _make_run_id(seed_text: str) -> str:
    timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
    digest = hashlib.sha1(f"{seed_text}-{timestamp}".encode("utf-8")).hexdigest()[:6]
    return f"{timestamp}_{digest}"


def cmd_run(args: argparse.Namespace) -> int:
    if args.resume:
        run_id = args.resume
        init_run_dir(run_id)
        append_log(run_id, f"[main] resume requested run_id={run_id}")
        last_node, state = load_latest_state(run_id)
        resume_from = next_node_after(last_node)
        state["run_id"] = run_id
        state["resume_from"] = resume_from
        append_log(run_id, f"[main] resuming from {resume_from} (last node: {last_node})")
    else:
        opts: RunOptions = _options(args, RunOptions, list(RunOptions.model_fields))
        gen_cfg = opts.gen_config()
        run_id = opts.run_id or _make_run_id(str(opts.src_dir or "procedural"))
        init_run_dir(run_id)
        append_log(run_id, f"[main] new run run_id={run_id}")
        train_cfg = TrainConfig(
            mode=opts.mode,
            batch_size=opts.batch,
            lr=opts.lr,
            iterations=opts.iters,
            seed=opts.seed,
            checkpoint_every=opts.iters,
            arch=opts.arch,
        )
        state = {
            "run_id": run_id,
            "config": {
                "gen": gen_cfg.model_dump(mode="json"),
                "src_dir": str(opts.src_dir) if opts.src_dir else None,
                "train": train_cfg.model_dump(mode="json", exclude_none=True),
                "eval": {"align": opts.align},
                "workers": opts.workers or get_settings().workers,
            },
            "outputs": {},
            "progress": {},
            "resume_from": "generate_data",
        }

    workflow = build_workflow()
    try:
        final_state = workflow.invoke(state)
    except KeyboardInterrupt:
        append_log(run_id, "[main] interrupted by user")
        raise
    except Exception as exc:
        append_log(run_id, f"[main] error: {exc}")
        append_log(run_id, traceback.format_exc().strip())
        raise

    append_log(run_id, f"[main] run completed run_id={run_id}")
    outputs = final_state.get("outputs", {}) if isinstance(final_state, dict) else {}
    return _emit({"run_id": run_id, "outputs": outputs})


def _add_source_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--src-dir", dest="src_dir", help="源图像目录 (PNG / PGM)")
    p.add_argument("--procedural", action="store_true", default=None, help="使用程序生成的图像")
    p.add_argument("--count", type=int, help="样本数")
    p.add_argument("--patch", type=int, help="patch 边长 (默认 128)")
    p.add_argument("--rho", type=float, help="角点扰动上限 ρ (默认 patch/4)")
    p.add_argument("--preset", help="重叠率预设：small / moderate / large")
    p.add_argument("--seed", type=int, help="随机种子")
    p.add_argument("--augment", action="store_true", default=None, help="注入光照扰动")
    p.add_argument("--test-fraction", dest="test_fraction", type=float, help="测试集比例 (默认 0.1)")
    p.add_argument("--workers", type=int, help="并行进程数")


def _build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(description="Unsupervised deep homography toolkit")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_ArgumentParser)

    def add(name: str, handler: Callable[[argparse.Namespace], int], help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", type=Path, help="JSON5 配置文件 (显式参数优先)")
        p.set_defaults(handler=handler)
        return p

    p = add("gen-data", cmd_gen_data, "生成合成 patch 对数据集")
    _add_source_flags(p)
    p.add_argument("--out", type=Path, help="数据集输出目录")

    p = add("train", cmd_train, "训练回归网络")
    p.add_argument("--data", type=Path, help="数据集目录")
    p.add_argument("--mode", choices=["supervised", "unsupervised"], help="训练模式 (默认 unsupervised)")
    p.add_argument("--iters", type=int, help="迭代次数")
    p.add_argument("--batch", type=int, help="批大小 (默认 128)")
    p.add_argument("--lr", type=float, help="学习率 (默认 1e-4 无监督 / 5e-4 监督)")
    p.add_argument("--seed", type=int, help="随机种子")
    p.add_argument("--out", type=Path, help="输出目录 (checkpoints/ 与 train_log.csv)")
    p.add_argument("--init", type=Path, help="初始化用的 checkpoint")
    p.add_argument("--checkpoint-every", dest="checkpoint_every", type=int, help="checkpoint 间隔")
    p.add_argument("--arch", choices=["auto", "vgg", "toy"], help="网络结构")

    p = add("eval", cmd_eval, "评测估计器")
    p.add_argument("--data", type=Path, help="数据集目录")
    p.add_argument("--estimator", help="zero | align | net:<checkpoint>")
    p.add_argument("--report", type=Path, help="报告输出目录")
    p.add_argument("--split", help="评测划分 (默认 test)")
    p.add_argument("--per-corner", dest="per_corner", action="store_true", default=None, help="按角点计算 RMSE")
    p.add_argument("--sweep", action="store_true", default=None, help="在三档重叠率下重新生成数据并评测")
    p.add_argument("--sweep-count", dest="sweep_count", type=int, help="每档重叠率的样本数")
    p.add_argument("--align-iters", dest="align_iters", type=int, help="直接配准的迭代次数")
    p.add_argument("--align-lr", dest="align_lr", type=float, help="直接配准的学习率")
    p.add_argument("--workers", type=int, help="并行进程数")

    p = add("warp", cmd_warp, "对图像做单应 warp")
    p.add_argument("--image", type=Path, help="输入图像")
    p.add_argument("--h", help="9 个数，行优先的 3x3 单应")
    p.add_argument("--delta", help="8 个数，角点偏移 u0 v0 ... u3 v3")
    p.add_argument("--corners", help="8 个数，角点坐标 u0 v0 ... u3 v3")
    p.add_argument("--out", type=Path, help="输出 PNG")

    p = add("align", cmd_align, "对数据集中的一个样本做直接光度配准")
    p.add_argument("--data", type=Path, help="数据集目录")
    p.add_argument("--index", type=int, help="划分内的样本序号")
    p.add_argument("--split", help="划分 (默认 test)")
    p.add_argument("--iters", type=int, help="迭代次数")
    p.add_argument("--lr", type=float, help="学习率")

    p = add("run", cmd_run, "全流程：生成数据 -> 训练 -> 评测 -> 汇总")
    _add_source_flags(p)
    p.add_argument("--run-id", dest="run_id", help="指定 run_id (可选)")
    p.add_argument("--resume", help="从已有 run_id 恢复")
    p.add_argument("--mode", choices=["supervised", "unsupervised"], help="训练模式")
    p.add_argument("--iters", type=int, help="迭代次数")
    p.add_argument("--batch", type=int, help="批大小")
    p.add_argument("--lr", type=float, help="学习率")
    p.add_argument("--arch", choices=["auto", "vgg", "toy"], help="网络结构")
    p.add_argument("--align", action="store_true", default=None, help="评测时加入直接配准")
    return parser


def _one_line(exc: BaseException) -> str:
    if isinstance(exc, ValidationError):
        text = "; ".join(f"{'.'.join(str(x) for x in e['loc']) or 'options'}: {e['msg']}" for e in exc.errors())
    else:
        text = str(exc)
    return " ".join(text.split())


def main(argv: Optional[List[str]] = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        configure_logging()
        return args.handler(args)
    except HomographyError as exc:
        print(f"error: {_one_line(exc)}", file=sys.stderr)
        return exc.exit_code
    except ValidationError as exc:
        print(f"error: invalid options: {_one_line(exc)}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {_one_line(exc)}", file=sys.stderr)
        return EXIT_DATA
    except KeyboardInterrupt:
        print("Interrupted.", file=sys.stderr)
        return 130


if __name__ == "__main__":
    sys.exit(main())
