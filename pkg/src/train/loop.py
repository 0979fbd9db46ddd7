from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from datagen.store import DatasetStore
from evaluation.estimators import NetworkEstimator
from evaluation.harness import evaluate
from nn.checkpoint import load_checkpoint, save_checkpoint
from nn.network import NetConfig, RegressionNet
from nn.optim import AdamState
from train.steps import make_batches, supervised_step, unsupervised_step
from utils.errors import ConfigError, MissingGroundTruth

logger = logging.getLogger(__name__)

DEFAULT_LR = {"unsupervised": 1e-4, "supervised": 5e-4}
# 小于该边长的 patch 默认使用桌面规模网络
TOY_PATCH_LIMIT = 64


class TrainConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    mode: Literal["supervised", "unsupervised"] = Field(default="unsupervised")
    batch_size: int = Field(default=128, ge=1)
    lr: Optional[float] = Field(default=None, gt=0.0, description="默认随模式取 1e-4 / 5e-4")
    beta1: float = Field(default=0.9, ge=0.0, lt=1.0)
    beta2: float = Field(default=0.999, ge=0.0, lt=1.0)
    eps: float = Field(default=1e-8, gt=0.0)
    iterations: int = Field(default=1000, ge=1)
    seed: int = Field(default=0)
    checkpoint_every: int = Field(default=1000, ge=1)
    arch: Literal["auto", "vgg", "toy"] = Field(default="auto", description="auto: patch < 64 时用 toy 网络")
    net: Optional[NetConfig] = Field(default=None, description="显式网络结构，优先于 arch")
    init_checkpoint: Optional[Path] = Field(default=None, description="从已有 checkpoint 继续训练 / 微调")
    eval_split: str = Field(default="test")

    @property
    def effective_lr(self) -> float:
        return self.lr if self.lr is not None else DEFAULT_LR[self.mode]

    def net_config(self, patch_size: int) -> NetConfig:
        if self.net is not None:
            if self.net.patch_size != patch_size:
                raise ConfigError(f"net patch_size {self.net.patch_size} != dataset patch size {patch_size}")
            return self.net
        toy = self.arch == "toy" or (self.arch == "auto" and patch_size < TOY_PATCH_LIMIT)
        if toy:
            return NetConfig.toy(patch_size=patch_size, seed=self.seed)
        return NetConfig(patch_size=patch_size, seed=self.seed)


@dataclass
class TrainReport:
    losses: List[float] = field(default_factory=list)
    wall_time: float = 0.0
    checkpoint: Optional[Path] = None
    checkpoints: List[Path] = field(default_factory=list)
    eval_summary: Optional[Dict[str, Any]] = None
    log_path: Optional[Path] = None

    def to_dict(self) -> Dict[str, Any]:
        finite = [x for x in self.losses if math.isfinite(x)]
        return {
            "iterations": len(self.losses),
            "initial_loss": finite[0] if finite else None,
            "final_loss": finite[-1] if finite else None,
            "wall_time": self.wall_time,
            "checkpoint": str(self.checkpoint) if self.checkpoint else None,
            "checkpoints": [str(p) for p in self.checkpoints],
            "train_log": str(self.log_path) if self.log_path else None,
            "eval": self.eval_summary,
        }


def _init_net(cfg: TrainConfig, patch_size: int) -> RegressionNet:
    if cfg.init_checkpoint is None:
        return RegressionNet(cfg.net_config(patch_size))
    net, extra = load_checkpoint(cfg.init_checkpoint)
    if net.config.patch_size != patch_size:
        raise ConfigError(
            f"checkpoint {cfg.init_checkpoint} expects {net.config.patch_size}px patches, dataset has {patch_size}px"
        )
    logger.info("fine-tuning from %s (trained in %s mode)", cfg.init_checkpoint, extra.get("mode", "?"))
    return net


def train_loop(cfg: TrainConfig, store: DatasetStore, out_dir: Path) -> TrainReport:
    out_dir = Path(out_dir)
    ckpt_dir = out_dir / "checkpoints"
    ckpt_dir.mkdir(parents=True, exist_ok=True)

    train_samples = store.load_split("train")
    stats = store.stats
    if cfg.mode == "supervised" and any(s.truth is None for s in train_samples):
        raise MissingGroundTruth(f"dataset {store.root} has samples without ground truth")

    patch_size = train_samples[0].patch_size
    net = _init_net(cfg, patch_size)
    opt_state = AdamState(lr=cfg.effective_lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps)
    step = supervised_step if cfg.mode == "supervised" else unsupervised_step
    batches = make_batches(len(train_samples), cfg.batch_size, np.random.default_rng(cfg.seed))
    extra = {"mean": stats[0], "std": stats[1], "mode": cfg.mode}

    report = TrainReport(log_path=out_dir / "train_log.csv")
    logger.info(
        "training %s: %d samples, %d params, lr=%g, batch=%d, iterations=%d",
        cfg.mode,
        len(train_samples),
        net.num_parameters(),
        cfg.effective_lr,
        cfg.batch_size,
        cfg.iterations,
    )

    start = time.perf_counter()
    try:
        with report.log_path.open("w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["iteration", "loss", "wall_ms"])
            for it in range(1, cfg.iterations + 1):
                t0 = time.perf_counter()
                batch = [train_samples[i] for i in next(batches)]
                loss = step(net, batch, opt_state, stats)
                wall_ms = (time.perf_counter() - t0) * 1000.0
                report.losses.append(loss)
                writer.writerow([it, repr(loss), f"{wall_ms:.3f}"])

                if it % cfg.checkpoint_every == 0 or it == cfg.iterations:
                    path = save_checkpoint(ckpt_dir / f"ckpt_{it:06d}.bin", net, {**extra, "iteration": it})
                    report.checkpoints.append(path)
                    logger.info("iteration %d: loss %.6f, checkpoint %s", it, loss, path.name)
    except BaseException:
        for path in report.checkpoints:
            path.unlink(missing_ok=True)
        raise

    report.wall_time = time.perf_counter() - start
    report.checkpoint = report.checkpoints[-1]

    if not store.split_ids(cfg.eval_split):
        logger.info("split %r is empty; skipping held-out evaluation", cfg.eval_split)
        return report

    eval_samples = store.load_split(cfg.eval_split)
    labeled = [s for s in eval_samples if s.truth is not None]
    if not labeled:
        logger.info("split %r has no ground truth; skipping held-out evaluation", cfg.eval_split)
        return report
    if len(labeled) < len(eval_samples):
        logger.info(
            "evaluating the %d of %d samples in split %r that carry ground truth",
            len(labeled),
            len(eval_samples),
            cfg.eval_split,
        )
    report.eval_summary = evaluate(NetworkEstimator(net=net, stats=stats), labeled).summary()
    return report
