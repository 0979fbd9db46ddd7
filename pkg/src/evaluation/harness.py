"""
评测流程：逐样本跑估计器 -> 4pt RMSE 分布 / 百分位；吞吐量测试；不同重叠率下的对比；报告落盘
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import asdict, dataclass
from multiprocessing import Pool
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

from datagen.generator import GenConfig, ImageSource, Sample, generate_dataset
from datagen.overlap import OVERLAP_PRESETS, overlap_preset
from evaluation.estimators import Estimator
from evaluation.metrics import EvalResult, fourpt_rmse
from utils.errors import EmptySplit, HomographyError, MissingGroundTruth

logger = logging.getLogger(__name__)

WARMUP_FRACTION = 0.1
_ESTIMATOR_FAILURES = (HomographyError, ArithmeticError, ValueError)


@dataclass
class BenchResult:
    samples_per_second: float
    timed_count: int
    warmup_count: int
    wall_time: float


def _score_one(args: Tuple[Estimator, Sample, bool]) -> Tuple[float, Dict[str, Any]]:
    estimator, sample, per_corner = args
    try:
        pred, info = estimator.estimate(sample)
    except _ESTIMATOR_FAILURES as exc:
        logger.warning("estimator %s failed on sample %d: %s", estimator.name, sample.sample_id, exc)
        return math.inf, {"error": str(exc)}
    return fourpt_rmse(pred, sample.truth, per_corner=per_corner), dict(info)


def evaluate(
    estimator: Estimator,
    samples: Sequence[Sample],
    per_corner: bool = False,
    workers: int = 1,
) -> EvalResult:
    if not samples:
        raise EmptySplit("cannot evaluate on an empty split")
    missing = [s.sample_id for s in samples if s.truth is None]
    if missing:
        raise MissingGroundTruth(f"{len(missing)} test samples have no ground truth (e.g. {missing[:5]})")

    jobs = [(estimator, s, per_corner) for s in samples]
    if workers > 1 and len(jobs) > 1:
        with Pool(processes=workers) as pool:
            scored = pool.map(_score_one, jobs)
    else:
        scored = [_score_one(job) for job in jobs]

    result = EvalResult.build(
        estimator=estimator.name,
        sample_ids=[s.sample_id for s in samples],
        rmse=[r for r, _ in scored],
        extra=[info for _, info in scored],
        per_corner=per_corner,
    )
    logger.info(
        "%s: mean rmse %.4f, median %.4f, failures %d/%d",
        estimator.name,
        result.mean,
        result.median,
        result.failures,
        result.count,
    )
    return result


def speed_benchmark(estimator: Estimator, samples: Sequence[Sample]) -> BenchResult:
    """单线程吞吐量；前 10% 样本作预热，不计时"""
    if not samples:
        raise EmptySplit("cannot benchmark on an empty split")
    warmup = int(WARMUP_FRACTION * len(samples))
    for s in samples[:warmup]:
        _score_one((estimator, s, False))

    timed = samples[warmup:]
    start = time.perf_counter()
    for s in timed:
        try:
            estimator.estimate(s)
        except _ESTIMATOR_FAILURES:
            pass
    elapsed = time.perf_counter() - start
    rate = len(timed) / elapsed if elapsed > 0 else math.inf
    return BenchResult(samples_per_second=rate, timed_count=len(timed), warmup_count=warmup, wall_time=elapsed)


def overlap_sweep(
    estimator: Estimator,
    source_factory: Callable[[GenConfig], ImageSource],
    base_cfg: GenConfig,
    presets: Sequence[str] = tuple(OVERLAP_PRESETS),
    per_corner: bool = False,
    workers: int = 1,
) -> Dict[str, EvalResult]:
    """在 small / moderate / large 三档重叠率下各生成一批样本并评测"""
    results: Dict[str, EvalResult] = {}
    for name in presets:
        rho = overlap_preset(name, base_cfg.patch_size)
        cfg = base_cfg.model_copy(update={"rho": rho})
        samples = generate_dataset(source_factory(cfg), cfg, workers)
        logger.info("overlap preset %s: rho=%.3f, %d samples", name, rho, len(samples))
        results[name] = evaluate(estimator, samples, per_corner=per_corner, workers=workers)
    return results


def json_safe(value: Any) -> Any:
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    if isinstance(value, dict):
        return {k: json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [json_safe(v) for v in value]
    return value


def write_reports(
    result: EvalResult,
    out_dir: Path,
    bench: Optional[BenchResult] = None,
    meta: Optional[Dict[str, Any]] = None,
) -> Dict[str, Path]:
    """per_sample.csv (逐样本) + summary.json (汇总)"""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    extra_keys: List[str] = sorted({k for info in result.extra for k in info})
    csv_path = out_dir / "per_sample.csv"
    with csv_path.open("w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["sample_id", "rmse", "failed", *extra_keys])
        for sid, rmse, info in zip(result.sample_ids, result.rmse, result.extra):
            writer.writerow([sid, rmse, int(not math.isfinite(rmse)), *(info.get(k, "") for k in extra_keys)])

    summary = result.summary()
    if bench is not None:
        summary["benchmark"] = asdict(bench)
    if meta:
        summary.update(meta)
    json_path = out_dir / "summary.json"
    json_path.write_text(json.dumps(json_safe(summary), ensure_ascii=False, indent=2), encoding="utf-8")
    return {"per_sample": csv_path, "summary": json_path}
