from evaluation.aligner import AlignResult, align_pair, direct_align
from evaluation.estimators import DirectAlignEstimator, NetworkEstimator, ZeroDeltaEstimator, parse_estimator
from evaluation.harness import BenchResult, evaluate, json_safe, overlap_sweep, speed_benchmark, write_reports
from evaluation.metrics import EvalResult, fourpt_rmse, nearest_rank, percentile_table

__all__ = [
    "AlignResult",
    "BenchResult",
    "DirectAlignEstimator",
    "EvalResult",
    "NetworkEstimator",
    "ZeroDeltaEstimator",
    "align_pair",
    "direct_align",
    "evaluate",
    "fourpt_rmse",
    "json_safe",
    "nearest_rank",
    "overlap_sweep",
    "parse_estimator",
    "percentile_table",
    "speed_benchmark",
    "write_reports",
]
