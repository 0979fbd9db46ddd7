"""
运行配置：环境变量 (.env) + JSON5 配置文件

overlap 预设的 ρ 由 datagen.overlap 的 Monte-Carlo 标定在运行时计算并缓存，
不在代码里写死。128px patch 下的近似值（一阶面积估计，仅供参考）：
    small    (85% overlap)  ρ ≈ 24
    moderate (75% overlap)  ρ ≈ 40
    large    (65% overlap)  ρ ≈ 56
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Mapping, Optional

import json5
from dotenv import load_dotenv

from utils.errors import ConfigError

DEFAULT_LOG_LEVEL = "INFO"
LOG_FORMAT = "[%(asctime)s] [%(name)s] %(message)s"
LOG_DATEFMT = "%Y-%m-%d %H:%M:%S"


def project_root() -> Path:
    return Path(__file__).resolve().parents[2]


@dataclass(frozen=True)
class Settings:
    runs_dir: Path
    workers: int
    log_level: str


def _resolve_settings() -> Settings:
    load_dotenv()

    runs_dir = os.getenv("HOMOGRAPHY_RUNS_DIR")
    workers_raw = os.getenv("HOMOGRAPHY_WORKERS") or "1"
    try:
        workers = max(1, int(workers_raw))
    except ValueError as exc:
        raise ConfigError(f"HOMOGRAPHY_WORKERS must be an integer, got {workers_raw!r}") from exc

    return Settings(
        runs_dir=Path(runs_dir) if runs_dir else project_root() / "data" / "runs",
        workers=workers,
        log_level=(os.getenv("HOMOGRAPHY_LOG_LEVEL") or DEFAULT_LOG_LEVEL).upper(),
    )


def get_settings() -> Settings:
    return _resolve_settings()


def configure_logging(level: Optional[str] = None) -> None:
    resolved = (level or get_settings().log_level).upper()
    root = logging.getLogger()
    if not any(getattr(h, "_homography", False) for h in root.handlers):
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(LOG_FORMAT, datefmt=LOG_DATEFMT))
        handler._homography = True  # type: ignore[attr-defined]
        root.addHandler(handler)
    root.setLevel(resolved)


def load_config_file(path: Optional[Path]) -> Dict[str, Any]:
    """读取 --config 文件（JSON5，允许注释和尾逗号）"""
    if path is None:
        return {}
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = json5.loads(path.read_text(encoding="utf-8"))
    except ValueError as exc:
        raise ConfigError(f"invalid config file {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must contain an object")
    return data


def merge_options(file_values: Mapping[str, Any], explicit: Mapping[str, Any]) -> Dict[str, Any]:
    """显式 flag 覆盖文件中的值；值为 None 的 flag 视为未指定"""
    merged = dict(file_values)
    for key, value in explicit.items():
        if value is not None:
            merged[key] = value
    return merged
