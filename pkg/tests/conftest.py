from __future__ import annotations

import logging
from pathlib import Path

import numpy as np
import pytest

from datagen import DatasetStore, GenConfig, ProceduralSource, build_dataset
from nn import NetConfig


def smooth_image(height: int, width: int, phase: float = 0.0) -> np.ndarray:
    """低频正弦叠加，值域约 [0.05, 0.95]"""
    y, x = np.mgrid[0:height, 0:width].astype(np.float64)
    img = (
        0.5
        + 0.25 * np.sin(2 * np.pi * x / 23.0 + phase)
        + 0.15 * np.cos(2 * np.pi * y / 31.0 - 0.5 * phase)
        + 0.05 * np.sin(2 * np.pi * (x + y) / 17.0)
    )
    return img.astype(np.float32)


class SmoothSource:
    def __init__(self, height: int, width: int):
        self.height = height
        self.width = width

    def __call__(self, index: int, rng: np.random.Generator) -> np.ndarray:
        return smooth_image(self.height, self.width, phase=float(rng.uniform(0.0, 2 * np.pi)))

    def describe(self):
        return {"kind": "smooth", "size": [self.height, self.width]}


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_net_config() -> NetConfig:
    return NetConfig.toy(patch_size=16, conv_widths=[4, 8], seed=7)


@pytest.fixture
def runs_dir(tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> Path:
    path = tmp_path / "runs"
    monkeypatch.setenv("HOMOGRAPHY_RUNS_DIR", str(path))
    monkeypatch.setenv("HOMOGRAPHY_WORKERS", "1")
    return path


def make_store(
    root: Path,
    count: int = 12,
    rho: float = 2.0,
    seed: int = 3,
    patch_size: int = 16,
    test_fraction: float = 0.25,
) -> DatasetStore:
    cfg = GenConfig(patch_size=patch_size, rho=rho, seed=seed, count=count, test_fraction=test_fraction)
    return build_dataset(ProceduralSource(*cfg.procedural_size()), cfg, root)


@pytest.fixture
def tiny_store(tmp_path: Path) -> DatasetStore:
    return make_store(tmp_path / "dataset")


@pytest.fixture(autouse=True)
def reset_logging():
    yield
    root = logging.getLogger()
    for handler in [h for h in root.handlers if getattr(h, "_homography", False)]:
        root.removeHandler(handler)
