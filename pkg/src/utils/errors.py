from __future__ import annotations

EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class HomographyError(Exception):
    """所有可预期错误的基类，exit_code 供 CLI 使用"""

    exit_code = EXIT_NUMERIC


# ---- 数值错误 (exit 3) ----


class DegenerateProjection(HomographyError, ArithmeticError):
    pass


class CollinearCorners(HomographyError, ValueError):
    pass


class IllConditionedSystem(HomographyError, ArithmeticError):
    pass


class SingularHomography(HomographyError, ArithmeticError):
    pass


class ShapeMismatch(HomographyError, ValueError):
    pass


class NoForwardState(HomographyError, RuntimeError):
    pass


class DegenerateStd(HomographyError, ValueError):
    pass


# ---- 数据错误 (exit 2) ----


class DataError(HomographyError):
    exit_code = EXIT_DATA


class ImageTooSmall(DataError, ValueError):
    pass


class EmptyDataset(DataError, ValueError):
    pass


class EmptySplit(DataError, ValueError):
    pass


class MissingGroundTruth(DataError, ValueError):
    pass


class DatasetFormatError(DataError, ValueError):
    pass


class CheckpointError(DataError, OSError):
    pass


class ImageIOError(DataError, OSError):
    pass


# ---- 用法错误 (exit 1) ----


class UsageError(HomographyError):
    exit_code = EXIT_USAGE


class UnknownPreset(UsageError, KeyError):
    def __str__(self) -> str:
        # KeyError 默认会给消息加引号
        return str(self.args[0]) if self.args else ""


class ConfigError(UsageError, ValueError):
    pass
