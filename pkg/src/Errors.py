from enum import IntEnum


class ExitCode(IntEnum):
    SUCCESS = 0
    FAILURE = 1
    CONFIG = 2
    DATA = 3
    DIVERGENCE = 4
    EVALUATION = 5


class HyperRecError(Exception):
    """Base class for all pipeline errors"""

    exit_code = ExitCode.FAILURE


class ConfigError(HyperRecError):
    exit_code = ExitCode.CONFIG


class DataError(HyperRecError):
    exit_code = ExitCode.DATA


class DivergenceError(HyperRecError):
    exit_code = ExitCode.DIVERGENCE


class EvaluationError(HyperRecError):
    exit_code = ExitCode.EVALUATION


class StageError(HyperRecError):
    """Wraps the failure of a single pipeline stage"""

    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", ExitCode.FAILURE)
        super().__init__(f"{stage}: {cause}")
