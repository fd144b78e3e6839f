"""Exception taxonomy for the benchmark.

Every error derives from ``BenchError`` and from the builtin it refines, so
callers may catch either. ``EXIT_CODES`` maps each class to the CLI exit code.
"""
from typing import Dict, Optional, Type


class BenchError(Exception):
    """Base class for all benchmark errors."""


class ParameterError(BenchError, ValueError):
    """Invalid distribution, method or metric parameter."""


class DomainError(BenchError, ValueError):
    """Input outside the physical domain (negative sizes, out-of-range points)."""


class ShapeError(BenchError, ValueError):
    """Array shape does not match the model or field layout."""


class ConfigurationError(BenchError, ValueError):
    """Settings that are individually valid but inconsistent together."""


class GenerationError(BenchError, RuntimeError):
    """Dataset generation produced nothing usable."""


class UndefinedMetricError(BenchError, ValueError):
    """Metric is undefined for the given inputs (e.g. constant reference)."""


class TrainingError(BenchError, ArithmeticError):
    """Training diverged; ``step`` is the optimizer step that produced it."""

    def __init__(self, message: str, step: Optional[int] = None):
        super().__init__(message if step is None else f"{message} (step {step})")
        self.step = step


class MissingArtifactError(BenchError, FileNotFoundError):
    """A required input file or directory does not exist."""

    def __init__(self, path: str, hint: str = ""):
        text = f"Missing artifact: {path}"
        if hint:
            text += f" ({hint})"
        super().__init__(text)
        self.path = path


EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

# Order matters: first match wins.
EXIT_CODES: Dict[Type[BaseException], int] = {
    ConfigurationError: EXIT_USAGE,
    TrainingError: EXIT_NUMERIC,
    UndefinedMetricError: EXIT_NUMERIC,
    FloatingPointError: EXIT_NUMERIC,
    MissingArtifactError: EXIT_DATA,
    GenerationError: EXIT_DATA,
    DomainError: EXIT_DATA,
    ShapeError: EXIT_DATA,
    ParameterError: EXIT_DATA,
    OSError: EXIT_DATA,
}


def exit_code_for(exc: BaseException) -> int:
    """Return the CLI exit code for an exception."""
    for cls, code in EXIT_CODES.items():
        if isinstance(exc, cls):
            return code
    return EXIT_NUMERIC if isinstance(exc, ArithmeticError) else EXIT_DATA


__all__ = [
    'BenchError',
    'ParameterError',
    'DomainError',
    'ShapeError',
    'ConfigurationError',
    'GenerationError',
    'UndefinedMetricError',
    'TrainingError',
    'MissingArtifactError',
    'EXIT_OK',
    'EXIT_USAGE',
    'EXIT_DATA',
    'EXIT_NUMERIC',
    'exit_code_for',
]
