"""Shared small types and the exception hierarchy."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

Coord = Tuple[int, int, int]


class InputError(ValueError):
    """Invalid argument or input data."""


class TraceParseError(InputError):
    def __init__(self, path, lineno: int, message: str):
        self.path = path
        self.lineno = lineno
        super().__init__(f"{path}:{lineno}: {message}")


class ConfigError(InputError):
    """Invalid pipeline configuration (CLI exit code 1)."""


class SolverError(RuntimeError):
    """Linear solve failed: singular system or no convergence."""


class StageError(RuntimeError):
    """A pipeline stage failed (CLI exit code 2)."""

    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {cause}")


@dataclass(frozen=True)
class OperatingPoint:
    voltage: float  # V
    frequency: float  # Hz

    def __post_init__(self):
        if not self.voltage > 0:
            raise InputError(f"voltage must be > 0, got {self.voltage}")
        if not self.frequency > 0:
            raise InputError(f"frequency must be > 0, got {self.frequency}")
