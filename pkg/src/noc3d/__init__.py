"""Power, temperature and reliability prediction for 3D mesh Networks-on-Chip."""

__version__ = "0.1.0"

from noc3d.common import (
    ConfigError,
    InputError,
    OperatingPoint,
    SolverError,
    StageError,
    TraceParseError,
)

__all__ = [
    "ConfigError",
    "InputError",
    "OperatingPoint",
    "SolverError",
    "StageError",
    "TraceParseError",
    "__version__",
]
