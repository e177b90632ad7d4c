"""Truth-inference based robust aggregation for simulated federated learning."""

from robustfed.errors import (
    ConfigError,
    DataError,
    FormatError,
    NumericError,
    StructuralError,
    UsageError,
)
from robustfed.updates import ClientUpdate

__version__ = "0.1.0"

__all__ = [
    "ClientUpdate",
    "ConfigError",
    "DataError",
    "FormatError",
    "NumericError",
    "StructuralError",
    "UsageError",
]
