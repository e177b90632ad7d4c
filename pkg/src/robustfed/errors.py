"""Exception hierarchy.

Every error carries a ``category`` used by the CLI to report failures as
``config``, ``data`` or ``numeric``.
"""


class RobustFedError(Exception):
    category = "internal"


class UsageError(RobustFedError, ValueError):
    """Caller violated an operation precondition (empty input, bad counts)."""

    category = "config"


class StructuralError(RobustFedError, ValueError):
    """Vectors or layouts whose shapes do not line up."""

    category = "data"


class DataError(RobustFedError):
    category = "data"


class FormatError(DataError, ValueError):
    """Malformed input file. ``offset`` is the byte offset where parsing failed."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class NumericError(RobustFedError, ArithmeticError):
    """Non-finite values appeared during a run."""

    category = "numeric"

    def __init__(self, message, round_index=None):
        if round_index is not None:
            message = f"round {round_index}: {message}"
        super().__init__(message)
        self.round_index = round_index


class ConfigError(RobustFedError, ValueError):
    """Invalid experiment configuration. ``problems`` lists (field path, message)."""

    category = "config"

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [("", problems)]
        self.problems = list(problems)
        lines = [f"{path}: {msg}" if path else msg for path, msg in self.problems]
        super().__init__("; ".join(lines))
