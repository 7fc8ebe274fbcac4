"""Exception types shared across the package."""


class FpsrlError(Exception):
    """Base class for errors raised by this package."""


class ContractViolation(FpsrlError, ValueError):
    """An argument failed a structural check (shape, range, enum value)."""


class ConfigurationError(FpsrlError, ValueError):
    """A configuration file or value is invalid."""


class DataFormatError(FpsrlError, ValueError):
    """A persisted artifact is malformed or inconsistent.

    ``line`` is the 1-based line number for line-oriented files, when known.
    """

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ModelError(FpsrlError, RuntimeError):
    """A learned model produced unusable output (non-finite predictions)."""


class TrainingDiverged(FpsrlError, RuntimeError):
    """Training loss became non-finite."""


class RolloutError(FpsrlError, RuntimeError):
    """A rollout could not be completed; ``step`` is the failing step index."""

    def __init__(self, message: str, step: int):
        super().__init__(f"step {step}: {message}")
        self.step = step
