"""Exception hierarchy shared by every dax module."""


class DaxError(Exception):
    """Base class for all library errors."""


class InvalidInputError(DaxError, ValueError):
    """An argument is malformed: wrong shape, non-finite, or out of range."""


class NotSPDError(InvalidInputError):
    """A matrix required to be symmetric positive definite is not."""


class DivergenceError(DaxError, ArithmeticError):
    """Model integration produced non-finite or exploding states."""


class ConfigError(DaxError, ValueError):
    """An experiment configuration key is unknown or violates an invariant."""

    def __init__(self, key: str, message: str) -> None:
        super().__init__(f"config key '{key}': {message}")
        self.key = key


class InsufficientDataError(DaxError, ValueError):
    """Too few samples (windows, trials, rank counts) for a statistic."""
