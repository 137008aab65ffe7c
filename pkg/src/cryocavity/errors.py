from __future__ import annotations


class CryoCavityError(Exception):
    """Base class for all errors raised by the toolkit."""


class ValidationError(CryoCavityError, ValueError):
    """Invalid input: bad parameter, malformed file, unknown config key.

    ``key`` and ``line`` are filled in when the error can be pinned to a
    config key or file row.
    """

    def __init__(self, message: str, *, key: str | None = None, line: int | None = None):
        super().__init__(message)
        self.key = key
        self.line = line


class NumericalError(CryoCavityError, RuntimeError):
    """A numerical procedure failed (fit divergence, unstable loop)."""


class FitError(NumericalError):
    """Least-squares fit did not converge. ``best`` holds the best-so-far parameters."""

    def __init__(self, message: str, best: dict | None = None):
        super().__init__(message)
        self.best = best or {}


class LockInstabilityError(NumericalError):
    def __init__(self, message: str, kp: float, ki: float, sample: int):
        super().__init__(message)
        self.kp = kp
        self.ki = ki
        self.sample = sample
