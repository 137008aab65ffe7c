"""Fiber-cavity vibration toolkit: synthesis, isolation mechanics, interferometric
readout, noise statistics, lock-loop simulation and polariton fitting."""

__version__ = "0.1.0"

from .errors import CryoCavityError, FitError, LockInstabilityError, ValidationError
from .timeseries import METER, TRANSMISSION, TimeSeries

__all__ = [
    "__version__",
    "CryoCavityError",
    "FitError",
    "LockInstabilityError",
    "ValidationError",
    "METER",
    "TRANSMISSION",
    "TimeSeries",
]
