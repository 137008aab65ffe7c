from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

METER = "meter"
TRANSMISSION = "transmission"
UNITS = (METER, TRANSMISSION)

DEFAULT_DT_S = 10e-6
DEFAULT_DURATION_S = 10.0


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """Uniformly sampled trace.

    ``unit`` is ``"meter"`` for displacement traces and ``"transmission"`` for
    normalized cavity transmission.
    """

    dt_s: float
    values: np.ndarray
    unit: str = METER
    start_s: float = 0.0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1:
            raise ValidationError("time series values must be one-dimensional")
        if values.size < 2:
            raise ValidationError("time series needs at least 2 samples")
        if not (np.isfinite(self.dt_s) and self.dt_s > 0):
            raise ValidationError(f"sample interval must be positive, got {self.dt_s!r}")
        if self.unit not in UNITS:
            raise ValidationError(f"unknown unit {self.unit!r}; expected one of {UNITS}")
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.size

    @property
    def duration_s(self) -> float:
        return self.values.size * self.dt_s

    @property
    def sample_rate_hz(self) -> float:
        return 1.0 / self.dt_s

    @property
    def nyquist_hz(self) -> float:
        return 0.5 / self.dt_s

    @property
    def times(self) -> np.ndarray:
        return self.start_s + self.dt_s * np.arange(self.values.size)

    def with_values(self, values, unit: str | None = None) -> "TimeSeries":
        return TimeSeries(self.dt_s, values, unit or self.unit, self.start_s)

    def require_unit(self, unit: str) -> None:
        if self.unit != unit:
            raise ValidationError(f"expected a {unit} trace, got {self.unit}")

    def __eq__(self, other):
        if not isinstance(other, TimeSeries):
            return NotImplemented
        return (
            self.dt_s == other.dt_s
            and self.unit == other.unit
            and self.start_s == other.start_s
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None


def check_same_sampling(a: TimeSeries, b: TimeSeries) -> None:
    if a.dt_s != b.dt_s or len(a) != len(b):
        raise ValidationError(
            f"sampling mismatch: dt {a.dt_s} vs {b.dt_s}, length {len(a)} vs {len(b)}"
        )
