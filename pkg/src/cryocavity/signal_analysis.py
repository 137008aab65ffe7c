"""Statistics and spectra of displacement traces."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.fft import rfft, rfftfreq
from scipy.signal import welch

from .errors import ValidationError
from .timeseries import TimeSeries

DEFAULT_HISTOGRAM_BIN_M = 10e-12


def _values(trace) -> np.ndarray:
    values = trace.values if isinstance(trace, TimeSeries) else np.asarray(trace, dtype=float)
    if values.size == 0:
        raise ValidationError("empty trace")
    return values


def rms(trace) -> float:
    """Root-mean-square of the mean-subtracted samples.

    The mean is removed so that a static offset from the lock point does not
    count as vibration.
    """
    x = _values(trace)
    return float(np.sqrt(np.mean((x - x.mean()) ** 2)))


def peak_to_peak(trace: TimeSeries, window_s: float | None = None) -> float:
    """Global max - min, or the largest max - min over consecutive windows."""
    x = _values(trace)
    if window_s is None:
        return float(x.max() - x.min())
    if not window_s > 0:
        raise ValidationError("window must be positive")
    n = int(round(window_s / trace.dt_s))
    if n > x.size:
        raise ValidationError(f"window {window_s} s exceeds the trace duration {trace.duration_s} s")
    n = max(n, 1)
    m = x.size // n
    blocks = x[: m * n].reshape(m, n)
    pp = blocks.max(axis=1) - blocks.min(axis=1)
    best = float(pp.max())
    if x.size > m * n:
        tail = x[m * n:]
        best = max(best, float(tail.max() - tail.min()))
    return best


@dataclass(frozen=True)
class RmsBandwidthCurve:
    bandwidths_hz: np.ndarray
    rms_m: np.ndarray


def one_sided_power(trace: TimeSeries) -> tuple[np.ndarray, np.ndarray]:
    """Per-bin variance contributions of the mean-removed trace; they sum to rms**2."""
    x = _values(trace)
    n = x.size
    spec = rfft(x - x.mean())
    power = (np.abs(spec) / n) ** 2
    if n % 2 == 0:
        power[1:-1] *= 2.0
    else:
        power[1:] *= 2.0
    return rfftfreq(n, trace.dt_s), power


def rms_vs_bandwidth(trace: TimeSeries, grid) -> RmsBandwidthCurve:
    """rms integrated with a brick-wall cutoff at each bandwidth in ``grid``."""
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ValidationError("bandwidth grid must be a non-empty 1-D array")
    if np.any(np.diff(grid) <= 0):
        raise ValidationError("bandwidth grid must be ascending")
    nyq = trace.nyquist_hz
    if grid[0] <= 0 or grid[-1] > nyq * (1 + 1e-12):
        raise ValidationError(f"bandwidth grid must lie in (0, {nyq}] Hz")
    freqs, power = one_sided_power(trace)
    cumulative = np.cumsum(power)
    idx = np.searchsorted(freqs, grid * (1 + 1e-12), side="right") - 1
    return RmsBandwidthCurve(grid.copy(), np.sqrt(cumulative[idx]))


def log_bandwidth_grid(trace: TimeSeries, f_min: float = 1.0, per_decade: int = 20) -> np.ndarray:
    nyq = trace.nyquist_hz
    decades = math.log10(nyq / f_min)
    grid = np.logspace(math.log10(f_min), math.log10(nyq), int(math.ceil(decades * per_decade)) + 1)
    grid[-1] = nyq
    return grid


@dataclass(frozen=True)
class AmplitudeSpectrum:
    resolution_hz: float
    frequencies_hz: np.ndarray
    amplitudes_m: np.ndarray

    def amplitude_at(self, f: float) -> float:
        return float(self.amplitudes_m[int(round(f / self.resolution_hz))])


def amplitude_spectrum(trace: TimeSeries, resolution_hz: float = 1.0) -> AmplitudeSpectrum:
    """Welch-averaged amplitude spectrum (Hann, 50 % overlap).

    Scaled so that a sine of amplitude ``a`` centred on a bin reads ``a``.
    """
    if not resolution_hz > 0:
        raise ValidationError("resolution must be positive")
    nperseg = int(round(1.0 / (resolution_hz * trace.dt_s)))
    if nperseg > len(trace):
        raise ValidationError(
            f"trace of {trace.duration_s} s is shorter than one {1 / resolution_hz} s segment"
        )
    freqs, power = welch(
        trace.values,
        fs=trace.sample_rate_hz,
        window="hann",
        nperseg=nperseg,
        noverlap=nperseg // 2,
        detrend="constant",
        scaling="spectrum",
        average="mean",
    )
    # "spectrum" scaling reports the sine's mean square a**2 / 2 in its bin
    amplitudes = np.sqrt(2.0 * power)
    amplitudes[0] = math.sqrt(power[0])
    return AmplitudeSpectrum(float(freqs[1] - freqs[0]), freqs, amplitudes)


def occurrence_histogram(trace, bin_width_m: float = DEFAULT_HISTOGRAM_BIN_M) -> tuple[np.ndarray, np.ndarray]:
    """Counts of mean-subtracted samples in bins of ``bin_width_m`` centred on
    integer multiples of the bin width."""
    if not bin_width_m > 0:
        raise ValidationError("bin width must be positive")
    x = _values(trace)
    idx = np.rint((x - x.mean()) / bin_width_m).astype(np.int64)
    lo = int(idx.min())
    counts = np.bincount(idx - lo)
    centers = (lo + np.arange(counts.size)) * bin_width_m
    return centers, counts


def counts_beyond(trace, threshold_m: float) -> int:
    """Number of mean-subtracted samples with ``|x| > threshold_m``."""
    x = _values(trace)
    return int(np.count_nonzero(np.abs(x - x.mean()) > threshold_m))
