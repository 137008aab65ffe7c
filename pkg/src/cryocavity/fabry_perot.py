"""Fabry-Perot transmission versus cavity length and the interferometric
conversion between transmission traces and length fluctuations.

All lengths are in meters. ``z`` is the absolute cavity length; a resonance
sits at ``L = q * wavelength / 2`` and repeats every free spectral range
``wavelength / 2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from .errors import FitError, ValidationError
from .timeseries import METER, TRANSMISSION, TimeSeries

BELOW = "below"
ABOVE = "above"
DEFAULT_VALIDITY_BAND = (0.4, 0.95)


@dataclass(frozen=True)
class CavityGeometry:
    wavelength_m: float
    finesse: float
    mode_number: int
    peak_transmission: float = 1.0
    mirror_transmissions: tuple[float, float] | None = None

    def __post_init__(self):
        if not (math.isfinite(self.wavelength_m) and self.wavelength_m > 0):
            raise ValidationError("wavelength must be positive", key="wavelength_nm")
        if not (math.isfinite(self.finesse) and self.finesse >= 1):
            raise ValidationError("finesse must be >= 1", key="finesse")
        if int(self.mode_number) != self.mode_number or self.mode_number < 1:
            raise ValidationError("mode number must be a positive integer", key="mode_number")
        if not (0 < self.peak_transmission <= 1):
            raise ValidationError("peak transmission must lie in (0, 1]", key="peak_transmission")

    @property
    def slope_factor(self) -> float:
        return 2.0 * self.finesse / math.pi

    @property
    def on_resonance_length_m(self) -> float:
        return self.mode_number * self.wavelength_m / 2.0

    @property
    def free_spectral_range_m(self) -> float:
        return self.wavelength_m / 2.0

    @property
    def spatial_linewidth_m(self) -> float:
        return finesse_to_spatial_linewidth(self.finesse, self.wavelength_m)

    @property
    def min_transmission(self) -> float:
        return self.peak_transmission / (1.0 + self.slope_factor**2)


@dataclass(frozen=True)
class LockPoint:
    """Operating point on the flank of a resonance.

    ``offset_m`` is measured from the resonance length; ``slope_per_m`` is dT/dz there.
    """

    offset_m: float
    transmission_at_point: float
    slope_per_m: float
    side: str = ABOVE


def _phase(z, geom: CavityGeometry):
    return 2.0 * np.pi * (np.asarray(z, dtype=float) - geom.on_resonance_length_m) / geom.wavelength_m


def transmission(z, geom: CavityGeometry):
    """Airy transmission ``T0 / (1 + (G sin phi)^2)`` at cavity length ``z``."""
    s = np.sin(_phase(z, geom))
    return geom.peak_transmission / (1.0 + (geom.slope_factor * s) ** 2)


def transmission_slope(z, geom: CavityGeometry):
    """dT/dz, in transmission per meter."""
    phi = _phase(z, geom)
    s, c = np.sin(phi), np.cos(phi)
    g2 = geom.slope_factor**2
    return (
        -geom.peak_transmission * 4.0 * math.pi * g2 / geom.wavelength_m
        * s * c / (1.0 + g2 * s * s) ** 2
    )


def finesse_to_spatial_linewidth(finesse: float, wavelength_m: float) -> float:
    """Cavity-length width of one resonance, ``wavelength / (2 F)``."""
    if not finesse > 0 or not wavelength_m > 0:
        raise ValidationError("finesse and wavelength must be positive")
    if finesse < 1:
        raise ValidationError("finesse must be >= 1")
    return wavelength_m / (2.0 * finesse)


def resonance_wavelength(length_m: float, mode_number: int) -> float:
    return 2.0 * length_m / mode_number


def resonance_lengths(geom: CavityGeometry, z_min: float, z_max: float) -> list[float]:
    """Resonant cavity lengths in the half-open interval ``[z_min, z_max)``."""
    if not z_max > z_min:
        return []
    half = geom.wavelength_m / 2.0
    q_lo = math.ceil(z_min / half - 1e-12)
    q_hi = math.ceil(z_max / half - 1e-12) - 1
    out = []
    for q in range(max(q_lo, 1), q_hi + 1):
        z = q * half
        if z_min <= z < z_max:
            out.append(z)
    return out


def _max_slope_sin2(g: float) -> float:
    # root in (0, 1/2) of 2 G^2 x^2 - (2 + 3 G^2) x + 1 = 0, x = sin^2(phi)
    g2 = g * g
    b = 2.0 + 3.0 * g2
    disc = b * b - 8.0 * g2
    # numerically stable form of (b - sqrt(disc)) / (4 G^2)
    return 2.0 / (b + math.sqrt(disc))


def find_lock_point(geom: CavityGeometry, side: str = ABOVE) -> LockPoint:
    """Offset of steepest transmission slope on one side of the resonance."""
    if side not in (BELOW, ABOVE):
        raise ValidationError(f"side must be {BELOW!r} or {ABOVE!r}, got {side!r}")
    x = _max_slope_sin2(geom.slope_factor)
    phi = math.asin(math.sqrt(x))
    offset = phi * geom.wavelength_m / (2.0 * math.pi)
    if side == BELOW:
        offset = -offset
    z = geom.on_resonance_length_m + offset
    return LockPoint(
        offset_m=offset,
        transmission_at_point=float(transmission(z, geom)),
        slope_per_m=float(transmission_slope(z, geom)),
        side=side,
    )


@dataclass(frozen=True)
class Inversion:
    displacement: TimeSeries
    out_of_band: np.ndarray
    n_out_of_band: int


def displacement_to_transmission(trace: TimeSeries, geom: CavityGeometry, lock: LockPoint) -> TimeSeries:
    """Forward model: transmission seen at the lock point for a length-fluctuation trace."""
    trace.require_unit(METER)
    z = geom.on_resonance_length_m + lock.offset_m + trace.values
    return trace.with_values(transmission(z, geom), unit=TRANSMISSION)


def transmission_to_displacement(
    trace: TimeSeries,
    geom: CavityGeometry,
    lock: LockPoint,
    band: tuple[float, float] = DEFAULT_VALIDITY_BAND,
) -> Inversion:
    """Linearized inversion ``d = (T - T_lock) / slope`` around the lock point.

    Samples whose transmission leaves ``band`` (fractions of T0) are flagged
    but still converted.
    """
    trace.require_unit(TRANSMISSION)
    if lock.slope_per_m == 0 or not math.isfinite(lock.slope_per_m):
        raise ValidationError("lock point has zero slope; cannot invert")
    lo, hi = band
    if not 0 <= lo < hi <= 1:
        raise ValidationError(f"validity band must satisfy 0 <= lo < hi <= 1, got {band}")
    t = trace.values
    d = (t - lock.transmission_at_point) / lock.slope_per_m
    t0 = geom.peak_transmission
    flags = (t < lo * t0) | (t > hi * t0)
    return Inversion(trace.with_values(d, unit=METER), flags, int(flags.sum()))


@dataclass(frozen=True)
class ResonanceFit:
    peak_transmission: float
    resonance_length_m: float
    finesse: float
    rms_residual: float
    wavelength_m: float
    nfev: int = 0

    @property
    def spatial_linewidth_m(self) -> float:
        return finesse_to_spatial_linewidth(self.finesse, self.wavelength_m)


def _airy(z, t0, length, finesse, wavelength):
    g = 2.0 * finesse / math.pi
    s = np.sin(2.0 * np.pi * (z - length) / wavelength)
    return t0 / (1.0 + (g * s) ** 2)


def _initial_guess(z: np.ndarray, t: np.ndarray, wavelength: float) -> tuple[float, float, float]:
    i = int(np.argmax(t))
    t0 = float(t[i])
    half = 0.5 * t0 + 0.5 * float(t.min())
    above = t >= half
    # walk out from the peak to the half-maximum crossings
    lo = i
    while lo > 0 and above[lo - 1]:
        lo -= 1
    hi = i
    while hi < t.size - 1 and above[hi + 1]:
        hi += 1
    if lo == 0 or hi == t.size - 1:
        raise ValidationError("sweep must contain the peak and fall below half maximum on both sides")
    width = max(float(z[hi] - z[lo]), float(np.min(np.diff(z))))
    finesse = max(wavelength / (2.0 * width), 1.0)
    return t0, float(z[i]), finesse


def fit_resonance(z, t, wavelength_m: float, max_nfev: int = 200) -> ResonanceFit:
    """Least-squares fit of the Airy transmission to a length sweep.

    Free parameters are peak transmission, resonance length and finesse; the
    wavelength is known.
    """
    z = np.asarray(z, dtype=float)
    t = np.asarray(t, dtype=float)
    if z.shape != t.shape or z.ndim != 1:
        raise ValidationError("z and transmission must be 1-D arrays of equal length")
    if z.size < 10:
        raise ValidationError("need at least 10 samples to fit a resonance")
    if np.any(np.diff(z) <= 0):
        raise ValidationError("cavity length samples must be strictly increasing")
    if np.ptp(t) <= 1e-12 * max(abs(t).max(), 1e-300):
        raise ValidationError("transmission is constant; nothing to fit")

    p0 = _initial_guess(z, t, wavelength_m)
    if z[-1] - z[0] < wavelength_m / (2.0 * p0[2]):
        raise ValidationError("sweep must span at least one spatial linewidth")

    scale_z = wavelength_m / (2.0 * p0[2])

    def residual(p):
        t0, dl, finesse = p
        return _airy(z, t0, p0[1] + dl * scale_z, finesse, wavelength_m) - t

    x0 = np.array([p0[0], 0.0, p0[2]])
    sol = least_squares(
        residual,
        x0,
        bounds=([0.0, -np.inf, 1.0], [np.inf, np.inf, np.inf]),
        x_scale=[p0[0], 1.0, p0[2]],
        max_nfev=max_nfev,
        xtol=1e-12,
        ftol=1e-12,
        gtol=1e-12,
    )
    t0, dl, finesse = sol.x
    rms = float(np.sqrt(np.mean(sol.fun**2)))
    fit = ResonanceFit(float(t0), float(p0[1] + dl * scale_z), float(finesse), rms, wavelength_m, int(sol.nfev))
    if sol.status <= 0:
        raise FitError(f"resonance fit did not converge: {sol.message}", best=fit.__dict__)
    return fit
