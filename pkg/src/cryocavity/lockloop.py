"""Side-of-fringe cavity-length lock: transmission sensor, PI servo with an
optional notch, and a first-order-lag piezo actuator, simulated sample by sample.

The error signal is the transmission deviation divided by the lock-point
slope, i.e. an estimate of the length excursion in meters, so the proportional
gain is dimensionless and the loop gain equals the controller response.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import brentq

from .errors import LockInstabilityError, ValidationError
from .fabry_perot import ABOVE, CavityGeometry, LockPoint, find_lock_point
from .timeseries import METER, TimeSeries

DEFAULT_SAMPLE_RATE_HZ = 100e3
DEFAULT_ACTUATOR_CUTOFF_HZ = 500.0

# PI zero placed on the 500 Hz actuator pole, so the loop is a pure integrator
# with unity gain at 50 Hz (phase margin 90 degrees, no gain peaking).
DEFAULT_KI = 314.1102
DEFAULT_KP = DEFAULT_KI / (2.0 * math.pi * DEFAULT_ACTUATOR_CUTOFF_HZ)


@dataclass(frozen=True)
class LockConfig:
    kp: float = DEFAULT_KP
    ki: float = DEFAULT_KI
    actuator_cutoff_hz: float = DEFAULT_ACTUATOR_CUTOFF_HZ
    notch_hz: float | None = None
    notch_q: float = 10.0
    sensor_noise_rms: float = 0.0
    side: str = ABOVE
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ
    actuator_limit_m: float | None = None

    def __post_init__(self):
        if self.kp < 0 or self.ki < 0:
            raise ValidationError("gains must be non-negative", key="kp" if self.kp < 0 else "ki")
        if not self.actuator_cutoff_hz > 0:
            raise ValidationError("actuator cutoff must be positive", key="actuator_cutoff_hz")
        if not self.sample_rate_hz >= 10.0 * self.actuator_cutoff_hz:
            raise ValidationError("sample rate must exceed the actuator cutoff by 10x", key="sample_rate_hz")
        if self.notch_hz is not None:
            if not 0 < self.notch_hz < self.sample_rate_hz / 2:
                raise ValidationError("notch frequency must lie below Nyquist", key="notch_hz")
            if not self.notch_q > 0:
                raise ValidationError("notch quality factor must be positive", key="notch_q")
        if not self.sensor_noise_rms >= 0:
            raise ValidationError("sensor noise must be >= 0", key="sensor_noise_rms")

    @property
    def dt_s(self) -> float:
        return 1.0 / self.sample_rate_hz

    @property
    def lag_coefficient(self) -> float:
        return 1.0 - math.exp(-2.0 * math.pi * self.actuator_cutoff_hz * self.dt_s)


def _notch_coefficients(config: LockConfig):
    # RBJ biquad notch, normalized so a0 = 1
    w0 = 2.0 * math.pi * config.notch_hz / config.sample_rate_hz
    alpha = math.sin(w0) / (2.0 * config.notch_q)
    a0 = 1.0 + alpha
    b = (1.0 / a0, -2.0 * math.cos(w0) / a0, 1.0 / a0)
    a = (-2.0 * math.cos(w0) / a0, (1.0 - alpha) / a0)
    return b, a


def controller_response(config: LockConfig, f):
    """Open-loop gain L(f) of the discrete loop: notch x PI x actuator lag,
    including the one-sample sensor-to-actuator delay.

    The closed-loop residual of a disturbance at ``f`` is ``1 / |1 + L(f)|``.
    """
    f = np.asarray(f, dtype=float)
    nyq = config.sample_rate_hz / 2
    if np.any(f <= 0) or np.any(f >= nyq):
        raise ValidationError(f"frequency must lie in (0, {nyq}) Hz")
    zinv = np.exp(-2j * np.pi * f / config.sample_rate_hz)
    pi = config.kp + config.ki * config.dt_s / (1.0 - zinv)
    alpha = config.lag_coefficient
    lag = alpha * zinv / (1.0 - (1.0 - alpha) * zinv)
    gain = pi * lag
    if config.notch_hz is not None:
        b, a = _notch_coefficients(config)
        gain = gain * (b[0] + b[1] * zinv + b[2] * zinv**2) / (1.0 + a[0] * zinv + a[1] * zinv**2)
    return gain


def unity_gain_frequency(config: LockConfig, f_lo: float = 0.01, f_hi: float | None = None) -> float:
    """Lowest frequency where |L(f)| crosses 1 (scanned on a log grid, refined by bisection)."""
    f_hi = f_hi or config.sample_rate_hz / 4
    grid = np.logspace(math.log10(f_lo), math.log10(f_hi), 2000)
    mag = np.abs(controller_response(config, grid)) - 1.0
    crossing = np.nonzero((mag[:-1] > 0) & (mag[1:] <= 0))[0]
    if crossing.size == 0:
        raise ValidationError("loop gain never crosses unity in the scanned range")
    i = int(crossing[0])
    return float(brentq(lambda x: abs(controller_response(config, x)) - 1.0, grid[i], grid[i + 1], xtol=1e-9))


def phase_margin_deg(config: LockConfig) -> float:
    ugf = unity_gain_frequency(config)
    return 180.0 + math.degrees(np.angle(controller_response(config, ugf)))


@dataclass(frozen=True)
class LockResult:
    residual: TimeSeries
    actuator: TimeSeries
    lock_point: LockPoint


def simulate_lock(
    disturbance: TimeSeries,
    geom: CavityGeometry,
    config: LockConfig = LockConfig(),
    seed: int = 0,
    lock_point: LockPoint | None = None,
) -> LockResult:
    """Run the lock loop against a cavity-length disturbance (meters).

    Per sample: residual = disturbance - actuator; the sensor reads the Airy
    transmission at the lock point plus white noise; the error (converted to
    length) drives the notch and PI; the command reaches the actuator through
    a first-order lag and one sample of delay. The integrator is frozen while
    the command sits beyond the actuator limit (default lambda/8). A residual
    that crosses the resonance peak or the quarter-wave minimum raises
    ``LockInstabilityError``.
    """
    disturbance.require_unit(METER)
    if abs(disturbance.sample_rate_hz - config.sample_rate_hz) > 1e-6 * config.sample_rate_hz:
        raise ValidationError(
            f"disturbance sampled at {disturbance.sample_rate_hz} Hz, loop runs at {config.sample_rate_hz} Hz"
        )
    lp = lock_point or find_lock_point(geom, config.side)
    if lp.slope_per_m == 0:
        raise ValidationError("lock point has zero slope")

    d = disturbance.values.tolist()
    n = len(d)
    rng = np.random.default_rng(seed)
    if config.sensor_noise_rms > 0:
        noise = (config.sensor_noise_rms * rng.standard_normal(n)).tolist()
    else:
        noise = None

    z_lock = geom.on_resonance_length_m + lp.offset_m
    wl = geom.wavelength_m
    inv_slope = 1.0 / lp.slope_per_m
    t0 = geom.peak_transmission
    g2 = geom.slope_factor**2
    l_res = geom.on_resonance_length_m
    sin = math.sin
    kp = config.kp
    ki_dt = config.ki * config.dt_s
    alpha = config.lag_coefficient
    limit = config.actuator_limit_m if config.actuator_limit_m is not None else geom.wavelength_m / 8.0
    # the error is monotonic only between the peak and the quarter-wave minimum
    # on the locked side; leaving that range means the lock is lost
    quarter = geom.wavelength_m / 4.0
    lost_lo, lost_hi = (0.0, quarter) if lp.offset_m >= 0 else (-quarter, 0.0)
    lost_lo -= lp.offset_m
    lost_hi -= lp.offset_m
    use_notch = config.notch_hz is not None
    if use_notch:
        (b0, b1, b2), (a1, a2) = _notch_coefficients(config)
    x1 = x2 = y1 = y2 = 0.0

    def airy(z):
        s = sin(2.0 * math.pi * (z - l_res) / wl)
        return t0 / (1.0 + g2 * (s * s))

    # setpoint from the same scalar expression as the loop, so an undisturbed
    # cavity produces an error of exactly zero
    t_set = airy(z_lock)

    residual = [0.0] * n
    actuator = [0.0] * n
    a = 0.0
    integ = 0.0
    for i in range(n):
        r = d[i] - a
        residual[i] = r
        actuator[i] = a
        if r <= lost_lo or r >= lost_hi:
            raise LockInstabilityError(
                f"lock lost at sample {i}: residual {r:.3e} m left the capture range "
                f"(kp={config.kp}, ki={config.ki})",
                kp=config.kp,
                ki=config.ki,
                sample=i,
            )
        t = airy(z_lock + r)
        if noise is not None:
            t += noise[i]
        e = (t - t_set) * inv_slope
        if use_notch:
            y = b0 * e + b1 * x1 + b2 * x2 - a1 * y1 - a2 * y2
            x2, x1 = x1, e
            y2, y1 = y1, y
            e = y
        integ_new = integ + ki_dt * e
        c = kp * e + integ_new
        if c > limit:
            c = limit
        elif c < -limit:
            c = -limit
        else:
            integ = integ_new
        a += alpha * (c - a)

    dt = disturbance.dt_s
    return LockResult(
        TimeSeries(dt, np.asarray(residual), METER, disturbance.start_s),
        TimeSeries(dt, np.asarray(actuator), METER, disturbance.start_s),
        lp,
    )


def with_gains(config: LockConfig, kp: float, ki: float) -> LockConfig:
    return replace(config, kp=kp, ki=ki)
