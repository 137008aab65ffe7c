import math

import numpy as np
import pytest

from cryocavity import fabry_perot as fp
from cryocavity import lockloop as ll
from cryocavity.errors import LockInstabilityError, ValidationError
from cryocavity.timeseries import TRANSMISSION, TimeSeries

from conftest import sine


def _tone_amplitude(x, freq, n_tail):
    t = x.times[-n_tail:]
    return abs(2 * np.mean(x.values[-n_tail:] * np.exp(-2j * np.pi * freq * t)))


def test_default_loop_crossover_and_margin():
    cfg = ll.LockConfig()
    assert ll.unity_gain_frequency(cfg) == pytest.approx(50.0, rel=1e-3)
    assert ll.phase_margin_deg(cfg) == pytest.approx(90.0, abs=0.5)


def test_controller_response_limits():
    cfg = ll.LockConfig()
    low = ll.controller_response(cfg, 0.1)
    assert abs(low) == pytest.approx(cfg.ki / (2 * math.pi * 0.1), rel=1e-3)
    with pytest.raises(ValidationError):
        ll.controller_response(cfg, 0.0)
    with pytest.raises(ValidationError):
        ll.controller_response(cfg, cfg.sample_rate_hz / 2)


def test_notch_zeroes_loop_gain():
    cfg = ll.LockConfig(notch_hz=200.0, notch_q=5.0)
    assert abs(ll.controller_response(cfg, 200.0)) < 1e-9
    plain = ll.LockConfig()
    assert abs(ll.controller_response(cfg, 5.0)) == pytest.approx(abs(ll.controller_response(plain, 5.0)), rel=1e-3)


def test_config_validation():
    with pytest.raises(ValidationError):
        ll.LockConfig(kp=-1.0)
    with pytest.raises(ValidationError):
        ll.LockConfig(sample_rate_hz=1000.0)
    with pytest.raises(ValidationError):
        ll.LockConfig(notch_hz=60e3)
    with pytest.raises(ValidationError):
        ll.LockConfig(sensor_noise_rms=-1.0)


def test_undisturbed_cavity_stays_exactly_locked(geom):
    quiet = TimeSeries(1e-5, np.zeros(10_000))
    res = ll.simulate_lock(quiet, geom, ll.LockConfig())
    assert np.all(res.residual.values == 0.0)
    assert np.all(res.actuator.values == 0.0)


@pytest.mark.parametrize("side", [fp.ABOVE, fp.BELOW])
def test_low_frequency_suppression_matches_loop_model(geom, side):
    cfg = ll.LockConfig(side=side)
    x = sine(10e-12, 5.0, duration=3.0)
    res = ll.simulate_lock(x, geom, cfg)
    measured = _tone_amplitude(res.residual, 5.0, 200_000) / 10e-12
    expected = 1 / abs(1 + ll.controller_response(cfg, 5.0))
    assert measured == pytest.approx(expected, rel=0.02)


def test_no_suppression_far_above_crossover(geom):
    cfg = ll.LockConfig()
    f = 10 * ll.unity_gain_frequency(cfg)
    x = sine(10e-12, f, duration=1.0)
    res = ll.simulate_lock(x, geom, cfg)
    measured = _tone_amplitude(res.residual, f, 50_000) / 10e-12
    assert measured == pytest.approx(1.0, abs=0.1)


def test_excessive_gain_diverges(geom):
    cfg = ll.LockConfig(kp=200.0, ki=0.0)
    x = sine(10e-12, 50.0, duration=0.2)
    with pytest.raises(LockInstabilityError) as exc:
        ll.simulate_lock(x, geom, cfg)
    assert exc.value.kp == 200.0 and exc.value.sample > 0


def test_sensor_noise_is_seeded(geom):
    cfg = ll.LockConfig(sensor_noise_rms=1e-3)
    quiet = TimeSeries(1e-5, np.zeros(20_000))
    a = ll.simulate_lock(quiet, geom, cfg, seed=1).residual
    b = ll.simulate_lock(quiet, geom, cfg, seed=1).residual
    c = ll.simulate_lock(quiet, geom, cfg, seed=2).residual
    assert a == b
    assert not np.array_equal(a.values, c.values)
    assert np.std(a.values) > 0


def test_actuator_clamp_freezes_integrator(geom):
    cfg = ll.LockConfig(actuator_limit_m=5e-12)
    step = TimeSeries(1e-5, np.full(20_000, 20e-12))
    res = ll.simulate_lock(step, geom, cfg)
    assert res.actuator.values.max() <= 5e-12 * (1 + 1e-12)
    assert res.residual.values[-1] == pytest.approx(15e-12, rel=1e-3)


def test_input_validation(geom):
    with pytest.raises(ValidationError):
        ll.simulate_lock(TimeSeries(1e-5, np.zeros(10), TRANSMISSION), geom)
    with pytest.raises(ValidationError):
        ll.simulate_lock(TimeSeries(2e-5, np.zeros(10)), geom)


def test_with_gains_copies():
    cfg = ll.with_gains(ll.LockConfig(notch_hz=100.0), 0.5, 10.0)
    assert (cfg.kp, cfg.ki, cfg.notch_hz) == (0.5, 10.0, 100.0)
