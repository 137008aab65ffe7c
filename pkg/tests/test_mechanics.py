import math
import warnings

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st
from scipy.signal import welch

from cryocavity import mechanics as mech
from cryocavity.errors import ValidationError
from cryocavity.timeseries import TRANSMISSION, TimeSeries

from conftest import sine


def test_spring_stage_resonance():
    stage = mech.default_spring_stage()
    assert stage.resonance_hz == pytest.approx(17.4, abs=0.05)
    assert stage.resonance_hz == pytest.approx(18.0, rel=0.05)
    assert stage.damping_ratio == mech.SPRING_DAMPING_RATIO


def test_spring_stage_scaling():
    base = mech.stage_from_spring(1000.0, 1, 1.0).resonance_hz
    assert mech.stage_from_spring(4000.0, 1, 1.0).resonance_hz == pytest.approx(2 * base)
    assert mech.stage_from_spring(1000.0, 4, 4.0).resonance_hz == pytest.approx(base)
    assert base == pytest.approx(math.sqrt(1000.0) / (2 * math.pi))


@pytest.mark.parametrize("args", [(0.0, 4, 0.5), (1520.0, 0, 0.5), (1520.0, 4, -1.0)])
def test_spring_stage_rejects_bad_inputs(args):
    with pytest.raises(ValidationError):
        mech.stage_from_spring(*args)


def test_transmissibility_limits():
    stage = mech.OscillatorStage(20.0, 0.1)
    assert mech.transmissibility(stage, 0.0) == pytest.approx(1.0)
    # isolation starts above sqrt(2) f0 for any damping
    assert mech.transmissibility(stage, 20.0 * math.sqrt(2)) == pytest.approx(1.0)
    peak = mech.transmissibility(stage, 20.0)
    assert peak == pytest.approx(math.sqrt(1 + 0.04) / 0.2)
    undamped = mech.OscillatorStage(20.0, 0.0)
    assert np.isinf(mech.transmissibility(undamped, 20.0))
    with pytest.raises(ValidationError):
        mech.transmissibility(stage, -1.0)


def _loglog_slope(stage, f_lo, f_hi):
    f = np.array([f_lo, f_hi])
    t = mech.transmissibility(stage, f)
    return math.log10(t[1] / t[0]) / math.log10(f_hi / f_lo)


def test_rolloff_slopes():
    undamped = mech.OscillatorStage(17.4, 0.0)
    assert _loglog_slope(undamped, 174.0, 1740.0) == pytest.approx(-2.0, abs=0.05)
    damped = mech.default_spring_stage()
    assert _loglog_slope(damped, 1e4, 1e5) == pytest.approx(-1.0, abs=0.05)


@given(
    f0=st.floats(1.0, 1e4),
    zeta=st.floats(0.0, 2.0),
    ratio=st.floats(1e-3, 1e3),
)
def test_complex_response_magnitude_matches(f0, zeta, ratio):
    stage = mech.OscillatorStage(f0, zeta)
    f = f0 * ratio
    # keep away from the (numerically) undamped pole
    assume(abs(ratio - 1) > 1e-6 or zeta > 1e-6)
    assert abs(mech.stage_response(stage, f)) == pytest.approx(float(mech.transmissibility(stage, f)), rel=1e-9)


@pytest.mark.parametrize("freq", [5.0, 17.0, 60.0, 400.0])
def test_sine_through_stage_matches_transfer_function(freq):
    stage = mech.default_spring_stage()
    x = sine(1e-9, freq, duration=4.0)
    y = mech.apply_stage(x, stage).values
    # project the last 2 s (integer cycles) onto the drive to skip the transient
    t = x.times[-200_000:]
    ref = np.exp(2j * np.pi * freq * t)
    measured = 2 * np.mean(y[-200_000:] * ref.conj()) / (2 * np.mean(x.values[-200_000:] * ref.conj()))
    expected = mech.stage_response(stage, freq)
    assert abs(measured) == pytest.approx(abs(expected), rel=0.01)
    assert np.angle(measured) == pytest.approx(np.angle(expected), abs=0.01)


def test_apply_stage_rejects_transmission_trace():
    t = TimeSeries(1e-5, np.ones(10), TRANSMISSION)
    with pytest.raises(ValidationError):
        mech.apply_stage(t, mech.default_spring_stage())


def test_kick_train_deterministic_per_seed():
    recipe = mech.default_cold_plate_recipe(seed=4)
    a = mech.kick_train(recipe, 1.0)
    b = mech.kick_train(recipe, 1.0)
    c = mech.kick_train(mech.default_cold_plate_recipe(seed=5), 1.0)
    assert a == b
    assert not np.array_equal(a.values, c.values)
    assert len(a) == 100_000 and a.dt_s == 1e-5


def test_single_ring_down_shape():
    recipe = mech.KickRecipe(period_s=1.0, modes=((100.0, 1e-9, 0.05),))
    x = mech.kick_train(recipe, 1.0, 1e-4)
    t = x.times
    expected = 1e-9 * np.exp(-t / 0.05) * np.sin(2 * np.pi * 100 * t)
    expected[t >= 35 * 0.05] = 0.0
    np.testing.assert_allclose(x.values, expected, atol=1e-24)


def test_kicks_repeat_each_period():
    recipe = mech.KickRecipe(period_s=0.25, modes=((400.0, 1e-9, 0.01),))
    x = mech.kick_train(recipe, 1.0, 1e-4).values
    np.testing.assert_allclose(x[:2500], x[2500:5000], atol=1e-22)
    assert list(mech.kick_onsets(recipe, 1.0)) == pytest.approx([0.0, 0.25, 0.5, 0.75])


def test_broadband_floor_is_an_amplitude_spectral_density():
    recipe = mech.KickRecipe(broadband_floor=1e-12, seed=1)
    x = mech.kick_train(recipe, 4.0)
    f, psd = welch(x.values, fs=x.sample_rate_hz, nperseg=4096)
    asd = np.sqrt(np.median(psd[10:-10]))
    # median of a chi-square(2*K) estimate sits slightly below the mean
    assert asd == pytest.approx(1e-12, rel=0.05)


def test_kick_train_rejects_undersampling_and_short_duration():
    recipe = mech.default_cold_plate_recipe()
    with pytest.raises(ValidationError) as exc:
        mech.kick_train(recipe, 1.0, 1e-4)
    assert exc.value.key == "dt_s"
    with pytest.raises(ValidationError):
        mech.kick_train(recipe, 0.5)


def test_recipe_validation():
    with pytest.raises(ValidationError):
        mech.KickRecipe(period_s=0.0)
    with pytest.raises(ValidationError):
        mech.KickRecipe(modes=((100.0, 1e-9, -1.0),))
    with pytest.raises(ValidationError):
        mech.KickRecipe(tones=((-5.0, 1e-9),))
    with pytest.raises(ValidationError):
        mech.KickRecipe(broadband_floor=-1.0)


def test_identical_stacks_cancel():
    cold = mech.kick_train(mech.default_cold_plate_recipe(), 1.0)
    stack = mech.OscillatorStage(800.0, 0.03)
    diff = mech.cavity_noise(cold, mech.default_spring_stage(), stack, stack)
    assert np.all(diff.values == 0.0)


def test_cavity_noise_is_differential_of_filtered_table():
    cold = mech.kick_train(mech.default_cold_plate_recipe(), 1.0)
    chain = mech.IsolationChain()
    table = mech.apply_stage(cold, chain.spring_stage)
    expected = mech.apply_stage(table, chain.fiber_stack).values - mech.apply_stage(table, chain.mirror_stack).values
    np.testing.assert_allclose(chain.differential(cold).values, expected, rtol=0, atol=1e-25)


def test_soft_stack_warns():
    cold = mech.kick_train(mech.KickRecipe(modes=((100.0, 1e-9, 0.1),)), 1.0)
    with pytest.warns(RuntimeWarning, match="not well above"):
        mech.cavity_noise(cold, mech.default_spring_stage(), mech.OscillatorStage(40.0, 0.1), mech.DEFAULT_MIRROR_STACK)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        mech.IsolationChain().differential(cold)
