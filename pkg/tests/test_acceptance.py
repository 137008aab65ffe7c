"""Acceptance criteria 1-10, one PASS/FAIL line each."""
import math
import time

import numpy as np
import pytest

from cryocavity import fabry_perot as fp
from cryocavity import lockloop as ll
from cryocavity import mechanics as mech
from cryocavity import polariton as pol
from cryocavity import signal_analysis as sa
from cryocavity.cli import _finesse_trial, _polariton_trial
from cryocavity.timeseries import TimeSeries

from conftest import sine

N_SEEDS = 100


@pytest.fixture
def verdict(capsys):
    def report(number, title, checks):
        # a check of None is informational only
        ok = all(passed for _, passed in checks if passed is not None)
        tags = {True: " [ok]", False: " [X]", None: ""}
        detail = "; ".join(f"{text}{tags[passed]}" for text, passed in checks)
        with capsys.disabled():
            print(f"\ncriterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}")
        assert ok, detail

    return report


def test_criterion_01_spatial_linewidth(verdict):
    checks = []
    for finesse, target in [(110, 3.545e-9), (30, 13.0e-9), (1000, 0.390e-9)]:
        got = fp.finesse_to_spatial_linewidth(finesse, 780e-9)
        checks.append((f"F={finesse}: {got * 1e9:.4f} nm vs {target * 1e9:.3f}", abs(got / target - 1) <= 5e-3))
    verdict(1, "spatial linewidth", checks)


def test_criterion_02_spring_stage(verdict):
    f0 = mech.stage_from_spring(1520.0, 4, 0.51).resonance_hz
    verdict(2, "spring stage resonance", [
        (f"f0 = {f0:.2f} Hz (17.4 expected)", abs(f0 - 17.4) < 0.05),
        (f"{100 * (f0 / 18 - 1):+.1f}% from 18 Hz nominal", abs(f0 / 18 - 1) <= 0.05),
    ])


def test_criterion_03_transmissibility_rolloff(verdict):
    start = time.perf_counter()
    f0 = mech.default_spring_stage().resonance_hz

    def slope(stage, lo, hi):
        f = np.logspace(math.log10(lo), math.log10(hi), 50)
        return np.polyfit(np.log10(f), np.log10(mech.transmissibility(stage, f)), 1)[0]

    undamped = slope(mech.OscillatorStage(f0, 0.0), 10 * f0, 100 * f0)
    damped = slope(mech.default_spring_stage(), 1e4, 1e5)
    elapsed = time.perf_counter() - start
    verdict(3, "transmissibility rolloff", [
        (f"undamped slope {undamped:.3f}/decade", abs(undamped + 2.0) <= 0.05),
        (f"damped asymptote {damped:.3f}/decade", abs(damped + 1.0) <= 0.05),
        (f"{elapsed:.2f} s", elapsed < 1.0),
    ])


def test_criterion_04_inversion_round_trip(verdict, geom):
    lp = fp.find_lock_point(geom)

    def error(amplitude):
        d = sine(amplitude, 173.0, duration=10.0)
        start = time.perf_counter()
        back = fp.transmission_to_displacement(fp.displacement_to_transmission(d, geom, lp), geom, lp).displacement
        elapsed = time.perf_counter() - start
        return np.sqrt(np.mean((back.values - d.values) ** 2)) / np.sqrt(np.mean(d.values**2)), elapsed

    e30, t30 = error(30e-12)
    small = geom.spatial_linewidth_m / 20
    e_small, _ = error(small)
    verdict(4, "inversion round trip", [
        (f"30 pm: {100 * e30:.3f}% rms error", e30 <= 0.05),
        (f"dL/20 = {small * 1e12:.0f} pm: {100 * e_small:.3f}%", e_small <= 0.02),
        (f"1e6 samples in {t30:.2f} s", t30 < 1.0),
    ])


def test_criterion_05_parseval(verdict):
    start = time.perf_counter()
    worst = 0.0
    for seed in range(N_SEEDS):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(10_000, 100_000))
        white = rng.standard_normal(n)
        x = TimeSeries(1e-5, 1e-10 * (white + 0.01 * np.cumsum(rng.standard_normal(n))) + rng.normal(0, 1e-9))
        at_nyquist = sa.rms_vs_bandwidth(x, [x.nyquist_hz]).rms_m[-1]
        worst = max(worst, abs(at_nyquist / sa.rms(x) - 1))
    elapsed = time.perf_counter() - start
    verdict(5, "Parseval", [
        (f"worst relative mismatch {worst:.2e} over {N_SEEDS} traces", worst <= 1e-6),
        (f"{elapsed:.1f} s", elapsed < 30.0),
    ])


def test_criterion_06_finesse_fit(verdict, geom):
    start = time.perf_counter()
    clean = _finesse_trial((geom, 401, 10.0, 0.0, 0)).finesse
    noisy = np.array([_finesse_trial((geom, 401, 10.0, 0.01, s)).finesse for s in range(N_SEEDS)])
    elapsed = time.perf_counter() - start
    worst = np.max(np.abs(noisy / 110 - 1))
    verdict(6, "finesse fit", [
        (f"noiseless F = {clean:.6f}", abs(clean / 110 - 1) <= 1e-3),
        (f"1% noise, worst of {N_SEEDS}: {100 * worst:.2f}%", worst <= 0.02),
        (f"{elapsed:.1f} s", elapsed < 30.0),
    ])


def test_criterion_07_pipeline_corridors(verdict, default_run):
    start = time.perf_counter()
    cold_plate = mech.kick_train(mech.default_cold_plate_recipe(seed=0))
    unlocked = mech.IsolationChain().differential(cold_plate)
    locked = ll.simulate_lock(unlocked, fp.CavityGeometry(780e-9, 110.0, 13), seed=0).residual
    elapsed = time.perf_counter() - start
    assert locked == default_run["locked"]

    cold_rms, cold_pp = sa.rms(cold_plate), sa.peak_to_peak(cold_plate)
    u_rms, l_rms = sa.rms(unlocked), sa.rms(locked)
    u_tail, l_tail = sa.counts_beyond(unlocked, 200e-12), sa.counts_beyond(locked, 200e-12)
    verdict(7, "pipeline corridors", [
        (f"cold plate {cold_rms * 1e9:.2f} nm rms", abs(cold_rms / 2.2e-9 - 1) <= 0.2),
        (f"{cold_pp * 1e9:.2f} nm p-p", cold_pp <= 10e-9),
        (f"unlocked {u_rms * 1e12:.1f} pm rms", 30e-12 <= u_rms <= 120e-12),
        (f"locked {l_rms * 1e12:.1f} pm, ratio {l_rms / u_rms:.3f}", l_rms / u_rms <= 0.8),
        (f"samples beyond 200 pm {u_tail} -> {l_tail}", l_tail < u_tail),
        (f"{elapsed:.1f} s", elapsed < 120.0),
    ])


def test_criterion_08_lock_oracle(verdict, geom):
    start = time.perf_counter()
    cfg = ll.LockConfig()

    def suppression(freq, duration, tail):
        res = ll.simulate_lock(sine(10e-12, freq, duration=duration), geom, cfg).residual
        t = res.times[-tail:]
        return abs(2 * np.mean(res.values[-tail:] * np.exp(-2j * np.pi * freq * t))) / 10e-12

    model5 = 1 / abs(1 + ll.controller_response(cfg, 5.0))
    got5 = suppression(5.0, 3.0, 200_000)
    ugf = ll.unity_gain_frequency(cfg)
    got_hi = suppression(10 * ugf, 1.0, 50_000)
    elapsed = time.perf_counter() - start
    verdict(8, "lock oracle", [
        (f"5 Hz: {got5:.4f} vs model {model5:.4f}", abs(got5 / model5 - 1) <= 0.1),
        (f"UGF {ugf:.1f} Hz, at 10x UGF {got_hi:.3f}", abs(got_hi - 1) <= 0.1),
        (f"{elapsed:.1f} s", elapsed < 10.0),
    ])


def test_criterion_09_polariton_numbers(verdict):
    model = pol.PolaritonModel(cavity_linewidth_mev=6.3, exciton_linewidth_mev=6.1, coupling_mev=2.75)
    s, _ = pol.normal_mode_splitting(model, (-20.0, 20.0))
    c = pol.cooperativity(s, 6.3, 6.1)
    deltas = np.linspace(-50, 50, 201)
    up, lo = pol.branch_energies(1725 + deltas, 1725, 2.75, 6.3, 6.1)
    trace_err = np.max(np.abs((up + lo) - (2 * 1725 + deltas - 0.5j * 12.4)) / np.abs(2 * 1725 + deltas))
    up0, lo0 = pol.branch_energies(1725 + deltas, 1725, 0.0, 6.3, 6.1)
    bare_c = 1725 + deltas - 3.15j
    bare_x = 1725 - 3.05j
    decouple_err = np.max(np.minimum(
        np.maximum(np.abs(up0 - bare_c), np.abs(lo0 - bare_x)),
        np.maximum(np.abs(up0 - bare_x), np.abs(lo0 - bare_c)),
    )) / 1725
    verdict(9, "polariton numbers", [
        (f"S = {s:.4f} meV", abs(s / 5.50 - 1) <= 2e-3),
        (f"C = {c:.4f}", abs(c - 1.57) <= 0.01),
        (f"trace {trace_err:.1e}", trace_err <= 1e-12),
        (f"g=0 decoupling {decouple_err:.1e}", decouple_err <= 1e-12),
    ])


def _crossing_trials():
    model, cal = pol.PolaritonModel(), pol.DEFAULT_CALIBRATION
    fits = [_polariton_trial((model, cal, 15.0, 8, 0.3, s)) for s in range(N_SEEDS)]
    g = np.array([f.coupling_mev for f in fits])
    slope = np.array([f.calibration.slope_mev_per_volt for f in fits])
    return g / 2.75 - 1, slope / cal.slope_mev_per_volt - 1


def test_criterion_10_crossing_fit(verdict):
    start = time.perf_counter()
    g_err, slope_err = _crossing_trials()
    elapsed = time.perf_counter() - start
    within = int(np.sum(np.abs(g_err) <= 0.05))
    verdict(10, "crossing fit", [
        (f"mean g error {100 * g_err.mean():+.2f}% over {N_SEEDS} seeds", abs(g_err.mean()) <= 0.05),
        (f"per-trial g spread {100 * g_err.std():.1f}%, {within}/{N_SEEDS} within 5%", None),
        (f"worst slope error {100 * np.max(np.abs(slope_err)):.2f}%", np.max(np.abs(slope_err)) <= 0.05),
        (f"{elapsed:.1f} s", elapsed < 60.0),
    ])


@pytest.mark.xfail(
    strict=True,
    reason="0.3 meV noise on 8 detunings gives about 4.5% scatter in g per trial, so some of 100 trials land beyond 5%",
)
def test_crossing_fit_every_trial_within_five_percent():
    g_err, _ = _crossing_trials()
    assert np.all(np.abs(g_err) <= 0.05)
