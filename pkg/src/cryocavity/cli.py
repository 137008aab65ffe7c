"""Command-line pipeline.

    cryocavity <command> [--config PATH] [--seed N] [--out DIR] [--parallel N]

Exit status: 0 success, 1 validation error, 2 numerical failure. Failures
print one JSON line prefixed with ``ERROR`` on stderr.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import fabry_perot as fp
from . import lockloop, mechanics, polariton
from . import signal_analysis as sa
from .config import RunConfig, default_config, parse_config
from .csvio import Provenance, ensure_dir, read_table, read_timeseries, write_metrics, write_table, write_timeseries
from .errors import NumericalError, ValidationError
from .timeseries import METER, TRANSMISSION, TimeSeries

COMMANDS = ("synth", "convert", "lock", "analyze", "fit-finesse", "fit-polariton", "report")

# child streams of the run seed
_SYNTH, _SENSOR, _FIT = range(3)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValidationError(f"{message}\n{self.format_usage().strip()}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cryocavity", description="Open-cavity vibration and polariton toolkit")
    p.add_argument("command", help=f"one of: {', '.join(COMMANDS)}")
    p.add_argument("--config", help="configuration file ([section] / key = value)")
    p.add_argument("--seed", type=int, help="override [run] seed")
    p.add_argument("--out", help="output directory (overrides [run] out)")
    p.add_argument("--parallel", type=int, default=1, help="worker processes for Monte-Carlo fits")
    return p


def _child_seed(seed: int, stream: int) -> int:
    return int(np.random.SeedSequence(seed).spawn(3)[stream].generate_state(1)[0])


def _trial_seeds(seed: int, n: int) -> list[int]:
    parent = np.random.SeedSequence(seed).spawn(3)[_FIT]
    return [int(c.generate_state(1)[0]) for c in parent.spawn(n)]


class Run:
    def __init__(self, command: str, cfg: RunConfig, seed: int, out: str, parallel: int):
        self.command = command
        self.cfg = cfg
        self.seed = seed
        self.out = ensure_dir(out)
        self.parallel = max(1, parallel)
        self.prov = Provenance(command, cfg.digest(), seed)

    def path(self, name: str) -> str:
        return os.path.join(self.out, name)

    def config_echo(self) -> list[str]:
        return ["resolved configuration:"] + self.cfg.serialize().splitlines()

    def metrics(self, name: str, values: dict) -> None:
        write_metrics(self.path(name), values, self.prov, self.config_echo())

    # building blocks -----------------------------------------------------

    def cold_plate(self) -> TimeSeries:
        k = self.cfg["kicks"]
        recipe = self.cfg.recipe(_child_seed(self.seed, _SYNTH))
        return mechanics.kick_train(recipe, k["duration_s"], k["dt_s"])

    def cavity_noise(self, cold: TimeSeries) -> TimeSeries:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            return mechanics.cavity_noise(
                cold, self.cfg.spring_stage(), self.cfg.fiber_stack(), self.cfg.mirror_stack()
            )

    def disturbance(self, path: str | None) -> TimeSeries:
        if path:
            trace = read_timeseries(path)
            trace.require_unit(METER)
            return trace
        return self.cavity_noise(self.cold_plate())

    def locked(self, disturbance: TimeSeries) -> lockloop.LockResult:
        return lockloop.simulate_lock(
            disturbance, self.cfg.geometry(), self.cfg.lock_config(), seed=_child_seed(self.seed, _SENSOR)
        )

    def analysis_outputs(self, trace: TimeSeries, prefix: str = "") -> dict:
        a = self.cfg["analysis"]
        grid = sa.log_bandwidth_grid(trace)
        curve = sa.rms_vs_bandwidth(trace, grid)
        write_table(self.path(f"{prefix}rms_vs_bandwidth.csv"), {"bandwidth_hz": curve.bandwidths_hz, "rms_m": curve.rms_m}, self.prov)
        spec = sa.amplitude_spectrum(trace, a["resolution_hz"])
        write_table(self.path(f"{prefix}spectrum.csv"), {"frequency_hz": spec.frequencies_hz, "amplitude_m": spec.amplitudes_m}, self.prov)
        centers, counts = sa.occurrence_histogram(trace, a["histogram_bin_m"])
        write_table(self.path(f"{prefix}histogram.csv"), {"center_m": centers, "count": counts}, self.prov, ["%.17g", "%d"])
        return {
            "rms_m": sa.rms(trace),
            "peak_to_peak_m": sa.peak_to_peak(trace, a["window_s"]),
            f"counts_beyond_{a['tail_threshold_m']:.3g}_m": sa.counts_beyond(trace, a["tail_threshold_m"]),
            "samples": len(trace),
            "bandwidth_hz": trace.nyquist_hz,
        }

    # commands ------------------------------------------------------------

    def synth(self) -> None:
        cold = self.cold_plate()
        noise = self.cavity_noise(cold)
        write_timeseries(cold, self.path("cold_plate.csv"), self.prov)
        write_timeseries(noise, self.path("cavity_noise.csv"), self.prov)
        self.metrics("synth_metrics.txt", {
            "cold_plate_rms_m": sa.rms(cold),
            "cold_plate_peak_to_peak_m": sa.peak_to_peak(cold),
            "cavity_rms_m": sa.rms(noise),
            "cavity_peak_to_peak_m": sa.peak_to_peak(noise),
            "spring_stage_resonance_hz": self.cfg.spring_stage().resonance_hz,
        })

    def convert(self) -> None:
        c = self.cfg["convert"]
        if not c["input"]:
            raise ValidationError("[convert] input is required for the convert command", key="input")
        trace = read_timeseries(c["input"])
        geom = self.cfg.geometry()
        lock = fp.find_lock_point(geom, self.cfg["lock"]["side"])
        if trace.unit == TRANSMISSION:
            inv = fp.transmission_to_displacement(trace, geom, lock, (c["band_low"], c["band_high"]))
            write_timeseries(inv.displacement, self.path("displacement.csv"), self.prov)
            self.metrics("convert_metrics.txt", {
                "direction": "transmission->displacement",
                "lock_offset_m": lock.offset_m,
                "lock_transmission": lock.transmission_at_point,
                "lock_slope_per_m": lock.slope_per_m,
                "out_of_band_samples": inv.n_out_of_band,
                "samples": len(trace),
            })
        else:
            out = fp.displacement_to_transmission(trace, geom, lock)
            write_timeseries(out, self.path("transmission.csv"), self.prov)
            self.metrics("convert_metrics.txt", {
                "direction": "displacement->transmission",
                "lock_offset_m": lock.offset_m,
                "lock_transmission": lock.transmission_at_point,
                "lock_slope_per_m": lock.slope_per_m,
                "samples": len(trace),
            })

    def lock(self) -> None:
        disturbance = self.disturbance(self.cfg["lock"]["input"])
        res = self.locked(disturbance)
        write_timeseries(res.residual, self.path("residual.csv"), self.prov)
        write_timeseries(res.actuator, self.path("actuator.csv"), self.prov)
        lc = self.cfg.lock_config()
        self.metrics("lock_metrics.txt", {
            "unlocked_rms_m": sa.rms(disturbance),
            "locked_rms_m": sa.rms(res.residual),
            "unity_gain_hz": lockloop.unity_gain_frequency(lc),
            "phase_margin_deg": lockloop.phase_margin_deg(lc),
            "kp": lc.kp,
            "ki": lc.ki,
        })

    def analyze(self) -> None:
        trace = self.disturbance(self.cfg["analysis"]["input"])
        self.metrics("metrics.txt", self.analysis_outputs(trace))

    def fit_finesse(self) -> None:
        f = self.cfg["fit_finesse"]
        geom = self.cfg.geometry()
        if f["input"]:
            table = _require_columns(f["input"], ("z_m", "transmission"), ("z_m", "transmission"))
            fit = fp.fit_resonance(table["z_m"], table["transmission"], geom.wavelength_m)
            fits = [fit]
        else:
            seeds = _trial_seeds(self.seed, f["trials"])
            jobs = [(geom, f["samples"], f["span_linewidths"], f["noise"], s) for s in seeds]
            fits = self._map(_finesse_trial, jobs)
        finesse = np.array([x.finesse for x in fits])
        if len(fits) > 1:
            write_table(self.path("finesse_trials.csv"), {
                "trial": np.arange(len(fits)),
                "finesse": finesse,
                "peak_transmission": [x.peak_transmission for x in fits],
                "resonance_length_m": [x.resonance_length_m for x in fits],
                "rms_residual": [x.rms_residual for x in fits],
            }, self.prov, ["%d", "%.17g", "%.17g", "%.17g", "%.17g"])
        first = fits[0]
        self.metrics("finesse_fit.txt", {
            "trials": len(fits),
            "finesse": float(finesse.mean()),
            "finesse_std": float(finesse.std()),
            "peak_transmission": first.peak_transmission,
            "resonance_length_m": first.resonance_length_m,
            "spatial_linewidth_m": fp.finesse_to_spatial_linewidth(float(finesse.mean()), geom.wavelength_m),
            "rms_residual": first.rms_residual,
        })

    def fit_polariton(self) -> None:
        p = self.cfg["polariton"]
        model = self.cfg.polariton_model()
        if p["input"]:
            table = _require_columns(p["input"], ("voltage_v", "energy_mev", "branch"), ("voltage_v", "energy_mev"))
            fits = [polariton.fit_avoided_crossing(
                table["voltage_v"], table["energy_mev"], list(table["branch"]),
                model.cavity_linewidth_mev, model.exciton_linewidth_mev, model.exciton_energy_mev,
            )]
        else:
            seeds = _trial_seeds(self.seed, p["trials"])
            jobs = [(model, self.cfg.calibration(), p["detuning_span_mev"], p["n_detunings"], p["noise_mev"], s) for s in seeds]
            fits = self._map(_polariton_trial, jobs)
        g = np.array([x.coupling_mev for x in fits])
        slope = np.array([x.calibration.slope_mev_per_volt for x in fits])
        if len(fits) > 1:
            write_table(self.path("polariton_trials.csv"), {
                "trial": np.arange(len(fits)),
                "coupling_mev": g,
                "intercept_mev": [x.calibration.intercept_mev for x in fits],
                "slope_mev_per_volt": slope,
                "rms_residual_mev": [x.rms_residual_mev for x in fits],
            }, self.prov, ["%d", "%.17g", "%.17g", "%.17g", "%.17g"])
        mean_fit = polariton.CrossingFit(
            float(g.mean()),
            polariton.DetuningCalibration(float(np.mean([x.calibration.intercept_mev for x in fits])), float(slope.mean())),
            float(np.mean([x.rms_residual_mev for x in fits])),
            model.cavity_linewidth_mev,
            model.exciton_linewidth_mev,
            model.exciton_energy_mev,
        )
        self.metrics("polariton_fit.txt", {
            "trials": len(fits),
            "coupling_mev": mean_fit.coupling_mev,
            "coupling_std_mev": float(g.std()),
            "splitting_mev": mean_fit.splitting_mev,
            "cooperativity": mean_fit.cooperativity,
            "calibration_intercept_mev": mean_fit.calibration.intercept_mev,
            "calibration_slope_mev_per_volt": mean_fit.calibration.slope_mev_per_volt,
            "rms_residual_mev": mean_fit.rms_residual_mev,
        })

    def report(self) -> None:
        geom = self.cfg.geometry()
        cold = self.cold_plate()
        unlocked = self.cavity_noise(cold)
        res = self.locked(unlocked)
        locked = res.residual
        write_timeseries(cold, self.path("cold_plate.csv"), self.prov)
        write_timeseries(unlocked, self.path("unlocked.csv"), self.prov)
        write_timeseries(locked, self.path("locked.csv"), self.prov)
        m_unlocked = self.analysis_outputs(unlocked, "unlocked_")
        m_locked = self.analysis_outputs(locked, "locked_")
        thr = self.cfg["analysis"]["tail_threshold_m"]
        lc = self.cfg.lock_config()
        pol = self.cfg.polariton_model()
        s, _ = polariton.normal_mode_splitting(pol, (-10 * max(pol.coupling_mev, 1.0), 10 * max(pol.coupling_mev, 1.0)))
        u_rms, l_rms = m_unlocked["rms_m"], m_locked["rms_m"]
        self.metrics("report.txt", {
            "spatial_linewidth_m": geom.spatial_linewidth_m,
            "on_resonance_length_m": geom.on_resonance_length_m,
            "lock_transmission_fraction": res.lock_point.transmission_at_point / geom.peak_transmission,
            "spring_stage_resonance_hz": self.cfg.spring_stage().resonance_hz,
            "cold_plate_rms_m": sa.rms(cold),
            "cold_plate_peak_to_peak_m": sa.peak_to_peak(cold),
            "unlocked_rms_m": u_rms,
            "unlocked_peak_to_peak_m": m_unlocked["peak_to_peak_m"],
            "locked_rms_m": l_rms,
            "locked_peak_to_peak_m": m_locked["peak_to_peak_m"],
            "locked_to_unlocked_rms_ratio": l_rms / u_rms,
            "reduction_percent": 100.0 * (1.0 - l_rms / u_rms),
            "unlocked_counts_beyond_threshold": sa.counts_beyond(unlocked, thr),
            "locked_counts_beyond_threshold": sa.counts_beyond(locked, thr),
            "tail_threshold_m": thr,
            "unity_gain_hz": lockloop.unity_gain_frequency(lc),
            "phase_margin_deg": lockloop.phase_margin_deg(lc),
            "polariton_splitting_mev": s,
            "cooperativity": polariton.cooperativity(s, pol.cavity_linewidth_mev, pol.exciton_linewidth_mev),
        })

    def _map(self, fn, jobs):
        if self.parallel > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=self.parallel) as pool:
                return list(pool.map(fn, jobs))
        return [fn(j) for j in jobs]

    def execute(self) -> None:
        getattr(self, self.command.replace("-", "_"))()


def _require_columns(path, names, numeric):
    table = read_table(path)
    for col in names:
        if col not in table:
            raise ValidationError(f"{path}: missing column {col!r}", key=col)
    for col in numeric:
        if table[col].dtype == object:
            raise ValidationError(f"{path}: column {col!r} is not numeric", key=col)
    return table


def synthetic_sweep(geom: fp.CavityGeometry, samples: int, span_linewidths: float, noise: float, rng):
    """Transmission sampled across one resonance, with additive Gaussian noise (fraction of T0)."""
    half = 0.5 * span_linewidths * geom.spatial_linewidth_m
    z = geom.on_resonance_length_m + np.linspace(-half, half, samples)
    t = fp.transmission(z, geom)
    if noise > 0:
        t = t + noise * geom.peak_transmission * rng.standard_normal(samples)
    return z, t


def _finesse_trial(job):
    geom, samples, span, noise, seed = job
    z, t = synthetic_sweep(geom, samples, span, noise, np.random.default_rng(seed))
    return fp.fit_resonance(z, t, geom.wavelength_m)


def synthetic_crossing(model, calibration, span_mev, n_detunings, noise_mev, rng):
    detunings = np.linspace(-span_mev, span_mev, n_detunings)
    voltages = calibration.voltage_for(model.exciton_energy_mev + detunings)
    return polariton.synthetic_branch_observations(model, calibration, np.sort(voltages), noise_mev, rng)


def _polariton_trial(job):
    model, calibration, span, n, noise, seed = job
    v, e, labels = synthetic_crossing(model, calibration, span, n, noise, np.random.default_rng(seed))
    return polariton.fit_avoided_crossing(
        v, e, labels, model.cavity_linewidth_mev, model.exciton_linewidth_mev, model.exciton_energy_mev
    )


def _error_line(code: int, kind: str, exc: Exception) -> str:
    payload = {"exit": code, "kind": kind, "message": str(exc).splitlines()[0] if str(exc) else kind}
    for attr in ("key", "line"):
        value = getattr(exc, attr, None)
        if value is not None:
            payload[attr] = value
    return "ERROR " + json.dumps(payload, sort_keys=True)


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command not in COMMANDS:
            raise ValidationError(
                f"unknown command {args.command!r}; expected one of {', '.join(COMMANDS)}\n"
                + parser.format_usage().strip()
            )
        if args.config:
            with open(args.config, encoding="utf-8") as fh:
                cfg = parse_config(fh.read())
        else:
            cfg = default_config()
        seed = cfg["run"]["seed"] if args.seed is None else args.seed
        if seed < 0:
            raise ValidationError("seed must be non-negative", key="seed")
        cfg["run"]["seed"] = seed
        # the output location is not part of the hashed configuration, so the
        # same run written to two directories produces identical files
        out = args.out or cfg["run"]["out"]
        Run(args.command, cfg, seed, out, args.parallel).execute()
    except ValidationError as exc:
        print(str(exc), file=sys.stderr)
        print(_error_line(1, "validation", exc), file=sys.stderr)
        return 1
    except OSError as exc:
        print(_error_line(1, "io", exc), file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(_error_line(2, "numerical", exc), file=sys.stderr)
        return 2
    return 0


def main() -> None:
    sys.exit(run())
