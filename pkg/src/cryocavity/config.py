"""Run configuration: ``[section]`` headers with ``key = value`` lines.

Every key has a type and (except the geometry essentials) a default. Unknown
sections and keys are rejected with the offending line number.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Any, Callable

from . import lockloop, mechanics, polariton
from .errors import ValidationError
from .fabry_perot import ABOVE, BELOW, CavityGeometry

REQUIRED = object()


def _float(text: str) -> float:
    value = float(text)
    if not math.isfinite(value):
        raise ValueError("not finite")
    return value


def _int(text: str) -> int:
    return int(text, 10)


def _optional_float(text: str) -> float | None:
    return None if text.lower() in ("none", "off", "") else _float(text)


def _side(text: str) -> str:
    if text not in (BELOW, ABOVE):
        raise ValueError(f"expected {BELOW!r} or {ABOVE!r}")
    return text


def _triples(text: str) -> tuple[tuple[float, float, float], ...]:
    # "freq:amp:tau, freq:amp:tau"
    out = []
    for item in filter(None, (s.strip() for s in text.split(","))):
        parts = item.split(":")
        if len(parts) != 3:
            raise ValueError(f"expected frequency:amplitude:decay, got {item!r}")
        out.append(tuple(_float(p) for p in parts))
    return tuple(out)


def _pairs(text: str) -> tuple[tuple[float, float], ...]:
    out = []
    for item in filter(None, (s.strip() for s in text.split(","))):
        parts = item.split(":")
        if len(parts) != 2:
            raise ValueError(f"expected frequency:amplitude, got {item!r}")
        out.append(tuple(_float(p) for p in parts))
    return tuple(out)


def _path(text: str) -> str | None:
    return None if text.lower() in ("", "none") else text


def _fmt(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(":".join(repr(float(x)) for x in item) for item in value)
    return str(value)


@dataclass(frozen=True)
class Key:
    parse: Callable[[str], Any]
    default: Any = REQUIRED
    check: Callable[[Any], bool] | None = None
    hint: str = ""


_positive = (lambda v: v > 0, "must be positive")
_nonneg = (lambda v: v >= 0, "must be >= 0")


def _k(parse, default=REQUIRED, rule=None):
    return Key(parse, default, rule[0] if rule else None, rule[1] if rule else "")


_DEFAULT_RECIPE = mechanics.default_cold_plate_recipe()
_LOCK = lockloop.LockConfig()
_POL = polariton.PolaritonModel()

SCHEMA: dict[str, dict[str, Key]] = {
    "geometry": {
        "wavelength_nm": _k(_float, REQUIRED, _positive),
        "finesse": _k(_float, REQUIRED, (lambda v: v >= 1, "must be >= 1")),
        "mode_number": _k(_int, REQUIRED, _positive),
        "peak_transmission": _k(_float, 1.0, (lambda v: 0 < v <= 1, "must lie in (0, 1]")),
    },
    "spring_stage": {
        "spring_constant_n_per_m": _k(_float, mechanics.SPRING_CONSTANT_N_PER_M, _positive),
        "n_springs": _k(_int, mechanics.N_SPRINGS, _positive),
        "payload_kg": _k(_float, mechanics.PAYLOAD_KG, _positive),
        "damping_ratio": _k(_float, mechanics.SPRING_DAMPING_RATIO, _nonneg),
    },
    "fiber_stack": {
        "resonance_hz": _k(_float, mechanics.DEFAULT_FIBER_STACK.resonance_hz, _positive),
        "damping_ratio": _k(_float, mechanics.DEFAULT_FIBER_STACK.damping_ratio, _nonneg),
    },
    "mirror_stack": {
        "resonance_hz": _k(_float, mechanics.DEFAULT_MIRROR_STACK.resonance_hz, _positive),
        "damping_ratio": _k(_float, mechanics.DEFAULT_MIRROR_STACK.damping_ratio, _nonneg),
    },
    "kicks": {
        "period_s": _k(_float, _DEFAULT_RECIPE.period_s, _positive),
        "modes": _k(_triples, tuple((m.frequency_hz, m.amplitude_m, m.decay_time_s) for m in _DEFAULT_RECIPE.modes)),
        "tones": _k(_pairs, tuple((t.frequency_hz, t.amplitude_m) for t in _DEFAULT_RECIPE.tones)),
        "broadband_floor": _k(_float, _DEFAULT_RECIPE.broadband_floor, _nonneg),
        "duration_s": _k(_float, 10.0, _positive),
        "dt_s": _k(_float, 10e-6, _positive),
    },
    "lock": {
        "kp": _k(_float, _LOCK.kp, _nonneg),
        "ki": _k(_float, _LOCK.ki, _nonneg),
        "actuator_cutoff_hz": _k(_float, _LOCK.actuator_cutoff_hz, _positive),
        "notch_hz": _k(_optional_float, None),
        "notch_q": _k(_float, _LOCK.notch_q, _positive),
        "sensor_noise_rms": _k(_float, _LOCK.sensor_noise_rms, _nonneg),
        "side": _k(_side, ABOVE),
        "sample_rate_hz": _k(_float, _LOCK.sample_rate_hz, _positive),
        "input": _k(_path, None),
    },
    "analysis": {
        "input": _k(_path, None),
        "resolution_hz": _k(_float, 1.0, _positive),
        "histogram_bin_m": _k(_float, 10e-12, _positive),
        "window_s": _k(_optional_float, None),
        "tail_threshold_m": _k(_float, 200e-12, _positive),
    },
    "convert": {
        "input": _k(_path, None),
        "band_low": _k(_float, 0.4, _nonneg),
        "band_high": _k(_float, 0.95, _positive),
    },
    "fit_finesse": {
        "input": _k(_path, None),
        "noise": _k(_float, 0.01, _nonneg),
        "samples": _k(_int, 401, (lambda v: v >= 10, "must be >= 10")),
        "span_linewidths": _k(_float, 10.0, _positive),
        "trials": _k(_int, 1, _positive),
    },
    "polariton": {
        "exciton_energy_mev": _k(_float, _POL.exciton_energy_mev),
        "exciton_linewidth_mev": _k(_float, _POL.exciton_linewidth_mev, _positive),
        "cavity_linewidth_mev": _k(_float, _POL.cavity_linewidth_mev, _positive),
        "coupling_mev": _k(_float, _POL.coupling_mev, _nonneg),
        "calibration_intercept_mev": _k(_float, polariton.DEFAULT_CALIBRATION.intercept_mev),
        "calibration_slope_mev_per_volt": _k(
            _float, polariton.DEFAULT_CALIBRATION.slope_mev_per_volt, (lambda v: v != 0, "must be non-zero")
        ),
        "input": _k(_path, None),
        "noise_mev": _k(_float, 0.3, _nonneg),
        "detuning_span_mev": _k(_float, 15.0, _positive),
        "n_detunings": _k(_int, 8, (lambda v: v >= 3, "must be >= 3")),
        "trials": _k(_int, 1, _positive),
    },
    "run": {
        "seed": _k(_int, 0, _nonneg),
        "out": _k(str, "out"),
    },
}


@dataclass
class RunConfig:
    """Typed configuration. ``explicit`` records which sections appeared in the text."""

    sections: dict[str, dict[str, Any]]
    explicit: frozenset[str] = field(default_factory=frozenset)

    def __getitem__(self, section: str) -> dict[str, Any]:
        return self.sections[section]

    def __eq__(self, other):
        return isinstance(other, RunConfig) and self.sections == other.sections

    def has_geometry(self) -> bool:
        return all(v is not None for v in self.sections["geometry"].values())

    def require(self, *sections: str) -> None:
        for name in sections:
            missing = [k for k, v in self.sections[name].items() if v is None and SCHEMA[name][k].default is REQUIRED]
            if missing:
                raise ValidationError(f"[{name}] is missing required key {missing[0]!r}", key=missing[0])

    # typed views -----------------------------------------------------------

    def geometry(self) -> CavityGeometry:
        self.require("geometry")
        g = self.sections["geometry"]
        return CavityGeometry(g["wavelength_nm"] * 1e-9, g["finesse"], g["mode_number"], g["peak_transmission"])

    def spring_stage(self) -> mechanics.OscillatorStage:
        s = self.sections["spring_stage"]
        return mechanics.stage_from_spring(s["spring_constant_n_per_m"], s["n_springs"], s["payload_kg"], s["damping_ratio"])

    def fiber_stack(self) -> mechanics.OscillatorStage:
        s = self.sections["fiber_stack"]
        return mechanics.OscillatorStage(s["resonance_hz"], s["damping_ratio"], "fiber stack")

    def mirror_stack(self) -> mechanics.OscillatorStage:
        s = self.sections["mirror_stack"]
        return mechanics.OscillatorStage(s["resonance_hz"], s["damping_ratio"], "mirror stack")

    def recipe(self, seed: int) -> mechanics.KickRecipe:
        k = self.sections["kicks"]
        return mechanics.KickRecipe(k["period_s"], k["modes"], k["tones"], k["broadband_floor"], seed)

    def lock_config(self) -> lockloop.LockConfig:
        s = self.sections["lock"]
        return lockloop.LockConfig(
            kp=s["kp"],
            ki=s["ki"],
            actuator_cutoff_hz=s["actuator_cutoff_hz"],
            notch_hz=s["notch_hz"],
            notch_q=s["notch_q"],
            sensor_noise_rms=s["sensor_noise_rms"],
            side=s["side"],
            sample_rate_hz=s["sample_rate_hz"],
        )

    def polariton_model(self) -> polariton.PolaritonModel:
        p = self.sections["polariton"]
        return polariton.PolaritonModel(
            p["exciton_energy_mev"], p["exciton_linewidth_mev"], p["cavity_linewidth_mev"], p["coupling_mev"]
        )

    def calibration(self) -> polariton.DetuningCalibration:
        p = self.sections["polariton"]
        return polariton.DetuningCalibration(p["calibration_intercept_mev"], p["calibration_slope_mev_per_volt"])

    # provenance ------------------------------------------------------------

    def serialize(self) -> str:
        lines = []
        for name, keys in SCHEMA.items():
            lines.append(f"[{name}]")
            for key in keys:
                value = self.sections[name][key]
                if value is None and keys[key].default is REQUIRED:
                    continue
                lines.append(f"{key} = {_fmt(value)}")
            lines.append("")
        return "\n".join(lines)

    def digest(self) -> str:
        return hashlib.sha256(self.serialize().encode()).hexdigest()


def default_sections() -> dict[str, dict[str, Any]]:
    return {
        name: {k: (None if key.default is REQUIRED else key.default) for k, key in keys.items()}
        for name, keys in SCHEMA.items()
    }


def parse_config(text: str) -> RunConfig:
    sections = default_sections()
    seen: set[tuple[str, str]] = set()
    explicit = set()
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ValidationError(f"line {lineno}: malformed section header {raw.strip()!r}", line=lineno)
            current = line[1:-1].strip()
            if current not in SCHEMA:
                raise ValidationError(f"line {lineno}: unknown section [{current}]", key=current, line=lineno)
            explicit.add(current)
            continue
        if "=" not in line:
            raise ValidationError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}", line=lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if current is None:
            raise ValidationError(f"line {lineno}: key {key!r} appears before any [section]", key=key, line=lineno)
        entry = SCHEMA[current].get(key)
        if entry is None:
            raise ValidationError(f"line {lineno}: unknown key {key!r} in [{current}]", key=key, line=lineno)
        if (current, key) in seen:
            raise ValidationError(f"line {lineno}: duplicate key {key!r} in [{current}]", key=key, line=lineno)
        seen.add((current, key))
        try:
            parsed = entry.parse(value)
        except ValueError as exc:
            raise ValidationError(
                f"line {lineno}: cannot parse {key} = {value!r}: {exc}", key=key, line=lineno
            ) from None
        if entry.check is not None and parsed is not None and not entry.check(parsed):
            raise ValidationError(f"line {lineno}: {key} = {value} {entry.hint}", key=key, line=lineno)
        sections[current][key] = parsed

    cfg = RunConfig(sections, frozenset(explicit))
    if "geometry" in explicit:
        cfg.require("geometry")
    return cfg


DEFAULT_CONFIG_TEXT = """\
# 780 nm laser, finesse 110, mode number 13 (L about 5 um)
[geometry]
wavelength_nm = 780
finesse = 110
mode_number = 13
"""


def default_config() -> RunConfig:
    return parse_config(DEFAULT_CONFIG_TEXT)
