"""Exciton-photon coupled-oscillator model.

Energies are in meV. Linewidths are full widths at half maximum; they enter
the coupling matrix as half-width imaginary parts:

    [[E_C - i kappa/2, g        ],
     [g,               E_X - i Gamma/2]]

With this convention the branches reduce to the bare cavity and exciton at
g = 0, and the branch separation on resonance is 2 g when kappa = Gamma.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import curve_fit, least_squares, minimize_scalar

from .errors import FitError, ValidationError

UPPER = "upper"
LOWER = "lower"

# Monolayer WSe2 in the open cavity at 30 K.
EXCITON_ENERGY_MEV = 1725.0
EXCITON_LINEWIDTH_MEV = 6.1
CAVITY_LINEWIDTH_MEV = 6.3
COUPLING_MEV = 2.75


@dataclass(frozen=True)
class PolaritonModel:
    exciton_energy_mev: float = EXCITON_ENERGY_MEV
    exciton_linewidth_mev: float = EXCITON_LINEWIDTH_MEV
    cavity_linewidth_mev: float = CAVITY_LINEWIDTH_MEV
    coupling_mev: float = COUPLING_MEV
    detuning_mev: float = 0.0

    def __post_init__(self):
        if not self.exciton_linewidth_mev > 0:
            raise ValidationError("exciton linewidth must be positive", key="exciton_linewidth_mev")
        if not self.cavity_linewidth_mev > 0:
            raise ValidationError("cavity linewidth must be positive", key="cavity_linewidth_mev")
        if not self.coupling_mev >= 0:
            raise ValidationError("coupling must be >= 0", key="coupling_mev")

    @property
    def cavity_energy_mev(self) -> float:
        return self.exciton_energy_mev + self.detuning_mev

    def at_detuning(self, detuning_mev: float) -> "PolaritonModel":
        return replace(self, detuning_mev=detuning_mev)

    def matrix(self) -> np.ndarray:
        return np.array(
            [
                [self.cavity_energy_mev - 0.5j * self.cavity_linewidth_mev, self.coupling_mev],
                [self.coupling_mev, self.exciton_energy_mev - 0.5j * self.exciton_linewidth_mev],
            ]
        )


@dataclass(frozen=True)
class DetuningCalibration:
    """Affine map from piezo voltage to cavity photon energy."""

    intercept_mev: float
    slope_mev_per_volt: float

    def __post_init__(self):
        if self.slope_mev_per_volt == 0 or not math.isfinite(self.slope_mev_per_volt):
            raise ValidationError("calibration slope must be finite and non-zero", key="slope_mev_per_volt")

    def cavity_energy(self, voltage):
        return self.intercept_mev + self.slope_mev_per_volt * np.asarray(voltage, dtype=float)

    def voltage_for(self, cavity_energy_mev):
        return (np.asarray(cavity_energy_mev, dtype=float) - self.intercept_mev) / self.slope_mev_per_volt


# Cavity at 1690 meV near 15 V, crossing the exciton near 45 V.
DEFAULT_CALIBRATION = DetuningCalibration(1672.5, 35.0 / 30.0)


def polariton_eigenenergies(model: PolaritonModel) -> tuple[complex, complex]:
    """Complex (upper, lower) polariton energies; upper has the larger real part."""
    ev = np.linalg.eigvals(model.matrix())
    ev = sorted(ev, key=lambda e: e.real, reverse=True)
    return complex(ev[0]), complex(ev[1])


def branch_energies(cavity_energy_mev, exciton_energy_mev, coupling_mev, kappa_mev, gamma_mev):
    """Vectorized closed-form eigenvalues of the coupling matrix.

    Returns complex arrays (upper, lower) sorted by real part.
    """
    ec = np.asarray(cavity_energy_mev, dtype=float) - 0.5j * kappa_mev
    ex = exciton_energy_mev - 0.5j * gamma_mev
    mean = 0.5 * (ec + ex)
    root = np.sqrt(coupling_mev**2 + (0.5 * (ec - ex)) ** 2)
    # principal sqrt has Re >= 0, so mean + root is the upper branch
    return mean + root, mean - root


def splitting(model: PolaritonModel) -> float:
    up, lo = polariton_eigenenergies(model)
    return up.real - lo.real


def normal_mode_splitting(model: PolaritonModel, detuning_range: tuple[float, float]) -> tuple[float, float]:
    """Minimal branch separation over detuning, and the detuning where it occurs."""
    lo, hi = detuning_range
    if not lo < 0 < hi:
        raise ValidationError(f"detuning range {detuning_range} must bracket zero")

    def sep(delta):
        up, low = branch_energies(
            model.exciton_energy_mev + delta,
            model.exciton_energy_mev,
            model.coupling_mev,
            model.cavity_linewidth_mev,
            model.exciton_linewidth_mev,
        )
        return float(up.real - low.real)

    res = minimize_scalar(sep, bounds=(lo, hi), method="bounded", options={"xatol": 1e-10})
    span = hi - lo
    if not res.success or min(res.x - lo, hi - res.x) < 1e-6 * span:
        raise FitError(
            f"no interior minimum of the splitting in {detuning_range}",
            best={"splitting_mev": float(res.fun), "detuning_mev": float(res.x)},
        )
    return float(res.fun), float(res.x)


def cooperativity(splitting_mev: float, kappa_mev: float, gamma_mev: float) -> float:
    """2 S^2 / (kappa Gamma)."""
    if splitting_mev < 0 or not kappa_mev > 0 or not gamma_mev > 0:
        raise ValidationError("cooperativity needs S >= 0 and positive linewidths")
    return 2.0 * splitting_mev**2 / (kappa_mev * gamma_mev)


def hopfield_photon_fractions(detuning_mev, coupling_mev) -> tuple[np.ndarray, np.ndarray]:
    """Photonic weight of the (upper, lower) branch."""
    delta = np.asarray(detuning_mev, dtype=float)
    norm = np.hypot(delta, 2.0 * coupling_mev)
    x = np.divide(delta, norm, out=np.zeros_like(norm), where=norm > 0)
    return 0.5 * (1.0 + x), 0.5 * (1.0 - x)


def lorentzian(energy, center, fwhm):
    half = 0.5 * fwhm
    return half**2 / ((energy - center) ** 2 + half**2)


def _check_grid(grid, name):
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2 or np.any(np.diff(grid) <= 0):
        raise ValidationError(f"{name} grid must be ascending with at least 2 points")
    return grid


def synthesize_transmission_map(
    model: PolaritonModel,
    calibration: DetuningCalibration,
    voltages,
    energies,
) -> np.ndarray:
    """Transmission versus (voltage, photon energy), shape ``(len(voltages), len(energies))``.

    Each column is two peak-normalized Lorentzians at the branch energies with
    FWHM ``-2 Im(E)``, weighted by the branch photon fractions.
    """
    voltages = _check_grid(voltages, "voltage")
    energies = _check_grid(energies, "energy")
    ec = calibration.cavity_energy(voltages)
    up, lo = branch_energies(
        ec, model.exciton_energy_mev, model.coupling_mev, model.cavity_linewidth_mev, model.exciton_linewidth_mev
    )
    w_up, w_lo = hopfield_photon_fractions(ec - model.exciton_energy_mev, model.coupling_mev)
    e = energies[None, :]
    return (
        w_up[:, None] * lorentzian(e, up.real[:, None], -2.0 * up.imag[:, None])
        + w_lo[:, None] * lorentzian(e, lo.real[:, None], -2.0 * lo.imag[:, None])
    )


def _two_lorentzians(e, a1, c1, w1, a2, c2, w2):
    return a1 * lorentzian(e, c1, w1) + a2 * lorentzian(e, c2, w2)


def extract_peaks(energies, spectrum, guess: tuple[float, float], width_guess: float) -> tuple[float, float]:
    """Centers of a two-Lorentzian fit to one spectrum, returned as (upper, lower).

    Overlapping lines pull the raw maxima towards each other, so the centers
    come from the fit, not from the local maxima.
    """
    energies = np.asarray(energies, dtype=float)
    spectrum = np.asarray(spectrum, dtype=float)
    hi, lo = max(guess), min(guess)
    peak = float(spectrum.max())
    p0 = [peak, hi, width_guess, peak, lo, width_guess]
    popt, _ = curve_fit(_two_lorentzians, energies, spectrum, p0=p0, maxfev=20000)
    c1, c2 = popt[1], popt[4]
    return (max(c1, c2), min(c1, c2))


@dataclass(frozen=True)
class CrossingFit:
    coupling_mev: float
    calibration: DetuningCalibration
    rms_residual_mev: float
    kappa_mev: float
    gamma_mev: float
    exciton_energy_mev: float
    nfev: int = 0

    @property
    def splitting_mev(self) -> float:
        model = PolaritonModel(
            self.exciton_energy_mev, self.gamma_mev, self.kappa_mev, self.coupling_mev, 0.0
        )
        return splitting(model)

    @property
    def cooperativity(self) -> float:
        return cooperativity(self.splitting_mev, self.kappa_mev, self.gamma_mev)


def _parse_branch(label) -> int:
    text = str(label).strip().lower()
    if text in ("upper", "up", "+", "u", "1"):
        return 1
    if text in ("lower", "low", "lo", "-", "l", "0", "-1"):
        return 0
    raise ValidationError(f"unknown branch label {label!r}; use 'upper' or 'lower'")


def _initial_crossing_guess(v, e, upper, exciton):
    # Where both branches are seen at one voltage, Re(E+) + Re(E-) = E_C + E_X
    # and (E+ - E-)^2 ~ 4 g^2 + delta^2.
    pairs = {}
    for vi, ei, ui in zip(v, e, upper):
        pairs.setdefault(vi, {})[ui] = ei
    both = [(vi, d[True], d[False]) for vi, d in pairs.items() if True in d and False in d]
    if len(both) >= 2:
        vv = np.array([b[0] for b in both])
        ec = np.array([b[1] + b[2] - exciton for b in both])
        slope, intercept = np.polyfit(vv, ec, 1)
        sep2 = np.array([(b[1] - b[2]) ** 2 for b in both]) - (ec - exciton) ** 2
        g = 0.5 * math.sqrt(max(float(np.median(sep2)), 0.01))
        return g, intercept, slope
    # Fall back to treating the branch farther from the exciton as photon-like.
    slope, intercept = np.polyfit(v, e, 1)
    return 1.0, intercept, slope


def fit_avoided_crossing(
    voltages,
    peak_energies,
    branches,
    kappa_mev: float,
    gamma_mev: float,
    exciton_energy_mev: float,
    max_nfev: int = 500,
) -> CrossingFit:
    """Least-squares fit of coupling g and the voltage calibration to branch peak
    energies, with the linewidths and exciton energy held fixed."""
    v = np.asarray(voltages, dtype=float)
    e = np.asarray(peak_energies, dtype=float)
    upper = np.array([_parse_branch(b) == 1 for b in branches], dtype=bool)
    if not (v.shape == e.shape == upper.shape) or v.ndim != 1:
        raise ValidationError("voltages, energies and branch labels must have equal length")
    if v.size < 6:
        raise ValidationError("need at least 6 observations to fit an avoided crossing")
    if not (kappa_mev > 0 and gamma_mev > 0):
        raise ValidationError("linewidths must be positive")
    if np.ptp(v) == 0:
        raise ValidationError("observations must span more than one voltage")

    g0, c0, c1 = _initial_crossing_guess(v, e, upper, exciton_energy_mev)
    if c1 == 0:
        c1 = 1e-3

    def model(p):
        g, intercept, slope = p
        up, lo = branch_energies(intercept + slope * v, exciton_energy_mev, g, kappa_mev, gamma_mev)
        return np.where(upper, up.real, lo.real)

    def residual(p):
        return model(p) - e

    sol = least_squares(
        residual,
        np.array([abs(g0), c0, c1]),
        x_scale=[1.0, 10.0, abs(c1)],
        max_nfev=max_nfev,
        xtol=1e-12,
        ftol=1e-12,
    )
    g, intercept, slope = sol.x
    g = abs(g)
    rms = float(np.sqrt(np.mean(sol.fun**2)))
    best = {"coupling_mev": g, "intercept_mev": intercept, "slope_mev_per_volt": slope, "rms_residual_mev": rms}
    if sol.status <= 0 or slope == 0:
        raise FitError(f"avoided-crossing fit did not converge: {sol.message}", best=best)

    detuning = intercept + slope * v - exciton_energy_mev
    if np.all(detuning > 0) or np.all(detuning < 0):
        warnings.warn(
            "all observations lie on one side of the crossing; g and the calibration are poorly constrained",
            RuntimeWarning,
            stacklevel=2,
        )
    return CrossingFit(
        g,
        DetuningCalibration(float(intercept), float(slope)),
        rms,
        kappa_mev,
        gamma_mev,
        exciton_energy_mev,
        int(sol.nfev),
    )


def synthetic_branch_observations(
    model: PolaritonModel,
    calibration: DetuningCalibration,
    voltages,
    noise_mev: float = 0.0,
    rng: np.random.Generator | None = None,
):
    """Upper and lower peak energies at each voltage, optionally with Gaussian noise.

    Returns (voltages, energies, branch labels), upper first at each voltage.
    """
    voltages = np.asarray(voltages, dtype=float)
    up, lo = branch_energies(
        calibration.cavity_energy(voltages),
        model.exciton_energy_mev,
        model.coupling_mev,
        model.cavity_linewidth_mev,
        model.exciton_linewidth_mev,
    )
    v = np.repeat(voltages, 2)
    e = np.column_stack([up.real, lo.real]).ravel()
    labels = [UPPER, LOWER] * voltages.size
    if noise_mev > 0:
        rng = rng or np.random.default_rng(0)
        e = e + noise_mev * rng.standard_normal(e.size)
    return v, e, labels
