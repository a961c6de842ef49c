"""Lumped-element resonator model, hanger transmission, and sweep fitting.

Conventions: resonant frequencies ``f0`` and linewidths ``kappa_i`` /
``kappa_e`` are ordinary (non-angular) frequencies in Hz, i.e. the values a
network analyzer reports. In those units the side-coupled transmission is

    S21(f) = 1 - kappa_e / (kappa_e + kappa_i + 2j (f - f0))

because the 2*pi conversion to angular units cancels between numerator and
denominator. At resonance S21 = kappa_i / (kappa_i + kappa_e), real.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.optimize import least_squares

from .errors import FitFailedError, InvalidElementError, InvalidShiftError, NoResonanceError


@dataclass
class MkidParams:
    """Resonator triple (f0, kappa_i, kappa_e), all in Hz."""

    f0: float
    kappa_i: float
    kappa_e: float
    label: str = ""

    def __post_init__(self):
        if not self.f0 > 0:
            raise ValueError("f0 must be positive")
        if self.kappa_i < 0:
            raise ValueError("kappa_i must be non-negative")
        if not self.kappa_e > 0:
            raise ValueError("kappa_e must be positive")

    @property
    def kappa_total(self) -> float:
        return self.kappa_i + self.kappa_e


@dataclass
class LumpedElements:
    """Capacitance plus geometric and kinetic inductance, SI units."""

    C: float
    L_g: float
    L_k: float

    def __post_init__(self):
        if not (self.C > 0 and self.L_g > 0 and self.L_k > 0):
            raise InvalidElementError(
                f"all lumped elements must be strictly positive, got C={self.C}, L_g={self.L_g}, L_k={self.L_k}"
            )

    @property
    def kinetic_fraction(self) -> float:
        """Share of the total inductance carried by the kinetic term."""
        return self.L_k / (self.L_g + self.L_k)


def resonant_frequency(elements: LumpedElements) -> float:
    """f0 = 1 / (2 pi sqrt(C (L_g + L_k))) in Hz."""
    return 1.0 / (2.0 * np.pi * np.sqrt(elements.C * (elements.L_g + elements.L_k)))


def shifted_frequency(elements: LumpedElements, delta_lk_fraction: float) -> float:
    """Resonant frequency after scaling L_k by (1 + delta).

    Positive delta models pair breaking (more kinetic inductance), which
    always lowers the resonant frequency. To first order the relative shift
    is -(alpha/2) * delta with alpha the kinetic fraction.
    """
    if delta_lk_fraction <= -1.0:
        raise InvalidShiftError(f"kinetic-inductance scale 1+delta must stay positive, got delta={delta_lk_fraction}")
    shifted = replace(elements, L_k=elements.L_k * (1.0 + delta_lk_fraction))
    return resonant_frequency(shifted)


def total_inductance_for_frequency(C: float, f0: float) -> float:
    """Inverse of resonant_frequency: L_g + L_k producing f0 at capacitance C."""
    if not (C > 0 and f0 > 0):
        raise InvalidElementError("C and f0 must be positive")
    omega = 2.0 * np.pi * f0
    return 1.0 / (C * omega * omega)


def s21(f, params: MkidParams):
    """Complex hanger transmission at probe frequency f (Hz; scalar or array)."""
    f = np.asarray(f, dtype=float)
    val = 1.0 - params.kappa_e / (params.kappa_e + params.kappa_i + 2j * (f - params.f0))
    if np.ndim(val) == 0:
        return complex(val)
    return val


def resonance_circle(params: MkidParams) -> tuple[complex, float]:
    """Center and radius of the circle S21 traces in the complex plane."""
    diameter = params.kappa_e / params.kappa_total
    return complex(1.0 - 0.5 * diameter), 0.5 * diameter


def synthesize_sweep(
    params: MkidParams,
    n_points: int = 401,
    span_linewidths: float = 10.0,
    noise_sigma: float = 0.0,
    rng: np.random.Generator | None = None,
):
    """Model sweep around the dip, optionally with complex Gaussian noise.

    Returns (freqs, values). The span is ``span_linewidths`` total
    linewidths centered on f0.
    """
    half = 0.5 * span_linewidths * params.kappa_total
    freqs = np.linspace(params.f0 - half, params.f0 + half, int(n_points))
    values = s21(freqs, params)
    if noise_sigma > 0.0:
        if rng is None:
            rng = np.random.default_rng(0)
        values = values + noise_sigma * rng.standard_normal(freqs.size) + 1j * noise_sigma * rng.standard_normal(freqs.size)
    return freqs, values


def _width_at_half_depth(freqs, mag2):
    """Full width of the |S21|^2 dip at half depth; equals kappa_total for model data."""
    level = 0.5 * (mag2.max() + mag2.min())
    below = np.flatnonzero(mag2 < level)
    if below.size < 3:
        return (freqs[-1] - freqs[0]) / 10.0
    return float(freqs[below[-1]] - freqs[below[0]])


def fit_s21_sweep(freqs, data, fit_delay: bool = False, label: str = "", max_nfev: int = 2000):
    """Least-squares estimate of (f0, kappa_i, kappa_e) from a complex sweep.

    Residuals are the stacked real and imaginary parts of (model - data).
    The starting point puts f0 at the magnitude minimum and reads the total
    linewidth off the half-depth width of the dip. With ``fit_delay`` a cable
    delay and phase offset are fit alongside (off by default; synthetic data
    has neither).

    Returns (MkidParams, residual_norm). Raises NoResonanceError when no dip
    is present (min |S21| > 0.99) and FitFailedError (carrying the best
    parameters seen) when the optimizer does not converge.
    """
    freqs = np.asarray(freqs, dtype=float)
    data = np.asarray(data, dtype=complex)
    if freqs.size != data.size:
        raise ValueError("freqs and data must have equal length")
    if freqs.size < 20:
        raise ValueError(f"need at least 20 sweep points, got {freqs.size}")

    mag = np.abs(data)
    if mag.min() > 0.99:
        raise NoResonanceError(f"no resonance dip found (min |S21| = {mag.min():.4f})")

    f0_guess = float(freqs[np.argmin(mag)])
    ktot_guess = _width_at_half_depth(freqs, mag * mag)
    if ktot_guess <= 0:
        ktot_guess = (freqs[-1] - freqs[0]) / 10.0
    depth = 1.0 - float(mag.min())
    ke_guess = float(np.clip(depth * ktot_guess, 1e-6 * ktot_guess, ktot_guess))
    ki_guess = max(ktot_guess - ke_guess, 0.0)

    span = float(freqs[-1] - freqs[0])

    if fit_delay:
        f_ref = freqs[0]  # delay phase measured from the sweep start

        def residuals(x):
            f0, ki, ke, tau, phi = x
            model = (1.0 - ke / (ke + ki + 2j * (freqs - f0))) * np.exp(
                1j * (2.0 * np.pi * (freqs - f_ref) * tau + phi)
            )
            r = model - data
            return np.concatenate([r.real, r.imag])

        x0 = [f0_guess, ki_guess, ke_guess, 0.0, 0.0]
        lower = [freqs[0], 0.0, 1e-9 * ktot_guess, -10.0 / span, -np.pi]
        upper = [freqs[-1], np.inf, np.inf, 10.0 / span, np.pi]
        x_scale = [ktot_guess, ktot_guess, ktot_guess, 1.0 / span, 1.0]
    else:

        def residuals(x):
            f0, ki, ke = x
            model = 1.0 - ke / (ke + ki + 2j * (freqs - f0))
            r = model - data
            return np.concatenate([r.real, r.imag])

        x0 = [f0_guess, ki_guess, ke_guess]
        lower = [freqs[0], 0.0, 1e-9 * ktot_guess]
        upper = [freqs[-1], np.inf, np.inf]
        x_scale = [ktot_guess, ktot_guess, ktot_guess]

    result = least_squares(
        residuals,
        x0=x0,
        bounds=(lower, upper),
        x_scale=x_scale,
        xtol=1e-14,
        ftol=1e-14,
        gtol=1e-14,
        max_nfev=max_nfev,
    )
    params = MkidParams(f0=float(result.x[0]), kappa_i=float(result.x[1]), kappa_e=float(result.x[2]), label=label)
    residual_norm = float(np.linalg.norm(result.fun))
    if not result.success:
        raise FitFailedError(
            f"sweep fit did not converge after {result.nfev} evaluations",
            best=params,
            residual_norm=residual_norm,
        )
    return params, residual_norm


def load_mkid_fixture(path=None) -> list[MkidParams]:
    """Load the bundled resonator calibration table (or a CSV with the same columns).

    Columns: label, f0_GHz, kappa_i_kHz, kappa_e_kHz. Values are converted
    to Hz.
    """
    if path is None:
        source = resources.files("dieburst.data").joinpath("mkid_params.csv")
        text = source.read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    rows = list(csv.DictReader(text.splitlines()))
    out = []
    for row in rows:
        out.append(
            MkidParams(
                f0=float(row["f0_GHz"]) * 1e9,
                kappa_i=float(row["kappa_i_kHz"]) * 1e3,
                kappa_e=float(row["kappa_e_kHz"]) * 1e3,
                label=row["label"].strip(),
            )
        )
    return out
