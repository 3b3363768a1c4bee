"""Forward model of measured emission spectra and ensemble generation.

Each emitter contributes a Voigt line: Lorentzian width from radiative
decay plus pure dephasing, Gaussian width from spectral diffusion combined
in quadrature with the instrument response.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import voigt_profile

from .emitters import (
    GAUSSIAN_FWHM_SIGMA,
    HBAR_UEV_NS,
    EmitterSystem,
    fwhm_from_sigma,
)
from .errors import GridCoverageError, ParameterError
from .montecarlo import as_generator

INSTRUMENT_KINDS = ("grating", "fabry_perot")


@dataclass(frozen=True)
class Instrument:
    """Spectrometer model: a Gaussian response of fixed FWHM in ueV."""

    kind: str
    resolution_fwhm: float

    def __post_init__(self):
        if self.kind not in INSTRUMENT_KINDS:
            raise ParameterError(f"instrument kind must be one of {INSTRUMENT_KINDS}")
        if not self.resolution_fwhm > 0:
            raise ParameterError("instrument resolution must be > 0")

    @classmethod
    def grating(cls, resolution_fwhm: float = 50.0) -> "Instrument":
        return cls("grating", resolution_fwhm)

    @classmethod
    def fabry_perot(cls, resolution_fwhm: float = 2.4) -> "Instrument":
        return cls("fabry_perot", resolution_fwhm)


@dataclass(frozen=True)
class Spectrum:
    """Sampled intensity versus energy as seen through an instrument."""

    energies: np.ndarray
    intensities: np.ndarray
    instrument: Instrument

    def __post_init__(self):
        energies = np.asarray(self.energies, dtype=float)
        intensities = np.asarray(self.intensities, dtype=float)
        object.__setattr__(self, "energies", energies)
        object.__setattr__(self, "intensities", intensities)
        if energies.ndim != 1 or energies.shape != intensities.shape:
            raise ParameterError("energies and intensities must be 1-d, equal length")
        if energies.size >= 2:
            steps = np.diff(energies)
            if not np.all(steps > 0):
                raise ParameterError("energy grid must be strictly increasing")
            if steps.max() > self.instrument.resolution_fwhm / 3.0 + 1e-12:
                raise ParameterError(
                    "energy grid step must be <= instrument resolution / 3"
                )
        if np.any(intensities < 0):
            raise ParameterError("intensities must be >= 0")

    @property
    def step(self) -> float:
        return float(self.energies[1] - self.energies[0])


def lorentzian_fwhm(gamma: float, gamma_pd: float) -> float:
    """Homogeneous linewidth 2 hbar (gamma/2 + gamma_pd) in ueV."""
    return 2.0 * HBAR_UEV_NS * (0.5 * gamma + gamma_pd)


def line_fwhm(gamma: float, gamma_pd: float, sigma: float, instrument_fwhm: float = 0.0) -> float:
    """Approximate total Voigt FWHM of one line through an instrument."""
    f_lor = lorentzian_fwhm(gamma, gamma_pd)
    f_gauss = np.hypot(fwhm_from_sigma(sigma), instrument_fwhm)
    return 0.5346 * f_lor + np.sqrt(0.2166 * f_lor**2 + f_gauss**2)


def synth_spectrum(
    system: EmitterSystem,
    instrument: Instrument,
    grid,
    noise_snr: float = np.inf,
    rng=None,
) -> Spectrum:
    """Synthesize the measured spectrum of a system.

    ``noise_snr`` is the ratio of the peak intensity to the additive
    Gaussian noise level; infinite means noiseless. The grid must cover
    every line center by +-10 linewidths.
    """
    grid = np.asarray(grid, dtype=float)
    for e in system.emitters:
        width = line_fwhm(e.gamma, e.gamma_pd, e.sigma, instrument.resolution_fwhm)
        if grid[0] > e.energy - 10 * width or grid[-1] < e.energy + 10 * width:
            raise GridCoverageError(
                f"grid [{grid[0]:g}, {grid[-1]:g}] ueV does not cover the line at "
                f"{e.energy:g} ueV by +-10 linewidths ({width:g} ueV)"
            )
    intensity = np.zeros_like(grid)
    for e in system.emitters:
        gauss_sigma = (
            np.hypot(fwhm_from_sigma(e.sigma), instrument.resolution_fwhm)
            / GAUSSIAN_FWHM_SIGMA
        )
        lor_hwhm = 0.5 * lorentzian_fwhm(e.gamma, e.gamma_pd)
        intensity += e.intensity * voigt_profile(grid - e.energy, gauss_sigma, lor_hwhm)
    if np.isfinite(noise_snr):
        if noise_snr <= 0:
            raise ParameterError(f"noise SNR must be > 0, got {noise_snr}")
        gen = as_generator(rng)
        intensity = intensity + gen.normal(0.0, intensity.max() / noise_snr, grid.size)
        intensity = np.maximum(intensity, 0.0)
    return Spectrum(grid, intensity, instrument)


def sample_ensemble(n: int, center: float, fwhm: float, rng) -> np.ndarray:
    """Draw emitter energies from the inhomogeneous Gaussian distribution."""
    if n < 1:
        raise ParameterError(f"need n >= 1, got {n}")
    gen = as_generator(rng)
    return gen.normal(center, fwhm / GAUSSIAN_FWHM_SIGMA, size=n)


def write_spectrum(path, spectrum: Spectrum, header=()) -> None:
    """Write a spectrum as delimited text (energy_ueV, intensity)."""
    lines = [f"# {h}" for h in header]
    lines.append(f"# instrument = {spectrum.instrument.kind}")
    lines.append(f"# resolution_fwhm_ueV = {spectrum.instrument.resolution_fwhm:.10g}")
    lines.append("# energy_ueV\tintensity")
    for e, y in zip(spectrum.energies, spectrum.intensities):
        lines.append(f"{e:.10g}\t{y:.10g}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_spectrum(path) -> Spectrum:
    """Read a spectrum written by :func:`write_spectrum`."""
    meta = {}
    rows = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if "=" in body:
                key, _, value = body.partition("=")
                meta[key.strip()] = value.strip()
            continue
        rows.append([float(x) for x in line.split()])
    data = np.asarray(rows, dtype=float)
    instrument = Instrument(
        meta.get("instrument", "grating"),
        float(meta.get("resolution_fwhm_ueV", 50.0)),
    )
    return Spectrum(data[:, 0], data[:, 1], instrument)
