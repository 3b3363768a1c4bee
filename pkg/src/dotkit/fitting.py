"""Parameter estimation: g2 curve fits and spectral peak location.

g2 fits minimize the error-weighted sum of squares between data and the
forward model (convolved with the timing response) using a bounded
Nelder-Mead simplex with randomized restarts. Spectral peaks are fit as
pseudo-Voigt profiles over a constant background.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np
import scipy.optimize
from scipy.optimize import Bounds
from scipy.signal import find_peaks

from .emitters import (
    EmitterSystem,
    G2Curve,
    Irf,
    convolve_irf,
    g2_general,
    identical_system,
)
from .errors import DegenerateDataError, FitFailureError, ParameterError
from .montecarlo import as_generator
from .spectra import Spectrum

# Model parameters understood by the g2 fitter. "delta_ueV" is the energy
# spacing between consecutive emitters; "scale" a free overall
# normalization of the curve.
G2_PARAM_NAMES = ("gamma", "gamma_pd", "sigma", "delta_ueV", "scale")


class OverlappingPeaksWarning(UserWarning):
    """Fitted peaks are closer than the instrument can resolve."""


@dataclass(frozen=True)
class FitSpec:
    """What to fit: the model family, fixed values, and free parameters.

    ``free`` maps a parameter name to (guess, lower, upper). The "ideal"
    model needs ``n`` in ``fixed`` (emitter count); "general" needs
    ``base_system`` supplying per-emitter intensities and positions, with
    named parameters overriding the shared rates on every emitter.
    """

    model: str = "ideal"
    coherent: bool = True
    fixed: Mapping[str, float] = field(default_factory=dict)
    free: Mapping[str, tuple[float, float, float]] = field(default_factory=dict)
    irf: Irf | None = None
    base_system: EmitterSystem | None = None
    n_restarts: int = 3

    def __post_init__(self):
        if self.model not in ("ideal", "general"):
            raise ParameterError(f"model must be 'ideal' or 'general', got {self.model!r}")
        allowed = set(G2_PARAM_NAMES) | ({"n"} if self.model == "ideal" else set())
        overlap = set(self.fixed) & set(self.free)
        if overlap:
            raise ParameterError(f"parameters both fixed and free: {sorted(overlap)}")
        unknown = (set(self.fixed) | set(self.free)) - allowed
        if unknown:
            raise ParameterError(f"unknown fit parameters: {sorted(unknown)}")
        if self.model == "ideal" and "n" not in self.fixed:
            raise ParameterError("ideal model requires fixed emitter count 'n'")
        if self.model == "general" and self.base_system is None:
            raise ParameterError("general model requires a base_system")
        if self.n_restarts < 1:
            raise ParameterError("need at least one start")
        for name, (guess, lo, hi) in self.free.items():
            if not lo <= guess <= hi:
                raise ParameterError(
                    f"guess {guess:g} for {name!r} outside bounds [{lo:g}, {hi:g}]"
                )


@dataclass(frozen=True)
class ParamEstimate:
    value: float
    stderr: float
    at_bound: bool = False


@dataclass(frozen=True)
class FitResult:
    """Best-fit parameters with curvature-based standard errors."""

    estimates: dict[str, ParamEstimate]
    residual_norm: float
    n_iterations: int
    converged: bool
    history: tuple[float, ...] = ()

    def values(self) -> dict[str, float]:
        return {name: est.value for name, est in self.estimates.items()}


def _build_system(spec: FitSpec, params: Mapping[str, float]) -> EmitterSystem:
    def get(name, default=None):
        if name in params:
            return params[name]
        return default

    delta = get("delta_ueV", None)
    if spec.model == "ideal":
        return identical_system(
            n=int(spec.fixed["n"]),
            gamma=get("gamma", 1.0),
            gamma_pd=get("gamma_pd", 0.0),
            sigma=get("sigma", 0.0),
            spacing_uev=delta if delta is not None else 0.0,
        )
    base = spec.base_system
    emitters = []
    for k, e in enumerate(base.emitters):
        updates = {}
        for name in ("gamma", "gamma_pd", "sigma"):
            if name in params:
                updates[name] = params[name]
        emitter = replace(e, **updates) if updates else e
        if delta is not None:
            emitter = emitter.shifted(base.reference_energy + k * delta - e.energy)
        emitters.append(emitter)
    return EmitterSystem(tuple(emitters), base.reference_energy)


def evaluate_fit_model(spec: FitSpec, params: Mapping[str, float], delays) -> np.ndarray:
    """Forward model at the given delays, IRF included when the spec has one."""
    delays = np.asarray(delays, dtype=float)
    system = _build_system(spec, params)
    scale = params.get("scale", 1.0)
    if spec.irf is None:
        return scale * g2_general(system, delays, spec.coherent)
    data_step = np.diff(delays).min() if delays.size >= 2 else spec.irf.fwhm / 8.0
    step = min(float(data_step), spec.irf.fwhm / 8.0)
    pad = 4.0 * spec.irf.fwhm
    grid = np.arange(delays[0] - pad, delays[-1] + pad + 0.5 * step, step)
    curve = G2Curve(grid, g2_general(system, grid, spec.coherent))
    blurred = convolve_irf(curve, spec.irf)
    return scale * np.interp(delays, blurred.delays, blurred.values)


def _chi_square(data: G2Curve, spec: FitSpec, params: Mapping[str, float]) -> float:
    model = evaluate_fit_model(spec, params, data.delays)
    return float(np.sum(((data.values - model) / data.errors) ** 2))


def _check_fit_data(data: G2Curve, n_free: int) -> None:
    if data.errors is None or np.any(data.errors <= 0):
        raise ParameterError("fit data needs positive per-point errors")
    if np.ptp(data.values) == 0:
        raise DegenerateDataError("all data values are equal; nothing to fit")
    if data.values.size < 10 * max(n_free, 1):
        raise ParameterError(
            f"need >= {10 * n_free} points for {n_free} free parameters, "
            f"got {data.values.size}"
        )


def _minimize_restarts(objective, free, n_restarts, gen):
    names = list(free)
    guesses = np.array([free[name][0] for name in names])
    lower = np.array([free[name][1] for name in names])
    upper = np.array([free[name][2] for name in names])
    starts = [guesses]
    for _ in range(n_restarts - 1):
        starts.append(lower + gen.uniform(size=len(names)) * (upper - lower))
    best = None
    best_history: list[float] = []
    for start in starts:
        history: list[float] = []
        result = scipy.optimize.minimize(
            objective,
            start,
            method="Nelder-Mead",
            bounds=Bounds(lower, upper),
            options={
                "maxiter": 400 * max(len(names), 1),
                "xatol": 1e-7,
                "fatol": 1e-10,
                "adaptive": len(names) > 3,
            },
            callback=lambda xk: history.append(objective(xk)),
        )
        if best is None or result.fun < best.fun:
            best = result
            best_history = history
    return names, lower, upper, best, best_history


def _curvature_errors(objective, x, lower, upper):
    """Standard errors from a central-difference Hessian of the chi-square.

    The evaluation point is nudged inside the bounds when the optimum sits
    on one; covariance is 2 H^-1 for an error-weighted sum of squares.
    """
    n = x.size
    h = np.maximum(1e-4 * (upper - lower), 1e-9)
    x0 = np.clip(x, lower + h, upper - h)
    f0 = objective(x0)
    hessian = np.empty((n, n))
    for i in range(n):
        ei = np.zeros(n)
        ei[i] = h[i]
        fpp = objective(x0 + ei)
        fmm = objective(x0 - ei)
        hessian[i, i] = (fpp - 2.0 * f0 + fmm) / h[i] ** 2
        for j in range(i + 1, n):
            ej = np.zeros(n)
            ej[j] = h[j]
            fij = objective(x0 + ei + ej)
            fi_j = objective(x0 + ei - ej)
            f_ij = objective(x0 - ei + ej)
            f__ = objective(x0 - ei - ej)
            hessian[i, j] = hessian[j, i] = (fij - fi_j - f_ij + f__) / (
                4.0 * h[i] * h[j]
            )
    try:
        cov = 2.0 * np.linalg.pinv(hessian)
        stderr = np.sqrt(np.maximum(np.diag(cov), 0.0))
    except np.linalg.LinAlgError:
        stderr = np.full(n, np.nan)
    return stderr


def _package_result(names, lower, upper, best, history, objective) -> FitResult:
    x = np.asarray(best.x, dtype=float)
    stderr = _curvature_errors(objective, x, lower, upper)
    edge = 1e-9 + 1e-6 * (upper - lower)
    estimates = {
        name: ParamEstimate(
            value=float(x[i]),
            stderr=float(stderr[i]),
            at_bound=bool(x[i] <= lower[i] + edge[i] or x[i] >= upper[i] - edge[i]),
        )
        for i, name in enumerate(names)
    }
    return FitResult(
        estimates=estimates,
        residual_norm=float(best.fun),
        n_iterations=int(best.nit),
        converged=bool(best.success),
        history=tuple(history),
    )


def fit_g2(data: G2Curve, spec: FitSpec, rng=None) -> FitResult:
    """Fit one g2 curve. Non-convergence returns converged=False with the
    best point found rather than raising."""
    _check_fit_data(data, len(spec.free))
    if not spec.free:
        raise ParameterError("no free parameters to fit")

    def objective(theta):
        params = dict(spec.fixed)
        params.update(zip(spec.free, theta))
        return _chi_square(data, spec, params)

    gen = as_generator(rng if rng is not None else 0)
    names, lower, upper, best, history = _minimize_restarts(
        objective, spec.free, spec.n_restarts, gen
    )
    return _package_result(names, lower, upper, best, history, objective)


def fit_g2_joint(
    datasets: Sequence[G2Curve],
    specs: Sequence[FitSpec],
    shared: Sequence[str] = ("sigma", "gamma_pd"),
    rng=None,
) -> FitResult:
    """Fit several curves at once with tied parameters.

    Parameters named in ``shared`` must be free in every spec with the same
    bounds and are estimated once for the whole data set; the remaining
    free parameters are per curve and reported as ``curve<k>.<name>``.
    """
    if len(datasets) != len(specs) or not datasets:
        raise ParameterError("need one spec per data set")
    shared = list(shared)
    for name in shared:
        bounds = None
        for spec in specs:
            if name not in spec.free:
                raise ParameterError(f"shared parameter {name!r} not free in every spec")
            lohi = spec.free[name][1:]
            if bounds is None:
                bounds = lohi
            elif bounds != lohi:
                raise ParameterError(f"shared parameter {name!r} has mismatched bounds")
    free: dict[str, tuple[float, float, float]] = {}
    for name in shared:
        free[name] = specs[0].free[name]
    slots: list[dict[str, str]] = []
    for k, spec in enumerate(specs):
        mapping: dict[str, str] = {}
        for name in spec.free:
            mapping[name] = name if name in shared else f"curve{k}.{name}"
            if name not in shared:
                free[mapping[name]] = spec.free[name]
        slots.append(mapping)
    for data, spec in zip(datasets, specs):
        _check_fit_data(data, len(spec.free))

    names = list(free)

    def objective(theta):
        by_name = dict(zip(names, theta))
        total = 0.0
        for data, spec, mapping in zip(datasets, specs, slots):
            params = dict(spec.fixed)
            for local, qualified in mapping.items():
                params[local] = by_name[qualified]
            total += _chi_square(data, spec, params)
        return total

    gen = as_generator(rng if rng is not None else 0)
    n_restarts = max(spec.n_restarts for spec in specs)
    names, lower, upper, best, history = _minimize_restarts(
        objective, free, n_restarts, gen
    )
    return _package_result(names, lower, upper, best, history, objective)


def joint_curve_params(result: FitResult, specs: Sequence[FitSpec]) -> list[dict[str, float]]:
    """Split a joint-fit result back into per-curve parameter dicts."""
    values = result.values()
    out = []
    for k, spec in enumerate(specs):
        params = dict(spec.fixed)
        for name in spec.free:
            qualified = name if name in values else f"curve{k}.{name}"
            params[name] = values[qualified]
        out.append(params)
    return out


def pseudo_voigt(x, center: float, fwhm: float, eta: float):
    """Height-normalized pseudo-Voigt line: eta Lorentzian + (1-eta) Gaussian."""
    z = (np.asarray(x, dtype=float) - center) / fwhm
    lorentz = 1.0 / (1.0 + 4.0 * z**2)
    gauss = np.exp(-4.0 * math.log(2.0) * z**2)
    return eta * lorentz + (1.0 - eta) * gauss


@dataclass(frozen=True)
class PeakFit:
    """One fitted emission line."""

    center: float
    center_err: float
    fwhm: float
    amplitude: float


def _peak_model(n_peaks):
    def model(x, *theta):
        background, eta = theta[0], theta[1]
        out = np.full_like(np.asarray(x, dtype=float), background)
        for p in range(n_peaks):
            center, width, height = theta[2 + 3 * p : 5 + 3 * p]
            out = out + height * pseudo_voigt(x, center, width, eta)
        return out

    return model


def _initial_peaks(x, y, n_peaks, instrument_fwhm):
    min_distance = max(int(instrument_fwhm / (x[1] - x[0])), 1)
    idx, props = find_peaks(y, prominence=0.05 * np.ptp(y), distance=min_distance)
    if idx.size:
        order = np.argsort(y[idx])[::-1]
        idx = idx[order][:n_peaks]
    guesses = list(np.sort(x[idx]))
    anchor = guesses[0] if guesses else float(x[np.argmax(y)])
    offset = 1
    while len(guesses) < n_peaks:
        # Fewer prominent maxima than requested: unresolved lines. Seed the
        # extras beside the tallest structure so the fit can split it.
        side = instrument_fwhm * ((offset + 1) // 2) * (1 if offset % 2 else -1)
        guesses.append(float(np.clip(anchor + side, x[0], x[-1])))
        offset += 1
    return sorted(guesses[:n_peaks])


def fit_spectrum_peaks(
    spectrum: Spectrum,
    n_peaks: int,
    instrument_fwhm: float | None = None,
) -> list[PeakFit]:
    """Locate emission lines as pseudo-Voigt peaks over a flat background.

    Returns peaks sorted by center. Warns with
    :class:`OverlappingPeaksWarning` when two centers fall within one
    instrument resolution of each other.
    """
    if n_peaks < 1:
        raise ParameterError(f"need n_peaks >= 1, got {n_peaks}")
    if instrument_fwhm is None:
        instrument_fwhm = spectrum.instrument.resolution_fwhm
    x, y = spectrum.energies, spectrum.intensities
    if spectrum.step > instrument_fwhm / 3.0 + 1e-12:
        raise ParameterError("spectrum grid must be finer than instrument_fwhm/3")

    background = float(np.percentile(y, 5))
    span = float(x[-1] - x[0])
    p0 = [background, 0.3]
    lower = [0.0, 0.0]
    upper = [max(float(y.max()), 1e-30), 1.0]
    for center in _initial_peaks(x, y, n_peaks, instrument_fwhm):
        height = max(float(np.interp(center, x, y)) - background, 1e-3 * np.ptp(y))
        p0 += [center, 1.2 * instrument_fwhm, height]
        lower += [float(x[0]), 0.3 * instrument_fwhm, 0.0]
        upper += [float(x[-1]), span, 2.0 * float(np.ptp(y)) + 1e-30]
    try:
        popt, pcov = scipy.optimize.curve_fit(
            _peak_model(n_peaks),
            x,
            y,
            p0=p0,
            bounds=(lower, upper),
            maxfev=20000,
        )
    except RuntimeError as exc:
        raise FitFailureError(f"peak fit did not converge: {exc}") from exc
    perr = np.sqrt(np.maximum(np.diag(pcov), 0.0))
    peaks = [
        PeakFit(
            center=float(popt[2 + 3 * p]),
            center_err=float(perr[2 + 3 * p]),
            fwhm=float(popt[3 + 3 * p]),
            amplitude=float(popt[4 + 3 * p]),
        )
        for p in range(n_peaks)
    ]
    peaks.sort(key=lambda pk: pk.center)
    tallest = max(pk.amplitude for pk in peaks)
    for a, b in zip(peaks, peaks[1:]):
        if b.center - a.center < instrument_fwhm:
            warnings.warn(
                f"peaks at {a.center:.2f} and {b.center:.2f} ueV are closer than "
                f"the instrument resolution ({instrument_fwhm:g} ueV)",
                OverlappingPeaksWarning,
            )
    for pk in peaks:
        if tallest > 0 and pk.amplitude < 0.01 * tallest:
            warnings.warn(
                f"the component at {pk.center:.2f} ueV fit to zero amplitude; "
                f"the spectrum does not resolve {n_peaks} distinct lines",
                OverlappingPeaksWarning,
            )
    return peaks


def format_fit_report(result: FitResult, title: str = "g2 fit") -> str:
    """Human-readable fit summary."""
    lines = [
        title,
        "-" * len(title),
        f"converged      : {'yes' if result.converged else 'NO'}",
        f"iterations     : {result.n_iterations}",
        f"residual_norm  : {result.residual_norm:.6g}",
        "",
        f"{'parameter':<18} {'estimate':>14} {'stderr':>12}  bound",
    ]
    for name, est in result.estimates.items():
        flag = "AT BOUND" if est.at_bound else "interior"
        lines.append(f"{name:<18} {est.value:>14.6g} {est.stderr:>12.3g}  {flag}")
    return "\n".join(lines) + "\n"


def fit_params_table(result: FitResult) -> str:
    """Machine-readable key-value block of the fit result."""
    lines = ["# name\testimate\tstderr\tat_bound"]
    for name, est in result.estimates.items():
        lines.append(f"{name}\t{est.value:.10g}\t{est.stderr:.10g}\t{int(est.at_bound)}")
    lines.append(f"residual_norm\t{result.residual_norm:.10g}\t0\t0")
    lines.append(f"converged\t{int(result.converged)}\t0\t0")
    return "\n".join(lines) + "\n"
