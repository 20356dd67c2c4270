"""
Peak finding and fitting for simulated spectra and decay curves.

Fitters are deterministic: initial values come from the data (half-maximum
crossings, log-linear slopes), never from random restarts. A fit that does not
converge comes back with `converged=False` instead of raising.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
from scipy import optimize, signal, stats

from .errors import Diagnostic, FitError, ValidationError
from .params import DecayCurve, SpectrumTrace

MIN_PEAK_SAMPLES = 16
MIN_LORENTZIAN_POINTS = 9
MIN_DECAY_POINTS = 4
MIN_LINEAR_POINTS = 3
MAX_EVALUATIONS = 2000


@dataclass(frozen=True)
class Peak:
    delta: float
    height: float
    prominence: float


@dataclass(frozen=True)
class LorentzianFit:
    center: float
    fwhm: float
    amplitude: float
    offset: float
    residual_norm: float
    converged: bool

    def evaluate(self, x):
        return lorentzian(x, self.center, self.fwhm, self.amplitude, self.offset)


@dataclass(frozen=True)
class ExpDecayFit:
    amplitude: float
    tau: float
    offset: float
    residual_norm: float
    converged: bool

    def evaluate(self, t):
        return self.amplitude * np.exp(-np.asarray(t, dtype=float) / self.tau) + self.offset


@dataclass(frozen=True)
class LinearFit:
    slope: float
    intercept: float
    r_squared: float
    stderr: float


def lorentzian(x, center: float, fwhm: float, amplitude: float, offset: float = 0.0):
    u = (np.asarray(x, dtype=float) - center) / (0.5 * fwhm)
    return offset + amplitude / (1.0 + u * u)


def lorentzian_box(x, center: float, fwhm: float, amplitude: float, offset: float = 0.0, box_width: float = 0.0):
    """
    Lorentzian of full width `fwhm` averaged over centers spread uniformly across
    `box_width`, normalized so that `amplitude` is the height at `center`.
    """
    h = 0.5 * abs(fwhm)
    s = 0.5 * abs(box_width)
    if s <= 1e-9 * h:
        return lorentzian(x, center, fwhm, amplitude, offset)
    d = np.asarray(x, dtype=float) - center
    shape = (np.arctan((d + s) / h) - np.arctan((d - s) / h)) / (2.0 * np.arctan(s / h))
    return offset + amplitude * shape


def find_peaks(trace: SpectrumTrace, prominence: Optional[float] = None) -> List[Peak]:
    """
    Local maxima of the transmission whose prominence exceeds `prominence`
    (transmission units; default 5% of the trace's peak-to-peak range),
    nearest to δ = 0 first.
    """
    y = trace.transmission
    if y.size < MIN_PEAK_SAMPLES:
        raise ValidationError(Diagnostic("bad_value", f"peak search needs >= {MIN_PEAK_SAMPLES} samples, got {y.size}"))
    span = float(np.ptp(y))
    if span <= 1e-12 * max(float(np.max(y)), 1.0):
        return []
    if prominence is None:
        prominence = 0.05 * span
    idx, props = signal.find_peaks(y, prominence=prominence)
    peaks = [Peak(float(trace.deltas[i]), float(y[i]), float(p)) for i, p in zip(idx, props["prominences"])]
    return sorted(peaks, key=lambda p: abs(p.delta))


def _half_max_crossing(x, y, start: int, step: int, level: float, upward: bool) -> Optional[float]:
    i = start
    while 0 <= i + step < len(y):
        a, b = y[i], y[i + step]
        if (b <= level) if upward else (b >= level):
            # linear interpolation between samples i and i + step
            frac = (a - level) / (a - b) if a != b else 0.0
            return float(x[i] + frac * (x[i + step] - x[i]))
        i += step
    return None


def lorentzian_initial_guess(x, y) -> tuple[float, float, float, float]:
    """(center, fwhm, amplitude, offset) from the extremum and its half-maximum crossings."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    baseline = 0.5 * (y[0] + y[-1])
    upward = (y.max() - baseline) >= (baseline - y.min())
    k = int(np.argmax(y) if upward else np.argmin(y))
    amplitude = float(y[k] - baseline)
    level = baseline + 0.5 * amplitude

    left = _half_max_crossing(x, y, k, -1, level, upward)
    right = _half_max_crossing(x, y, k, +1, level, upward)
    if left is not None and right is not None:
        fwhm = right - left
    elif left is not None:
        fwhm = 2.0 * (x[k] - left)
    elif right is not None:
        fwhm = 2.0 * (right - x[k])
    else:
        fwhm = 0.5 * (x[-1] - x[0])
    if not fwhm > 0:
        fwhm = 2.0 * float(np.min(np.diff(x)))
    return float(x[k]), float(fwhm), amplitude, float(baseline)


def _lorentzian_jacobian(x: np.ndarray, p) -> np.ndarray:
    """Columns d/dcenter, d/dfwhm, d/damplitude, d/doffset of `lorentzian`."""
    center, fwhm, amplitude = p[0], p[1], p[2]
    u = (x - center) / (0.5 * fwhm)
    g = 1.0 / (1.0 + u * u)
    return np.column_stack([
        4.0 * amplitude * u * g * g / fwhm,
        2.0 * amplitude * u * u * g * g / fwhm,
        g,
        np.ones_like(x),
    ])


def _gauss_newton_polish(residual, jacobian, p, fun, steps: int = 6):
    """
    Undamped Gauss-Newton steps from a converged least-squares solution; a
    step is kept only while it lowers the residual norm.
    """
    p = np.asarray(p, dtype=float)
    best = float(np.linalg.norm(fun))
    for _ in range(steps):
        step, *_ = np.linalg.lstsq(jacobian(p), -fun, rcond=None)
        trial = p + step
        trial_fun = residual(trial)
        norm = float(np.linalg.norm(trial_fun))
        if not (np.isfinite(norm) and norm < best):
            break
        p, fun, best = trial, trial_fun, norm
    return p, fun


def fit_lorentzian(x, y, *, initial: Optional[tuple[float, float, float, float]] = None) -> LorentzianFit:
    """Least-squares Lorentzian plus constant offset; amplitude may be negative (a dip)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < MIN_LORENTZIAN_POINTS or x.shape != y.shape:
        raise FitError(f"Lorentzian fit needs >= {MIN_LORENTZIAN_POINTS} matching points, got {x.size}")

    c0, w0, a0, o0 = initial if initial is not None else lorentzian_initial_guess(x, y)
    x_scale = w0
    y_scale = max(abs(a0), float(np.max(np.abs(y))), 1e-300)
    xs = (x - c0) / x_scale
    ys = y / y_scale

    def residual(p):
        return lorentzian(xs, p[0], p[1], p[2], p[3]) - ys

    def jacobian(p):
        return _lorentzian_jacobian(xs, p)

    try:
        res = optimize.least_squares(residual, [0.0, 1.0, a0 / y_scale, o0 / y_scale], jac=jacobian, method="lm",
                                     xtol=1e-14, ftol=1e-14, gtol=1e-14, max_nfev=MAX_EVALUATIONS)
    except (ValueError, np.linalg.LinAlgError):
        return LorentzianFit(c0, w0, a0, o0, math.inf, False)
    p, fun = _gauss_newton_polish(residual, jacobian, res.x, res.fun)

    center = c0 + p[0] * x_scale
    fwhm = abs(p[1]) * x_scale
    amplitude, offset = p[2] * y_scale, p[3] * y_scale
    rnorm = float(np.linalg.norm(fun) * y_scale)
    converged = bool(res.success and np.all(np.isfinite(p)) and fwhm > 0 and x[0] <= center <= x[-1])
    return LorentzianFit(float(center), float(fwhm), float(amplitude), float(offset), rnorm, converged)


def fit_lorentzian_box(x, y, box_width: float) -> LorentzianFit:
    """
    Least-squares `lorentzian_box` with the box width held fixed; the returned
    `fwhm` is the width of the Lorentzian alone. Starts from the half-maximum
    width W of the data and the homogeneous width sqrt(W² − box²) it implies.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < MIN_LORENTZIAN_POINTS or x.shape != y.shape:
        raise FitError(f"Lorentzian fit needs >= {MIN_LORENTZIAN_POINTS} matching points, got {x.size}")
    box = abs(float(box_width))
    c0, w_obs, a0, o0 = lorentzian_initial_guess(x, y)
    x_scale = w_obs
    y_scale = max(abs(a0), float(np.max(np.abs(y))), 1e-300)
    xs = (x - c0) / x_scale
    ys = y / y_scale
    b = box / x_scale
    w_start = math.sqrt(max(1.0 - b * b, 1.0 / 16.0))

    def residual(p):
        return lorentzian_box(xs, p[0], p[1], p[2], p[3], b) - ys

    try:
        res = optimize.least_squares(residual, [0.0, w_start, a0 / y_scale, o0 / y_scale], method="lm",
                                     xtol=1e-14, ftol=1e-14, gtol=1e-14, max_nfev=MAX_EVALUATIONS)
    except (ValueError, np.linalg.LinAlgError):
        return LorentzianFit(c0, w_obs, a0, o0, math.inf, False)

    p = res.x
    center = c0 + p[0] * x_scale
    fwhm = abs(p[1]) * x_scale
    converged = bool(res.success and np.all(np.isfinite(p)) and fwhm > 0 and x[0] <= center <= x[-1])
    return LorentzianFit(float(center), float(fwhm), float(p[2] * y_scale), float(p[3] * y_scale),
                         float(np.linalg.norm(res.fun) * y_scale), converged)


def peak_linewidth(trace: SpectrumTrace, center: float, half_window: float, scale: str = "absorbance",
                   *, box_width: float = 0.0) -> LorentzianFit:
    """
    Fit the peak near `center` within ±`half_window`. With scale="absorbance"
    the fit runs on ln T, where a thin Lorentzian absorption change stays
    Lorentzian; scale="transmission" fits T directly. A nonzero `box_width`
    fits `lorentzian_box` instead and reports the Lorentzian width.
    """
    if scale not in ("absorbance", "transmission"):
        raise ValidationError(Diagnostic("bad_value", f"scale must be absorbance or transmission, got {scale!r}"))
    window = trace.window(center, half_window)
    y = -window.absorbance if scale == "absorbance" else window.transmission
    if box_width > 0:
        return fit_lorentzian_box(window.deltas, y, box_width)
    return fit_lorentzian(window.deltas, y)


def fit_exponential(curve: DecayCurve, *, with_offset: bool = False) -> ExpDecayFit:
    """Least-squares A·exp(−t/τ) (+ offset) in linear space, started from a log-linear fit."""
    t, a = curve.storage_times, curve.amplitudes
    if t.size < MIN_DECAY_POINTS:
        raise FitError(f"exponential fit needs >= {MIN_DECAY_POINTS} points, got {t.size}")
    positive = a > 0
    if positive.sum() < 2:
        raise FitError("exponential fit needs at least two positive amplitudes")

    slope, intercept = np.polyfit(t[positive], np.log(a[positive]), 1)
    tau0 = -1.0 / slope if slope < 0 else (float(np.ptp(t)) or 1.0)
    a_scale = float(a.max())
    t0 = float(t[0])

    # p = (amplitude at t0 / a_scale, tau / tau0[, offset / a_scale])
    def residual(p):
        offset = p[2] if with_offset else 0.0
        return p[0] * np.exp(-(t - t0) / (p[1] * tau0)) + offset - a / a_scale

    start = [float(np.exp(intercept + slope * t0)) / a_scale, 1.0] + ([0.0] if with_offset else [])
    try:
        res = optimize.least_squares(residual, start, method="lm",
                                     xtol=1e-14, ftol=1e-14, gtol=1e-14, max_nfev=MAX_EVALUATIONS)
    except (ValueError, np.linalg.LinAlgError):
        return ExpDecayFit(a_scale, tau0, 0.0, math.inf, False)

    p = res.x
    tau = float(p[1] * tau0)
    converged = bool(res.success and np.all(np.isfinite(p)) and tau > 0)
    amplitude = float(p[0] * a_scale * math.exp(t0 / tau)) if converged else float(p[0] * a_scale)
    offset = float(p[2] * a_scale) if with_offset else 0.0
    return ExpDecayFit(amplitude, tau, offset, float(np.linalg.norm(res.fun) * a_scale), converged)


def linear_fit(x, y) -> LinearFit:
    """Ordinary least squares y = slope·x + intercept."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < MIN_LINEAR_POINTS or x.shape != y.shape:
        raise FitError(f"linear fit needs >= {MIN_LINEAR_POINTS} matching points, got {x.size}")
    if np.ptp(x) == 0:
        raise FitError("linear fit needs at least two distinct x values")
    r = stats.linregress(x, y)
    return LinearFit(float(r.slope), float(r.intercept), float(r.rvalue ** 2), float(r.stderr))
