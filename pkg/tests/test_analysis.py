import numpy as np
import pytest

from cpolab.analysis import (
    find_peaks,
    fit_exponential,
    fit_lorentzian,
    fit_lorentzian_box,
    linear_fit,
    lorentzian,
    lorentzian_box,
    lorentzian_initial_guess,
    peak_linewidth,
)
from cpolab.errors import FitError, ValidationError
from cpolab.params import KHZ, MHZ, DecayCurve, SpectrumTrace

FWHM = 2 * np.pi * 100e3


def _peak_trace(center=0.13 * MHZ, fwhm=FWHM, n=201):
    x = np.linspace(-1, 1, n) * MHZ
    return SpectrumTrace(x, 0.4 + 0.3 * lorentzian(x, center, fwhm, 1.0), "input")


def test_noiseless_lorentzian_recovered():
    x = np.linspace(-0.5, 0.5, 101) * MHZ
    y = lorentzian(x, 0.05 * MHZ, FWHM, 0.7, 0.2)
    fit = fit_lorentzian(x, y)
    assert fit.converged
    assert fit.fwhm == pytest.approx(FWHM, rel=1e-6)
    assert fit.center == pytest.approx(0.05 * MHZ, rel=1e-6)
    assert fit.amplitude == pytest.approx(0.7, rel=1e-6)
    assert fit.offset == pytest.approx(0.2, rel=1e-6)
    assert fit.residual_norm < 1e-10 * np.linalg.norm(y)


@pytest.mark.parametrize("center, fwhm, amplitude, offset", [
    (0.0, 0.5 * FWHM, 1.0, 0.0),
    (-0.2 * MHZ, 2 * FWHM, 3e-3, 1.0),
    (0.31 * MHZ, FWHM, -0.45, 0.9),
])
def test_noiseless_fit_residual_at_rounding_level(center, fwhm, amplitude, offset):
    x = np.linspace(-0.6, 0.6, 121) * MHZ
    y = lorentzian(x, center, fwhm, amplitude, offset)
    fit = fit_lorentzian(x, y)
    assert fit.converged
    assert fit.residual_norm < 1e-10 * np.linalg.norm(y)
    assert fit.fwhm == pytest.approx(fwhm, rel=1e-8)


def test_box_profile_half_width_and_limits():
    w, s = 0.16 * MHZ, 0.21 * MHZ
    half = 0.5 * np.hypot(w, s)
    peak = lorentzian_box(0.0, 0.0, w, 1.0, 0.0, s)
    assert peak == pytest.approx(1.0)
    assert lorentzian_box(half, 0.0, w, 1.0, 0.0, s) == pytest.approx(0.5)
    x = np.linspace(-1, 1, 11) * MHZ
    np.testing.assert_allclose(lorentzian_box(x, 0.1 * MHZ, w, 0.7, 0.2, 0.0), lorentzian(x, 0.1 * MHZ, w, 0.7, 0.2))


@pytest.mark.parametrize("box_MHz", [0.05, 0.16, 0.3])
def test_box_fit_recovers_homogeneous_width(box_MHz):
    x = np.linspace(-0.6, 0.6, 121) * MHZ
    y = lorentzian_box(x, 0.02 * MHZ, 0.16 * MHZ, 0.4, 0.1, box_MHz * MHZ)
    fit = fit_lorentzian_box(x, y, box_MHz * MHZ)
    assert fit.converged
    assert fit.fwhm == pytest.approx(0.16 * MHZ, rel=1e-6)
    assert fit.center == pytest.approx(0.02 * MHZ, rel=1e-6)
    assert fit.amplitude == pytest.approx(0.4, rel=1e-6)


def test_dip_is_fitted_with_negative_amplitude():
    x = np.linspace(-0.5, 0.5, 101) * MHZ
    fit = fit_lorentzian(x, lorentzian(x, 0.0, FWHM, -0.3, 1.0))
    assert fit.converged
    assert fit.amplitude == pytest.approx(-0.3, rel=1e-6)
    assert fit.fwhm == pytest.approx(FWHM, rel=1e-6)


@pytest.mark.parametrize("seed", [1, 2, 3, 4, 5])
def test_noisy_lorentzian_width_within_three_percent(seed):
    rng = np.random.default_rng(seed)
    x = np.linspace(-0.6, 0.6, 241) * MHZ
    y = lorentzian(x, 0.0, FWHM, 1.0, 0.0) + 0.01 * rng.standard_normal(x.size)
    fit = fit_lorentzian(x, y)
    assert fit.converged
    assert fit.fwhm == pytest.approx(FWHM, rel=0.03)


def test_initial_guess_is_close_before_refinement():
    x = np.linspace(-0.5, 0.5, 81) * MHZ
    center, fwhm, amplitude, offset = lorentzian_initial_guess(x, lorentzian(x, 0.02 * MHZ, FWHM, 2.0, 0.1))
    assert fwhm == pytest.approx(FWHM, rel=0.2)
    assert abs(center - 0.02 * MHZ) <= x[1] - x[0]
    assert amplitude > 0


def test_lorentzian_needs_enough_points():
    with pytest.raises(FitError):
        fit_lorentzian(np.arange(5.0), np.ones(5))


def test_peak_linewidth_on_absorbance():
    x = np.linspace(-1, 1, 401) * MHZ
    absorbance = 1.2 - 0.5 * lorentzian(x, 0.0, FWHM, 1.0)
    trace = SpectrumTrace(x, np.exp(-absorbance), "input")
    fit = peak_linewidth(trace, 0.0, 0.8 * MHZ)
    assert fit.fwhm == pytest.approx(FWHM, rel=1e-6)
    with pytest.raises(ValidationError):
        peak_linewidth(trace, 0.0, 0.8 * MHZ, scale="decibel")


def test_single_peak_found_within_a_grid_step():
    trace = _peak_trace()
    peaks = find_peaks(trace)
    assert len(peaks) == 1
    assert abs(peaks[0].delta - 0.13 * MHZ) <= trace.deltas[1] - trace.deltas[0]


def test_peaks_sorted_by_distance_from_zero():
    x = np.linspace(-1, 1, 401) * MHZ
    y = 0.3 + 0.1 * (lorentzian(x, -0.63 * MHZ, FWHM, 1.0) + lorentzian(x, 0.0, FWHM, 1.0)
                     + lorentzian(x, 0.63 * MHZ, FWHM, 1.0))
    peaks = find_peaks(SpectrumTrace(x, y, "input"))
    assert len(peaks) == 3
    assert peaks[0].delta == pytest.approx(0.0, abs=0.01 * MHZ)
    assert sorted(abs(p.delta) / MHZ for p in peaks[1:]) == pytest.approx([0.63, 0.63], abs=0.01)


def test_flat_trace_has_no_peaks():
    trace = SpectrumTrace(np.linspace(-1, 1, 64), np.full(64, 0.5), "input")
    assert find_peaks(trace) == []


def test_peak_search_needs_samples():
    with pytest.raises(ValidationError):
        find_peaks(SpectrumTrace(np.arange(8.0), np.full(8, 0.5), "input"))


def test_exact_exponential_recovered():
    t = np.linspace(0.2, 12, 8) * 1e-6
    curve = DecayCurve(t, 0.8 * np.exp(-t / 3.5e-6), "input")
    fit = fit_exponential(curve)
    assert fit.converged
    assert fit.tau == pytest.approx(3.5e-6, rel=1e-6)
    assert fit.amplitude == pytest.approx(0.8, rel=1e-6)
    np.testing.assert_allclose(fit.evaluate(t), curve.amplitudes, rtol=1e-6)


def test_exponential_with_offset():
    t = np.linspace(0, 20, 30) * 1e-6
    curve = DecayCurve(t, 0.5 * np.exp(-t / 2e-6) + 0.1, "input")
    fit = fit_exponential(curve, with_offset=True)
    assert fit.converged
    assert fit.tau == pytest.approx(2e-6, rel=1e-5)
    assert fit.offset == pytest.approx(0.1, rel=1e-4)


def test_exponential_needs_four_points():
    with pytest.raises(FitError):
        fit_exponential(DecayCurve([1.0, 2.0, 3.0], [1.0, 0.5, 0.25], "input"))


def test_linear_fit_on_collinear_points():
    x = np.array([0.0, 15.0, 30.0, 45.0, 60.0])
    fit = linear_fit(x, 2.0 * x + 3.0)
    assert fit.slope == pytest.approx(2.0)
    assert fit.intercept == pytest.approx(3.0)
    assert fit.r_squared == pytest.approx(1.0)


def test_linear_fit_degenerate_inputs():
    with pytest.raises(FitError):
        linear_fit([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])
    with pytest.raises(FitError):
        linear_fit([1.0, 2.0], [1.0, 2.0])


def test_fits_are_deterministic():
    x = np.linspace(-0.5, 0.5, 101) * MHZ
    y = lorentzian(x, 0.0, 80 * KHZ, 1.0) + 1e-3 * np.sin(x / MHZ * 40)
    assert fit_lorentzian(x, y) == fit_lorentzian(x, y)
