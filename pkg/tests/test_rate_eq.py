import numpy as np
import pytest

from cpolab.analysis import peak_linewidth
from cpolab.errors import ValidationError
from cpolab.params import KHZ, MHZ, FieldDrive, Polarization, SystemParams
from cpolab.rate_eq import (
    PopulationState,
    dc_inversion,
    first_harmonics,
    integrate_populations,
    periodic_first_harmonic,
    rate_spectrum,
    steady_state_populations,
)


def test_dc_inversion_limits(ref):
    assert dc_inversion(ref, 0.0) == -1.0
    g = ref.gamma0 + ref.gamma_t
    assert dc_inversion(ref, g / 3) == pytest.approx(-0.5)
    with pytest.raises(ValidationError):
        dc_inversion(ref, -1.0)


@pytest.mark.parametrize("i0_factor", [0.0, 0.3, 1.0, 5.0])
def test_dc_inversion_matches_algebraic_steady_state(ref, i0_factor):
    i0 = i0_factor * ref.gamma_t
    state = steady_state_populations(ref, i0, i0)
    assert state.total == pytest.approx(1.0, abs=1e-12)
    assert state.inversion(0) == pytest.approx(dc_inversion(ref, i0), rel=1e-10)


def _settled_inversion(params, i0):
    traj = integrate_populations(params, lambda t: i0, lambda t: i0, PopulationState.thermal(),
                                 (0.0, 40.0 / params.gamma_t))
    assert np.max(np.abs(traj.total - 1.0)) < 1e-8
    return traj.final.inversion(0)


@pytest.mark.parametrize("gamma_t_kHz", [20.0, 80.0])
@pytest.mark.parametrize("i0_factor", [0.5, 4.0])
def test_dc_inversion_matches_long_time_integration(gamma_t_kHz, i0_factor):
    params = SystemParams.from_frequencies(gamma_t_kHz=gamma_t_kHz)
    i0 = i0_factor * params.gamma_t
    assert _settled_inversion(params, i0) == pytest.approx(dc_inversion(params, i0), rel=1e-6)


@pytest.mark.slow
def test_dc_inversion_over_pump_and_transit_grid():
    for gamma_t_kHz in np.geomspace(10.0, 160.0, 10):
        params = SystemParams.from_frequencies(gamma_t_kHz=gamma_t_kHz)
        for i0_factor in np.geomspace(0.1, 10.0, 10):
            i0 = i0_factor * params.gamma_t
            assert _settled_inversion(params, i0) == pytest.approx(dc_inversion(params, i0), rel=1e-6), \
                (gamma_t_kHz, i0_factor)


def test_free_relaxation(ref):
    start = PopulationState(0.2, 0.4, 0.4)
    times = np.linspace(0.0, 2e-7, 11)
    traj = integrate_populations(ref, lambda t: 0.0, lambda t: 0.0, start, (0.0, times[-1]), t_eval=times)
    np.testing.assert_allclose(traj.populations[:, 0], 0.2 * np.exp(-(ref.gamma0 + ref.gamma_t) * times),
                               rtol=1e-6, atol=1e-12)
    np.testing.assert_allclose(traj.total, 1.0, atol=1e-8)


def test_integration_rejects_bad_inputs(ref):
    with pytest.raises(ValidationError):
        integrate_populations(ref, lambda t: 0.0, lambda t: 0.0, PopulationState(0.5, 0.5, 0.5), (0.0, 1e-6))
    with pytest.raises(ValidationError):
        integrate_populations(ref, lambda t: -1.0, lambda t: 0.0, PopulationState.thermal(), (0.0, 1e-6))


def test_antiphase_sidebands_cancel_broad_term(ref, lin_drive):
    for delta in (0.0, ref.gamma_t, 3 * ref.gamma0):
        h = first_harmonics(ref, lin_drive, delta)
        assert h.broad == 0
        assert h.w1_plus == pytest.approx(-h.w1_minus)


def test_harmonics_vanish_far_from_resonance(ref, lin_drive):
    near = first_harmonics(ref, lin_drive, 0.0)
    far = first_harmonics(ref, lin_drive, 1e6 * ref.gamma0)
    assert abs(far.w1_minus) < 1e-4 * abs(near.w1_minus)


@pytest.mark.parametrize("i1", [(0.05, -0.02 + 0.01j), (0.03j, 0.04), (-0.04, -0.01)])
def test_closed_form_matches_time_domain_harmonic(ref, i1):
    i0 = ref.i0
    drive = FieldDrive(Polarization.LIN_PERP_LIN, ref.gamma_t, 0.0, i0, i1[0] * i0, i1[1] * i0)
    closed = first_harmonics(ref, drive)
    numeric = periodic_first_harmonic(ref, drive)
    np.testing.assert_allclose(numeric.w1_minus, closed.w1_minus, rtol=1e-2)
    np.testing.assert_allclose(numeric.w1_plus, closed.w1_plus, rtol=1e-2)
    assert numeric.w0 == pytest.approx(closed.w0, rel=1e-2)


@pytest.mark.slow
def test_closed_form_matches_time_domain_over_random_drives(ref):
    rng = np.random.default_rng(2024)
    i0 = ref.i0
    for _ in range(20):
        mag = 0.05 * i0 * rng.uniform(0.2, 1.0, 2)
        phase = rng.uniform(0.0, 2 * np.pi, 2)
        i1 = mag * np.exp(1j * phase)
        delta = rng.uniform(0.5, 3.0) * ref.gamma_t * rng.choice([-1.0, 1.0])
        drive = FieldDrive(Polarization.LIN_PERP_LIN, delta, 0.0, i0, complex(i1[0]), complex(i1[1]))
        closed = first_harmonics(ref, drive)
        numeric = periodic_first_harmonic(ref, drive)
        np.testing.assert_allclose(numeric.w1_minus, closed.w1_minus, rtol=1e-2)
        np.testing.assert_allclose(numeric.w1_plus, closed.w1_plus, rtol=1e-2)


def test_periodic_extraction_needs_a_beat(ref, lin_drive):
    with pytest.raises(ValidationError):
        periodic_first_harmonic(ref, lin_drive.with_delta(0.0))


@pytest.mark.parametrize("omega_c_MHz", [0.1, 0.3, 1.0])
def test_cpo_linewidth_law(omega_c_MHz):
    params = SystemParams.from_frequencies(omega_c_MHz=omega_c_MHz, omega_p_kHz=0.05 * omega_c_MHz * 1e3)
    drive = FieldDrive.from_rabi(params)
    hwhm = params.gamma_t + drive.i0
    deltas = np.linspace(-12 * hwhm, 12 * hwhm, 481)
    trace = rate_spectrum(params, drive, deltas)
    fit = peak_linewidth(trace, 0.0, 12 * hwhm)
    assert fit.converged
    assert fit.fwhm == pytest.approx(2 * hwhm, rel=0.02)
    assert fit.center == pytest.approx(0.0, abs=1e-3 * hwhm)


def test_rate_spectrum_single_symmetric_peak(ref, lin_drive):
    deltas = np.linspace(-1.5, 1.5, 301) * MHZ
    trace = rate_spectrum(ref, lin_drive, deltas)
    assert trace.model == "rate"
    np.testing.assert_allclose(trace.transmission, trace.transmission[::-1], rtol=1e-12)
    assert int(np.argmax(trace.transmission)) == 150


def test_rate_spectrum_peak_height_follows_harmonic(ref, lin_drive):
    deltas = np.linspace(-1, 1, 201) * MHZ
    trace = rate_spectrum(ref, lin_drive, deltas, optical_depth=1.0)
    h = first_harmonics(ref, lin_drive, deltas)
    dc = steady_state_populations(ref, lin_drive.i0, lin_drive.i0)
    expected = -dc.inversion(0) - np.real(h.w1_minus * lin_drive.i0 / lin_drive.i1_minus)
    np.testing.assert_allclose(trace.absorbance, expected, rtol=1e-12)


def test_doubling_transit_rate_widens_peak():
    base = SystemParams.from_frequencies()
    wider = SystemParams.from_frequencies(gamma_t_kHz=80.0)
    deltas = np.linspace(-2, 2, 801) * MHZ
    widths = []
    for p in (base, wider):
        fit = peak_linewidth(rate_spectrum(p, FieldDrive.from_rabi(p), deltas), 0.0, 2 * MHZ)
        widths.append(fit.fwhm)
    assert widths[1] - widths[0] == pytest.approx(2 * 40 * KHZ, rel=0.02)


def test_rate_spectrum_rejects_empty_grid(ref, lin_drive):
    with pytest.raises(ValidationError) as err:
        rate_spectrum(ref, lin_drive, [])
    assert err.value.codes == ["empty_grid"]
