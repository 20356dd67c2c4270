"""
Three-level rate-equation model of the Λ system.

Populations are fractions of a unit total. Atoms enter the beam in the
thermal ground mixture (source γ_t/2 on each lower level) and leave at γ_t
from every level, so a normalized state stays normalized. Inversions are
quoted per sublevel, w = 2(n_e − n_g), which makes the unsaturated value −1.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.integrate import solve_ivp

from .errors import Diagnostic, IntegrationError, ValidationError
from .params import FieldDrive, SpectrumTrace, SystemParams

CALIBRATED_LINE_CENTER_TRANSMISSION = 0.27

Intensity = Callable[[float], float]


@dataclass(frozen=True)
class PopulationState:
    n_e: float
    n_m1: float
    n_p1: float

    @classmethod
    def thermal(cls) -> "PopulationState":
        return cls(0.0, 0.5, 0.5)

    @classmethod
    def from_array(cls, values) -> "PopulationState":
        n_e, n_m1, n_p1 = (float(v) for v in values)
        return cls(n_e, n_m1, n_p1)

    def as_array(self) -> np.ndarray:
        return np.array([self.n_e, self.n_m1, self.n_p1], dtype=float)

    @property
    def total(self) -> float:
        return self.n_e + self.n_m1 + self.n_p1

    def inversion(self, leg: int) -> float:
        ground = self.n_m1 if leg == 0 else self.n_p1
        return 2.0 * (self.n_e - ground)


@dataclass(frozen=True)
class HarmonicInversion:
    w0: float
    w1_minus: complex
    w1_plus: complex
    # broad (Γ₀-wide) and narrow (γ_t-wide) Lorentzian terms before the −w0/2 prefactor.
    # None for numerical extractions.
    broad: Optional[complex] = None
    narrow: Optional[complex] = None


@dataclass(frozen=True)
class PopulationTrajectory:
    times: np.ndarray
    populations: np.ndarray  # shape (n_times, 3): n_e, n_m1, n_p1

    @property
    def total(self) -> np.ndarray:
        return self.populations.sum(axis=1)

    def state(self, index: int) -> PopulationState:
        return PopulationState.from_array(self.populations[index])

    @property
    def final(self) -> PopulationState:
        return self.state(-1)


def dc_inversion(params: SystemParams, i0: float) -> float:
    """Dc inversion under equal pump rate `i0` on both legs."""
    if not i0 >= 0:
        raise ValidationError(Diagnostic("bad_value", f"pump rate i0 must be >= 0, got {i0}"))
    g = params.gamma0 + params.gamma_t
    return -g / (g + 3.0 * i0)


def first_harmonics(params: SystemParams, drive: FieldDrive, delta=None) -> HarmonicInversion:
    """
    First-harmonic inversions w1∓ (coefficients of e^{−iδt}) from the closed form.
    `delta` overrides drive.delta and may be an array.
    """
    d = drive.delta if delta is None else np.asarray(delta, dtype=float)
    i0 = drive.i0
    w0 = dc_inversion(params, i0)
    broad = 3.0 * (drive.i1_minus + drive.i1_plus) / (params.gamma0 + params.gamma_t + 3.0 * i0 - 1j * d)
    narrow = (drive.i1_minus - drive.i1_plus) / (params.gamma_t + i0 - 1j * d)
    return HarmonicInversion(
        w0=w0,
        w1_minus=-0.5 * w0 * (broad + narrow),
        w1_plus=-0.5 * w0 * (broad - narrow),
        broad=broad,
        narrow=narrow,
    )


def _rate_matrix(params: SystemParams, i_minus: float, i_plus: float) -> np.ndarray:
    g0, gt = params.gamma0, params.gamma_t
    return np.array([
        [-(g0 + gt) - i_minus - i_plus, i_minus, i_plus],
        [0.5 * g0 + i_minus, -gt - i_minus, 0.0],
        [0.5 * g0 + i_plus, 0.0, -gt - i_plus],
    ])


def _source(params: SystemParams) -> np.ndarray:
    return np.array([0.0, 0.5 * params.gamma_t, 0.5 * params.gamma_t])


def steady_state_populations(params: SystemParams, i_minus: float, i_plus: float) -> PopulationState:
    """Algebraic steady state with constant pump rates on each leg."""
    a = _rate_matrix(params, i_minus, i_plus)
    b = -_source(params)
    a[0, :] = 1.0
    b[0] = 1.0
    return PopulationState.from_array(np.linalg.solve(a, b))


def integrate_populations(
    params: SystemParams,
    i_minus: Intensity,
    i_plus: Intensity,
    initial: PopulationState,
    t_span: tuple[float, float],
    *,
    max_step: float = np.inf,
    t_eval=None,
    rtol: float = 1e-9,
    atol: float = 1e-12,
) -> PopulationTrajectory:
    """
    Integrate the rate equations with time-dependent pump rates I∓(t)σ/ħω₀.
    The system is non-stiff at the rates of interest, so an explicit
    high-order scheme is used.
    """
    if abs(initial.total - 1.0) > 1e-9:
        raise ValidationError(Diagnostic("bad_value", f"initial populations must sum to 1, got {initial.total}"))
    probe_t = np.linspace(t_span[0], t_span[1], 64)
    if min(min(i_minus(t) for t in probe_t), min(i_plus(t) for t in probe_t)) < 0:
        raise ValidationError(Diagnostic("bad_value", "intensities must be nonnegative"))

    g0, gt = params.gamma0, params.gamma_t

    def rhs(t, n):
        n_e, n_m, n_p = n
        im, ip = i_minus(t), i_plus(t)
        pump_m = im * (n_m - n_e)
        pump_p = ip * (n_p - n_e)
        return [
            -(g0 + gt) * n_e + pump_m + pump_p,
            0.5 * gt + 0.5 * g0 * n_e - gt * n_m - pump_m,
            0.5 * gt + 0.5 * g0 * n_e - gt * n_p - pump_p,
        ]

    sol = solve_ivp(rhs, t_span, initial.as_array(), method="DOP853", t_eval=t_eval,
                    max_step=max_step, rtol=rtol, atol=atol)
    if not sol.success:
        raise IntegrationError(f"rate-equation integration failed: {sol.message}")
    return PopulationTrajectory(times=sol.t, populations=sol.y.T)


def _modulated(i0: float, i1: complex, delta: float) -> Intensity:
    return lambda t: i0 + 2.0 * (i1 * np.exp(-1j * delta * t)).real


def periodic_first_harmonic(
    params: SystemParams,
    drive: FieldDrive,
    *,
    transit_times: float = 20.0,
    periods: int = 10,
    samples_per_period: int = 64,
) -> HarmonicInversion:
    """
    First harmonic of the inversions taken from the periodic steady state of the
    time-domain rate equations: settle for `transit_times`/γ_t, then project the
    last `periods` modulation periods onto e^{iδt}.
    """
    delta = drive.delta
    if delta == 0:
        raise ValidationError(Diagnostic("bad_value", "periodic extraction needs delta != 0"))
    period = 2.0 * np.pi / abs(delta)
    t_settle = transit_times / params.gamma_t
    t_eval = t_settle + np.arange(periods * samples_per_period) * (period / samples_per_period)
    t_end = t_settle + periods * period

    start = steady_state_populations(params, drive.i0, drive.i0)
    traj = integrate_populations(
        params,
        _modulated(drive.i0, drive.i1_minus, delta),
        _modulated(drive.i0, drive.i1_plus, delta),
        start,
        (0.0, t_end),
        max_step=period / 16.0,
        t_eval=t_eval,
    )
    phase = np.exp(1j * delta * traj.times)
    n1 = (traj.populations * phase[:, None]).mean(axis=0)
    n0 = traj.populations.mean(axis=0)
    return HarmonicInversion(
        w0=float(2.0 * (n0[0] - n0[1])),
        w1_minus=complex(2.0 * (n1[0] - n1[1])),
        w1_plus=complex(2.0 * (n1[0] - n1[2])),
    )


def _probe_absorption(params: SystemParams, drive: FieldDrive, deltas: np.ndarray) -> np.ndarray:
    """
    Probe absorption relative to the unsaturated medium, averaged over the
    probe-carrying legs. On each leg the dc inversion absorbs the probe and the
    population beat scatters coupling light into the probe mode with relative
    weight Re[w1·i0/i1]; reduced absorption shows up as a transmission peak.
    """
    weights = drive.polarization.coupling_weights
    dc = steady_state_populations(params, drive.i0 * weights[0], drive.i0 * weights[1])
    harmonics = first_harmonics(params, drive, deltas)
    absorption = np.zeros_like(deltas)
    legs = drive.polarization.probe_legs
    for leg in legs:
        i1 = drive.i1_minus if leg == 0 else drive.i1_plus
        w1 = harmonics.w1_minus if leg == 0 else harmonics.w1_plus
        leg_abs = np.full_like(deltas, -dc.inversion(leg))
        if i1 != 0:
            leg_abs = leg_abs - np.real(w1 * drive.i0 / i1)
        absorption += leg_abs
    return absorption / len(legs)


def rate_spectrum(
    params: SystemParams,
    drive: FieldDrive,
    deltas,
    *,
    optical_depth: float | None = None,
) -> SpectrumTrace:
    """
    Thin-medium probe transmission vs δ from the rate model. With no explicit
    `optical_depth`, the depth is set so that an unsaturated medium transmits
    27% of the probe.
    """
    deltas = np.asarray(deltas, dtype=float)
    if deltas.ndim != 1 or deltas.size == 0:
        raise ValidationError(Diagnostic("empty_grid", "delta grid is empty"))
    if np.any(np.diff(deltas) <= 0):
        raise ValidationError(Diagnostic("unsorted_grid", "delta grid must be strictly increasing"))
    if optical_depth is None:
        optical_depth = -np.log(CALIBRATED_LINE_CENTER_TRANSMISSION)
    transmission = np.exp(-optical_depth * _probe_absorption(params, drive, deltas))
    return SpectrumTrace(
        deltas=deltas,
        transmission=np.minimum(transmission, 1.0),
        model="rate",
        metadata={"optical_depth": f"{optical_depth:.10g}", "polarization": drive.polarization.value},
    )
