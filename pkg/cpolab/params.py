"""
Domain types shared by every solver.

Frequencies are stored as angular frequencies (rad/s). Config files and the
CLI speak MHz/kHz; conversion happens at that boundary through the
`from_frequencies` / `from_units` constructors and the `*_MHz` read-backs.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Tuple

import numpy as np

from .errors import Diagnostic, DiagnosticList, ValidationError

TWO_PI = 2.0 * math.pi
MHZ = TWO_PI * 1e6
KHZ = TWO_PI * 1e3

# Perturbative limits: above the soft limit we warn, above the hard one we refuse.
SOFT_PERTURBATIVE_RATIO = 0.2
HARD_PERTURBATIVE_RATIO = 1.0
# Beat-note sidebands get a single hard limit relative to i0.
SIDEBAND_RATIO = 0.2

# Leg indices: leg 0 couples |-1> <-> |e>, leg 1 couples |+1> <-> |e>.
LEG_MINUS = 0
LEG_PLUS = 1


class Polarization(str, Enum):
    LIN_PERP_LIN = "lin_perp_lin"
    CIRC_ORTHOGONAL = "circ_orthogonal"

    @property
    def coupling_weights(self) -> Tuple[float, float]:
        """Coupling amplitude on (|-1> leg, |+1> leg)."""
        if self is Polarization.LIN_PERP_LIN:
            return (1.0, 1.0)
        return (1.0, 0.0)

    @property
    def probe_signs(self) -> Tuple[float, float]:
        """Probe amplitude sign on (|-1> leg, |+1> leg); lin⊥lin legs are in antiphase."""
        if self is Polarization.LIN_PERP_LIN:
            return (1.0, -1.0)
        return (0.0, 1.0)

    @property
    def probe_legs(self) -> Tuple[int, ...]:
        return tuple(i for i, s in enumerate(self.probe_signs) if s != 0.0)


@dataclass(frozen=True)
class SystemParams:
    gamma0: float
    gamma_t: float
    gamma_opt: float
    doppler_hwhm: float
    omega_c: float
    omega_p: float

    @classmethod
    def from_frequencies(
        cls,
        *,
        gamma0_MHz: float = 5.2,
        gamma_t_kHz: float = 40.0,
        omega_c_MHz: float = 0.4,
        omega_p_kHz: float = 70.0,
        doppler_hwhm_MHz: float = 190.0,
        gamma_opt_MHz: float | None = None,
    ) -> "SystemParams":
        if gamma_opt_MHz is None:
            gamma_opt_MHz = gamma0_MHz / 2.0
        return cls(
            gamma0=gamma0_MHz * MHZ,
            gamma_t=gamma_t_kHz * KHZ,
            gamma_opt=gamma_opt_MHz * MHZ,
            doppler_hwhm=doppler_hwhm_MHz * MHZ,
            omega_c=omega_c_MHz * MHZ,
            omega_p=omega_p_kHz * KHZ,
        )

    @classmethod
    def reference(cls) -> "SystemParams":
        """
        Cs D2 (F=3 → F'=2) cell values: Γ₀/2π = 5.2 MHz, γ_t/2π = 40 kHz,
        Ω_C/2π = 0.4 MHz, Ω_P/2π = 70 kHz.
        """
        return cls.from_frequencies()

    @property
    def gamma0_MHz(self) -> float:
        return self.gamma0 / MHZ

    @property
    def gamma_t_kHz(self) -> float:
        return self.gamma_t / KHZ

    @property
    def gamma_opt_MHz(self) -> float:
        return self.gamma_opt / MHZ

    @property
    def doppler_hwhm_MHz(self) -> float:
        return self.doppler_hwhm / MHZ

    @property
    def omega_c_MHz(self) -> float:
        return self.omega_c / MHZ

    @property
    def omega_p_kHz(self) -> float:
        return self.omega_p / KHZ

    def pump_rate(self, rabi: float) -> float:
        """Rate-model pump rate I·σ/ħω₀ for a drive of Rabi frequency `rabi` (i = Ω²/Γ)."""
        return rabi * rabi / self.gamma_opt

    @property
    def i0(self) -> float:
        return self.pump_rate(self.omega_c)

    def replace(self, **changes) -> "SystemParams":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class FieldDrive:
    polarization: Polarization
    delta: float
    coupling_detuning: float
    i0: float
    i1_minus: complex
    i1_plus: complex

    @classmethod
    def from_rabi(
        cls,
        params: SystemParams,
        polarization: Polarization = Polarization.LIN_PERP_LIN,
        *,
        delta: float = 0.0,
        coupling_detuning: float = 0.0,
    ) -> "FieldDrive":
        """
        Bridge from Rabi frequencies to rate-model pump rates: i0 = Ω_C²/Γ on each
        leg and i1 = s·Ω_C·Ω_P/Γ for the beat note on a leg carrying both beams.
        Circular orthogonal beams never share a leg, so they produce no beat.
        """
        polarization = Polarization(polarization)
        i0 = params.pump_rate(params.omega_c)
        beat = params.omega_c * params.omega_p / params.gamma_opt
        if polarization is Polarization.LIN_PERP_LIN:
            s_minus, s_plus = polarization.probe_signs
            i1_minus, i1_plus = complex(s_minus * beat), complex(s_plus * beat)
        else:
            i1_minus, i1_plus = 0j, 0j
        return cls(polarization, float(delta), float(coupling_detuning), i0, i1_minus, i1_plus)

    def with_delta(self, delta: float) -> "FieldDrive":
        return dataclasses.replace(self, delta=float(delta))


@dataclass(frozen=True)
class MagneticEnvironment:
    b0: float
    db_dz: float = 0.0
    cell_length: float = 5.0
    zeeman_ground: float = -0.35
    zeeman_excited: float = -0.95

    @classmethod
    def from_units(cls, *, b0_G: float, db_dz_mG_cm: float = 0.0, cell_length_cm: float = 5.0,
                   zeeman_ground_MHz_G: float = -0.35, zeeman_excited_MHz_G: float = -0.95) -> "MagneticEnvironment":
        return cls(b0_G, db_dz_mG_cm * 1e-3, cell_length_cm, zeeman_ground_MHz_G, zeeman_excited_MHz_G)

    def __post_init__(self) -> None:
        if not self.cell_length > 0:
            raise ValidationError(Diagnostic("bad_value", f"cell_length must be > 0 cm, got {self.cell_length}"))

    @property
    def db_dz_mG_cm(self) -> float:
        return self.db_dz * 1e3

    @property
    def is_uniform(self) -> bool:
        return self.db_dz == 0.0

    def field_at(self, z):
        return self.b0 + self.db_dz * np.asarray(z, dtype=float)

    def with_gradient(self, db_dz_mG_cm: float) -> "MagneticEnvironment":
        return dataclasses.replace(self, db_dz=db_dz_mG_cm * 1e-3)


def zeeman_shifts(env: MagneticEnvironment, z):
    """
    Ground (Δ_Z) and excited-state Zeeman shifts at position `z` (cm), in rad/s.
    |∓1> sit at ∓Δ_Z. Accepts a scalar or an array of positions.
    """
    z_arr = np.asarray(z, dtype=float)
    slop = 1e-12 * env.cell_length
    if np.any(z_arr < -slop) or np.any(z_arr > env.cell_length + slop):
        raise ValidationError(Diagnostic(
            "z_out_of_cell", f"z must lie in [0, {env.cell_length}] cm, got {z!r}"))
    b = env.field_at(z_arr)
    delta_z = env.zeeman_ground * b * MHZ
    delta_e = env.zeeman_excited * b * MHZ
    if z_arr.ndim == 0:
        return float(delta_z), float(delta_e)
    return delta_z, delta_e


def raman_resonance(env: MagneticEnvironment, z, coupling_leg: int = LEG_MINUS):
    """
    Probe-coupling detuning δ = ω_P − ω_C of the two-photon resonance at `z` for a
    Λ whose coupling sits on `coupling_leg` and probe on the other leg.
    """
    delta_z, _ = zeeman_shifts(env, z)
    return -2.0 * delta_z if coupling_leg == LEG_MINUS else 2.0 * delta_z


def two_photon_spread(env: MagneticEnvironment) -> float:
    """Range (rad/s) of the Raman resonance detuning across the cell."""
    return abs(2.0 * env.zeeman_ground * env.db_dz * env.cell_length) * MHZ

@dataclass(frozen=True)
class SpectrumTrace:
    deltas: np.ndarray
    transmission: np.ndarray
    model: str
    velocity_nodes: int = 1
    z_nodes: int = 1
    metadata: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        d = np.asarray(self.deltas, dtype=float)
        t = np.asarray(self.transmission, dtype=float)
        object.__setattr__(self, "deltas", d)
        object.__setattr__(self, "transmission", t)
        diags = DiagnosticList()
        if d.ndim != 1 or d.size == 0:
            diags.add("empty_grid", "spectrum needs at least one detuning")
        elif d.shape != t.shape:
            diags.add("bad_value", "deltas and transmission differ in length")
        else:
            if np.any(np.diff(d) <= 0):
                diags.add("unsorted_grid", "deltas must be strictly increasing")
            if np.any(~np.isfinite(t)) or np.any(t <= 0) or np.any(t > 1.0 + 1e-12):
                diags.add("bad_value", "transmission must lie in (0, 1]")
        if self.model not in ("rate", "floquet", "input"):
            diags.add("bad_value", f"unknown model tag {self.model!r}")
        diags.raise_if_any()

    @property
    def deltas_MHz(self) -> np.ndarray:
        return self.deltas / MHZ

    @property
    def absorbance(self) -> np.ndarray:
        return -np.log(self.transmission)

    def window(self, center: float, half_width: float) -> "SpectrumTrace":
        mask = np.abs(self.deltas - center) <= half_width
        return dataclasses.replace(self, deltas=self.deltas[mask], transmission=self.transmission[mask])


@dataclass(frozen=True)
class DecayCurve:
    storage_times: np.ndarray
    amplitudes: np.ndarray
    memory: str
    tau: float | None = None

    def __post_init__(self) -> None:
        ts = np.asarray(self.storage_times, dtype=float)
        amps = np.asarray(self.amplitudes, dtype=float)
        object.__setattr__(self, "storage_times", ts)
        object.__setattr__(self, "amplitudes", amps)
        diags = DiagnosticList()
        if ts.shape != amps.shape or ts.ndim != 1:
            diags.add("bad_value", "storage_times and amplitudes differ in shape")
        else:
            if np.any(np.diff(ts) <= 0):
                diags.add("unsorted_grid", "storage times must be strictly increasing")
            if np.any(amps < 0):
                diags.add("bad_value", "amplitudes must be nonnegative")
        if self.memory not in ("cpo", "eit", "input"):
            diags.add("bad_value", f"unknown memory tag {self.memory!r}")
        diags.raise_if_any()

    def with_tau(self, tau: float | None) -> "DecayCurve":
        return dataclasses.replace(self, tau=tau)


@dataclass(frozen=True)
class ValidatedConfig:
    params: SystemParams
    drive: FieldDrive
    warnings: List[Diagnostic] = field(default_factory=list)


def _check_ratio(diags: DiagnosticList, warnings: List[Diagnostic], value: float, scale: float,
                 code: str, what: str) -> None:
    if value > HARD_PERTURBATIVE_RATIO * scale:
        diags.add(code, f"{what} ({value:.4g}) exceeds its reference scale ({scale:.4g})")
    elif value > SOFT_PERTURBATIVE_RATIO * scale:
        warnings.append(Diagnostic(code, f"{what} is {value / scale:.2f} of its reference scale; "
                                          f"first-order results degrade above {SOFT_PERTURBATIVE_RATIO}"))


def validate(params: SystemParams, drive: FieldDrive) -> ValidatedConfig:
    """Check every invariant of the parameter set and drive; raise with all diagnostics at once."""
    diags = DiagnosticList()
    warnings: List[Diagnostic] = []

    for name in ("gamma0", "gamma_t", "gamma_opt"):
        value = getattr(params, name)
        if not (math.isfinite(value) and value > 0):
            diags.add("rate_not_positive", f"{name} must be > 0, got {value}")
    for name in ("doppler_hwhm", "omega_c", "omega_p"):
        value = getattr(params, name)
        if not (math.isfinite(value) and value >= 0):
            diags.add("bad_value", f"{name} must be >= 0, got {value}")
    if params.gamma_t > 0 and params.gamma0 > 0 and not params.gamma_t < params.gamma0:
        diags.add("transit_not_slow", "gamma_t must be smaller than gamma0")

    if params.omega_c > 0:
        _check_ratio(diags, warnings, params.omega_p, params.omega_c,
                     "probe_not_perturbative", "probe Rabi frequency relative to coupling")
    if params.gamma0 > 0:
        _check_ratio(diags, warnings, params.omega_p, params.gamma0,
                     "probe_not_perturbative", "probe Rabi frequency relative to gamma0")

    if not (math.isfinite(drive.i0) and drive.i0 >= 0):
        diags.add("bad_value", f"i0 must be >= 0, got {drive.i0}")
    for name in ("i1_minus", "i1_plus"):
        mag = abs(getattr(drive, name))
        if drive.i0 > 0:
            if mag > SIDEBAND_RATIO * drive.i0:
                diags.add("sideband_not_perturbative",
                          f"|{name}| is {mag / drive.i0:.3g} of i0; the first-harmonic model needs <= {SIDEBAND_RATIO}")
        elif mag > 0:
            diags.add("sideband_not_perturbative", f"{name} is nonzero while i0 = 0")

    if drive.polarization is Polarization.LIN_PERP_LIN and drive.i1_plus != -drive.i1_minus:
        diags.add("antiphase_violated",
                  f"lin_perp_lin requires i1_plus == -i1_minus, got {drive.i1_plus} vs {drive.i1_minus}")

    diags.raise_if_any()
    normalized = dataclasses.replace(drive, polarization=Polarization(drive.polarization),
                                     i1_minus=complex(drive.i1_minus), i1_plus=complex(drive.i1_plus))
    return ValidatedConfig(params=params, drive=normalized, warnings=warnings)
