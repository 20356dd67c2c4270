"""
First-order Floquet solution of the three-level optical Bloch equations,
Doppler and cell-position averaging, and Beer-Lambert transmission.

In the frame rotating at the coupling frequency the probe appears as
e^{-iδt}, and the state is expanded as ρ(t) = Σ_k ρ_k e^{-ikδt}, k in {-1, 0, +1}.
The dc block is the coupling-only steady state; the ±1 blocks are linear
in the probe.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .analysis import LinearFit, LorentzianFit, linear_fit, peak_linewidth
from .bloch import (
    BLOCK,
    DIAG,
    EXCITED,
    N_LEVELS,
    TRACE,
    commutator,
    energy_diagonal,
    field_superoperator,
    leg_amplitudes,
    raising,
    vec_index,
)
from .errors import Diagnostic, FitError, FloquetSolveError, NumericError, QuadratureError, ValidationError
from .params import (
    LEG_MINUS,
    MHZ,
    FieldDrive,
    MagneticEnvironment,
    Polarization,
    SpectrumTrace,
    SystemParams,
    raman_resonance,
    two_photon_spread,
    zeeman_shifts,
)
from .pool import Progress, chunked, parallel_map
from .quadrature import Quadrature, position_quadrature, velocity_quadrature

HARMONICS = (-1, 0, 1)
SOLVE_CHUNK = 4096
CONVERGENCE_TOLERANCE = 5e-3
SINGULAR_CONDITION = 1e13
CALIBRATION_PROBE_SCALE = 1e-2


def probe_rabi_for_response(params: SystemParams) -> float:
    """Probe Rabi frequency used where only the linear response matters."""
    return params.omega_p if params.omega_p > 0 else 1e-3 * params.gamma_opt


@dataclass(frozen=True)
class _FloquetBlocks:
    """
    Constant 9x9 pieces of the Floquet system. The energy- and δ-dependent
    part is diagonal and added per evaluation point.
    """
    base: np.ndarray  # relaxation + coupling, ρ_ee row replaced by Γ·trace
    l_plus: np.ndarray  # −i[V₊, ·] with V₊ the e^{-iδt} probe term; ρ_ee row zeroed
    l_minus: np.ndarray
    probe_amplitudes: Tuple[float, float]
    gamma_opt: float
    mask: np.ndarray = field(repr=False)

    @classmethod
    def build(cls, params: SystemParams, polarization: Polarization, probe_rabi: float) -> "_FloquetBlocks":
        polarization = Polarization(polarization)
        c_amp = leg_amplitudes([params.omega_c * w for w in polarization.coupling_weights])
        p_amp = tuple(leg_amplitudes([probe_rabi * s for s in polarization.probe_signs]))
        v_plus = -raising(p_amp)

        base = field_superoperator(params, c_amp)
        base[EXCITED, :] = 0.0
        base[EXCITED, TRACE] = params.gamma_opt
        l_plus = commutator(v_plus)
        l_minus = commutator(v_plus.conj().T)
        l_plus[EXCITED, :] = 0.0
        l_minus[EXCITED, :] = 0.0
        mask = np.ones(BLOCK)
        mask[EXCITED] = 0.0
        return cls(base, l_plus, l_minus, p_amp, params.gamma_opt, mask)

    def matrices(self, energies: np.ndarray, k: int, delta) -> np.ndarray:
        """Block k for each row of `energies` (shape (n, 3)); `delta` broadcasts against n."""
        diag = energy_diagonal(energies)
        if k:
            diag = diag + 1j * k * np.asarray(delta, dtype=float).reshape(-1, 1)
        a = np.repeat(self.base[None, :, :], energies.shape[0], axis=0)
        a[:, DIAG, DIAG] += diag * self.mask
        return a

    def dc_rhs(self, n: int) -> np.ndarray:
        b = np.zeros((n, BLOCK), dtype=complex)
        b[:, EXCITED] = self.gamma_opt
        return b

    def chi(self, rho_plus: np.ndarray) -> np.ndarray:
        """Per-point χ_P from the +1 harmonic (shape (n, 9)), averaged over probe legs."""
        legs = [leg for leg, a in enumerate(self.probe_amplitudes) if a != 0.0]
        if not legs:
            raise ValidationError(Diagnostic("bad_value", "polarization carries no probe"))
        total = 0.0
        for leg in legs:
            total = total + self.gamma_opt * rho_plus[..., vec_index(0, 1 + leg)] / self.probe_amplitudes[leg]
        return total / len(legs)


def _solve(a: np.ndarray, b: np.ndarray, describe: Callable[[int], Dict[str, float]]) -> np.ndarray:
    try:
        x = np.linalg.solve(a, b[..., None])[..., 0]
    except np.linalg.LinAlgError:
        conds = np.linalg.cond(a)
        worst = int(np.argmax(np.where(np.isfinite(conds), conds, np.inf)))
        raise FloquetSolveError("singular Floquet system", condition=float(conds[worst]),
                                parameters=describe(worst)) from None
    bad = ~np.all(np.isfinite(x), axis=-1)
    if np.any(bad):
        worst = int(np.argmax(bad))
        raise FloquetSolveError("non-finite Floquet solution", condition=float(np.linalg.cond(a[worst])),
                                parameters=describe(worst))
    return x


@dataclass(frozen=True)
class LocalConditions:
    """
    Velocity class and position of one atom group. All velocity classes see
    the same Raman detuning because the beams copropagate and are nearly
    degenerate, so only the excited level moves with u.
    """
    velocity_offset: float = 0.0
    z: float = 0.0
    delta_z: float = 0.0
    delta_e: float = 0.0
    coupling_detuning: float = 0.0

    @classmethod
    def at(cls, env: MagneticEnvironment, z: float, *, velocity_offset: float = 0.0,
           coupling_detuning: float = 0.0, excited_shift: bool = True) -> "LocalConditions":
        dz, de = zeeman_shifts(env, z)
        return cls(float(velocity_offset), float(z), dz, de if excited_shift else 0.0, float(coupling_detuning))

    def energies(self, velocity_offsets=None) -> np.ndarray:
        """Level energies in the coupling frame, one row per velocity offset."""
        u = np.atleast_1d(self.velocity_offset if velocity_offsets is None else velocity_offsets).astype(float)
        e = np.empty((u.size, N_LEVELS))
        e[:, 0] = self.delta_e - (self.coupling_detuning + u)
        e[:, 1] = -self.delta_z
        e[:, 2] = self.delta_z
        return e

    @property
    def one_photon_detunings(self) -> Tuple[float, float]:
        """Coupling detuning from the |e> ↔ |∓1> transitions."""
        e = self.energies()[0]
        return (float(e[1] - e[0]), float(e[2] - e[0]))

    @property
    def raman_detuning(self) -> float:
        return 2.0 * self.delta_z


@dataclass(frozen=True)
class BlochHarmonics:
    rho: np.ndarray  # shape (3, 3, 3) indexed [k + 1, i, j]

    def harmonic(self, k: int) -> np.ndarray:
        return self.rho[k + 1]

    @property
    def dc(self) -> np.ndarray:
        return self.rho[1]

    def populations(self, k: int = 0) -> np.ndarray:
        return np.diagonal(self.harmonic(k)).copy()

    def inversion(self, leg: int, k: int = 0) -> complex:
        h = self.harmonic(k)
        return complex(2.0 * (h[0, 0] - h[1 + leg, 1 + leg]))

    @property
    def raman_coherence(self) -> np.ndarray:
        """ρ_{-1,+1} for k = -1, 0, +1."""
        return self.rho[:, 1, 2].copy()


@dataclass(frozen=True)
class FloquetSystem:
    matrix: np.ndarray  # (27, 27), blocks ordered k = -1, 0, +1
    rhs: np.ndarray
    local: LocalConditions
    delta: float
    blocks: _FloquetBlocks = field(repr=False)


@dataclass(frozen=True)
class ProbeResponse:
    harmonics: BlochHarmonics
    chi: complex


def assemble_floquet_system(params: SystemParams, drive: FieldDrive, local: LocalConditions) -> FloquetSystem:
    """
    Dense 27x27 system over the three harmonics. In every block the ρ_ee row is
    replaced by the trace condition scaled by Γ (Tr ρ_0 = 1, Tr ρ_±1 = 0). The dc rows carry no
    probe terms, which keeps the ±1 harmonics exactly linear in the probe.
    """
    blocks = _FloquetBlocks.build(params, drive.polarization, params.omega_p)
    e = local.energies()
    m = np.zeros((3 * BLOCK, 3 * BLOCK), dtype=complex)
    for b, k in enumerate(HARMONICS):
        m[b * BLOCK:(b + 1) * BLOCK, b * BLOCK:(b + 1) * BLOCK] = blocks.matrices(e, k, drive.delta)[0]
    m[2 * BLOCK:, BLOCK:2 * BLOCK] = blocks.l_plus
    m[:BLOCK, BLOCK:2 * BLOCK] = blocks.l_minus
    rhs = np.zeros(3 * BLOCK, dtype=complex)
    rhs[BLOCK + EXCITED] = blocks.gamma_opt
    return FloquetSystem(m, rhs, local, float(drive.delta), blocks)


def _local_parameters(system: FloquetSystem) -> Dict[str, float]:
    loc = system.local
    return {"delta_MHz": system.delta / MHZ, "u_MHz": loc.velocity_offset / MHZ,
            "z_cm": loc.z, "delta_z_MHz": loc.delta_z / MHZ}


def solve_harmonics(system: FloquetSystem) -> BlochHarmonics:
    cond = float(np.linalg.cond(system.matrix))
    if not cond < SINGULAR_CONDITION:
        raise FloquetSolveError("ill-conditioned Floquet system", condition=cond,
                                parameters=_local_parameters(system))
    x = _solve(system.matrix[None], system.rhs[None], lambda _: _local_parameters(system))[0]
    return BlochHarmonics(x.reshape(3, N_LEVELS, N_LEVELS))


def solve_local_susceptibility(system: FloquetSystem) -> complex:
    """
    Probe susceptibility χ_P in units where an unsaturated two-level leg gives
    i·n·Γ/(Γ − iδ) with n the ground-excited population difference; Im χ_P > 0
    is absorption.
    """
    if not any(system.blocks.probe_amplitudes):
        raise ValidationError(Diagnostic("bad_value", "probe susceptibility needs omega_p > 0"))
    h = solve_harmonics(system)
    return complex(system.blocks.chi(h.harmonic(1).reshape(1, BLOCK))[0])


def probe_response(params: SystemParams, drive: FieldDrive, local: LocalConditions) -> ProbeResponse:
    """Harmonics at the actual probe strength together with χ_P."""
    system = assemble_floquet_system(params, drive, local)
    harmonics = solve_harmonics(system)
    if params.omega_p > 0:
        chi = complex(system.blocks.chi(harmonics.harmonic(1).reshape(1, BLOCK))[0])
    else:
        probed = params.replace(omega_p=probe_rabi_for_response(params))
        chi = solve_local_susceptibility(assemble_floquet_system(probed, drive, local))
    return ProbeResponse(harmonics, chi)


def check_harmonics(h: BlochHarmonics, tol: float = 1e-10) -> float:
    """
    Largest relative violation of ρ_{-k} = ρ_k† and of the trace conditions
    (Tr ρ_0 = 1, Tr ρ_±1 = 0). Raises when it exceeds `tol`.
    """
    scale = max(float(np.max(np.abs(h.rho))), 1e-300)
    side = max(float(np.max(np.abs(h.harmonic(1)))), 1e-300)
    deviations = [
        float(np.max(np.abs(h.harmonic(-1) - h.harmonic(1).conj().T))) / side,
        float(np.max(np.abs(h.dc - h.dc.conj().T))) / scale,
        abs(np.trace(h.dc) - 1.0),
        abs(np.trace(h.harmonic(1))) / side,
        abs(np.trace(h.harmonic(-1))) / side,
    ]
    worst = max(deviations)
    if worst > tol:
        raise FloquetSolveError(f"harmonics violate hermiticity/trace by {worst:.3e}")
    return worst


def _averaged_chi(blocks: _FloquetBlocks, local: LocalConditions, deltas: np.ndarray, vq: Quadrature) -> np.ndarray:
    """Velocity-averaged χ_P at one position for every δ (shape (n_delta,))."""
    energies = local.energies(vq.nodes)
    n_u = vq.size

    def describe_dc(i):
        return {"u_MHz": vq.nodes[i] / MHZ, "z_cm": local.z, "delta_z_MHz": local.delta_z / MHZ}

    rho0 = _solve(blocks.matrices(energies, 0, None), blocks.dc_rhs(n_u), describe_dc)
    src = -(rho0 @ blocks.l_plus.T)

    per_chunk = max(1, SOLVE_CHUNK // n_u)
    out = np.empty(deltas.size, dtype=complex)
    for start in range(0, deltas.size, per_chunk):
        d = deltas[start:start + per_chunk]
        e = np.tile(energies, (d.size, 1))
        dd = np.repeat(d, n_u)

        def describe(i, dd=dd):
            return {"delta_MHz": dd[i] / MHZ, "u_MHz": vq.nodes[i % n_u] / MHZ, "z_cm": local.z}

        rho1 = _solve(blocks.matrices(e, 1, dd), np.tile(src, (d.size, 1)), describe)
        chi = blocks.chi(rho1).reshape(d.size, n_u)
        out[start:start + d.size] = vq.average(chi)
    return out


def _check_deltas(deltas) -> np.ndarray:
    d = np.atleast_1d(np.asarray(deltas, dtype=float))
    if d.ndim != 1 or d.size == 0:
        raise ValidationError(Diagnostic("empty_grid", "delta grid is empty"))
    if np.any(np.diff(d) <= 0):
        raise ValidationError(Diagnostic("unsorted_grid", "delta grid must be strictly increasing"))
    return d


def doppler_average(
    params: SystemParams,
    drive: FieldDrive,
    env: MagneticEnvironment,
    z: float,
    *,
    nodes: int = 96,
    method: str = "split",
    deltas=None,
    excited_shift: bool = True,
    check_convergence: bool = False,
):
    """
    Gaussian velocity average of χ_P at position `z`. Returns a complex scalar
    at drive.delta, or an array over `deltas`. With `check_convergence` the
    average is repeated with twice the nodes and a change of the absorption
    above 0.5% raises QuadratureError.
    """
    scalar = deltas is None
    d = _check_deltas(drive.delta if scalar else deltas)
    blocks = _FloquetBlocks.build(params, drive.polarization, probe_rabi_for_response(params))
    local = LocalConditions.at(env, z, coupling_detuning=drive.coupling_detuning, excited_shift=excited_shift)
    chi = _averaged_chi(blocks, local, d, velocity_quadrature(params, nodes, method))
    if check_convergence and nodes > 1:
        finer = _averaged_chi(blocks, local, d, velocity_quadrature(params, 2 * nodes, method))
        scale = max(float(np.max(np.abs(finer.imag))), 1e-300)
        change = float(np.max(np.abs(finer.imag - chi.imag))) / scale
        if change > CONVERGENCE_TOLERANCE:
            raise QuadratureError(f"velocity quadrature with {nodes} nodes not converged", relative_change=change)
    return complex(chi[0]) if scalar else chi


@dataclass(frozen=True)
class Calibration:
    """Optical-depth setting: calibrated to a line-center transmission, or fixed."""
    enabled: bool = True
    line_center_transmission: float = 0.27
    optical_depth: float = -math.log(0.27)

    def __post_init__(self) -> None:
        if not 0.0 < self.line_center_transmission < 1.0:
            raise ValidationError(Diagnostic("bad_value", "line_center_transmission must lie in (0, 1)"))
        if not self.optical_depth > 0:
            raise ValidationError(Diagnostic("bad_value", "optical_depth must be > 0"))


@dataclass(frozen=True)
class OpticalDepthScale:
    optical_depth: float
    reference_absorption: float

    def transmission(self, absorption) -> np.ndarray:
        return np.exp(-self.optical_depth * np.asarray(absorption) / self.reference_absorption)


@dataclass(frozen=True)
class SpectrumOptions:
    velocity_nodes: int = 96
    velocity_method: str = "split"
    z_nodes: int = 65
    excited_shift: bool = True
    calibration: Calibration = field(default_factory=Calibration)


def _mean_absorption(blocks: _FloquetBlocks, env: MagneticEnvironment, drive: FieldDrive, deltas: np.ndarray,
                     vq: Quadrature, zq: Quadrature, excited_shift: bool) -> np.ndarray:
    """Position-averaged Im χ̄ for every δ, positions summed in grid order."""
    per_z = np.empty((zq.size, deltas.size))
    for i, z in enumerate(zq.nodes):
        local = LocalConditions.at(env, z, coupling_detuning=drive.coupling_detuning, excited_shift=excited_shift)
        per_z[i] = _averaged_chi(blocks, local, deltas, vq).imag
    return zq.average(per_z, axis=0)


def calibrate_optical_depth(params: SystemParams, drive: FieldDrive, env: MagneticEnvironment,
                            options: SpectrumOptions = SpectrumOptions()) -> OpticalDepthScale:
    """
    Absorption of a weak probe (1% of Ω_P) with the coupling off, at line
    center, sets the scale: that reference transmits `line_center_transmission`
    when calibration is enabled, or exp(−optical_depth) when it is not.
    """
    weak = params.replace(omega_c=0.0, omega_p=CALIBRATION_PROBE_SCALE * probe_rabi_for_response(params))
    probe_only = FieldDrive.from_rabi(weak, drive.polarization)
    blocks = _FloquetBlocks.build(weak, probe_only.polarization, weak.omega_p)
    vq = velocity_quadrature(params, options.velocity_nodes, options.velocity_method)
    zq = position_quadrature(env, options.z_nodes)
    reference = float(_mean_absorption(blocks, env, probe_only, np.zeros(1), vq, zq, options.excited_shift)[0])
    if not reference > 0:
        raise NumericError(f"reference absorption must be positive, got {reference:.3e}")
    cal = options.calibration
    od = -math.log(cal.line_center_transmission) if cal.enabled else cal.optical_depth
    return OpticalDepthScale(od, reference)


def transmission_spectrum(
    params: SystemParams,
    drive: FieldDrive,
    env: MagneticEnvironment,
    deltas,
    options: SpectrumOptions = SpectrumOptions(),
    *,
    workers: int = 1,
    check_convergence: bool = False,
    progress: Optional[Progress] = None,
) -> SpectrumTrace:
    """
    Probe transmission T(δ) = exp(−OD·⟨Im χ̄⟩_z / reference) through the cell,
    the coupling taken as undepleted. δ chunks run on `workers` threads; the
    result does not depend on how they are split.
    """
    d = _check_deltas(deltas)
    blocks = _FloquetBlocks.build(params, drive.polarization, probe_rabi_for_response(params))
    vq = velocity_quadrature(params, options.velocity_nodes, options.velocity_method)
    zq = position_quadrature(env, options.z_nodes)

    scale = calibrate_optical_depth(params, drive, env, options)
    parts = parallel_map(
        lambda chunk: _mean_absorption(blocks, env, drive, np.asarray(chunk), vq, zq, options.excited_shift),
        chunked(d, max(1, workers) * 4), workers, progress)
    transmission = scale.transmission(np.concatenate(parts))

    if check_convergence and vq.size > 1:
        finer = dataclasses.replace(options, velocity_nodes=2 * options.velocity_nodes)
        t2 = transmission_spectrum(params, drive, env, d, finer, workers=workers).transmission
        change = float(np.max(np.abs(np.minimum(t2, 1.0) - np.minimum(transmission, 1.0)) / t2))
        if change > CONVERGENCE_TOLERANCE:
            raise QuadratureError(f"velocity quadrature with {options.velocity_nodes} nodes not converged",
                                  relative_change=change)

    return SpectrumTrace(
        deltas=d,
        transmission=np.minimum(transmission, 1.0),
        model="floquet",
        velocity_nodes=vq.size,
        z_nodes=zq.size,
        metadata={
            "polarization": Polarization(drive.polarization).value,
            "b0_G": f"{env.b0:.10g}",
            "db_dz_mG_cm": f"{env.db_dz_mG_cm:.10g}",
            "velocity_method": options.velocity_method,
        },
    )


@dataclass(frozen=True)
class GradientLinewidth:
    gradient_mG_cm: float
    cpo_fwhm: float  # rad/s; nan when the fit failed
    eit_fwhm: float  # eit_homogeneous_fwhm + two_photon_spread
    trace: SpectrumTrace = field(repr=False)
    cpo_height: float = math.nan  # absorbance units
    eit_homogeneous_fwhm: float = math.nan
    two_photon_spread: float = 0.0


@dataclass(frozen=True)
class GradientSweep:
    rows: List[GradientLinewidth]
    cpo_fit: Optional[LinearFit]
    eit_fit: Optional[LinearFit]


def _fit_or_none(trace: SpectrumTrace, center: float, half_window: float,
                 box_width: float = 0.0) -> Optional[LorentzianFit]:
    try:
        fit = peak_linewidth(trace, center, half_window, box_width=box_width)
    except FitError:
        return None
    return fit if fit.converged else None


def _line_fit_or_none(x: Sequence[float], y: Sequence[float]) -> Optional[LinearFit]:
    x = np.asarray(x)
    y = np.asarray(y)
    ok = np.isfinite(y)
    try:
        return linear_fit(x[ok], y[ok])
    except FitError:
        return None


def linewidth_vs_gradient(
    params: SystemParams,
    drive: FieldDrive,
    env: MagneticEnvironment,
    gradients_mG_cm: Sequence[float],
    deltas,
    options: SpectrumOptions = SpectrumOptions(),
    *,
    cpo_half_window: float = 0.2 * MHZ,
    eit_half_window: float = 0.3 * MHZ,
    workers: int = 1,
    progress: Optional[Progress] = None,
) -> GradientSweep:
    """
    Transmission spectrum and fitted CPO (δ = 0) and EIT (Raman resonance at
    mid-cell) widths for each gradient.

    Along a linear gradient the absorbance is the local line averaged over
    Raman resonances spread uniformly across `two_photon_spread`, so the EIT
    peak is fitted as a Lorentzian convolved with that box. Its width is
    reported as Lorentzian FWHM plus spread: the band of probe detunings at
    which some slice of the cell lies within its homogeneous half-width of
    two-photon resonance. A failed fit leaves NaN in its row and the sweep
    carries on; the width-vs-gradient lines use the finite rows.
    """
    rows: List[GradientLinewidth] = []
    for i, g in enumerate(gradients_mG_cm, 1):
        env_g = env.with_gradient(g)
        trace = transmission_spectrum(params, drive, env_g, deltas, options, workers=workers)
        spread = two_photon_spread(env_g)
        eit_center = raman_resonance(env_g, 0.5 * env_g.cell_length, LEG_MINUS)
        cpo = _fit_or_none(trace, 0.0, cpo_half_window)
        eit = _fit_or_none(trace, eit_center, eit_half_window, box_width=spread)
        rows.append(GradientLinewidth(
            gradient_mG_cm=float(g),
            cpo_fwhm=cpo.fwhm if cpo else math.nan,
            eit_fwhm=eit.fwhm + spread if eit else math.nan,
            trace=trace,
            cpo_height=cpo.amplitude if cpo else math.nan,
            eit_homogeneous_fwhm=eit.fwhm if eit else math.nan,
            two_photon_spread=spread,
        ))
        if progress:
            progress(i, len(gradients_mG_cm))
    grads = [r.gradient_mG_cm for r in rows]
    return GradientSweep(
        rows=rows,
        cpo_fit=_line_fit_or_none(grads, [r.cpo_fwhm for r in rows]),
        eit_fit=_line_fit_or_none(grads, [r.eit_fwhm for r in rows]),
    )
