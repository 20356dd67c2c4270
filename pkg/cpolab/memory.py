"""
Write / store / read simulation of the CPO and EIT memories.

Fields are piecewise constant, so every constant segment is an exact matrix
exponential of a static Liouvillian. The frame rotates the excited level
with the |-1> leg field and the |+1> level with the difference of the two
leg frequencies, which makes both legs static. Finite switching ramps are
integrated with solve_ivp.

The reported signal is the field radiated into the probe polarization by
the (velocity, position)-averaged optical coherences, minus the same run
with the probe off during the write.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from .analysis import fit_exponential
from .bloch import BLOCK, leg_amplitudes, liouvillian, thermal_state, vec_index
from .errors import Diagnostic, DiagnosticList, FitError, IntegrationError, NumericError, ValidationError
from .params import (
    LEG_MINUS,
    MHZ,
    DecayCurve,
    FieldDrive,
    MagneticEnvironment,
    Polarization,
    SystemParams,
    raman_resonance,
    zeeman_shifts,
)
from .pool import Progress, parallel_map
from .quadrature import position_quadrature, velocity_quadrature

US = 1e-6
MIN_WRITE_TRANSIT_TIMES = 10.0
MIN_DECAY_POINTS = 6
MIN_FIT_POINTS = 4


class Memory(str, Enum):
    CPO = "cpo"
    EIT = "eit"


@dataclass(frozen=True)
class PulseSequence:
    """Times in seconds; the read trace starts (t = 0) when the read coupling is switched on."""
    write_duration: float = 100 * US
    storage_time: float = 0.0
    read_duration: float = 8 * US
    read_points: int = 400
    ramp_time: float = 0.0
    # peak amplitude is read within this time of the read coupling reaching full power
    readout_window: float = 0.5 * US

    @classmethod
    def from_us(cls, *, write_us: float = 100.0, storage_us: float = 0.0, read_us: float = 8.0,
                read_points: int = 400, ramp_us: float = 0.0, readout_us: float = 0.5) -> "PulseSequence":
        return cls(write_us * US, storage_us * US, read_us * US, int(read_points), ramp_us * US, readout_us * US)

    def with_storage(self, storage_time: float) -> "PulseSequence":
        return dataclasses.replace(self, storage_time=float(storage_time))

    def validate(self, params: SystemParams) -> None:
        diags = DiagnosticList()
        for name in ("write_duration", "storage_time", "read_duration", "ramp_time"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                diags.add("bad_value", f"{name} must be >= 0, got {value}")
        if self.read_points < 2:
            diags.add("bad_value", f"read_points must be >= 2, got {self.read_points}")
        if not self.read_duration > 0:
            diags.add("bad_value", "read_duration must be > 0")
        if not (math.isfinite(self.readout_window) and self.readout_window > 0):
            diags.add("bad_value", f"readout_window must be > 0, got {self.readout_window}")
        if params.gamma_t > 0 and self.write_duration < MIN_WRITE_TRANSIT_TIMES / params.gamma_t:
            diags.add("write_too_short",
                      f"write_duration {self.write_duration / US:.3g} us is shorter than "
                      f"{MIN_WRITE_TRANSIT_TIMES:g}/gamma_t = {MIN_WRITE_TRANSIT_TIMES / params.gamma_t / US:.3g} us")
        diags.raise_if_any()


@dataclass(frozen=True)
class RetrievedPulse:
    times: np.ndarray  # s, zero at read-on
    signal: np.ndarray  # |E(t)| in units of the probe Rabi frequency over Γ
    peak_amplitude: float  # max of signal within the readout window
    memory: str
    storage_time: float


@dataclass(frozen=True)
class MemoryOptions:
    velocity_nodes: int = 96
    velocity_method: str = "split"
    z_nodes: int = 65
    excited_shift: bool = True


def memory_drive(params: SystemParams, env: MagneticEnvironment, memory: Memory | str,
                 coupling_detuning: float = 0.0) -> FieldDrive:
    """
    CPO: lin⊥lin beams at δ = 0. EIT: circular orthogonal beams on the Raman
    resonance of the cell center.
    """
    memory = Memory(memory)
    if memory is Memory.CPO:
        return FieldDrive.from_rabi(params, Polarization.LIN_PERP_LIN, coupling_detuning=coupling_detuning)
    delta = raman_resonance(env, 0.5 * env.cell_length, LEG_MINUS)
    return FieldDrive.from_rabi(params, Polarization.CIRC_ORTHOGONAL, delta=delta,
                                coupling_detuning=coupling_detuning)


def eit_dephasing_kernel(env: MagneticEnvironment, storage_time):
    """
    Cell average (1/L)∫exp(i·2Δ_Z(z)·t_s)dz of the Raman phase. For a linear
    field the magnitude is |sinc| of the phase spread across the cell.
    """
    t = np.asarray(storage_time, dtype=float)
    a = 2.0 * env.zeeman_ground * env.b0 * MHZ
    b = 2.0 * env.zeeman_ground * env.db_dz * MHZ
    spread = b * env.cell_length * t
    kernel = np.exp(1j * (a * t + 0.5 * spread)) * np.sinc(spread / (2.0 * np.pi))
    return complex(kernel) if kernel.ndim == 0 else kernel


def _frame_energies(env: MagneticEnvironment, drive: FieldDrive, z: np.ndarray, u: np.ndarray,
                    excited_shift: bool) -> np.ndarray:
    """Level energies (n, 3) in the frame where both leg fields are static."""
    dz, de = zeeman_shifts(env, z)
    dz = np.atleast_1d(dz)
    de = np.atleast_1d(de) if excited_shift else np.zeros_like(dz)
    e = np.empty((dz.size, 3))
    e[:, 0] = de - (drive.coupling_detuning + np.broadcast_to(u, dz.shape))
    e[:, 1] = -dz
    e[:, 2] = dz + drive.delta
    return e


def storage_propagator(params: SystemParams, env: MagneticEnvironment, storage_time: float, z: float, *,
                       velocity_offset: float = 0.0, delta: float = 0.0, excited_shift: bool = True) -> np.ndarray:
    """Free-evolution propagator (9x9) over `storage_time` for one atom group, fields off."""
    drive = FieldDrive(Polarization.LIN_PERP_LIN, float(delta), 0.0, 0.0, 0j, 0j)
    e = _frame_energies(env, drive, np.atleast_1d(float(z)), np.atleast_1d(float(velocity_offset)), excited_shift)
    return expm(liouvillian(params, (0.0, 0.0), e)[0] * storage_time)


def stored_population_decay(params: SystemParams, env: MagneticEnvironment, storage_time: float,
                            z_nodes: int = 65) -> np.ndarray:
    """
    Fraction of an initial ground-population imbalance n_-1 − n_+1 left after
    `storage_time`, at each of `z_nodes` positions across the cell.
    """
    imbalance = 0.1
    rho = np.zeros(BLOCK, dtype=complex)
    rho[vec_index(1, 1)] = 0.5 + 0.5 * imbalance
    rho[vec_index(2, 2)] = 0.5 - 0.5 * imbalance
    out = np.empty(z_nodes)
    for i, z in enumerate(np.linspace(0.0, env.cell_length, z_nodes)):
        after = storage_propagator(params, env, storage_time, z) @ rho
        out[i] = (after[vec_index(1, 1)] - after[vec_index(2, 2)]).real / imbalance
    return out


def stored_coherence_decay(params: SystemParams, env: MagneticEnvironment, storage_time: float,
                           z_nodes: int = 65) -> complex:
    """
    Cell-averaged Raman coherence ρ₋₁,₊₁ after `storage_time`, relative to a
    coherence written uniformly along the cell. With the fields off this is
    the dephasing kernel times exp(−γ_t·t_s).
    """
    rho = thermal_state()
    rho[vec_index(1, 2)] = rho[vec_index(2, 1)] = 0.05
    zq = position_quadrature(env, z_nodes)
    stored = sum(w * (storage_propagator(params, env, storage_time, z) @ rho)[vec_index(1, 2)]
                 for z, w in zip(zq.nodes, zq.weights))
    return complex(stored / 0.05)


class StorageExperiment:
    """
    One write, many storage times. The write (with the probe and, for the
    reference, without it) is computed once; `retrieve` then applies storage
    and read for a given t_s.
    """

    def __init__(self, params: SystemParams, drive: FieldDrive, env: MagneticEnvironment,
                 seq: PulseSequence, memory: Memory | str, options: MemoryOptions = MemoryOptions()):
        seq.validate(params)
        self.params = params
        self.env = env
        self.seq = seq
        self.memory = Memory(memory)
        self.drive = memory_drive(params, env, self.memory, drive.coupling_detuning)
        pol = self.drive.polarization

        vq = velocity_quadrature(params, options.velocity_nodes, options.velocity_method)
        zq = position_quadrature(env, options.z_nodes)
        self.velocity_nodes, self.z_nodes = vq.size, zq.size
        # z-major grid of atom groups
        self._z = np.repeat(zq.nodes, vq.size)
        u = np.tile(vq.nodes, zq.size)
        self._weights = np.outer(zq.weights, vq.weights).ravel()
        self._slices = [slice(i * vq.size, (i + 1) * vq.size) for i in range(zq.size)]
        self._energies = _frame_energies(env, self.drive, self._z, u, options.excited_shift)

        coupling = leg_amplitudes([params.omega_c * w for w in pol.coupling_weights])
        probe = leg_amplitudes([params.omega_p * s for s in pol.probe_signs])
        write = tuple(c + p for c, p in zip(coupling, probe))
        self._channel = [vec_index(0, 1 + leg) for leg in pol.probe_legs]
        self._signs = [pol.probe_signs[leg] for leg in pol.probe_legs]
        self._scale = params.gamma_opt / params.omega_p if params.omega_p > 0 else 1.0

        self._l_store = liouvillian(params, (0.0, 0.0), self._energies)
        self._l_read = liouvillian(params, coupling, self._energies)
        l_write = np.stack([liouvillian(params, write, self._energies),
                            liouvillian(params, coupling, self._energies)])

        start = np.broadcast_to(thermal_state(), (2, self._z.size, BLOCK))
        written = np.einsum("snij,snj->sni", expm(l_write * seq.write_duration), start)
        if seq.ramp_time > 0:
            written = np.stack([
                self._ramp(l_write[s], self._l_store, written[s], seq.ramp_time) for s in range(2)])
        self._written = written

        self._dt = seq.read_duration / (seq.read_points - 1)
        self._read_step = expm(self._l_read * self._dt)

    def _ramp(self, l_from: np.ndarray, l_to: np.ndarray, rho: np.ndarray, duration: float,
              t_eval: Optional[np.ndarray] = None):
        """
        Linear ramp of the field amplitudes from the `l_from` to the `l_to`
        settings over `duration`, integrated per cell slice. The Liouvillian is
        affine in the amplitude, so it is interpolated directly.
        """
        span = t_eval[-1] if t_eval is not None and t_eval.size else duration
        out_final = np.empty_like(rho)
        out_samples = None if t_eval is None else np.empty((t_eval.size,) + rho.shape, dtype=complex)
        for sl in self._slices:
            a, b, y0 = l_from[sl], l_to[sl], rho[sl]
            n = y0.shape[0]

            def rhs(t, y, a=a, b=b, n=n):
                f = min(t / duration, 1.0)
                m = a + f * (b - a)
                return np.einsum("nij,nj->ni", m, y.reshape(n, BLOCK)).ravel()

            sol = solve_ivp(rhs, (0.0, span), y0.ravel(), method="DOP853", t_eval=t_eval,
                            rtol=1e-8, atol=1e-12, max_step=duration / 16.0)
            if not sol.success:
                raise IntegrationError(f"switching ramp failed: {sol.message}", z=float(self._z[sl][0]))
            if t_eval is None:
                out_final[sl] = sol.y[:, -1].reshape(n, BLOCK)
            else:
                out_samples[:, sl] = sol.y.T.reshape(t_eval.size, n, BLOCK)
                out_final[sl] = out_samples[-1, sl]
        return out_final if t_eval is None else (out_final, out_samples)

    def _field(self, rho: np.ndarray) -> np.ndarray:
        """Probe-channel field of the averaged coherences; rho has shape (..., n, 9)."""
        coherence = sum(s * rho[..., c] for s, c in zip(self._signs, self._channel))
        return (coherence * self._weights).sum(axis=-1)

    def retrieve(self, storage_time: float) -> RetrievedPulse:
        if not (math.isfinite(storage_time) and storage_time >= 0):
            raise ValidationError(Diagnostic("bad_value", f"storage time must be >= 0, got {storage_time}"))
        seq = self.seq
        rho = self._written
        if storage_time > 0:
            rho = np.einsum("nij,snj->sni", expm(self._l_store * storage_time), rho)

        times = np.arange(seq.read_points) * self._dt
        fields = np.empty((seq.read_points, 2), dtype=complex)
        k0 = 0
        if seq.ramp_time > 0:
            k0 = min(int(math.ceil(seq.ramp_time / self._dt)), seq.read_points - 1)
            samples = []
            final = []
            for s in range(2):
                f, smp = self._ramp(self._l_store, self._l_read, rho[s], seq.ramp_time, t_eval=times[:k0 + 1])
                final.append(f)
                samples.append(smp)
            rho = np.stack(final)
            for s in range(2):
                fields[:k0, s] = self._field(samples[s][:k0])
        for k in range(k0, seq.read_points):
            fields[k] = self._field(rho)
            rho = np.einsum("nij,snj->sni", self._read_step, rho)

        if not np.all(np.isfinite(fields)):
            raise NumericError("non-finite retrieved field")
        signal = np.abs(fields[:, 0] - fields[:, 1]) * self._scale
        early = signal[times <= seq.ramp_time + seq.readout_window + 0.5 * self._dt]
        return RetrievedPulse(times, signal, float(early.max()), self.memory.value, float(storage_time))


def simulate_storage(params: SystemParams, drive: FieldDrive, env: MagneticEnvironment, seq: PulseSequence,
                     memory: Memory | str, options: MemoryOptions = MemoryOptions()) -> RetrievedPulse:
    """Full write / store / read sequence at seq.storage_time."""
    return StorageExperiment(params, drive, env, seq, memory, options).retrieve(seq.storage_time)


def default_storage_times() -> np.ndarray:
    return np.geomspace(0.2 * US, 12 * US, 8)


def decay_curve(
    params: SystemParams,
    drive: FieldDrive,
    env: MagneticEnvironment,
    storage_times: Sequence[float],
    memory: Memory | str,
    seq: PulseSequence = PulseSequence(),
    options: MemoryOptions = MemoryOptions(),
    *,
    workers: int = 1,
    progress: Optional[Progress] = None,
    experiment: Optional[StorageExperiment] = None,
) -> DecayCurve:
    """
    Retrieved peak amplitude against storage time, with τ from an exponential
    fit when it converges. Points whose retrieval fails numerically are
    dropped; at least four must survive for the fit.
    """
    times = np.asarray(storage_times, dtype=float)
    if times.size < MIN_DECAY_POINTS:
        raise ValidationError(Diagnostic("bad_value", f"decay curve needs >= {MIN_DECAY_POINTS} storage times"))
    if np.any(np.diff(times) <= 0):
        raise ValidationError(Diagnostic("unsorted_grid", "storage times must be strictly increasing"))
    experiment = experiment or StorageExperiment(params, drive, env, seq, memory, options)

    def one(t: float) -> float:
        try:
            return experiment.retrieve(t).peak_amplitude
        except NumericError:
            return math.nan

    amplitudes = np.asarray(parallel_map(one, list(times), workers, progress))
    ok = np.isfinite(amplitudes)
    if ok.sum() < MIN_FIT_POINTS:
        raise FitError(f"only {int(ok.sum())} storage times retrieved, need {MIN_FIT_POINTS} for a fit")
    curve = DecayCurve(times[ok], amplitudes[ok], experiment.memory.value)
    try:
        fit = fit_exponential(curve)
    except FitError:
        return curve
    return curve.with_tau(fit.tau if fit.converged else None)
