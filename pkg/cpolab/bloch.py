"""
Liouvillian building blocks of the three-level Λ system.

Basis: 0 = |e>, 1 = |-1>, 2 = |+1>. Density matrices are vectorized row-major,
so element (i, j) sits at 3*i + j. Leg l couples |e> to level 1 + l and its
field enters the Hamiltonian as −a_l(|e><g_l| + h.c.) with a_l = Ω_l/√2,
so a resonant leg pumps at Ω_l²/Γ.
"""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .params import SystemParams

N_LEVELS = 3
BLOCK = N_LEVELS * N_LEVELS
DIAG = np.arange(BLOCK)
_I3 = np.eye(N_LEVELS)


def vec_index(i: int, j: int) -> int:
    return N_LEVELS * i + j


EXCITED = vec_index(0, 0)
TRACE = [vec_index(k, k) for k in range(N_LEVELS)]


def leg_amplitudes(rabi: Sequence[float]) -> list[float]:
    return [r / math.sqrt(2.0) for r in rabi]


def commutator(h: np.ndarray) -> np.ndarray:
    """Superoperator of −i[h, ·]."""
    return -1j * (np.kron(h, _I3) - np.kron(_I3, h.T))


def relaxation(params: SystemParams) -> np.ndarray:
    """
    Spontaneous decay |e> → |∓1> at Γ₀/2 each, transit loss γ_t from every
    level with the thermal ground mixture refilled at γ_t/2 per sublevel,
    optical coherences damped at Γ and the Raman coherence at γ_t.
    """
    g0, gt, gopt = params.gamma0, params.gamma_t, params.gamma_opt
    d = np.zeros((BLOCK, BLOCK), dtype=complex)
    d[EXCITED, EXCITED] = -(g0 + gt)
    for g in (1, 2):
        n = vec_index(g, g)
        d[n, EXCITED] += 0.5 * g0
        d[n, n] -= gt
        for t in TRACE:
            d[n, t] += 0.5 * gt
        d[vec_index(0, g), vec_index(0, g)] = -gopt
        d[vec_index(g, 0), vec_index(g, 0)] = -gopt
    d[vec_index(1, 2), vec_index(1, 2)] = -gt
    d[vec_index(2, 1), vec_index(2, 1)] = -gt
    return d


def raising(amplitudes: Sequence[complex]) -> np.ndarray:
    """Σ_l a_l |e><g_l|."""
    op = np.zeros((N_LEVELS, N_LEVELS), dtype=complex)
    for leg, a in enumerate(amplitudes):
        op[0, 1 + leg] = a
    return op


def field_superoperator(params: SystemParams, amplitudes: Sequence[complex]) -> np.ndarray:
    """Relaxation plus static fields with per-leg amplitudes `amplitudes`, before level energies."""
    a = raising(amplitudes)
    return relaxation(params) + commutator(-(a + a.conj().T))


def energy_diagonal(energies: np.ndarray) -> np.ndarray:
    """Diagonal of −i[diag(E), ·] for each row of `energies` (shape (n, 3))."""
    return -1j * (energies[:, :, None] - energies[:, None, :]).reshape(-1, BLOCK)


def liouvillian(params: SystemParams, amplitudes: Sequence[complex], energies: np.ndarray) -> np.ndarray:
    """Batched Liouvillians, one per row of `energies`, shape (n, 9, 9)."""
    base = field_superoperator(params, amplitudes)
    out = np.repeat(base[None, :, :], energies.shape[0], axis=0)
    out[:, DIAG, DIAG] += energy_diagonal(energies)
    return out


def thermal_state() -> np.ndarray:
    rho = np.zeros(BLOCK, dtype=complex)
    rho[vec_index(1, 1)] = rho[vec_index(2, 2)] = 0.5
    return rho
