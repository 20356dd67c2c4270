"""
Velocity (Doppler) and position quadratures.

Every rule is a set of nodes with weights that sum to one, so integrating
with it returns an average.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import roots_hermite, roots_legendre

from .errors import Diagnostic, ValidationError
from .params import MagneticEnvironment, SystemParams

VELOCITY_METHODS = ("split", "hermite")

# split rule: the core covers ±CORE_WIDTHS optical linewidths, tails run out to TAIL_SIGMAS Gaussian sigmas
CORE_WIDTHS = 20.0
TAIL_SIGMAS = 5.0


@dataclass(frozen=True)
class Quadrature:
    nodes: np.ndarray
    weights: np.ndarray
    method: str = "single"

    def __post_init__(self) -> None:
        object.__setattr__(self, "nodes", np.asarray(self.nodes, dtype=float))
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float))

    @property
    def size(self) -> int:
        return int(self.nodes.size)

    def average(self, values, axis: int = -1):
        """Weighted average of `values` sampled at the nodes along `axis`."""
        values = np.moveaxis(np.asarray(values), axis, -1)
        # per-row summation order does not depend on the batch shape
        return (values * self.weights).sum(axis=-1)

    @classmethod
    def single(cls, node: float = 0.0) -> "Quadrature":
        return cls(np.array([node]), np.array([1.0]))


def doppler_sigma(params: SystemParams) -> float:
    """Standard deviation of the Gaussian one-photon detuning distribution of HWHM W_D."""
    return params.doppler_hwhm / math.sqrt(2.0 * math.log(2.0))


def _gauss_legendre(a: float, b: float, n: int):
    x, w = roots_legendre(n)
    half = 0.5 * (b - a)
    return 0.5 * (b + a) + half * x, half * w


def velocity_quadrature(params: SystemParams, nodes: int = 96, method: str = "split") -> Quadrature:
    """
    Nodes over the velocity-class detuning offset u (rad/s) weighted by the
    Doppler Gaussian. With a single node, or no Doppler width, the rule
    degenerates to u = 0. "split" puts `nodes` Gauss-Legendre nodes on the core
    and adds nodes // 3 on each tail, so it returns more than `nodes` nodes;
    "hermite" returns exactly `nodes`.
    """
    if method not in VELOCITY_METHODS:
        raise ValidationError(Diagnostic(
            "bad_value", f"velocity_method must be one of {VELOCITY_METHODS}, got {method!r}"))
    if nodes < 1:
        raise ValidationError(Diagnostic("bad_value", f"velocity_nodes must be >= 1, got {nodes}"))
    if nodes == 1 or params.doppler_hwhm == 0:
        return Quadrature.single()

    sigma = doppler_sigma(params)
    if method == "hermite":
        x, w = roots_hermite(nodes)
        return Quadrature(math.sqrt(2.0) * sigma * x, w / math.sqrt(math.pi), method)

    edge = TAIL_SIGMAS * sigma
    core = min(CORE_WIDTHS * params.gamma_opt, edge)
    pieces = [_gauss_legendre(-core, core, nodes)]
    tail_nodes = nodes // 3
    if core < edge and tail_nodes > 0:
        pieces.append(_gauss_legendre(-edge, -core, tail_nodes))
        pieces.append(_gauss_legendre(core, edge, tail_nodes))
    u = np.concatenate([p[0] for p in pieces])
    w = np.concatenate([p[1] for p in pieces]) * np.exp(-0.5 * (u / sigma) ** 2)
    order = np.argsort(u)
    return Quadrature(u[order], w[order] / w.sum(), method)


def position_quadrature(env: MagneticEnvironment, nodes: int = 65) -> Quadrature:
    """
    Trapezoid rule over the cell, z in cm. A uniform field does not depend
    on z, so one node at mid-cell is enough.
    """
    if nodes < 1:
        raise ValidationError(Diagnostic("bad_value", f"z_nodes must be >= 1, got {nodes}"))
    if env.is_uniform or nodes == 1:
        return Quadrature.single(0.5 * env.cell_length)
    z = np.linspace(0.0, env.cell_length, nodes)
    w = np.full(nodes, 1.0)
    w[0] = w[-1] = 0.5
    return Quadrature(z, w / w.sum(), "trapezoid")
