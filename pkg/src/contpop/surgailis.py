"""Exactly soluble non-interacting flow (immigration plus independent deaths).

With the competition switched off, the model factorizes: each initial
particle at x survives to time t with probability psi_t(x) = exp(-m(x) t),
and immigration lays down an independent Poisson field with intensity
phi_t(x) = b(x) (1 - exp(-m(x) t)) / m(x)   (b(x) t where m(x) = 0).

Correlation functions evolve by a subset sum over the configuration,

    k_t(eta) = sum_{xi subset eta} prod_{x in xi} phi_t(x)
               * prod_{y in eta \\ xi} psi_t(y) * k_0(eta \\ xi),

Poisson states stay Poisson (density psi rho_0 + phi), and the same formulas
applied to a dominating initial correlation give an upper envelope for the
interacting model, since competition only removes particles.
"""

from __future__ import annotations

from itertools import combinations
from typing import Callable

import numpy as np

from .combinatorics import MAX_SUBSET_ORDER
from .model import Box, ModelParams, RateField, Window

__all__ = [
    "SurgailisFlow",
    "propagate_correlation",
    "domination_bound",
    "poisson_density_flow",
    "expected_count",
    "bogoliubov_functional",
    "box_quadrature",
]

# Mortality below this is treated as exactly zero ...
_M_ZERO = 1e-12
# ... and below this the series form of phi avoids cancellation.
_M_SERIES = 1e-6


def _default_points(dimension: int) -> int:
    return {1: 1 << 10, 2: 1 << 7, 3: 1 << 5}[dimension]


def box_quadrature(box: Box, points_per_axis: int,
                   periodic: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Quadrature nodes (N, d) and weights (N,) for a box.

    Periodic boxes use the uniform wrap-around trapezoid rule (equal weights);
    plain boxes use the inclusive trapezoid product rule.
    """
    d = box.dimension
    if periodic:
        axes = [np.linspace(box.lo[i], box.hi[i], points_per_axis, endpoint=False)
                for i in range(d)]
        w1 = [np.full(points_per_axis, box.sides[i] / points_per_axis)
              for i in range(d)]
    else:
        axes, w1 = [], []
        for i in range(d):
            axes.append(np.linspace(box.lo[i], box.hi[i], points_per_axis + 1))
            w = np.full(points_per_axis + 1, box.sides[i] / points_per_axis)
            w[0] *= 0.5
            w[-1] *= 0.5
            w1.append(w)
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack(mesh, axis=-1).reshape(-1, d)
    weights = np.ones(())
    for w in w1:
        weights = np.multiply.outer(weights, w)
    return pts, weights.reshape(-1)


class SurgailisFlow:
    """The non-interacting flow at a fixed time t: fields psi_t and phi_t."""

    def __init__(self, birth: RateField | float, mortality: RateField | float,
                 window: Window, t: float, points_per_axis: int | None = None):
        if t < 0:
            raise ValueError("flow time must be nonnegative")
        d = window.dimension
        if not isinstance(birth, RateField):
            birth = RateField.constant(float(birth), d)
        if not isinstance(mortality, RateField):
            mortality = RateField.constant(float(mortality), d)
        self.birth = birth
        self.mortality = mortality
        self.window = window
        self.t = float(t)
        self.points_per_axis = points_per_axis or _default_points(d)

    @classmethod
    def from_params(cls, params: ModelParams, t: float,
                    points_per_axis: int | None = None) -> "SurgailisFlow":
        """Drop the kernel of `params`; b and m are kept."""
        return cls(params.birth, params.mortality, params.window, t,
                   points_per_axis)

    def psi(self, x):
        """Survival factor exp(-m(x) t)."""
        m = np.asarray(self.mortality(np.asarray(x, dtype=float)), dtype=float)
        return np.exp(-m * self.t)

    def phi(self, x):
        """Immigration density accumulated by time t."""
        x = np.asarray(x, dtype=float)
        b = np.asarray(self.birth(x), dtype=float)
        m = np.asarray(self.mortality(x), dtype=float)
        return _phi_from_rates(b, m, self.t)

    def window_quadrature(self) -> tuple[np.ndarray, np.ndarray]:
        return box_quadrature(self.window.domain, self.points_per_axis,
                              periodic=self.window.boundary == "periodic")


def _phi_from_rates(b, m, t):
    b = np.asarray(b, dtype=float)
    m = np.asarray(m, dtype=float)
    bt = b * t
    mt = m * t
    # three branches: exact zero-mortality, small-m series, closed form
    m_safe = np.where(m > 0, m, 1.0)
    closed = b * (-np.expm1(-mt)) / m_safe
    series = bt * (1.0 - mt / 2.0 + mt**2 / 6.0 - mt**3 / 24.0)
    out = np.select([m < _M_ZERO, m < _M_SERIES], [bt, series], default=closed)
    if out.ndim == 0:
        return float(out)
    return out


def propagate_correlation(eta, k0: Callable, flow: SurgailisFlow) -> float:
    """Correlation function k_t(eta) of the non-interacting flow.

    `k0` maps an (n, d) position array to the initial correlation value;
    k0 of the empty configuration is taken to be 1 without calling it.
    Coincident points are distinct particles.  Orders above
    MAX_SUBSET_ORDER are refused (the sum has 2^|eta| terms).
    """
    pts = _as_points(eta, flow.window.dimension)
    n = pts.shape[0]
    if n > MAX_SUBSET_ORDER:
        raise ValueError(f"configuration order {n} exceeds {MAX_SUBSET_ORDER}")
    if n == 0:
        return 1.0
    phi = np.atleast_1d(np.asarray(flow.phi(pts), dtype=float))
    psi = np.atleast_1d(np.asarray(flow.psi(pts), dtype=float))
    total = 0.0
    indices = range(n)
    for size in range(n + 1):
        for chosen in combinations(indices, size):
            rest = [i for i in indices if i not in chosen]
            term = 1.0
            for i in chosen:
                term *= phi[i]
            for i in rest:
                term *= psi[i]
            if rest:
                term *= float(k0(pts[rest]))
            total += term
    return total


def domination_bound(eta, k0: Callable, flow: SurgailisFlow) -> float:
    """Envelope v_t(eta): non-interacting propagation of a dominating k0.

    Competition only removes particles, so for any kernel the interacting
    correlation functions satisfy 0 <= k_t <= v_t when k_0 <= k0 pointwise.
    """
    return propagate_correlation(eta, k0, flow)


def poisson_density_flow(rho0, flow: SurgailisFlow, x):
    """Density at time t of an initially Poisson state: psi rho0 + phi."""
    x = np.asarray(x, dtype=float)
    if isinstance(rho0, RateField) or callable(rho0):
        r0 = np.asarray(rho0(x), dtype=float)
    else:
        r0 = float(rho0)
    return flow.psi(x) * r0 + flow.phi(x)


def expected_count(region: Box, flow: SurgailisFlow, mu0_mean: float = 0.0,
                   rho0=None) -> float:
    """Expected number of particles in `region` at time t.

    The initial state enters through its density; when only the initial mean
    count `mu0_mean` is known, the density is taken uniform on the region.
    """
    if rho0 is None:
        rho0 = mu0_mean / region.volume
    pts, w = box_quadrature(region, flow.points_per_axis)
    vals = np.asarray(poisson_density_flow(rho0, flow, pts), dtype=float)
    return float(np.sum(w * vals))


def bogoliubov_functional(theta, flow: SurgailisFlow, b0: Callable | None = None,
                          rho0=None) -> float:
    """Generating functional at time t evaluated on the test field theta.

    theta maps positions to values in (-1, 0] (scalars are broadcast).  The
    initial functional b0 receives the damped field x -> theta(x) psi(x); for
    an initially Poisson state pass rho0 instead and b0 is built as
    exp(integral theta psi rho0).
    """
    pts, w = flow.window_quadrature()
    th = np.asarray(theta(pts) if callable(theta) else theta, dtype=float)
    th = np.broadcast_to(th, (pts.shape[0],))
    if np.any(th > 0.0) or np.any(th <= -1.0):
        raise ValueError("theta values must lie in (-1, 0]")
    growth = float(np.sum(w * th * flow.phi(pts)))
    if b0 is not None:
        damped = lambda x: (theta(x) if callable(theta) else theta) * flow.psi(x)
        initial = float(b0(damped))
    elif rho0 is not None:
        if isinstance(rho0, RateField) or callable(rho0):
            r0 = np.asarray(rho0(pts), dtype=float)
        else:
            r0 = float(rho0)
        initial = float(np.exp(np.sum(w * th * flow.psi(pts) * r0)))
    else:
        raise ValueError("pass b0 or rho0 for the initial state")
    return float(np.exp(growth)) * initial


def _as_points(eta, dimension: int) -> np.ndarray:
    if hasattr(eta, "positions"):
        pts = np.asarray(eta.positions, dtype=float)
    else:
        pts = np.asarray(eta, dtype=float)
    if pts.size == 0:
        return pts.reshape(0, dimension)
    if pts.ndim == 1:
        pts = pts[:, None] if dimension == 1 else pts[None, :]
    return pts.reshape(-1, dimension)
