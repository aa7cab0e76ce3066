"""Truncated correlation-function hierarchy with moment closures.

The correlation functions of the model obey a chain of coupled equations in
which the order-n function is driven by the order-(n+1) one through the
competition kernel.  Truncating at n_max in {1, 2} requires a closure for the
first unresolved function:

  n_max = 1: k^(2) = k^(1) x k^(1)  (zero second cumulant, all closure kinds)
  n_max = 2: k^(3) built from k^(1), k^(2) by one of
      zero-third-cumulant   k3 = sum of the three k2 k1 pairings - 2 k1 k1 k1
      kirkwood              k3 = k2 k2 k2 / (k1 k1 k1), denominator floored
      mean-field            k3 = k2(x1, x2) k1(y)

Two discretizations: a translation-invariant mode (homogeneous rates, radial
kernel) evolving the scalar density plus k^(2) on a periodic separation grid,
and a full product-grid mode in dimension 1.  Convolutions are circular FFTs;
time stepping is fixed-step RK4 with a stability guard, Kahan-compensated
state accumulation, and clipping of stray negative values with an error once
the clipped mass exceeds a fixed fraction of the state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import ModelParams, RateField

__all__ = [
    "CLOSURES",
    "KIRKWOOD_FLOOR",
    "CLIP_BUDGET",
    "HierarchyState",
    "HierarchyTrajectory",
    "StepSizeError",
    "ClipBudgetError",
    "DivergenceError",
    "rhs_order1",
    "rhs_order2",
    "integrate",
]

KIRKWOOD_FLOOR = 1e-12
CLIP_BUDGET = 1e-3

CLOSURES = ("zero-third-cumulant", "kirkwood", "mean-field")


class StepSizeError(RuntimeError):
    """dt violates the stability guard for the current state."""


class ClipBudgetError(RuntimeError):
    """Cumulative negative-value clipping exceeded CLIP_BUDGET of the state."""


class DivergenceError(RuntimeError):
    """The integration produced non-finite values."""


def _circular_conv(x: np.ndarray, kernel_fft: np.ndarray, shape) -> np.ndarray:
    """Circular convolution with a precomputed rfftn of the kernel grid."""
    axes = tuple(range(len(shape)))
    return np.fft.irfftn(np.fft.rfftn(x, axes=axes) * kernel_fft,
                         s=shape, axes=axes)


class HierarchyState:
    """Correlation state on a grid, either translation-invariant or full.

    Translation-invariant mode: `rho` is the constant density and `k2` the
    second correlation on the periodic separation grid of shape (M,)*d.
    Full-grid mode (d = 1): `k1` on the position grid (M,), `k2` on (M, M).
    """

    def __init__(self, params: ModelParams, grid_points: int, mode: str):
        window = params.window
        if window.boundary != "periodic":
            raise ValueError("hierarchy grids require a periodic window")
        if mode == "translation-invariant":
            if params.birth.kind != "constant" or params.mortality.kind != "constant":
                raise ValueError("translation-invariant mode needs constant rates")
        elif mode == "full-grid":
            if window.dimension != 1:
                raise ValueError("full-grid mode is limited to dimension 1")
        else:
            raise ValueError(f"unknown hierarchy mode {mode!r}")
        self.params = params
        self.mode = mode
        self.grid_points = int(grid_points)
        d = window.dimension
        self.spacing = window.sides / self.grid_points
        self.cell_volume = float(np.prod(self.spacing))
        # kernel sampled at minimum-image separations of the grid
        idx = np.indices((self.grid_points,) * d, dtype=float)
        sep = np.stack([idx[i] * self.spacing[i] for i in range(d)], axis=-1)
        sep = sep - window.sides * np.round(sep / window.sides)
        self.a_grid = params.kernel(sep)
        self.a_fft = np.fft.rfftn(self.a_grid * self.cell_volume)
        self.a_mass = float(np.sum(self.a_grid) * self.cell_volume)
        if mode == "translation-invariant":
            self.b = float(params.birth(np.zeros(d)))
            self.m = float(params.mortality(np.zeros(d)))
            self.rho = 0.0
            self.k2 = np.zeros((self.grid_points,) * d)
            self.k1 = None
        else:
            x = np.arange(self.grid_points) * self.spacing[0]
            self.x = x
            pts = x[:, None]
            self.b = np.asarray(params.birth(pts), dtype=float)
            self.m = np.asarray(params.mortality(pts), dtype=float)
            self.k1 = np.zeros(self.grid_points)
            self.k2 = np.zeros((self.grid_points, self.grid_points))
            self.rho = None

    # -- constructors --------------------------------------------------------

    @classmethod
    def translation_invariant(cls, params: ModelParams, grid_points: int,
                              rho0: float, k20=None) -> "HierarchyState":
        state = cls(params, grid_points, "translation-invariant")
        state.rho = float(rho0)
        if k20 is None:
            state.k2 = np.full(state.k2.shape, float(rho0) ** 2)
        else:
            state.k2 = np.broadcast_to(np.asarray(k20, dtype=float),
                                       state.k2.shape).copy()
        return state

    @classmethod
    def full_grid(cls, params: ModelParams, grid_points: int, k10,
                  k20=None) -> "HierarchyState":
        state = cls(params, grid_points, "full-grid")
        pts = state.x[:, None]
        if isinstance(k10, RateField) or callable(k10):
            state.k1 = np.asarray(k10(pts), dtype=float).reshape(-1).copy()
        else:
            state.k1 = np.full(state.grid_points, float(k10))
        if k20 is None:
            state.k2 = np.outer(state.k1, state.k1)
        elif callable(k20):
            state.k2 = np.asarray(
                [[float(k20(xi, xj)) for xj in state.x] for xi in state.x])
        else:
            state.k2 = np.broadcast_to(np.asarray(k20, dtype=float),
                                       state.k2.shape).copy()
        return state

    def k1_sup(self) -> float:
        return abs(self.rho) if self.mode == "translation-invariant" \
            else float(np.max(np.abs(self.k1)))

    # -- flat packing for the integrator --------------------------------------

    def pack(self, n_max: int) -> np.ndarray:
        head = np.atleast_1d(np.asarray(
            self.rho if self.mode == "translation-invariant" else self.k1,
            dtype=float)).ravel()
        if n_max == 1:
            return head.copy()
        return np.concatenate([head, self.k2.ravel()])

    def unpack(self, y: np.ndarray, n_max: int) -> "HierarchyState":
        out = self.copy()
        if self.mode == "translation-invariant":
            out.rho = float(y[0])
            if n_max == 2:
                out.k2 = y[1:].reshape(self.k2.shape).copy()
            else:
                out.k2 = None
        else:
            n = self.grid_points
            out.k1 = y[:n].copy()
            if n_max == 2:
                out.k2 = y[n:].reshape(n, n).copy()
            else:
                out.k2 = None
        return out

    def copy(self) -> "HierarchyState":
        out = object.__new__(HierarchyState)
        out.__dict__.update(self.__dict__)
        if self.k2 is not None:
            out.k2 = self.k2.copy()
        if self.k1 is not None:
            out.k1 = np.array(self.k1, dtype=float, copy=True)
        return out


def _closed_k2(state: HierarchyState):
    """k^(2) for order-1 truncation: zero second cumulant."""
    if state.mode == "translation-invariant":
        return np.full((state.grid_points,) * state.params.dimension,
                       state.rho**2)
    return np.outer(state.k1, state.k1)


def rhs_order1(state: HierarchyState, closure: str = "zero-third-cumulant"):
    """Time derivative of the density / first correlation.

    Uses the state's own k^(2) when present; when the state carries only the
    first order, k^(2) is closed as the product of densities.
    """
    k2 = state.k2 if state.k2 is not None else _closed_k2(state)
    if state.mode == "translation-invariant":
        competition = float(np.sum(state.a_grid * k2)) * state.cell_volume
        return state.b - state.m * state.rho - competition
    shape = k2.shape[1:]
    conv = np.fft.irfftn(np.fft.rfftn(k2, axes=(1,), s=shape) *
                         state.a_fft, s=shape, axes=(1,))
    competition = np.einsum("ii->i", conv)
    return state.b - state.m * state.k1 - competition


def _third_order_integral(state: HierarchyState, closure: str) -> np.ndarray:
    """Closure-dependent competition drain in the pair equation.

    Returns the integral of [a(y - x1) + a(y - x2)] k3(x1, x2, y) over y,
    with k3 built by the requested closure.
    """
    if closure not in CLOSURES:
        raise ValueError(f"unknown closure {closure!r}")
    k2 = state.k2
    shape = k2.shape if state.mode == "translation-invariant" else (k2.shape[0],)
    if state.mode == "translation-invariant":
        rho = state.rho
        if closure == "mean-field":
            return 2.0 * state.a_mass * rho * k2
        if closure == "zero-third-cumulant":
            cross = float(np.sum(state.a_grid * k2)) * state.cell_volume
            conv = _circular_conv(k2, state.a_fft, shape)
            return 2.0 * (rho * (state.a_mass * k2 + cross + conv)
                          - 2.0 * rho**3 * state.a_mass)
        denom = max(rho**3, KIRKWOOD_FLOOR)
        conv = _circular_conv(state.a_grid * k2,
                              np.fft.rfftn(k2 * state.cell_volume), shape)
        return 2.0 * k2 * conv / denom
    # full grid, dimension 1
    n = state.grid_points
    k1 = state.k1
    a_conv_k1 = np.fft.irfft(np.fft.rfft(k1) * state.a_fft, n=n)
    if closure == "mean-field":
        return k2 * (a_conv_k1[:, None] + a_conv_k1[None, :])
    if closure == "zero-third-cumulant":
        w = np.fft.irfft(np.fft.rfft(k2, axis=1) * state.a_fft[None, :],
                         n=n, axis=1)
        diag_w = np.einsum("ii->i", w)
        term = k2 * (a_conv_k1[:, None] + a_conv_k1[None, :])
        term += k1[None, :] * diag_w[:, None] + k1[:, None] * w.T
        term += k1[:, None] * diag_w[None, :] + k1[None, :] * w
        term -= 2.0 * np.outer(k1, k1) * (a_conv_k1[:, None] + a_conv_k1[None, :])
        return term
    # per-factor floor keeps the three-factor denominator at KIRKWOOD_FLOOR
    k1f = np.maximum(k1, KIRKWOOD_FLOOR ** (1.0 / 3.0))
    coords = state.x
    circ = state.params.kernel(
        state.params.window.displacement(coords[:, None, None],
                                         coords[None, :, None]))
    ratio = k2 / k1f[None, :]
    cross = (circ * k2) @ (ratio.T * state.cell_volume)
    pref = k2 / np.outer(k1f, k1f)
    return pref * (cross + cross.T)


def rhs_order2(state: HierarchyState,
               closure: str = "zero-third-cumulant") -> np.ndarray:
    """Time derivative of the second correlation on the state's grid."""
    if state.k2 is None:
        raise ValueError("state carries no second correlation")
    drain = _third_order_integral(state, closure)
    if state.mode == "translation-invariant":
        decay = 2.0 * state.m + 2.0 * state.a_grid
        return -decay * state.k2 - drain + 2.0 * state.b * state.rho
    m = state.m
    b = state.b
    k1 = state.k1
    diag_a = state.params.kernel(state.params.window.displacement(
        state.x[:, None, None], state.x[None, :, None]))
    decay = m[:, None] + m[None, :] + 2.0 * diag_a
    gain = b[:, None] * k1[None, :] + b[None, :] * k1[:, None]
    return -decay * state.k2 - drain + gain


def _rhs_flat(state: HierarchyState, closure: str, n_max: int):
    def rhs(y: np.ndarray) -> np.ndarray:
        s = state.unpack(y, n_max)
        if n_max == 1:
            d1 = rhs_order1(s, closure)
            return np.atleast_1d(np.asarray(d1, dtype=float)).ravel()
        if s.k2 is None:
            raise ValueError("order-2 run needs a second correlation")
        d1 = rhs_order1(s, closure)
        d2 = rhs_order2(s, closure)
        return np.concatenate([np.atleast_1d(np.asarray(d1)).ravel(),
                               d2.ravel()])
    return rhs


@dataclass
class HierarchyTrajectory:
    """Recorded snapshots of a hierarchy integration."""

    mode: str
    times: np.ndarray
    density: np.ndarray          # (K,) in TI mode, (K, M) in full-grid mode
    k2: np.ndarray | None        # (K, ...) or None for order-1 runs
    separations: np.ndarray | None
    clipped_mass: float
    clip_ratio: float

    def final_density(self):
        return self.density[-1]


def _step_index(t: float, dt: float, what: str) -> int:
    steps = round(t / dt)
    if abs(steps * dt - t) > 1e-9 * max(1.0, abs(t)):
        raise ValueError(f"{what} {t:g} is not a multiple of dt {dt:g}")
    return steps


def integrate(state: HierarchyState, t_end: float, dt: float,
              closure: str = "zero-third-cumulant", n_max: int = 2,
              snapshots=None) -> HierarchyTrajectory:
    """Fixed-step RK4 integration of the truncated hierarchy.

    Every step enforces dt (|m| + 2 sup a + <a> sup k1) <= 1/2; violations
    raise StepSizeError rather than proceeding unstably.  Negative values are
    clipped to zero after each step; if the cumulative clipped mass exceeds
    CLIP_BUDGET of the current state mass the run fails (ClipBudgetError).
    """
    if n_max not in (1, 2):
        raise ValueError("n_max must be 1 or 2")
    if closure not in CLOSURES:
        raise ValueError(f"unknown closure {closure!r}")
    if dt <= 0 or t_end < 0:
        raise ValueError("needs dt > 0 and t_end >= 0")
    params = state.params
    n_steps = _step_index(t_end, dt, "t_end")
    snap_times = sorted(set(snapshots)) if snapshots is not None else [t_end]
    snap_steps = {}
    for t in snap_times:
        idx = _step_index(t, dt, "snapshot time")
        if not 0 <= idx <= n_steps:
            raise ValueError(f"snapshot time {t:g} outside [0, {t_end:g}]")
        snap_steps[idx] = t
    rhs = _rhs_flat(state, closure, n_max)
    y = state.pack(n_max)
    comp = np.zeros_like(y)     # Kahan compensation carried across steps
    clipped = 0.0
    recorded: list[tuple[float, np.ndarray]] = []
    if 0 in snap_steps:
        recorded.append((0.0, y.copy()))
    head = 1 if state.mode == "translation-invariant" else state.grid_points
    for step in range(1, n_steps + 1):
        sup_k1 = float(np.max(np.abs(y[:head])))
        stiffness = params.m_norm + 2.0 * params.a_sup \
            + params.a_integral * sup_k1
        if dt * stiffness > 0.5:
            raise StepSizeError(
                f"dt {dt:g} violates the stability guard at step {step}: "
                f"dt * {stiffness:g} > 0.5")
        try:
            f1 = rhs(y)
            f2 = rhs(y + 0.5 * dt * f1)
            f3 = rhs(y + 0.5 * dt * f2)
            f4 = rhs(y + dt * f3)
        except OverflowError as exc:
            raise DivergenceError(f"overflow in the right-hand side at step "
                                  f"{step} (t = {step * dt:g})") from exc
        delta = (dt / 6.0) * (f1 + 2.0 * f2 + 2.0 * f3 + f4)
        adj = delta - comp
        t_new = y + adj
        comp = (t_new - y) - adj
        y = t_new
        if not np.all(np.isfinite(y)):
            raise DivergenceError(f"non-finite state at step {step} "
                                  f"(t = {step * dt:g})")
        negative = y < 0.0
        if np.any(negative):
            clipped += float(-np.sum(y[negative]))
            y[negative] = 0.0
            comp[negative] = 0.0
        total = float(np.sum(np.abs(y)))
        if clipped > CLIP_BUDGET * max(total, 1e-300):
            raise ClipBudgetError(
                f"clipped mass {clipped:g} exceeds {CLIP_BUDGET:g} of the "
                f"state mass {total:g} at step {step}")
        if step in snap_steps:
            recorded.append((snap_steps[step], y.copy()))
    times = np.asarray([t for t, _ in recorded])
    total = float(np.sum(np.abs(y)))
    ratio = clipped / total if total > 0 else 0.0
    if state.mode == "translation-invariant":
        density = np.asarray([v[0] for _, v in recorded])
        k2 = None
        seps = None
        if n_max == 2:
            k2 = np.asarray([v[1:].reshape(state.k2.shape)
                             for _, v in recorded])
            axes = [np.arange(state.grid_points) * state.spacing[i]
                    for i in range(params.dimension)]
            seps = axes[0] if params.dimension == 1 else \
                np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    else:
        n = state.grid_points
        density = np.asarray([v[:n] for _, v in recorded])
        k2 = np.asarray([v[n:].reshape(n, n) for _, v in recorded]) \
            if n_max == 2 else None
        seps = state.x
    return HierarchyTrajectory(mode=state.mode, times=times, density=density,
                               k2=k2, separations=seps, clipped_mass=clipped,
                               clip_ratio=ratio)
