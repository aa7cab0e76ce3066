"""Empirical estimators over replica ensembles of particle snapshots.

Counts are turned into factorial moments binom(N, l) exactly (integer
arithmetic per replica); raw moments N^n are recovered through the Stirling
transform N^n = sum_l l! S(n, l) binom(N, l), so the factorial path is the
primary one and the raw rows are derived from it.  Densities and pair
correlations are simple bin estimators with replica-level standard errors.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .combinatorics import binomial, stirling
from .model import Box, Window

__all__ = [
    "SnapshotEnsemble",
    "CellPartition",
    "CorrelationGrid",
    "MomentSeries",
    "factorial_moment",
    "raw_moment_from_factorials",
    "density_estimate",
    "mean_density",
    "pair_correlation_estimate",
    "cross_moment",
    "moment_series",
    "write_k1_csv",
    "write_k2_csv",
    "write_moments_csv",
    "read_csv_columns",
]

MAX_MOMENT_ORDER = 8


class SnapshotEnsemble:
    """Replica-resolved snapshots: configurations[r][k] is an (n, d) array."""

    def __init__(self, window: Window, times, configurations):
        self.window = window
        self.times = np.asarray(times, dtype=float)
        self.configurations = configurations
        if any(len(reps) != self.times.size for reps in configurations):
            raise ValueError("every replica needs one configuration per time")

    @property
    def n_replicas(self) -> int:
        return len(self.configurations)

    @property
    def n_times(self) -> int:
        return self.times.size

    def positions(self, replica: int, time_index: int) -> np.ndarray:
        return self.configurations[replica][time_index]

    def counts_in(self, box: Box) -> np.ndarray:
        """(replicas, times) matrix of particle counts inside `box`."""
        out = np.zeros((self.n_replicas, self.n_times), dtype=np.int64)
        for r, reps in enumerate(self.configurations):
            for k, pos in enumerate(reps):
                if pos.size:
                    out[r, k] = int(np.count_nonzero(box.contains_points(pos)))
        return out


class CellPartition:
    """Congruent cells of side `cell_side` tiling the observation core."""

    def __init__(self, window: Window, cell_side: float):
        if cell_side <= 0:
            raise ValueError("cell side must be positive")
        counts = np.round(window.sides / cell_side).astype(int)
        if np.any(counts < 1) or np.any(
                np.abs(counts * cell_side - window.sides) > 1e-9 * window.sides):
            raise ValueError(f"cell side {cell_side:g} does not tile the window")
        self.window = window
        self.cell_side = float(cell_side)
        self.shape = tuple(int(c) for c in counts)
        self.cells = []
        for flat in range(int(np.prod(counts))):
            idx = np.unravel_index(flat, self.shape)
            lo = np.asarray(idx, dtype=float) * cell_side
            self.cells.append(Box(lo, lo + cell_side))

    def __len__(self) -> int:
        return len(self.cells)

    def __iter__(self):
        return iter(self.cells)

    def separation_box(self) -> Box:
        """Box of pairwise separations within one cell: [-h, h]^d."""
        h = self.cell_side
        d = self.window.dimension
        return Box(-h * np.ones(d), h * np.ones(d))

    def counts(self, positions: np.ndarray) -> np.ndarray:
        """Particle count per cell (C-order); buffer particles are ignored."""
        out = np.zeros(len(self.cells), dtype=np.int64)
        pos = np.asarray(positions, dtype=float)
        if pos.size == 0:
            return out
        inside = self.window.core.contains_points(pos)
        pos = pos.reshape(-1, self.window.dimension)[inside]
        if pos.shape[0] == 0:
            return out
        idx = np.floor(pos / self.cell_side).astype(int)
        idx = np.clip(idx, 0, np.asarray(self.shape) - 1)
        flat = np.ravel_multi_index(tuple(idx.T), self.shape)
        np.add.at(out, flat, 1)
        return out


@dataclass
class CorrelationGrid:
    """Binned estimate: bin centers, values, and replica-level stderr."""

    centers: np.ndarray
    values: np.ndarray
    stderr: np.ndarray
    order: int = 1


@dataclass
class MomentSeries:
    """Cell-count moments per snapshot time.

    factorial[k, c, l-1] estimates the l-th factorial moment of the count in
    cell c at times[k]; raw[k, c, n-1] the n-th raw moment, derived per
    replica from its exact factorials.  Order zero is identically 1 and not
    stored.
    """

    times: np.ndarray
    orders: int
    raw_orders: int
    factorial: np.ndarray
    factorial_stderr: np.ndarray
    raw: np.ndarray
    raw_stderr: np.ndarray
    cell_side: float = field(default=0.0)

    def q(self, time_index: int, cell: int, l: int) -> float:
        if l == 0:
            return 1.0
        return float(self.factorial[time_index, cell, l - 1])


def factorial_moment(positions, box: Box, l: int) -> int:
    """binom(N_box, l), exact."""
    if l < 0:
        raise ValueError("order must be nonnegative")
    pos = np.asarray(positions, dtype=float)
    n = 0
    if pos.size:
        n = int(np.count_nonzero(box.contains_points(pos)))
    return binomial(n, l)


def raw_moment_from_factorials(factorials, n: int):
    """N^n from factorial moments: sum_l l! S(n, l) F_l; exact on integers."""
    if n == 0:
        return 1
    factorials = list(factorials)
    if len(factorials) < n:
        raise ValueError(f"need factorial moments up to order {n}")
    total = 0
    for l in range(1, n + 1):
        total += math.factorial(l) * stirling(n, l) * factorials[l - 1]
    return total


def _replica_stats(samples: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean and standard error across the replica axis (axis 0)."""
    mean = samples.mean(axis=0)
    n = samples.shape[0]
    if n < 2:
        return mean, np.zeros_like(mean)
    return mean, samples.std(axis=0, ddof=1) / math.sqrt(n)


def mean_density(ensemble: SnapshotEnsemble) -> CorrelationGrid:
    """Core density per snapshot: centers are times here."""
    counts = ensemble.counts_in(ensemble.window.core).astype(float)
    value, err = _replica_stats(counts / ensemble.window.volume)
    return CorrelationGrid(centers=ensemble.times.copy(), values=value,
                           stderr=err, order=1)


def density_estimate(ensemble: SnapshotEnsemble,
                     partition: CellPartition) -> list[CorrelationGrid]:
    """Per-cell density estimate, one grid per snapshot time."""
    volume = partition.cell_side ** ensemble.window.dimension
    centers = np.asarray([0.5 * (c.lo + c.hi) for c in partition])
    counts = np.zeros((ensemble.n_replicas, ensemble.n_times, len(partition)))
    for r in range(ensemble.n_replicas):
        for k in range(ensemble.n_times):
            counts[r, k] = partition.counts(ensemble.positions(r, k))
    out = []
    for k in range(ensemble.n_times):
        value, err = _replica_stats(counts[:, k, :] / volume)
        out.append(CorrelationGrid(centers=centers, values=value, stderr=err))
    return out


def _shell_volumes(edges: np.ndarray, dimension: int) -> np.ndarray:
    if dimension == 1:
        return 2.0 * np.diff(edges)
    if dimension == 2:
        return math.pi * np.diff(edges**2)
    return 4.0 / 3.0 * math.pi * np.diff(edges**3)


def pair_correlation_estimate(ensemble: SnapshotEnsemble, r_edges,
                              time_index: int = -1) -> CorrelationGrid:
    """Radial second correlation at one snapshot time.

    Ordered pairs with minimum-image separation in [r, r+dr) are counted per
    replica and divided by V * shell volume, an unbiased estimator of
    k^(2)(r) on the torus; mean and stderr are taken across replicas.
    """
    window = ensemble.window
    r_edges = np.asarray(r_edges, dtype=float)
    if r_edges.ndim != 1 or r_edges.size < 2 or np.any(np.diff(r_edges) <= 0):
        raise ValueError("r_edges must be increasing with at least two entries")
    if window.boundary == "periodic":
        half = float(np.min(window.sides)) / 2.0
        if r_edges[-1] > half + 1e-12:
            raise ValueError(f"separation bins reach {r_edges[-1]:g}, beyond "
                             f"half the smallest side {half:g}")
    shells = _shell_volumes(r_edges, window.dimension)
    volume = window.volume
    per_replica = np.zeros((ensemble.n_replicas, r_edges.size - 1))
    for r in range(ensemble.n_replicas):
        pos = ensemble.positions(r, time_index)
        if window.boundary != "periodic":
            pos = pos[window.core.contains_points(pos)]
        n = pos.shape[0]
        if n < 2:
            continue
        disp = window.displacement(pos[:, None, :], pos[None, :, :])
        dist = np.sqrt(np.sum(np.square(disp), axis=-1))
        iu = np.triu_indices(n, k=1)
        hist, _ = np.histogram(dist[iu], bins=r_edges)
        per_replica[r] = 2.0 * hist / (volume * shells)  # ordered pairs
    centers = 0.5 * (r_edges[:-1] + r_edges[1:])
    value, err = _replica_stats(per_replica)
    return CorrelationGrid(centers=centers, values=value, stderr=err, order=2)


def cross_moment(ensemble: SnapshotEnsemble, box_x: Box,
                 box_y: Box) -> CorrelationGrid:
    """Mean of N_x N_y across replicas, per snapshot time."""
    nx = ensemble.counts_in(box_x).astype(float)
    ny = ensemble.counts_in(box_y).astype(float)
    value, err = _replica_stats(nx * ny)
    return CorrelationGrid(centers=ensemble.times.copy(), values=value,
                           stderr=err, order=2)


def moment_series(ensemble: SnapshotEnsemble, partition: CellPartition,
                  l_max: int = 4, n_max: int = 4) -> MomentSeries:
    """Factorial moments per cell and the raw moments derived from them."""
    if not 1 <= l_max <= MAX_MOMENT_ORDER or not 1 <= n_max <= MAX_MOMENT_ORDER:
        raise ValueError(f"moment orders limited to 1..{MAX_MOMENT_ORDER}")
    if n_max > l_max:
        raise ValueError("raw order n_max needs factorials up to the same order")
    shape = (ensemble.n_replicas, ensemble.n_times, len(partition))
    fact = np.zeros(shape + (l_max,))
    raw = np.zeros(shape + (n_max,))
    for r in range(ensemble.n_replicas):
        for k in range(ensemble.n_times):
            counts = partition.counts(ensemble.positions(r, k))
            for c, count in enumerate(counts):
                n = int(count)
                facts = [binomial(n, l) for l in range(1, l_max + 1)]
                fact[r, k, c] = facts
                raw[r, k, c] = [raw_moment_from_factorials(facts, m)
                                for m in range(1, n_max + 1)]
    f_mean, f_err = _replica_stats(fact)
    r_mean, r_err = _replica_stats(raw)
    return MomentSeries(times=ensemble.times.copy(), orders=l_max,
                        raw_orders=n_max, factorial=f_mean,
                        factorial_stderr=f_err, raw=r_mean, raw_stderr=r_err,
                        cell_side=partition.cell_side)


# -- CSV serialization -------------------------------------------------------
#
# Values are written with repr (shortest round-trip form), so identical
# estimates serialize to identical bytes.


def _fmt(x) -> str:
    return repr(float(x))


def write_k1_csv(path, grids: list[CorrelationGrid], times,
                 dimension: int) -> None:
    """k1.csv: t, cell center coordinates, value, stderr."""
    coords = [f"x{i + 1}" for i in range(dimension)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", *coords, "value", "stderr"])
        for t, grid in zip(times, grids):
            centers = np.atleast_2d(grid.centers.reshape(len(grid.values), -1))
            for c, v, e in zip(centers, grid.values, grid.stderr):
                writer.writerow([_fmt(t), *map(_fmt, c), _fmt(v), _fmt(e)])


def write_k2_csv(path, grids: list[CorrelationGrid], times) -> None:
    """k2.csv: t, r, value, stderr."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", "r", "value", "stderr"])
        for t, grid in zip(times, grids):
            for r, v, e in zip(grid.centers, grid.values, grid.stderr):
                writer.writerow([_fmt(t), _fmt(r), _fmt(v), _fmt(e)])


def write_moments_csv(path, series: MomentSeries) -> None:
    """moments.csv: t, cell_id, l_or_n, kind (factorial|raw), value, stderr."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", "cell_id", "l_or_n", "kind", "value", "stderr"])
        for k, t in enumerate(series.times):
            for c in range(series.factorial.shape[1]):
                for l in range(1, series.orders + 1):
                    writer.writerow([_fmt(t), c, l, "factorial",
                                     _fmt(series.factorial[k, c, l - 1]),
                                     _fmt(series.factorial_stderr[k, c, l - 1])])
                for n in range(1, series.raw_orders + 1):
                    writer.writerow([_fmt(t), c, n, "raw",
                                     _fmt(series.raw[k, c, n - 1]),
                                     _fmt(series.raw_stderr[k, c, n - 1])])


def read_csv_columns(path) -> dict[str, list[str]]:
    """Read a CSV into raw string columns keyed by header."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        cols: dict[str, list[str]] = {name: [] for name in header}
        for row in reader:
            for name, value in zip(header, row):
                cols[name].append(value)
    return cols
