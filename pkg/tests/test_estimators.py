"""Ensemble estimators: densities, pair correlations, cell moments, CSV."""

import math

import numpy as np
import pytest

from contpop import (
    Box,
    CellPartition,
    SnapshotEnsemble,
    Window,
    cross_moment,
    density_estimate,
    factorial_moment,
    mean_density,
    moment_series,
    pair_correlation_estimate,
    raw_moment_from_factorials,
    read_csv_columns,
    write_k1_csv,
    write_k2_csv,
    write_moments_csv,
)
from contpop.estimators import MAX_MOMENT_ORDER, _replica_stats


def poisson_ensemble(rng, kappa, L=10.0, replicas=200, times=(0.0,)):
    """Exact Poisson(kappa) point process on the 1-d torus, iid replicas."""
    win = Window([L])
    configs = []
    for _ in range(replicas):
        reps = []
        for _ in times:
            n = rng.poisson(kappa * L)
            reps.append(rng.uniform(0.0, L, size=(n, 1)))
        configs.append(reps)
    return SnapshotEnsemble(win, list(times), configs)


def fixed_ensemble(counts_positions, L=4.0, times=(0.0,)):
    win = Window([L])
    configs = [[np.asarray(pos, dtype=float).reshape(-1, 1) for pos in rep]
               for rep in counts_positions]
    return SnapshotEnsemble(win, list(times), configs)


# ---------------------------------------------------------------- factorial

def test_factorial_moment_small_cases():
    pos = np.array([[0.5], [1.5], [2.5]])
    box = Box([0.0], [3.0])
    assert factorial_moment(pos, box, 0) == 1
    assert factorial_moment(pos, box, 1) == 3
    assert factorial_moment(pos, box, 2) == 3
    assert factorial_moment(pos, box, 3) == 1
    assert factorial_moment(pos, box, 4) == 0
    assert factorial_moment(pos, Box([10.0], [11.0]), 1) == 0
    with pytest.raises(ValueError):
        factorial_moment(pos, box, -1)


def test_raw_moment_identity_exact():
    for N in range(0, 13):
        facts = [math.comb(N, l) for l in range(1, 9)]
        for n in range(0, 9):
            assert raw_moment_from_factorials(facts, n) == N**n
    with pytest.raises(ValueError):
        raw_moment_from_factorials([1.0], 2)


# ----------------------------------------------------------------- ensemble

def test_ensemble_counts_and_validation():
    ens = fixed_ensemble([[[0.5, 1.5]], [[2.5]]])
    counts = ens.counts_in(Box([0.0], [2.0]))
    assert counts.tolist() == [[2], [0]]
    assert ens.n_replicas == 2 and ens.n_times == 1
    with pytest.raises(ValueError):
        SnapshotEnsemble(Window([4.0]), [0.0, 1.0],
                         [[np.zeros((0, 1))]])  # one config for two times


# ---------------------------------------------------------------- partition

def test_partition_geometry():
    part = CellPartition(Window([4.0]), 1.0)
    assert len(part) == 4
    assert part.shape == (4,)
    sep = part.separation_box()
    assert np.allclose(sep.lo, [-1.0]) and np.allclose(sep.hi, [1.0])
    part2 = CellPartition(Window([2.0, 3.0]), 1.0)
    assert len(part2) == 6


def test_partition_rejects_non_tiling():
    with pytest.raises(ValueError, match="tile"):
        CellPartition(Window([1.0]), 0.3)
    with pytest.raises(ValueError):
        CellPartition(Window([1.0]), -1.0)


def test_partition_counts():
    part = CellPartition(Window([4.0]), 1.0)
    pos = np.array([[0.2], [0.8], [2.5], [3.999]])
    assert part.counts(pos).tolist() == [2, 0, 1, 1]
    assert part.counts(np.empty((0, 1))).tolist() == [0, 0, 0, 0]


def test_partition_ignores_buffer_particles():
    win = Window([4.0], boundary="absorbing-buffer", buffer_width=1.0)
    part = CellPartition(win, 1.0)
    pos = np.array([[-0.5], [0.5], [4.5]])  # two live in the buffer
    assert part.counts(pos).sum() == 1


# ---------------------------------------------------------------- densities

def test_mean_density_deterministic():
    ens = fixed_ensemble([[[0.5, 1.5, 2.5]]], L=4.0)
    grid = mean_density(ens)
    assert grid.values[0] == pytest.approx(0.75)
    assert grid.stderr[0] == 0.0  # single replica


def test_mean_density_two_replicas_stderr():
    ens = fixed_ensemble([[[0.5]], [[1.5, 2.5, 3.5]]], L=4.0)
    grid = mean_density(ens)
    dens = np.array([0.25, 0.75])
    assert grid.values[0] == pytest.approx(0.5)
    assert grid.stderr[0] == pytest.approx(dens.std(ddof=1) / math.sqrt(2))


def test_mean_density_poisson(rng):
    kappa = 1.3
    ens = poisson_ensemble(rng, kappa, replicas=400)
    grid = mean_density(ens)
    assert abs(grid.values[0] - kappa) <= 3.0 * grid.stderr[0] + 1e-12
    # stderr should sit near the Poisson prediction sqrt(kappa V)/V/sqrt(R)
    predicted = math.sqrt(kappa * 10.0) / 10.0 / math.sqrt(400)
    assert grid.stderr[0] == pytest.approx(predicted, rel=0.25)


def test_density_estimate_per_cell():
    ens = fixed_ensemble([[[0.5, 0.7, 2.5]]], L=4.0)
    part = CellPartition(ens.window, 1.0)
    grids = density_estimate(ens, part)
    assert len(grids) == 1
    assert grids[0].values.tolist() == [2.0, 0.0, 1.0, 0.0]
    assert np.allclose(grids[0].centers.ravel(), [0.5, 1.5, 2.5, 3.5])


# --------------------------------------------------------- pair correlation

def test_pair_correlation_poisson_is_squared_density(rng):
    kappa = 1.0
    ens = poisson_ensemble(rng, kappa, replicas=400)
    edges = np.linspace(0.0, 2.0, 9)
    grid = pair_correlation_estimate(ens, edges)
    assert grid.order == 2
    assert np.all(np.abs(grid.values - kappa**2) <= 4.0 * grid.stderr + 1e-12)
    pooled = np.mean(grid.values)
    pooled_err = np.sqrt(np.sum(grid.stderr**2)) / grid.stderr.size
    assert abs(pooled - kappa**2) <= 3.5 * pooled_err


def test_pair_correlation_exact_two_particles():
    # one replica, two particles at distance 1: a single ordered pair
    ens = fixed_ensemble([[[1.0, 2.0]]], L=10.0)
    edges = np.array([0.5, 1.5])
    grid = pair_correlation_estimate(ens, edges)
    # 2 ordered pairs / (V=10, shell=2*1)
    assert grid.values[0] == pytest.approx(0.1)


def test_pair_correlation_silent_on_singletons():
    ens = fixed_ensemble([[[1.0]], [[]]], L=10.0)
    grid = pair_correlation_estimate(ens, [0.0, 1.0])
    assert np.all(grid.values == 0.0)


def test_pair_correlation_domain_check():
    ens = fixed_ensemble([[[1.0]]], L=4.0)
    with pytest.raises(ValueError, match="half"):
        pair_correlation_estimate(ens, [0.0, 2.5])
    with pytest.raises(ValueError):
        pair_correlation_estimate(ens, [1.0])
    with pytest.raises(ValueError):
        pair_correlation_estimate(ens, [0.0, 0.0, 1.0])


def test_pair_correlation_uses_minimum_image():
    # points at 0.1 and 9.9 on the 10-torus are 0.2 apart
    ens = fixed_ensemble([[[0.1, 9.9]]], L=10.0)
    grid = pair_correlation_estimate(ens, [0.0, 0.5])
    assert grid.values[0] == pytest.approx(2.0 / (10.0 * 1.0))


# ------------------------------------------------------------- cell moments

def test_cross_moment_deterministic():
    ens = fixed_ensemble([[[0.5, 0.6, 2.5]], [[0.5, 2.4, 2.6]]], L=4.0)
    got = cross_moment(ens, Box([0.0], [1.0]), Box([2.0], [3.0]))
    # replica products: 2*1 and 1*2
    assert got.values[0] == pytest.approx(2.0)


def test_moment_series_deterministic_exact():
    ens = fixed_ensemble([[[0.1, 0.2, 1.5]]], L=4.0)
    part = CellPartition(ens.window, 1.0)
    series = moment_series(ens, part, l_max=3, n_max=3)
    # cell 0 holds N=2: q1=2, q2=1, q3=0; raw 2, 4, 8
    assert series.q(0, 0, 0) == 1.0
    assert series.q(0, 0, 1) == 2.0
    assert series.q(0, 0, 2) == 1.0
    assert series.q(0, 0, 3) == 0.0
    assert series.raw[0, 0].tolist() == [2.0, 4.0, 8.0]
    assert np.all(series.factorial_stderr == 0.0)
    assert series.cell_side == 1.0


def test_moment_series_poisson_levels(rng):
    kappa = 0.8
    ens = poisson_ensemble(rng, kappa, replicas=300)
    part = CellPartition(ens.window, 1.0)
    series = moment_series(ens, part, l_max=4, n_max=4)
    n_cells = len(part)
    for l in range(1, 5):
        pooled = float(np.mean(series.factorial[0, :, l - 1]))
        err = float(np.sqrt(np.sum(series.factorial_stderr[0, :, l - 1] ** 2))
                    / n_cells)
        expect = kappa**l / math.factorial(l)
        assert abs(pooled - expect) <= 4.0 * err + 1e-12, l
    # raw moments against the Touchard values
    from contpop import touchard
    for n in range(1, 5):
        pooled = float(np.mean(series.raw[0, :, n - 1]))
        err = float(np.sqrt(np.sum(series.raw_stderr[0, :, n - 1] ** 2)) / n_cells)
        assert abs(pooled - touchard(n, kappa)) <= 4.0 * err + 1e-12, n


def test_moment_series_order_caps():
    ens = fixed_ensemble([[[0.5]]], L=4.0)
    part = CellPartition(ens.window, 1.0)
    with pytest.raises(ValueError):
        moment_series(ens, part, l_max=MAX_MOMENT_ORDER + 1)
    with pytest.raises(ValueError):
        moment_series(ens, part, l_max=2, n_max=3)
    with pytest.raises(ValueError):
        moment_series(ens, part, l_max=0)


# ------------------------------------------------------ pointwise inequalities

def test_power_monotonicity_pointwise(rng):
    # N^n <= N^(n+1) whenever N >= 1
    counts = rng.poisson(2.0, size=50) + 1
    for n in range(1, 8):
        assert np.all(counts**n <= counts ** (n + 1))


def test_subadditive_split(rng):
    # N_total^(2^s) <= m^(2^s - 1) sum_cells N_cell^(2^s)
    for _ in range(25):
        cells = rng.poisson(1.5, size=4).astype(object)  # exact ints
        total = int(sum(cells))
        for s in (1, 2, 3):
            p = 2**s
            lhs = total**p
            rhs = 4 ** (p - 1) * sum(int(c) ** p for c in cells)
            assert lhs <= rhs


def test_two_cell_positivity(rng):
    ens = poisson_ensemble(rng, 1.0, replicas=60)
    bx, by = Box([1.0], [2.0]), Box([5.0], [6.0])
    nx = ens.counts_in(bx).astype(float)
    ny = ens.counts_in(by).astype(float)
    cross = float(np.mean(nx * ny))
    assert cross <= 0.5 * float(np.mean(nx**2) + np.mean(ny**2)) + 1e-12


# -------------------------------------------------------------------- CSV

def test_replica_stats_single_sample():
    mean, err = _replica_stats(np.array([[3.0, 1.0]]))
    assert mean.tolist() == [3.0, 1.0]
    assert err.tolist() == [0.0, 0.0]


def test_csv_round_trip_and_determinism(tmp_path):
    ens = fixed_ensemble([[[0.5, 0.7, 2.5]], [[1.1]]], L=4.0)
    part = CellPartition(ens.window, 1.0)
    grids = density_estimate(ens, part)
    series = moment_series(ens, part, l_max=2, n_max=2)

    k1a, k1b = tmp_path / "a.csv", tmp_path / "b.csv"
    write_k1_csv(k1a, grids, ens.times, dimension=1)
    write_k1_csv(k1b, grids, ens.times, dimension=1)
    assert k1a.read_bytes() == k1b.read_bytes()

    cols = read_csv_columns(k1a)
    assert list(cols) == ["t", "x1", "value", "stderr"]
    assert [float(v) for v in cols["value"]] == grids[0].values.tolist()
    # repr round trip: parsing gives back the exact float
    assert all(repr(float(v)) == v for v in cols["value"])

    mp = tmp_path / "moments.csv"
    write_moments_csv(mp, series)
    mcols = read_csv_columns(mp)
    assert list(mcols) == ["t", "cell_id", "l_or_n", "kind", "value", "stderr"]
    assert set(mcols["kind"]) == {"factorial", "raw"}
    # one factorial and one raw row per cell and order
    assert len(mcols["t"]) == len(part) * (2 + 2)

    pair = pair_correlation_estimate(ens, [0.0, 1.0, 2.0])
    kp = tmp_path / "k2.csv"
    write_k2_csv(kp, [pair], [ens.times[-1]])
    kcols = read_csv_columns(kp)
    assert list(kcols) == ["t", "r", "value", "stderr"]
    assert len(kcols["r"]) == 2
