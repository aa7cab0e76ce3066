"""Event-driven simulation of the spatial birth-death process.

Each replica runs the direct stochastic simulation algorithm: waiting times
are exponential in the total event rate B + D, where B is the integral of the
birth intensity over the domain and D the sum of all death rates; the event
is a birth with probability B / (B + D) (exact ties resolve to birth, the
first kind in the fixed ordering).  Birth positions are drawn by rejection
against sup b.  Death rates are maintained incrementally under a cell list
with cell side >= r_cut, so only neighboring cells are touched per event;
per-cell rate sums drive a two-level search for the dying particle.  Rates
are recomputed from scratch every AUDIT_PERIOD events to keep float drift in
check, and the worst residual seen is reported.

Replica streams come from counter-based Philox generators keyed by
(base_seed, replica_index), so any subset of replicas can run concurrently,
in any order, with identical results.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dataclass_field

import numpy as np

from .estimators import SnapshotEnsemble
from .model import ModelParams, RateField

__all__ = [
    "AUDIT_PERIOD",
    "ReplicaPlan",
    "RunStats",
    "CappedRunError",
    "SimulationState",
    "sample_initial",
    "run_replicas",
]

AUDIT_PERIOD = 1 << 16
_INITIAL_CAPACITY = 64


class CappedRunError(RuntimeError):
    """A replica exceeded the event budget before reaching its horizon."""

    def __init__(self, replica: int, events: int, t: float):
        super().__init__(f"replica {replica} exceeded the event budget "
                         f"({events} events by t = {t:g})")
        self.replica = replica
        self.events = events


@dataclass
class ReplicaPlan:
    """What to run: replica count, seed, snapshot times, initial state."""

    replicas: int
    base_seed: int
    snapshots: tuple
    initial: dict = dataclass_field(default_factory=lambda: {"kind": "empty"})
    max_events: int = 10**8

    def __post_init__(self):
        if self.replicas < 1:
            raise ValueError("need at least one replica")
        if not 0 <= self.base_seed < 2**64:
            raise ValueError("base_seed must fit in 64 bits")
        times = tuple(float(t) for t in self.snapshots)
        if not times or any(t < 0 for t in times) or \
                any(b < a for a, b in zip(times, times[1:])):
            raise ValueError("snapshots must be nonnegative and ascending")
        self.snapshots = times
        if self.max_events < 1:
            raise ValueError("max_events must be positive")


@dataclass
class RunStats:
    """Aggregate counters across replicas."""

    births: int = 0
    deaths: int = 0
    events: int = 0
    max_replica_events: int = 0
    max_audit_residual: float = 0.0

    def merge(self, other: "RunStats") -> None:
        self.births += other.births
        self.deaths += other.deaths
        self.events += other.events
        self.max_replica_events = max(self.max_replica_events, other.events)
        self.max_audit_residual = max(self.max_audit_residual,
                                      other.max_audit_residual)


def _replica_rng(base_seed: int, replica: int) -> np.random.Generator:
    key = np.array([base_seed, replica], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def sample_initial(spec: dict, params: ModelParams,
                   rng: np.random.Generator) -> np.ndarray:
    """Draw an initial configuration over the simulation domain.

    Kinds: `empty`; `poisson` with a `density` (scalar or RateField), sampled
    as a Poisson count of mean integral(density) and positions by rejection
    against sup density; `explicit` with a `points` array.
    """
    kind = spec.get("kind")
    domain = params.window.domain
    d = params.dimension
    if kind == "empty":
        return np.empty((0, d))
    if kind == "explicit":
        pts = np.asarray(spec["points"], dtype=float)
        if pts.size == 0:
            return np.empty((0, d))
        pts = pts.reshape(-1, d)
        if not np.all(domain.contains_points(pts)):
            raise ValueError("explicit initial points fall outside the domain")
        return pts
    if kind != "poisson":
        raise ValueError(f"unknown initial kind {spec.get('kind')!r}")
    density = spec["density"]
    if isinstance(density, RateField):
        mean = density.integral_over(domain)
        sup = density.sup
        rho = density
    else:
        rho = float(density)
        if rho < 0:
            raise ValueError("initial density must be nonnegative")
        mean = rho * domain.volume
        sup = rho
    count = int(rng.poisson(mean))
    points = np.empty((count, d))
    for i in range(count):
        while True:
            x = domain.lo + rng.random(d) * domain.sides
            if rng.random() * sup <= float(rho(x) if isinstance(rho, RateField)
                                           else rho):
                points[i] = x
                break
    return points


class SimulationState:
    """One replica's mutable state: particles, rates, cell lists, clocks."""

    def __init__(self, params: ModelParams, rng: np.random.Generator):
        self.params = params
        self.rng = rng
        window = params.window
        domain = window.domain
        self.domain_lo = domain.lo
        self.domain_sides = domain.sides
        self.periodic = window.boundary == "periodic"
        d = window.dimension
        r_cut = params.kernel.r_cut
        if r_cut > 0.0:
            counts = np.maximum(np.floor(domain.sides / r_cut), 1).astype(int)
        else:
            counts = np.ones(d, dtype=int)   # no interactions: one cell
        self.n_cells = counts
        self.cell_sides = domain.sides / counts
        self.total_cells = int(np.prod(counts))
        self.cells: list[list[int]] = [[] for _ in range(self.total_cells)]
        self.cell_rate = np.zeros(self.total_cells)
        cap = _INITIAL_CAPACITY
        self.pos = np.zeros((cap, d))
        self.rate = np.zeros(cap)
        self.cell_of = np.zeros(cap, dtype=int)
        self.slot_of = np.zeros(cap, dtype=int)
        self.n = 0
        self.t = 0.0
        self.d_tot = 0.0
        self.b_tot = params.birth_total
        self.b_sup = params.birth.sup
        self.births = 0
        self.deaths = 0
        self.events = 0
        self.max_audit_residual = 0.0
        # neighbor cell offsets: +-1 per axis, deduplicated for tiny grids
        offs = np.stack(np.meshgrid(*([np.array([-1, 0, 1])] * d),
                                    indexing="ij"), axis=-1).reshape(-1, d)
        self._offsets = offs
        self._neighbor_cache = [self._neighbor_cells(c)
                                for c in range(self.total_cells)]

    # -- geometry ------------------------------------------------------------

    def _cell_index(self, x: np.ndarray) -> int:
        idx = np.floor((x - self.domain_lo) / self.cell_sides).astype(int)
        idx = np.minimum(np.maximum(idx, 0), self.n_cells - 1)
        return int(np.ravel_multi_index(idx, self.n_cells))

    def _neighbor_cells(self, cell: int) -> list[int]:
        base = np.asarray(np.unravel_index(cell, self.n_cells))
        raw = base + self._offsets
        if self.periodic:
            raw = np.mod(raw, self.n_cells)
        else:
            keep = np.all((raw >= 0) & (raw < self.n_cells), axis=1)
            raw = raw[keep]
        flat = np.ravel_multi_index(tuple(raw.T), self.n_cells)
        return sorted(set(int(c) for c in flat))

    def _neighbors(self, x: np.ndarray, exclude: int = -1):
        """Indices and kernel values of particles within r_cut of x."""
        r_cut = self.params.kernel.r_cut
        if r_cut <= 0.0 or self.n == 0:
            return np.empty(0, dtype=int), np.empty(0)
        candidates = []
        for c in self._neighbor_cache[self._cell_index(x)]:
            candidates.extend(self.cells[c])
        if exclude >= 0:
            candidates = [j for j in candidates if j != exclude]
        if not candidates:
            return np.empty(0, dtype=int), np.empty(0)
        idx = np.asarray(candidates, dtype=int)
        disp = self.params.window.displacement(x, self.pos[idx])
        dist = np.sqrt(np.sum(np.square(disp), axis=-1))
        mask = dist <= r_cut
        idx = idx[mask]
        vals = np.asarray(self.params.kernel.profile(dist[mask]), dtype=float)
        return idx, vals

    # -- particle bookkeeping --------------------------------------------------

    def _grow(self) -> None:
        cap = self.pos.shape[0] * 2
        self.pos = np.resize(self.pos, (cap, self.pos.shape[1]))
        self.rate = np.resize(self.rate, cap)
        self.cell_of = np.resize(self.cell_of, cap)
        self.slot_of = np.resize(self.slot_of, cap)

    def insert(self, x: np.ndarray) -> int:
        if self.n == self.pos.shape[0]:
            self._grow()
        i = self.n
        idx, vals = self._neighbors(x)
        rate = float(self.params.mortality(x))
        if idx.size:
            rate += float(np.sum(vals))
            for j, a in zip(idx, vals):
                a = float(a)
                self.rate[j] += a
                self.cell_rate[self.cell_of[j]] += a
                self.d_tot += a
        cell = self._cell_index(x)
        self.pos[i] = x
        self.rate[i] = rate
        self.cell_of[i] = cell
        self.slot_of[i] = len(self.cells[cell])
        self.cells[cell].append(i)
        self.cell_rate[cell] += rate
        self.d_tot += rate
        self.n += 1
        return i

    def remove(self, i: int) -> None:
        x = self.pos[i]
        idx, vals = self._neighbors(x, exclude=i)
        for j, a in zip(idx, vals):
            a = float(a)
            self.rate[j] -= a
            if self.rate[j] < 0.0:
                self.rate[j] = 0.0
            c = self.cell_of[j]
            self.cell_rate[c] -= a
            if self.cell_rate[c] < 0.0:
                self.cell_rate[c] = 0.0
            self.d_tot -= a
        cell = int(self.cell_of[i])
        self.cell_rate[cell] -= self.rate[i]
        if self.cell_rate[cell] < 0.0:
            self.cell_rate[cell] = 0.0
        self.d_tot -= self.rate[i]
        if self.d_tot < 0.0:
            self.d_tot = 0.0
        # unlink from the cell member list by swap-remove
        members = self.cells[cell]
        slot = int(self.slot_of[i])
        last = members[-1]
        members[slot] = last
        self.slot_of[last] = slot
        members.pop()
        # move the last particle's record into row i
        last_row = self.n - 1
        if i != last_row:
            self.pos[i] = self.pos[last_row]
            self.rate[i] = self.rate[last_row]
            self.cell_of[i] = self.cell_of[last_row]
            self.slot_of[i] = self.slot_of[last_row]
            self.cells[self.cell_of[i]][self.slot_of[i]] = i
        self.n = last_row

    # -- events ----------------------------------------------------------------

    def _draw_birth_position(self) -> np.ndarray:
        d = self.domain_sides.size
        while True:
            x = self.domain_lo + self.rng.random(d) * self.domain_sides
            if self.rng.random() * self.b_sup <= float(self.params.birth(x)):
                return x

    def _select_death(self) -> int:
        target = self.rng.random() * self.d_tot
        chosen_cell = -1
        for c in range(self.total_cells):
            s = self.cell_rate[c]
            if target < s and self.cells[c]:
                chosen_cell = c
                break
            target -= s
        if chosen_cell < 0:   # float drift: fall back to the last occupied cell
            for c in range(self.total_cells - 1, -1, -1):
                if self.cells[c]:
                    chosen_cell = c
                    break
        members = self.cells[chosen_cell]
        for j in members:
            if target < self.rate[j]:
                return j
            target -= self.rate[j]
        return members[-1]

    def step(self) -> str:
        """Dispatch one event unconditionally; 'halted' when no rate is left."""
        total = self.b_tot + self.d_tot
        if total <= 0.0:
            return "halted"
        u = self.rng.random()
        self.t += -math.log1p(-u) / total
        return self._dispatch()

    def _dispatch(self) -> str:
        total = self.b_tot + self.d_tot
        kind = "birth" if self.b_tot > 0.0 and \
            self.rng.random() * total <= self.b_tot else "death"
        if kind == "birth":
            self.insert(self._draw_birth_position())
            self.births += 1
        else:
            self.remove(self._select_death())
            self.deaths += 1
        self.events += 1
        if self.events % AUDIT_PERIOD == 0:
            self.audit()
        return kind

    def advance(self, until: float, max_events: int = 10**8,
                replica: int = 0) -> None:
        """Run events up to time `until`; a crossing wait is discarded (the
        exponential clock is memoryless, so redrawing after the boundary is
        exact)."""
        while True:
            total = self.b_tot + self.d_tot
            if total <= 0.0:
                self.t = until
                return
            u = self.rng.random()
            wait = -math.log1p(-u) / total
            if self.t + wait > until:
                self.t = until
                return
            self.t += wait
            self._dispatch()
            if self.events > max_events:
                raise CappedRunError(replica, self.events, self.t)

    # -- integrity ---------------------------------------------------------------

    def audit(self) -> float:
        """Recompute all rates from scratch; record and return the residual."""
        fresh_rates = np.zeros_like(self.rate)
        for i in range(self.n):
            idx, vals = self._neighbors(self.pos[i], exclude=i)
            fresh_rates[i] = float(self.params.mortality(self.pos[i])) \
                + float(np.sum(vals))
        residual = 0.0
        if self.n:
            residual = float(np.max(np.abs(fresh_rates[:self.n]
                                           - self.rate[:self.n])))
        residual = max(residual, abs(float(np.sum(fresh_rates[:self.n]))
                                     - self.d_tot))
        self.max_audit_residual = max(self.max_audit_residual, residual)
        self.rate[:self.n] = fresh_rates[:self.n]
        self.cell_rate[:] = 0.0
        for i in range(self.n):
            self.cell_rate[self.cell_of[i]] += self.rate[i]
        self.d_tot = float(np.sum(self.rate[:self.n]))
        return residual

    def seed_initial(self, spec: dict) -> None:
        for x in sample_initial(spec, self.params, self.rng):
            self.insert(x)

    def snapshot(self) -> np.ndarray:
        return self.pos[:self.n].copy()

    def stats(self) -> RunStats:
        return RunStats(births=self.births, deaths=self.deaths,
                        events=self.events, max_replica_events=self.events,
                        max_audit_residual=self.max_audit_residual)


def _run_one(params: ModelParams, plan: ReplicaPlan,
             replica: int) -> tuple[list[np.ndarray], RunStats]:
    state = SimulationState(params, _replica_rng(plan.base_seed, replica))
    state.seed_initial(plan.initial)
    configs = []
    for t_snap in plan.snapshots:
        state.advance(t_snap, max_events=plan.max_events, replica=replica)
        configs.append(state.snapshot())
    return configs, state.stats()


def run_replicas(params: ModelParams, plan: ReplicaPlan,
                 threads: int = 1) -> tuple[SnapshotEnsemble, RunStats]:
    """Run all replicas and collect snapshots in replica order.

    Results are a function of (params, plan) only: replica streams are
    independent by construction and the merge order is fixed, so the thread
    count never changes the output.
    """
    if threads < 1:
        raise ValueError("threads must be positive")
    stats = RunStats()
    if threads == 1:
        results = [_run_one(params, plan, r) for r in range(plan.replicas)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda r: _run_one(params, plan, r),
                                    range(plan.replicas)))
    configurations = []
    for configs, replica_stats in results:
        configurations.append(configs)
        stats.merge(replica_stats)
    ensemble = SnapshotEnsemble(params.window, plan.snapshots, configurations)
    return ensemble, stats
