"""Command-line interface: simulate, hierarchy, surgailis, bounds, verify.

Every run writes a manifest.json (command, normalized arguments, config
hash, seed) into the output directory before any computation starts, so a
finished or failed run can always be reproduced.  Data outputs are CSV/JSON
with repr-formatted floats: rerunning the same manifest yields byte-identical
CSV files regardless of thread count.  summary.json additionally records
wall-clock time and is therefore diagnostic, not reproducible.

Exit codes: 0 success, 1 failed verification checks, 2 configuration errors,
3 numerical failures (event-budget cap, step-size guard, clipping budget,
divergence, schedule horizon).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import (EffectiveMortalityUnavailable, ScheduleHorizonError,
                     comparison_ode_bound, continuation_schedule,
                     existence_time, kappa_from_factorial_moments,
                     moment_bound_system, operator_norm_bound,
                     stationary_density_bound, surgailis_theta_growth,
                     theta_norm, unit_existence_time)
from .combinatorics import stirling
from .config import (ConfigError, build_initial, build_params, config_sha256,
                     hierarchy_options, load_config)
from .estimators import (CellPartition, SnapshotEnsemble, density_estimate,
                         moment_series, pair_correlation_estimate,
                         read_csv_columns, write_k1_csv, write_k2_csv,
                         write_moments_csv)
from .hierarchy import (CLOSURES, ClipBudgetError, DivergenceError,
                        HierarchyState, StepSizeError, integrate)
from .model import Box, cell_infimum
from .simulator import CappedRunError, ReplicaPlan, run_replicas
from .surgailis import (SurgailisFlow, expected_count, poisson_density_flow,
                        propagate_correlation)

EXIT_OK = 0
EXIT_CHECK = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _fmt(x) -> str:
    return repr(float(x))


def _parse_times(text: str, flag: str) -> tuple:
    try:
        times = tuple(float(part) for part in text.split(",") if part != "")
    except ValueError as exc:
        raise ConfigError(f"{flag} expects comma-separated numbers: {exc}")
    if not times:
        raise ConfigError(f"{flag} lists no times")
    return times


def _resolve_seed(args) -> int:
    if getattr(args, "seed", None) is not None:
        seed = args.seed
    else:
        env = os.environ.get("CONTPOP_SEED")
        if env is None:
            raise ConfigError("no seed given: pass --seed or set CONTPOP_SEED")
        try:
            seed = int(env)
        except ValueError as exc:
            raise ConfigError(f"CONTPOP_SEED is not an integer: {env!r}")
    if not 0 <= seed < 2**64:
        raise ConfigError("seed must fit in an unsigned 64-bit integer")
    return seed


def _write_manifest(out: Path, command: str, arguments: dict,
                    config_path: str, seed=None) -> None:
    manifest = {
        "tool": "contpop",
        "version": __version__,
        "command": command,
        "config_path": str(config_path),
        "config_sha256": config_sha256(config_path),
        "seed": seed,
        "arguments": arguments,
    }
    out.mkdir(parents=True, exist_ok=True)
    (out / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n")


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, np.integer)):
        return _jsonable(obj.item())
    if isinstance(obj, float) and not math.isfinite(obj):
        return None    # JSON has no inf; absent bound means unbounded
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


# -- simulate -----------------------------------------------------------------


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    params = build_params(cfg)
    seed = _resolve_seed(args)
    snapshots = _parse_times(args.snapshots, "--snapshots")
    cell_side = args.cell_side if args.cell_side is not None \
        else float(np.min(params.window.sides))
    out = Path(args.out)
    arguments = {"replicas": args.replicas, "snapshots": list(snapshots),
                 "threads": args.threads, "max_events": args.max_events,
                 "cell_side": cell_side, "l_max": args.lmax,
                 "n_max": args.nmax, "k2_bins": args.k2_bins}
    _write_manifest(out, "simulate", arguments, args.config, seed=seed)
    plan = ReplicaPlan(replicas=args.replicas, base_seed=seed,
                       snapshots=snapshots,
                       initial=build_initial(cfg, params),
                       max_events=args.max_events)
    t0 = time.perf_counter()
    ensemble, stats = run_replicas(params, plan, threads=args.threads)
    wall = time.perf_counter() - t0
    d = params.dimension
    particle_files = []
    for k, t in enumerate(snapshots):
        name = f"particles_{k:04d}.csv"
        particle_files.append(name)
        with open(out / name, "w", newline="") as fh:
            fh.write("replica," + ",".join(f"x{i+1}" for i in range(d)) + "\n")
            for r in range(ensemble.n_replicas):
                for row in ensemble.positions(r, k):
                    fh.write(f"{r}," + ",".join(_fmt(v) for v in row) + "\n")
    try:
        partition = CellPartition(params.window, cell_side)
    except ValueError as exc:
        raise ConfigError(str(exc))
    grids = density_estimate(ensemble, partition)
    write_k1_csv(out / "k1.csv", grids, snapshots, d)
    series = moment_series(ensemble, partition, l_max=args.lmax,
                           n_max=args.nmax)
    write_moments_csv(out / "moments.csv", series)
    k2_bins = args.k2_bins if params.window.boundary == "periodic" else 0
    if k2_bins > 0:
        half = float(np.min(params.window.sides)) / 2.0
        edges = np.linspace(0.0, half, k2_bins + 1)
        k2_grids = [pair_correlation_estimate(ensemble, edges, time_index=k)
                    for k in range(len(snapshots))]
        write_k2_csv(out / "k2.csv", k2_grids, snapshots)
    summary = {
        "replicas": plan.replicas,
        "snapshot_times": list(snapshots),
        "particle_files": particle_files,
        "events": {"births": stats.births, "deaths": stats.deaths,
                   "total": stats.events,
                   "max_per_replica": stats.max_replica_events},
        "max_audit_residual": stats.max_audit_residual,
        "wall_time_s": wall,
        "estimators": {"cell_side": cell_side, "l_max": args.lmax,
                       "n_max": args.nmax, "k2_bins": k2_bins},
    }
    _write_json(out / "summary.json", _jsonable(summary))
    print(f"simulate: {plan.replicas} replicas, {stats.events} events, "
          f"outputs in {out}")
    return EXIT_OK


# -- hierarchy ----------------------------------------------------------------


def _initial_density(cfg: dict, params):
    """Initial density for deterministic runs: a float or a RateField."""
    spec = build_initial(cfg, params)
    if spec["kind"] == "empty":
        return 0.0
    if spec["kind"] == "poisson":
        return spec["density"]
    raise ConfigError("deterministic runs need an empty or poisson initial "
                      "state (a density), not an explicit point list")


def cmd_hierarchy(args) -> int:
    cfg = load_config(args.config)
    params = build_params(cfg)
    opts = hierarchy_options(cfg)
    grid = args.grid if args.grid is not None else opts["grid"]
    mode = opts["mode"]
    snapshots = _parse_times(args.snapshots, "--snapshots") \
        if args.snapshots else (args.t_end,)
    out = Path(args.out)
    arguments = {"closure": args.closure, "nmax": args.nmax, "dt": args.dt,
                 "t_end": args.t_end, "grid": grid, "mode": mode,
                 "snapshots": list(snapshots)}
    _write_manifest(out, "hierarchy", arguments, args.config)
    rho0 = _initial_density(cfg, params)
    if mode == "translation-invariant":
        if not isinstance(rho0, (int, float)):
            raise ConfigError("translation-invariant runs need a constant "
                              "initial density")
        state = HierarchyState.translation_invariant(params, grid, rho0)
    else:
        state = HierarchyState.full_grid(params, grid, rho0)
    try:
        traj = integrate(state, args.t_end, args.dt, closure=args.closure,
                         n_max=args.nmax, snapshots=snapshots)
    except ValueError as exc:
        raise ConfigError(str(exc))
    d = params.dimension
    # deterministic trajectories reuse the estimator CSV schema: stderr is 0
    # and a trailing source column tags the producer
    tail = f",{_fmt(0.0)},hierarchy\n"
    with open(out / "k1.csv", "w", newline="") as fh:
        if mode == "translation-invariant":
            fh.write("t,value,stderr,source\n")
            for t, rho in zip(traj.times, traj.density):
                fh.write(f"{_fmt(t)},{_fmt(rho)}" + tail)
        else:
            fh.write("t,x1,value,stderr,source\n")
            for t, row in zip(traj.times, traj.density):
                for x, v in zip(state.x, row):
                    fh.write(f"{_fmt(t)},{_fmt(x)},{_fmt(v)}" + tail)
    if traj.k2 is not None:
        with open(out / "k2.csv", "w", newline="") as fh:
            if mode == "translation-invariant":
                coords = [f"u{i+1}" for i in range(d)] if d > 1 else ["r"]
                fh.write("t," + ",".join(coords) + ",value,stderr,source\n")
                for t, k2 in zip(traj.times, traj.k2):
                    flat = k2.reshape(-1)
                    if d == 1:
                        for r, v in zip(traj.separations, flat):
                            fh.write(f"{_fmt(t)},{_fmt(r)},{_fmt(v)}" + tail)
                    else:
                        seps = traj.separations.reshape(-1, d)
                        for u, v in zip(seps, flat):
                            fh.write(f"{_fmt(t)},"
                                     + ",".join(_fmt(c) for c in u)
                                     + f",{_fmt(v)}" + tail)
            else:
                fh.write("t,x1,x2,value,stderr,source\n")
                for t, k2 in zip(traj.times, traj.k2):
                    for i, xi in enumerate(state.x):
                        for j, xj in enumerate(state.x):
                            fh.write(f"{_fmt(t)},{_fmt(xi)},{_fmt(xj)},"
                                     f"{_fmt(k2[i, j])}" + tail)
    summary = {"mode": mode, "grid": grid, "closure": args.closure,
               "nmax": args.nmax, "dt": args.dt, "t_end": args.t_end,
               "clipped_mass": traj.clipped_mass,
               "clip_ratio": traj.clip_ratio,
               "final_density": traj.final_density()}
    _write_json(out / "summary.json", _jsonable(summary))
    print(f"hierarchy: {mode}, closure {args.closure}, outputs in {out}")
    return EXIT_OK


# -- surgailis ----------------------------------------------------------------


def cmd_surgailis(args) -> int:
    cfg = load_config(args.config)
    params = build_params(cfg)
    times = _parse_times(args.times, "--times")
    rho0 = _initial_density(cfg, params)
    out = Path(args.out)
    arguments = {"times": list(times), "grid": args.grid,
                 "pair_grid": args.pair_grid}
    _write_manifest(out, "surgailis", arguments, args.config)
    window = params.window
    d = params.dimension
    axes = [np.linspace(0.0, window.sides[i], args.grid, endpoint=False)
            for i in range(d)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    with open(out / "density.csv", "w", newline="") as fh:
        fh.write("t," + ",".join(f"x{i+1}" for i in range(d)) + ",value\n")
        for t in times:
            flow = SurgailisFlow.from_params(params, t)
            vals = np.asarray(poisson_density_flow(rho0, flow, pts))
            for x, v in zip(pts, vals):
                fh.write(f"{_fmt(t)}," + ",".join(_fmt(c) for c in x)
                         + f",{_fmt(v)}\n")
    if args.pair_grid > 0 and d == 1:
        # second correlation on point pairs, via the subset-sum propagator
        if isinstance(rho0, (int, float)):
            r0 = float(rho0)
            k0 = lambda eta: r0 ** len(eta)
        else:
            k0 = lambda eta: float(np.prod(np.asarray(rho0(eta), dtype=float)))
        grid1 = np.linspace(0.0, window.sides[0], args.pair_grid,
                            endpoint=False)
        with open(out / "k2.csv", "w", newline="") as fh:
            fh.write("t,x1,x2,value\n")
            for t in times:
                flow = SurgailisFlow.from_params(params, t)
                for x1 in grid1:
                    for x2 in grid1:
                        eta = np.array([[x1], [x2]])
                        v = propagate_correlation(eta, k0, flow)
                        fh.write(f"{_fmt(t)},{_fmt(x1)},{_fmt(x2)},"
                                 f"{_fmt(v)}\n")
    counts = {}
    for t in times:
        flow = SurgailisFlow.from_params(params, t)
        counts[_fmt(t)] = expected_count(window.core, flow, rho0=rho0)
    _write_json(out / "summary.json", _jsonable({"expected_core_counts": counts}))
    print(f"surgailis: {len(times)} times, outputs in {out}")
    return EXIT_OK


# -- bounds -------------------------------------------------------------------


def cmd_bounds(args) -> int:
    cfg = load_config(args.config)
    params = build_params(cfg)
    out = Path(args.out)
    arguments = {"schedule": args.schedule,
                 "schedule_steps": args.schedule_steps, "kappa": args.kappa,
                 "moment_system": args.moment_system,
                 "theta_norm": args.theta_norm, "cell_side": args.cell_side}
    _write_manifest(out, "bounds", arguments, args.config)
    theta0 = params.theta0
    report: dict = {
        "norms": {"b_sup": params.b_norm, "m_sup": params.m_norm,
                  "a_integral": params.a_integral, "a_sup": params.a_sup,
                  "theta0": theta0},
    }
    op = operator_norm_bound(params.b_norm, params.m_norm, params.a_sup,
                             params.a_integral, theta0 + 1.0, theta0)
    report["operator"] = {
        "theta": op.theta, "theta_prime": op.theta_prime,
        "kernel_mortality_part": op.kernel_mortality_part,
        "birth_kernel_part": op.birth_kernel_part, "total": op.total,
        "existence_time": existence_time(params.b_norm, params.a_integral,
                                         theta0 + 1.0, theta0),
        "unit_existence_time": unit_existence_time(theta0, params.b_norm,
                                                   params.a_integral),
    }
    horizon_ref = args.schedule if args.schedule else 1.0
    report["theta_growth"] = {
        "t": horizon_ref,
        "theta_t": surgailis_theta_growth(theta0, params.b_norm, horizon_ref),
    }
    spec = build_initial(cfg, params)
    rho0 = spec.get("density", 0.0)
    rho0_value = rho0 if not hasattr(rho0, "sup") else rho0.sup
    try:
        sd = stationary_density_bound(params, rho0)
        report["stationary_density"] = {
            "available": True, "a_zero": sd.a_zero,
            "global_bound": sd.global_bound, "level": sd.level_sup,
        }
    except EffectiveMortalityUnavailable:
        report["stationary_density"] = {
            "available": False,
            "theta_growth_fallback": surgailis_theta_growth(
                theta0, params.b_norm, horizon_ref),
        }
    if args.schedule and args.schedule_steps:
        raise ConfigError("pass --schedule or --schedule-steps, not both")
    if args.schedule or args.schedule_steps:
        sched = continuation_schedule(
            params.b_norm, params.a_integral, theta0,
            horizon=args.schedule, kappa=args.kappa,
            steps=args.schedule_steps)
        report["schedule"] = {
            "kappa": sched.kappa, "horizon": sched.horizon,
            "steps": sched.steps, "total_time": sched.total_time,
            "theta_final": float(sched.thetas[-1]),
            "max_identity_residual": float(np.max(sched.identity_residuals())),
            "times": sched.times, "thetas": sched.thetas,
        }
    if args.moment_system:
        orders = int(args.moment_system[0])
        t_end = float(args.moment_system[1])
        h = args.cell_side
        d = params.dimension
        cell = Box(np.zeros(d), np.full(d, h))
        sep = Box(-np.full(d, h), np.full(d, h))
        a_cell = cell_infimum(params.kernel, sep)
        b_cell = params.birth.integral_over(cell)
        if not isinstance(rho0, (int, float)):
            raise ConfigError("moment-system report needs a constant initial "
                              "density")
        lam = float(rho0) * cell.volume
        q0 = [lam**l / math.factorial(l) for l in range(1, orders + 1)]
        kappa0 = max(cell.volume * math.exp(theta0), lam)
        t_grid = np.linspace(0.0, t_end, 101)
        mb = moment_bound_system(q0, b_cell, a_cell, t_grid, kappa0=kappa0)
        report["moment_system"] = {
            "orders": orders, "cell_side": h, "a_cell": a_cell,
            "b_cell": b_cell, "kappa": mb.kappa, "kappa0": mb.kappa0,
            "t_grid": mb.t_grid, "trajectories": mb.trajectories,
            "envelope": mb.envelope,
        }
    if args.theta_norm is not None:
        family = {n: float(rho0_value) ** n for n in range(17)}
        th = args.theta_norm
        report["theta_norm"] = {
            "theta": th,
            "per_order": {str(n): v * math.exp(-th * n)
                          for n, v in family.items()},
            "value": theta_norm(family, th),
        }
    _write_json(out / "bounds.json", _jsonable(report))
    print(f"bounds: report in {out / 'bounds.json'}")
    return EXIT_OK


# -- verify -------------------------------------------------------------------


def _load_ensemble(run: Path, params, summary) -> SnapshotEnsemble:
    times = summary["snapshot_times"]
    replicas = summary["replicas"]
    d = params.dimension
    configs = [[None] * len(times) for _ in range(replicas)]
    for k, fname in enumerate(summary["particle_files"]):
        cols = read_csv_columns(run / fname)
        reps = np.asarray(cols["replica"], dtype=int)
        coords = np.column_stack([np.asarray(cols[f"x{i+1}"], dtype=float)
                                  for i in range(d)]) if reps.size else \
            np.empty((0, d))
        for r in range(replicas):
            configs[r][k] = coords[reps == r] if reps.size else \
                np.empty((0, d))
    return SnapshotEnsemble(params.window, times, configs)


def cmd_verify(args) -> int:
    run = Path(args.run)
    manifest_path = run / "manifest.json"
    if not manifest_path.is_file():
        raise ConfigError(f"no manifest.json under {run}")
    manifest = json.loads(manifest_path.read_text())
    actual = config_sha256(args.config)
    if actual != manifest.get("config_sha256"):
        print(f"verify: config hash mismatch: {actual} vs manifest "
              f"{manifest.get('config_sha256')}", file=sys.stderr)
        return EXIT_CONFIG
    cfg = load_config(args.config)
    params = build_params(cfg)
    summary = json.loads((run / "summary.json").read_text())
    ensemble = _load_ensemble(run, params, summary)
    est = summary["estimators"]
    partition = CellPartition(params.window, est["cell_side"])
    results: list[tuple[str, str, str]] = []

    def record(name: str, status: str, detail: str) -> None:
        results.append((name, status, detail))

    # recomputation: estimator files must match the particle data
    grids = density_estimate(ensemble, partition)
    k1 = read_csv_columns(run / "k1.csv")
    stored = np.asarray(k1["value"], dtype=float)
    fresh = np.concatenate([g.values for g in grids])
    if stored.size == fresh.size:
        diff = float(np.max(np.abs(stored - fresh))) if stored.size else 0.0
        record("k1-recompute", "PASS" if diff <= 1e-9 else "FAIL",
               f"max deviation {diff:.3g}")
    else:
        record("k1-recompute", "FAIL",
               f"row count {stored.size} differs from recomputed {fresh.size}")
    series = moment_series(ensemble, partition, l_max=est["l_max"],
                           n_max=est["n_max"])
    mom = read_csv_columns(run / "moments.csv")
    orders = np.asarray(mom["l_or_n"], dtype=int)
    kinds = np.asarray(mom["kind"])
    values = np.asarray(mom["value"], dtype=float)
    cells = np.asarray(mom["cell_id"], dtype=int)
    t_col = np.asarray(mom["t"], dtype=float)
    times = np.asarray(summary["snapshot_times"], dtype=float)
    worst = 0.0
    for row in range(values.size):
        k = int(np.argmin(np.abs(times - t_col[row])))
        c = cells[row]
        l = orders[row]
        fresh_v = series.factorial[k, c, l - 1] if kinds[row] == "factorial" \
            else series.raw[k, c, l - 1]
        worst = max(worst, abs(fresh_v - values[row]))
    record("moments-recompute", "PASS" if worst <= 1e-9 else "FAIL",
           f"max deviation {worst:.3g}")
    # factorial -> raw identity on the stored rows themselves
    worst = 0.0
    for k in range(times.size):
        for c in range(len(partition)):
            sel = (np.abs(t_col - times[k]) < 1e-12) & (cells == c)
            fact = {orders[i]: values[i] for i in np.flatnonzero(
                sel & (kinds == "factorial"))}
            raws = {orders[i]: values[i] for i in np.flatnonzero(
                sel & (kinds == "raw"))}
            for n, raw_v in raws.items():
                expect = sum(math.factorial(l) * stirling(n, l) * fact[l]
                             for l in range(1, n + 1) if l in fact)
                worst = max(worst, abs(raw_v - expect) / max(1.0, abs(expect)))
    record("moment-identity", "PASS" if worst <= 1e-9 else "FAIL",
           f"max relative residual {worst:.3g}")
    # envelope checks need replica-level uncertainty
    three_sigma = 3.0 * np.where(series.factorial_stderr > 0,
                                 series.factorial_stderr, 0.0)
    cell_volume = partition.cell_side ** params.dimension
    constant_rates = params.birth.kind == "constant" \
        and params.mortality.kind == "constant"
    if constant_rates:
        b0 = float(params.birth(np.zeros(params.dimension)))
        rho0_cells = series.factorial[0, :, 0] / cell_volume
        worst = -math.inf
        worst_abs = 0.0
        for k, t in enumerate(times):
            flow = SurgailisFlow.from_params(params, float(t))
            origin = np.zeros(params.dimension)
            envelope = float(flow.psi(origin)) * rho0_cells \
                + float(flow.phi(origin))
            dens = series.factorial[k, :, 0] / cell_volume
            err3 = 3.0 * series.factorial_stderr[k, :, 0] / cell_volume
            worst = max(worst, float(np.max(dens - envelope - err3)))
            worst_abs = max(worst_abs,
                            float(np.max(np.abs(dens - envelope) - err3)))
        record("domination", "PASS" if worst <= 0 else "FAIL",
               f"worst envelope excess {worst:.3g}")
        if params.a_integral == 0.0:
            # without competition the envelope is the exact law
            record("oracle-equivalence", "PASS" if worst_abs <= 0 else "FAIL",
                   f"worst |deviation| - 3 sigma = {worst_abs:.3g}")
        else:
            record("oracle-equivalence", "SKIP", "competition kernel present")
    else:
        record("domination", "SKIP", "needs constant b and m")
        record("oracle-equivalence", "SKIP", "needs constant b and m")
    a_cell = cell_infimum(params.kernel, partition.separation_box())
    if a_cell > 0.0 and constant_rates:
        b_cell = b0 * cell_volume
        kappa0_meas = kappa_from_factorial_moments(
            np.max(series.factorial[0], axis=0))
        kappa = max(cell_volume * math.exp(params.theta0), kappa0_meas,
                    b_cell / a_cell)
        worst = -math.inf
        for l in range(1, series.orders + 1):
            bound = kappa**l / math.factorial(l)
            gap = series.factorial[:, :, l - 1] - bound \
                - three_sigma[:, :, l - 1]
            worst = max(worst, float(np.max(gap)))
        record("moment-envelope", "PASS" if worst <= 0 else "FAIL",
               f"kappa {kappa:.4g}, worst excess {worst:.3g}")
    else:
        record("moment-envelope", "SKIP",
               "kernel infimum over the cell separations is zero"
               if a_cell <= 0 else "needs constant rates")
    a_zero = float(params.kernel.radial(0.0))
    if a_zero > 0.0:
        level = max(float(np.max(series.factorial[0, :, 0])) / cell_volume,
                    params.b_norm / a_zero)
        dens = series.factorial[:, :, 0] / cell_volume
        err = series.factorial_stderr[:, :, 0] / cell_volume
        worst = float(np.max(dens - level - 3.0 * err))
        record("density-cap", "PASS" if worst <= 0 else "FAIL",
               f"level {level:.4g}, worst excess {worst:.3g}")
    else:
        record("density-cap", "SKIP", "kernel vanishes at the origin")
    failed = [r for r in results if r[1] == "FAIL"]
    for name, status, detail in results:
        print(f"verify {status} {name}: {detail}")
    print(f"verify: {len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_OK if not failed else EXIT_CHECK


# -- entry point ---------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="contpop",
        description="Spatial birth-death population dynamics toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out=True, seed=False):
        p.add_argument("--config", required=True, help="model config JSON")
        if out:
            p.add_argument("--out", required=True, help="output directory")
        if seed:
            p.add_argument("--seed", type=int, default=None,
                           help="base seed (fallback: CONTPOP_SEED)")
            p.add_argument("--threads", type=int, default=1)

    p = sub.add_parser("simulate", help="run stochastic replicas")
    common(p, seed=True)
    p.add_argument("--replicas", type=int, required=True)
    p.add_argument("--snapshots", required=True,
                   help="comma-separated snapshot times")
    p.add_argument("--max-events", type=int, default=10**8)
    p.add_argument("--cell-side", type=float, default=None,
                   help="moment/density cell side (default: smallest window side)")
    p.add_argument("--lmax", type=int, default=4)
    p.add_argument("--nmax", type=int, default=4)
    p.add_argument("--k2-bins", type=int, default=16)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("hierarchy", help="integrate the truncated hierarchy")
    common(p)
    p.add_argument("--closure", choices=list(CLOSURES),
                   default="zero-third-cumulant")
    p.add_argument("--nmax", type=int, choices=(1, 2), default=2)
    p.add_argument("--dt", type=float, required=True)
    p.add_argument("--t-end", type=float, required=True)
    p.add_argument("--snapshots", default=None)
    p.add_argument("--grid", type=int, default=None)
    p.set_defaults(func=cmd_hierarchy)

    p = sub.add_parser("surgailis", help="exact non-interacting flow")
    common(p)
    p.add_argument("--times", required=True)
    p.add_argument("--grid", type=int, default=1024)
    p.add_argument("--pair-grid", type=int, default=0,
                   help="also emit k2 on an NxN pair grid (d = 1 only)")
    p.set_defaults(func=cmd_surgailis)

    p = sub.add_parser("bounds", help="analytical bounds report")
    common(p)
    p.add_argument("--schedule", type=float, default=None,
                   help="build the continuation schedule to this horizon")
    p.add_argument("--schedule-steps", type=int, default=None,
                   help="build the schedule for a fixed number of steps")
    p.add_argument("--kappa", type=float, default=0.4)
    p.add_argument("--moment-system", nargs=2, metavar=("L", "T_END"),
                   default=None)
    p.add_argument("--theta-norm", type=float, default=None)
    p.add_argument("--cell-side", type=float, default=1.0)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("verify", help="re-check a finished simulate run")
    common(p, out=False)
    p.add_argument("--run", required=True, help="directory of the run")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CappedRunError, StepSizeError, ClipBudgetError, DivergenceError,
            ScheduleHorizonError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
