"""Command-line interface: run, bench, sweep, scaling, inspect.

All tables are comma-separated text with a single header row.  Exit
codes: 0 success, 2 configuration error, 3 numerical poison, 4 I/O or
file-format error.
"""

from __future__ import annotations

import argparse
import statistics
import sys
import time

import numpy as np

from .collision import QuadratureRule, collision_row
from .config import load_run_config
from .engine import Schedule, WorkerPool
from .errors import ConfigError, PoisonedStateError, TrajectoryFormatError
from .kgrid import build_index_tables, build_kgrid
from .propagator import PropagationDriver
from .selfenergy import sigma_slice
from .state import observables_at
from .trajio import read_header, write_trajectory

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_POISON = 3
EXIT_IO = 4


def _write_table(path: str | None, header: str, rows: list[str]) -> None:
    text = "\n".join([header] + rows) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def cmd_run(args) -> int:
    cfg = load_run_config(args.config)
    grid = build_kgrid(cfg.n_k)
    obs_rows = []
    rep_rows = []

    with WorkerPool(cfg.schedule.workers) as pool:
        driver = PropagationDriver(grid, cfg.model, cfg.step, cfg.schedule, pool)
        obs0 = observables_at(driver.state, 0)
        obs_rows.append(
            f"0.0,{np.mean(obs0.n_v)!r},{np.mean(obs0.n_c)!r},{obs0.density!r},0.0,0"
        )

        def observer(state, rep):
            obs = observables_at(state, rep.step)
            t = rep.step * cfg.step.dt
            obs_rows.append(
                f"{t!r},{np.mean(obs.n_v)!r},{np.mean(obs.n_c)!r},"
                f"{obs.density!r},{rep.residual!r},{rep.iterations}"
            )
            rep_rows.append(
                f"{rep.step},{rep.iterations},{int(rep.converged)},{rep.residual!r},"
                f"{rep.anticommutation_drift!r},{rep.density!r},"
                f"{rep.timings.get('sigma', 0.0):.6f},"
                f"{rep.timings.get('collision', 0.0):.6f},"
                f"{rep.timings.get('update', 0.0):.6f}"
            )

        driver.run(observer=observer)

        if cfg.observables_path:
            _write_table(
                cfg.observables_path,
                "t,mean_n_v,mean_n_c,density,residual,iterations",
                obs_rows,
            )
        if cfg.report_path:
            _write_table(
                cfg.report_path,
                "step,iterations,converged,residual,anticommutation_drift,density,"
                "t_sigma,t_collision,t_update",
                rep_rows,
            )
        if cfg.trajectory_path:
            write_trajectory(cfg.trajectory_path, driver.state)
    return EXIT_OK


def _synthetic_slices(n_k: int, pairs: int, seed: int):
    rng = np.random.default_rng(seed)
    shape = (n_k, 2, 2, pairs)
    make = lambda: (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * 0.5
    return make(), make()


def _measure(fn, reps: int, warmup: int) -> tuple[float, float]:
    for _ in range(warmup):
        fn()
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times), max(times) - min(times)


_BENCH_HEADER = (
    "kernel,n_k,n_t,workers,block_size,batch,fusion,index_mode,reduce_mode,"
    "median_s,spread_s"
)


def _bench_row(kernel, n_k, n_t, schedule, median, spread) -> str:
    return (
        f"{kernel},{n_k},{n_t},{schedule.workers},{schedule.block_size},"
        f"{int(schedule.batch_enabled)},{int(schedule.fusion_enabled)},"
        f"{schedule.index_mode},{schedule.reduce_mode},{median:.6f},{spread:.6f}"
    )


def _sigma_bench_fn(n_k: int, pairs: int, schedule: Schedule, pool, seed: int):
    grid = build_kgrid(n_k)
    tables = build_index_tables(grid) if schedule.index_mode == "lookup" else None
    gl, gg = _synthetic_slices(n_k, pairs, seed)
    u1 = np.full(pairs, 0.5)
    u2 = 0.5
    return lambda: sigma_slice(
        gl, gg, u1, u2, grid, None, schedule, tables, pool
    )


def _ci_bench_fn(n_k: int, history: int, pairs: int, schedule: Schedule, seed: int):
    # Fixed pair count: measures the O(n_t) per-pair convolution cost.
    rng = np.random.default_rng(seed)
    T = history + 1
    row = lambda: (rng.standard_normal((n_k, 2, 2, T)) + 1j * rng.standard_normal((n_k, 2, 2, T))) * 0.5
    cols = lambda: (rng.standard_normal((n_k, 2, 2, T, pairs)) + 1j * rng.standard_normal((n_k, 2, 2, T, pairs))) * 0.5
    dg, gl = row(), row()
    sl, sg = cols(), cols()
    w1 = QuadratureRule().weights(history, 0.02)
    return lambda: collision_row(dg, gl, sl, sg, w1, w1)


def cmd_bench(args) -> int:
    if args.kernel not in ("sigma", "ci"):
        raise ConfigError(f"kernel: must be 'sigma' or 'ci', got {args.kernel!r}")
    schedule = Schedule(
        workers=args.workers,
        block_size=args.block_size,
        fusion_enabled=not args.no_fusion,
        index_mode=args.index_mode,
        reduce_mode=args.reduce_mode,
    )
    schedule.validate()
    rows = []
    with WorkerPool(args.workers) as pool:
        for n_k in args.n_k:
            if args.kernel == "sigma":
                fn = _sigma_bench_fn(n_k, args.pairs, schedule, pool, args.seed)
                n_t = args.pairs
            else:
                fn = _ci_bench_fn(n_k, args.history, args.pairs, schedule, args.seed)
                n_t = args.history
            median, spread = _measure(fn, args.reps, args.warmup)
            rows.append(_bench_row(args.kernel, n_k, n_t, schedule, median, spread))
    _write_table(args.out, _BENCH_HEADER, rows)
    return EXIT_OK


def cmd_sweep(args) -> int:
    rows = []
    for block in args.block_sizes:
        for workers in args.workers_list:
            schedule = Schedule(workers=workers, block_size=block)
            schedule.validate()
            with WorkerPool(workers) as pool:
                fn = _sigma_bench_fn(args.n_k, args.pairs, schedule, pool, args.seed)
                median, spread = _measure(fn, args.reps, args.warmup)
            rows.append(_bench_row("sigma", args.n_k, args.pairs, schedule, median, spread))
    _write_table(args.out, _BENCH_HEADER, rows)
    return EXIT_OK


_SCALING_HEADER = "mode,shards,n_k,workers,kernel,median_s,spread_s,speedup,efficiency"


def cmd_scaling(args) -> int:
    if args.mode not in ("strong", "weak"):
        raise ConfigError(f"mode: must be 'strong' or 'weak', got {args.mode!r}")
    rows = []
    base = {}
    for shards in args.shards:
        if args.mode == "strong":
            n_k = args.n_k
            workers = shards
            schedule = Schedule(n_shards=shards, workers=workers)
            schedule.validate(n_k)
            with WorkerPool(workers) as pool:
                fn = _sigma_bench_fn(n_k, args.pairs, schedule, pool, args.seed)
                med, spread = _measure(fn, args.reps, args.warmup)
            results = {"sigma": (med, spread)}
        else:
            # Weak protocol: 16 k-points per shard; time one shard's own work
            # (its replicated polarizability plus its local contractions).
            n_k = 16 * shards
            workers = args.workers
            schedule = Schedule(workers=workers)
            schedule.validate(n_k)
            grid = build_kgrid(n_k)
            gl, gg = _synthetic_slices(n_k, args.pairs, args.seed)
            u1 = np.full(args.pairs, 0.5)
            with WorkerPool(workers) as pool:
                fn = lambda: sigma_slice(gl, gg, u1, 0.5, grid, (0, 16), schedule, None, pool)
                med, spread = _measure(fn, args.reps, args.warmup)
                ci = _ci_bench_fn(16, args.history, args.pairs, schedule, args.seed)
                med_ci, spread_ci = _measure(ci, args.reps, args.warmup)
            results = {"sigma": (med, spread), "ci": (med_ci, spread_ci)}
        for kernel, (med, spread) in results.items():
            if (args.mode, kernel) not in base:
                base[(args.mode, kernel)] = med
            speedup = base[(args.mode, kernel)] / med if med > 0 else float("nan")
            eff = speedup / shards if args.mode == "strong" else speedup
            rows.append(
                f"{args.mode},{shards},{n_k},{workers},{kernel},"
                f"{med:.6f},{spread:.6f},{speedup:.4f},{eff:.4f}"
            )
    _write_table(args.out, _SCALING_HEADER, rows)
    return EXIT_OK


def cmd_inspect(args) -> int:
    header = read_header(args.path)
    for key, val in header.items():
        sys.stdout.write(f"{key}={val}\n")
    return EXIT_OK


def _int_list(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kbesolve",
        description="Two-time Green's function propagation and kernel benchmarks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="propagate a trajectory from a JSON config")
    p_run.add_argument("--config", required=True)
    p_run.set_defaults(func=cmd_run)

    p_bench = sub.add_parser("bench", help="time one kernel on synthetic data")
    p_bench.add_argument("--kernel", required=True)
    p_bench.add_argument("--n-k", type=_int_list, default=[128])
    p_bench.add_argument("--pairs", type=int, default=2)
    p_bench.add_argument("--history", type=int, default=128)
    p_bench.add_argument("--workers", type=int, default=1)
    p_bench.add_argument("--block-size", type=int, default=128)
    p_bench.add_argument("--no-fusion", action="store_true")
    p_bench.add_argument("--index-mode", default="on-the-fly")
    p_bench.add_argument("--reduce-mode", default="tree")
    p_bench.add_argument("--reps", type=int, default=5)
    p_bench.add_argument("--warmup", type=int, default=2)
    p_bench.add_argument("--seed", type=int, default=7)
    p_bench.add_argument("--out", default=None)
    p_bench.set_defaults(func=cmd_bench)

    p_sweep = sub.add_parser("sweep", help="cross product of block sizes and workers")
    p_sweep.add_argument("--block-sizes", type=_int_list, default=[64, 128, 256])
    p_sweep.add_argument("--workers-list", type=_int_list, default=[1])
    p_sweep.add_argument("--n-k", type=int, default=128)
    p_sweep.add_argument("--pairs", type=int, default=2)
    p_sweep.add_argument("--reps", type=int, default=5)
    p_sweep.add_argument("--warmup", type=int, default=2)
    p_sweep.add_argument("--seed", type=int, default=7)
    p_sweep.add_argument("--out", default=None)
    p_sweep.set_defaults(func=cmd_sweep)

    p_scal = sub.add_parser("scaling", help="strong or weak scaling tables")
    p_scal.add_argument("--mode", required=True)
    p_scal.add_argument("--shards", type=_int_list, default=[1, 2, 4, 8])
    p_scal.add_argument("--n-k", type=int, default=256)
    p_scal.add_argument("--pairs", type=int, default=2)
    p_scal.add_argument("--history", type=int, default=128)
    p_scal.add_argument("--workers", type=int, default=1)
    p_scal.add_argument("--reps", type=int, default=5)
    p_scal.add_argument("--warmup", type=int, default=2)
    p_scal.add_argument("--seed", type=int, default=7)
    p_scal.add_argument("--out", default=None)
    p_scal.set_defaults(func=cmd_scaling)

    p_ins = sub.add_parser("inspect", help="dump a trajectory header")
    p_ins.add_argument("path")
    p_ins.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return EXIT_CONFIG
    except PoisonedStateError as exc:
        sys.stderr.write(f"numerical poison: {exc}\n")
        return EXIT_POISON
    except TrajectoryFormatError as exc:
        sys.stderr.write(f"file format error: {exc}\n")
        return EXIT_IO
    except OSError as exc:
        sys.stderr.write(f"i/o error: {exc}\n")
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
