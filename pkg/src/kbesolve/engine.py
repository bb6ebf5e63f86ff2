"""Portable data-parallel execution primitives.

The hierarchy is (shard -> work item -> chunk): shards split the k-points
the way ranks would, work items are dispatched to a bounded thread pool,
and each item's inner contraction domain is cut into ``block_size`` chunks
whose partial sums are combined by a deterministic reducer.  Results
depend only on the chunk order and the reduce mode, never on worker
interleaving, so any worker count reproduces the single-worker output
bit for bit.
"""

from __future__ import annotations

import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError
from .kgrid import KGrid

INDEX_MODES = ("on-the-fly", "lookup")
REDUCE_MODES = ("tree", "sequential")


@dataclass(frozen=True)
class Schedule:
    """Parallel execution configuration.

    block_size is the chunk of the fused inner k' x q domain handled per
    partial sum; fusion_enabled selects the fused iteration over (k', q)
    versus the nested per-k'-row form; index_mode picks table lookups or
    on-the-fly index formulas (identical integers either way).
    """

    n_shards: int = 1
    workers: int = 1
    block_size: int = 128
    batch_enabled: bool = True
    fusion_enabled: bool = True
    index_mode: str = "on-the-fly"
    reduce_mode: str = "tree"

    def validate(self, n_k: int | None = None) -> None:
        if self.n_shards < 1:
            raise ConfigError(f"n_shards must be >= 1, got {self.n_shards}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        if self.block_size < 1:
            raise ConfigError(f"block_size must be >= 1, got {self.block_size}")
        if self.index_mode not in INDEX_MODES:
            raise ConfigError(f"index_mode must be one of {INDEX_MODES}, got {self.index_mode!r}")
        if self.reduce_mode not in REDUCE_MODES:
            raise ConfigError(f"reduce_mode must be one of {REDUCE_MODES}, got {self.reduce_mode!r}")
        if n_k is not None and n_k % self.n_shards != 0:
            raise ConfigError(
                f"n_shards: {self.n_shards} does not divide n_k={n_k}"
            )

    def with_workers(self, workers: int) -> "Schedule":
        return replace(self, workers=workers)


@dataclass(frozen=True)
class WorkPlan:
    """Deterministic partition of one kernel invocation.

    shard_ranges are zero-based half-open k intervals; chunk_count is the
    number of inner-domain chunks per output element.
    """

    shard_ranges: tuple[tuple[int, int], ...]
    pair_count: int
    inner_size: int
    chunk_count: int


def plan(grid: KGrid, n_t: int, schedule: Schedule) -> WorkPlan:
    """Partition outputs for the frontier evaluation at step n_t."""
    schedule.validate(grid.n_k)
    my_nk = grid.n_k // schedule.n_shards
    shard_ranges = tuple(
        (s * my_nk, (s + 1) * my_nk) for s in range(schedule.n_shards)
    )
    inner = grid.n_k * grid.n_k
    if schedule.fusion_enabled:
        chunks = -(-inner // schedule.block_size)
    else:
        chunks = grid.n_k
    return WorkPlan(
        shard_ranges=shard_ranges,
        pair_count=2 * n_t + 1,
        inner_size=inner,
        chunk_count=chunks,
    )


class WorkerPool:
    """Bounded thread pool; one worker degenerates to inline execution."""

    def __init__(self, workers: int = 1):
        if workers < 1:
            raise ConfigError(f"workers must be >= 1, got {workers}")
        self.workers = workers
        self._executor = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None

    def map(self, fn, items):
        if self._executor is None:
            return [fn(item) for item in items]
        return list(self._executor.map(fn, items))

    def close(self) -> None:
        if self._executor is not None:
            self._executor.shutdown(wait=True)
            self._executor = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


def execute(kernel, items, pool: WorkerPool | None = None) -> list:
    """Evaluate a pure kernel over work items, results in item order.

    Every item is evaluated exactly once; kernels must not share mutable
    state, so the outcome is independent of execution interleaving.
    """
    items = list(items)
    if not items:
        return []
    if pool is None:
        return [kernel(item) for item in items]
    return pool.map(kernel, items)


def chunk_partial_sums(terms: np.ndarray, block_size: int, axis: int = -1) -> np.ndarray:
    """Per-chunk sums of ``terms`` along ``axis`` in blocks of ``block_size``.

    Chunk c covers flat positions [c*block_size, (c+1)*block_size); the
    final chunk may be short.  Chunk count is ceil(m / block_size).  The
    reduction runs over the innermost memory axis, so the within-chunk
    summation order depends only on the block size, never on the shape of
    the other axes.
    """
    a = np.moveaxis(terms, axis, -1)
    if not a.flags.c_contiguous:
        a = np.ascontiguousarray(a)
    m = a.shape[-1]
    if m == 0:
        return np.moveaxis(np.zeros(a.shape[:-1] + (0,), dtype=terms.dtype), -1, axis)
    full = m // block_size
    parts = []
    if full:
        head = a[..., : full * block_size].reshape(a.shape[:-1] + (full, block_size))
        parts.append(head.sum(axis=-1))
    if full * block_size < m:
        parts.append(a[..., full * block_size :].sum(axis=-1, keepdims=True))
    out = parts[0] if len(parts) == 1 else np.concatenate(parts, axis=-1)
    return np.moveaxis(out, -1, axis)


def tree_reduce(parts: np.ndarray, axis: int = -1, return_rounds: bool = False):
    """Pairwise offset-doubling reduction along ``axis``.

    Partials are combined with strides s = 1, 2, 4, ..., so m chunks are
    summed in exactly ceil(log2(m)) rounds.  The result is a pure function
    of the chunk order.
    """
    a = np.array(np.moveaxis(np.asarray(parts), axis, -1), copy=True)
    m = a.shape[-1]
    if m == 0:
        raise ValueError("cannot reduce zero partial sums")
    rounds = 0
    s = 1
    while s < m:
        lhs = a[..., 0::2 * s]
        rhs = a[..., s::2 * s]
        lhs[..., : rhs.shape[-1]] += rhs
        s *= 2
        rounds += 1
    out = a[..., 0]
    if return_rounds:
        return out, rounds
    return out


def sequential_reduce(parts: np.ndarray, axis: int = -1) -> np.ndarray:
    """Left-to-right summation of chunk partials."""
    a = np.moveaxis(np.asarray(parts), axis, -1)
    m = a.shape[-1]
    if m == 0:
        raise ValueError("cannot reduce zero partial sums")
    out = a[..., 0].copy()
    for i in range(1, m):
        out += a[..., i]
    return out


def reduce_partials(parts: np.ndarray, schedule: Schedule | None, axis: int = -1) -> np.ndarray:
    if schedule is not None and schedule.reduce_mode == "sequential":
        return sequential_reduce(parts, axis=axis)
    return tree_reduce(parts, axis=axis)


def combine_shards(pieces, axis: int = 0) -> np.ndarray:
    """Concatenate per-shard outputs by global k-index.

    ``pieces`` is an iterable of (k_offset, array); arrival order does not
    matter, the k ranges must tile a contiguous interval.
    """
    ordered = sorted(pieces, key=lambda p: p[0])
    expect = ordered[0][0]
    for off, arr in ordered:
        if off != expect:
            raise ValueError(f"shard pieces not contiguous at k-offset {off}")
        expect = off + arr.shape[axis]
    if len(ordered) == 1:
        return ordered[0][1]
    return np.concatenate([arr for _, arr in ordered], axis=axis)


class ScratchPool:
    """Per-worker scratch arrays, allocated once and reused across steps."""

    def __init__(self):
        self._local = threading.local()

    def take(self, key: str, shape: tuple, dtype) -> np.ndarray:
        store = getattr(self._local, "arrays", None)
        if store is None:
            store = {}
            self._local.arrays = store
        arr = store.get(key)
        if arr is None or arr.shape != shape or arr.dtype != np.dtype(dtype):
            arr = np.empty(shape, dtype=dtype)
            store[key] = arr
        return arr


class KernelTimers:
    """Wall-clock accumulator per kernel class."""

    def __init__(self):
        self.seconds: dict[str, float] = {}

    def add(self, name: str, dt: float) -> None:
        self.seconds[name] = self.seconds.get(name, 0.0) + dt

    def timing(self, name: str):
        return _TimerContext(self, name)


class _TimerContext:
    def __init__(self, timers: KernelTimers, name: str):
        self._timers = timers
        self._name = name

    def __enter__(self):
        self._t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self._timers.add(self._name, time.perf_counter() - self._t0)
        return False
