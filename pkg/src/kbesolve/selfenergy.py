"""Second-Born self-energy kernels.

At a time pair (t, t') the lesser component is the difference of two
momentum contractions,

    S1_{jm}(k) = U(t) U(t') / n_k^2 * sum_q  P_{fj fm}(q) G<_{jm}(k - q)
    P_{jm}(q)  = sum_{k'} G<_{jm}(k' + q) G>_{mj}(k')      (times reversed)
    S2_{jm}(k) = U(t) U(t') / n_k^2 *
                 sum_{q, k'} G<_{j fm}(k') G>_{fm fj}(k' + q - k) G<_{fj m}(q)

with fj = 3 - j the opposite band.  The polarizability P factors the
first term down to O(n_k^2) work; the second term does not decouple and
is evaluated per output k over the fused (k', q) domain, cut into
block_size chunks whose partial sums feed the schedule's deterministic
reducer.  The composite momentum k' + q - k is resolved by chaining the
sum and difference index maps.

The greater component reuses the same pipeline with the lesser/greater
slices and the two interaction values swapped; only their product enters.

Slices carry a trailing batch axis over time pairs: shape (n_k, 2, 2, nb).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engine import (
    ScratchPool,
    Schedule,
    WorkerPool,
    chunk_partial_sums,
    combine_shards,
    execute,
    reduce_partials,
)
from .kgrid import IndexTables, KGrid, diff_index_array, sum_index_array
from .state import TwoTimeGF

# Cap on gather-buffer elements for the internally blocked O(n_k^2) kernels.
_SLAB_ELEMENTS = 1 << 21


def _index_arrays(grid: KGrid, schedule: Schedule | None, tables: IndexTables | None):
    """Zero-based sum/diff index matrices per the schedule's index mode."""
    if schedule is not None and schedule.index_mode == "lookup":
        if tables is None:
            raise ValueError("lookup index mode requires prebuilt tables")
        return tables.sum_table - 1, tables.diff_table - 1
    return sum_index_array(grid.n_k), diff_index_array(grid.n_k)


def _batched(g: np.ndarray) -> np.ndarray:
    return g[..., None] if g.ndim == 3 else g


def polarizability(
    g_less: np.ndarray,
    g_greater_rev: np.ndarray,
    grid: KGrid,
    schedule: Schedule | None = None,
    tables: IndexTables | None = None,
) -> np.ndarray:
    """Bubble contraction P_{jm}(q) = sum_{k'} G<_{jm}(k'+q) G>_{mj}(k').

    Both inputs must cover the full k range (post-gather); cost O(n_k^2)
    per band pair and batch entry.
    """
    squeeze = np.asarray(g_less).ndim == 3
    gl = _batched(np.asarray(g_less))
    gg = _batched(np.asarray(g_greater_rev))
    if gl.shape != gg.shape:
        raise ValueError(f"slice shapes differ: {gl.shape} vs {gg.shape}")
    n_k = grid.n_k
    nb = gl.shape[-1]
    sum0, _ = _index_arrays(grid, schedule, tables)
    block = schedule.block_size if schedule is not None else n_k

    # Batch-leading internal layout keeps the k' reduction on the
    # innermost axis, so the summation order is batch-size independent.
    gl_t = np.ascontiguousarray(np.moveaxis(gl, 0, -1))                 # (2,2,nb,k)
    gg_t = np.ascontiguousarray(np.moveaxis(np.swapaxes(gg, 1, 2), 0, -1))

    out = np.empty((n_k, 2, 2, nb), dtype=complex)
    q_block = max(1, _SLAB_ELEMENTS // max(1, n_k * 4 * nb))
    for q0 in range(0, n_k, q_block):
        q1 = min(q0 + q_block, n_k)
        gathered = np.take(gl_t, sum0[:, q0:q1].T, axis=-1)             # (2,2,nb,qb,k')
        terms = gathered * gg_t[:, :, :, None, :]
        parts = chunk_partial_sums(terms, block, axis=-1)
        out[q0:q1] = np.moveaxis(reduce_partials(parts, schedule, axis=-1), -1, 0)
    return out[..., 0] if squeeze else out


def _resolve_k_range(grid: KGrid, k_range) -> np.ndarray:
    if k_range is None:
        return np.arange(grid.n_k)
    lo, hi = k_range
    return np.arange(lo, hi)


def sigma_first(
    pol: np.ndarray,
    g_less: np.ndarray,
    u_t,
    u_tp,
    grid: KGrid,
    k_range=None,
    schedule: Schedule | None = None,
    tables: IndexTables | None = None,
) -> np.ndarray:
    """Polarizability route for the first term, on the local k range."""
    squeeze = np.asarray(g_less).ndim == 3
    gl = _batched(np.asarray(g_less))
    pol = _batched(np.asarray(pol))
    n_k = grid.n_k
    nb = gl.shape[-1]
    _, diff0 = _index_arrays(grid, schedule, tables)
    block = schedule.block_size if schedule is not None else n_k
    ks = _resolve_k_range(grid, k_range)
    pref = np.asarray(u_t) * np.asarray(u_tp) / float(n_k) ** 2

    gl_t = np.ascontiguousarray(np.moveaxis(gl, 0, -1))                 # (2,2,nb,k)
    pol_flip = np.ascontiguousarray(np.moveaxis(pol[:, ::-1, ::-1, :], 0, -1))
    out = np.empty((len(ks), 2, 2, nb), dtype=complex)
    k_block = max(1, _SLAB_ELEMENTS // max(1, n_k * 4 * nb))
    for i0 in range(0, len(ks), k_block):
        i1 = min(i0 + k_block, len(ks))
        gathered = np.take(gl_t, diff0[ks[i0:i1], :], axis=-1)          # (2,2,nb,kb,q)
        terms = pol_flip[:, :, :, None, :] * gathered
        parts = chunk_partial_sums(terms, block, axis=-1)
        out[i0:i1] = np.moveaxis(reduce_partials(parts, schedule, axis=-1), -1, 0)
    out = out * pref
    return out[..., 0] if squeeze else out


def sigma_second(
    g_less: np.ndarray,
    g_greater_rev: np.ndarray,
    u_t,
    u_tp,
    grid: KGrid,
    k_range=None,
    schedule: Schedule | None = None,
    tables: IndexTables | None = None,
    pool: WorkerPool | None = None,
    scratch: ScratchPool | None = None,
) -> np.ndarray:
    """Irreducible second term, O(n_k^2) work per output element.

    Each output k-point is one work item: the fused (k', q) domain is
    gathered through the composite k'+q-k index, multiplied out for the
    four band combinations in separate accumulators, chunked, and reduced
    deterministically.
    """
    squeeze = np.asarray(g_less).ndim == 3
    gl = _batched(np.asarray(g_less))
    gg = _batched(np.asarray(g_greater_rev))
    n_k = grid.n_k
    nb = gl.shape[-1]
    sum0, diff0 = _index_arrays(grid, schedule, tables)
    block = schedule.block_size if schedule is not None else n_k
    fused = schedule.fusion_enabled if schedule is not None else True
    ks = _resolve_k_range(grid, k_range)
    pref = np.asarray(u_t) * np.asarray(u_tp) / float(n_k) ** 2
    local_scratch = scratch if scratch is not None else ScratchPool()

    # Batch-leading layout; the fused (k', q) domain sits on the innermost
    # axes so partial sums are batch-size independent.
    gg_t = np.ascontiguousarray(np.moveaxis(gg, -1, 0))                 # (nb, k, 2, 2)
    a_first = [
        [np.ascontiguousarray(gl[:, j, 1 - m, :].T) for m in range(2)] for j in range(2)
    ]  # (nb, k')
    a_last = [
        [np.ascontiguousarray(gl[:, 1 - j, m, :].T) for m in range(2)] for j in range(2)
    ]  # (nb, q)

    def one_k(k0: int) -> np.ndarray:
        idx = local_scratch.take("sig2_idx", (n_k, n_k), np.intp)
        np.take(diff0[:, k0], sum0, out=idx)
        gathered = local_scratch.take("sig2_gather", (nb, n_k * n_k, 2, 2), complex)
        np.take(gg_t, idx.ravel(), axis=1, out=gathered)
        terms = local_scratch.take("sig2_terms", (nb, n_k, n_k), complex)
        val = np.empty((2, 2, nb), dtype=complex)
        for j in range(2):
            for m in range(2):
                bg = gathered[:, :, 1 - m, 1 - j].reshape(nb, n_k, n_k)
                np.multiply(bg, a_first[j][m][:, :, None], out=terms)
                np.multiply(terms, a_last[j][m][:, None, :], out=terms)
                if fused:
                    parts = chunk_partial_sums(
                        terms.reshape(nb, n_k * n_k), block, axis=-1
                    )
                else:
                    parts = terms.sum(axis=-1)   # one chunk per k' row
                val[j, m] = reduce_partials(parts, schedule, axis=-1)
        return val

    results = execute(one_k, [int(k) for k in ks], pool)
    out = np.stack(results, axis=0) * pref
    return out[..., 0] if squeeze else out


def assemble_sigma(sigma1: np.ndarray, sigma2: np.ndarray) -> np.ndarray:
    """Full slice: first term minus second term."""
    return sigma1 - sigma2


def sigma_slice(
    g_primary: np.ndarray,
    g_reversed: np.ndarray,
    u1,
    u2,
    grid: KGrid,
    k_range=None,
    schedule: Schedule | None = None,
    tables: IndexTables | None = None,
    pool: WorkerPool | None = None,
    scratch: ScratchPool | None = None,
    pol: np.ndarray | None = None,
) -> np.ndarray:
    """Complete pipeline for one slice batch of one component.

    For the lesser component pass (G< at (t,t'), G> at (t',t)); for the
    greater component swap the roles (and the u arguments, though only
    their product enters the prefactor).
    """
    if pol is None:
        pol = polarizability(g_primary, g_reversed, grid, schedule, tables)
    s1 = sigma_first(pol, g_primary, u1, u2, grid, k_range, schedule, tables)
    s2 = sigma_second(
        g_primary, g_reversed, u1, u2, grid, k_range, schedule, tables, pool, scratch
    )
    return assemble_sigma(s1, s2)


@dataclass
class SigmaHistory:
    """Sigma components stored on the full two-time grid, like G."""

    lesser: np.ndarray
    greater: np.ndarray


def init_sigma_history(n_k: int, n_steps: int) -> SigmaHistory:
    shape = (n_k, 2, 2, n_steps + 1, n_steps + 1)
    return SigmaHistory(
        lesser=np.zeros(shape, dtype=complex),
        greater=np.zeros(shape, dtype=complex),
    )


def _shard_ranges(n_k: int, schedule: Schedule | None):
    n_shards = schedule.n_shards if schedule is not None else 1
    my_nk = n_k // n_shards
    return [(s * my_nk, (s + 1) * my_nk) for s in range(n_shards)]


def evaluate_sigma_batched(
    state: TwoTimeGF,
    sigma: SigmaHistory,
    n: int,
    grid: KGrid,
    u_table: np.ndarray,
    schedule: Schedule | None = None,
    tables: IndexTables | None = None,
    pool: WorkerPool | None = None,
    scratch: ScratchPool | None = None,
) -> None:
    """Evaluate both components on the step-n frontier in one batched pass.

    The lesser component is computed directly on the column pairs
    (t_j, t'_n), j = 0..n, the greater component on the row pairs
    (t_n, t'_l); the opposite orderings are filled by conjugate mirroring,
    which agrees with direct evaluation to floating roundoff (exactly, for
    the polarizability route).  Requires the state frontier to be
    mirrored.  With batching disabled the same pipeline runs once per
    pair, which is bit-identical to the batched pass.
    """
    shards = _shard_ranges(grid.n_k, schedule)
    batch_on = schedule.batch_enabled if schedule is not None else True

    gl_col = state.lesser[:, :, :, 0 : n + 1, n]
    gg_row = state.greater[:, :, :, n, 0 : n + 1]
    u_hist = u_table[0 : n + 1]
    u_now = float(u_table[n])

    def eval_component(primary, reversed_, u1, u2):
        if batch_on:
            pol = polarizability(primary, reversed_, grid, schedule, tables)
            pieces = [
                (lo, sigma_slice(primary, reversed_, u1, u2, grid, (lo, hi),
                                 schedule, tables, pool, scratch, pol=pol))
                for lo, hi in shards
            ]
            return combine_shards(pieces, axis=0)
        cols = []
        for b in range(primary.shape[-1]):
            pb = primary[..., b : b + 1]
            rb = reversed_[..., b : b + 1]
            u1b = u1 if np.isscalar(u1) else u1[b : b + 1]
            u2b = u2 if np.isscalar(u2) else u2[b : b + 1]
            pol = polarizability(pb, rb, grid, schedule, tables)
            pieces = [
                (lo, sigma_slice(pb, rb, u1b, u2b, grid, (lo, hi),
                                 schedule, tables, pool, scratch, pol=pol))
                for lo, hi in shards
            ]
            cols.append(combine_shards(pieces, axis=0))
        return np.concatenate(cols, axis=-1)

    lesser_col = eval_component(gl_col, gg_row, u_hist, u_now)
    greater_row = eval_component(gg_row, gl_col, u_now, u_hist)

    sigma.lesser[:, :, :, 0 : n + 1, n] = lesser_col
    sigma.greater[:, :, :, n, 0 : n + 1] = greater_row
    if n > 0:
        sigma.lesser[:, :, :, n, 0:n] = -np.conj(
            np.swapaxes(lesser_col[..., 0:n], 1, 2)
        )
        sigma.greater[:, :, :, 0:n, n] = -np.conj(
            np.swapaxes(greater_row[..., 0:n], 1, 2)
        )
