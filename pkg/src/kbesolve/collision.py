"""Collision integrals: quadrature over the stored two-time history.

For a pair (t_i, t'_l) the lesser integral is

    I<(k) = Q_{0..i}[ (G> - G<)(k; t_i, tb) . S<(k; tb, t'_l) ]
          + Q_{0..U2}[ G<(k; t_i, tb) . (S< - S>)(k; tb, t'_l) ]

with Q a second-order quadrature over the history points tb, the dot a
2x2 product in band space, and U2 either i ("as-printed") or l
("langreth").  The greater integral swaps the lesser/greater roles in the
first factor of each term.  Cost is O(n_t) per pair and k-point.

Band products are written out explicitly; these 2x2 blocks are too small
to justify a general matrix-multiply path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engine import Schedule, WorkerPool, combine_shards, execute
from .errors import ConfigError
from .selfenergy import SigmaHistory
from .state import TwoTimeGF

LIMIT_MODES = ("as-printed", "langreth")


def quadrature_weights(n: int, dt: float, kind: str = "trapezoid") -> np.ndarray:
    """Weights for n+1 uniform points; empty rule for n = 0.

    Trapezoid: dt * {1/2, 1, ..., 1, 1/2}.  Simpson: composite rule for
    even n; odd n patches the first interval with a trapezoid and applies
    Simpson to the remaining even count.  Weights sum to n*dt exactly.
    """
    if n < 0:
        raise ValueError(f"interval count must be >= 0, got {n}")
    if n == 0:
        return np.zeros(0)
    if kind == "trapezoid":
        w = np.full(n + 1, dt)
        w[0] = w[-1] = 0.5 * dt
        return w
    if kind != "simpson":
        raise ConfigError(f"quadrature kind must be 'trapezoid' or 'simpson', got {kind!r}")
    w = np.zeros(n + 1)
    start = 0
    if n % 2 == 1:
        w[0] += 0.5 * dt
        w[1] += 0.5 * dt
        start = 1
        if n == 1:
            return w
    m = n - start
    ws = np.full(m + 1, 2.0)
    ws[1::2] = 4.0
    ws[0] = ws[-1] = 1.0
    w[start:] += ws * (dt / 3.0)
    return w


@dataclass(frozen=True)
class QuadratureRule:
    kind: str = "trapezoid"

    def weights(self, n: int, dt: float) -> np.ndarray:
        return quadrature_weights(n, dt, self.kind)


def weight_matrix(limits, n_rows: int, dt: float, rule: QuadratureRule) -> np.ndarray:
    """Column c holds the padded weights for interval count limits[c]."""
    out = np.zeros((n_rows, len(limits)))
    for c, lim in enumerate(limits):
        w = rule.weights(lim, dt)
        out[: len(w), c] = w
    return out


def _mm2(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.array(
        [
            [a[0, 0] * b[0, 0] + a[0, 1] * b[1, 0], a[0, 0] * b[0, 1] + a[0, 1] * b[1, 1]],
            [a[1, 0] * b[0, 0] + a[1, 1] * b[1, 0], a[1, 0] * b[0, 1] + a[1, 1] * b[1, 1]],
        ]
    )


def _collision_pair(state, sigma, k, i, l, rule, limit_mode, greater: bool):
    if limit_mode not in LIMIT_MODES:
        raise ConfigError(f"limit_mode must be one of {LIMIT_MODES}, got {limit_mode!r}")
    dt = state.dt
    w1 = rule.weights(i, dt)
    u2 = i if limit_mode == "as-printed" else l
    w2 = rule.weights(u2, dt)
    gl = state.lesser[k]
    gg = state.greater[k]
    s_like = (sigma.greater if greater else sigma.lesser)[k]
    s_other = (sigma.lesser if greater else sigma.greater)[k]
    g_first = gg if greater else gl
    g_second = gl if greater else gg

    out = np.zeros((2, 2), dtype=complex)
    for tb in range(len(w1)):
        dg = g_second[:, :, i, tb] - g_first[:, :, i, tb]
        out += w1[tb] * _mm2(dg, s_like[:, :, tb, l])
    for tb in range(len(w2)):
        out += w2[tb] * _mm2(
            g_first[:, :, i, tb], s_like[:, :, tb, l] - s_other[:, :, tb, l]
        )
    return out


def collision_lesser(
    state: TwoTimeGF,
    sigma: SigmaHistory,
    k: int,
    i: int,
    l: int,
    rule: QuadratureRule = QuadratureRule(),
    limit_mode: str = "as-printed",
) -> np.ndarray:
    """Reference per-pair evaluation of I<(k; t_i, t'_l)."""
    return _collision_pair(state, sigma, k, i, l, rule, limit_mode, greater=False)


def collision_greater(
    state: TwoTimeGF,
    sigma: SigmaHistory,
    k: int,
    i: int,
    l: int,
    rule: QuadratureRule = QuadratureRule(),
    limit_mode: str = "as-printed",
) -> np.ndarray:
    """Role-swapped counterpart of collision_lesser."""
    return _collision_pair(state, sigma, k, i, l, rule, limit_mode, greater=True)


def collision_row(
    dg_first: np.ndarray,
    g_first: np.ndarray,
    s_like: np.ndarray,
    s_other: np.ndarray,
    w1: np.ndarray,
    w2: np.ndarray,
) -> np.ndarray:
    """Row-slice kernel: fixed t, a batch of t' columns.

    dg_first/g_first have shape (k, 2, 2, T) over history points,
    s_like/s_other shape (k, 2, 2, T, P) over history x pair columns; w1
    is the first-term weight vector, w2 either a vector (shared limit) or
    a (T, P) matrix of per-column weights.
    """
    term1 = np.einsum("t,kabt,kbmtl->kaml", w1, dg_first, s_like[:, :, :, : len(w1), :])
    diff = s_like - s_other
    if w2.ndim == 1:
        term2 = np.einsum("t,kabt,kbmtl->kaml", w2, g_first, diff[:, :, :, : len(w2), :])
    else:
        term2 = np.einsum("tl,kabt,kbmtl->kaml", w2, g_first, diff)
    return term1 + term2


@dataclass
class CollisionSlice:
    """I components on the step-n frontier, local k-range.

    Row entries cover (t_n, t'_l) for l = 0..n; column entries cover
    (t_j, t'_n) for j = 0..n-1.
    """

    lesser_row: np.ndarray
    greater_row: np.ndarray
    lesser_col: np.ndarray
    greater_col: np.ndarray


def _frontier_shard(state, sigma, n, rule, limit_mode, lo, hi):
    dt = state.dt
    T = n + 1
    gl_row = state.lesser[lo:hi, :, :, n, 0:T]
    gg_row = state.greater[lo:hi, :, :, n, 0:T]
    dg_row = gg_row - gl_row
    sl_cols = sigma.lesser[lo:hi, :, :, 0:T, 0:T]
    sg_cols = sigma.greater[lo:hi, :, :, 0:T, 0:T]
    w_row = rule.weights(n, dt)
    if limit_mode == "as-printed":
        w2_row = w_row
    else:
        w2_row = weight_matrix(range(T), T, dt, rule)
    lesser_row = collision_row(dg_row, gl_row, sl_cols, sg_cols, w_row, w2_row)
    greater_row = collision_row(-dg_row, gg_row, sg_cols, sl_cols, w_row, w2_row)

    if n == 0:
        empty = np.zeros((hi - lo, 2, 2, 0), dtype=complex)
        return CollisionSlice(lesser_row, greater_row, empty, empty.copy())

    # Column pairs (t_j, t'_n): the first-term limit follows the row index j.
    wc = weight_matrix(range(n), n, dt, rule)
    gl_col = state.lesser[lo:hi, :, :, 0:n, 0:n]
    gg_col = state.greater[lo:hi, :, :, 0:n, 0:n]
    dg_col = gg_col - gl_col
    sl_n = sigma.lesser[lo:hi, :, :, 0:n, n]
    sg_n = sigma.greater[lo:hi, :, :, 0:n, n]
    term1_l = np.einsum("tj,kabjt,kbmt->kamj", wc, dg_col, sl_n)
    term1_g = np.einsum("tj,kabjt,kbmt->kamj", wc, -dg_col, sg_n)
    if limit_mode == "as-printed":
        term2_l = np.einsum("tj,kabjt,kbmt->kamj", wc, gl_col, sl_n - sg_n)
        term2_g = np.einsum("tj,kabjt,kbmt->kamj", wc, gg_col, sg_n - sl_n)
    else:
        # Second-term limit is the column time t_n for every row index.
        w_full = rule.weights(n, dt)
        gl_ext = state.lesser[lo:hi, :, :, 0:n, 0:T]
        gg_ext = state.greater[lo:hi, :, :, 0:n, 0:T]
        sl_ext = sigma.lesser[lo:hi, :, :, 0:T, n]
        sg_ext = sigma.greater[lo:hi, :, :, 0:T, n]
        term2_l = np.einsum("t,kabjt,kbmt->kamj", w_full, gl_ext, sl_ext - sg_ext)
        term2_g = np.einsum("t,kabjt,kbmt->kamj", w_full, gg_ext, sg_ext - sl_ext)
    return CollisionSlice(
        lesser_row=lesser_row,
        greater_row=greater_row,
        lesser_col=term1_l + term2_l,
        greater_col=term1_g + term2_g,
    )


def collision_frontier(
    state: TwoTimeGF,
    sigma: SigmaHistory,
    n: int,
    rule: QuadratureRule = QuadratureRule(),
    schedule: Schedule | None = None,
    limit_mode: str = "as-printed",
    pool: WorkerPool | None = None,
) -> CollisionSlice:
    """Both components on all frontier pairs of step n in one batched pass.

    Equals the per-pair reference evaluation; frontier pairs are
    independent work items distributed by k-shard.
    """
    if limit_mode not in LIMIT_MODES:
        raise ConfigError(f"limit_mode must be one of {LIMIT_MODES}, got {limit_mode!r}")
    n_shards = schedule.n_shards if schedule is not None else 1
    batch_on = schedule.batch_enabled if schedule is not None else True
    n_k = state.n_k_local
    my_nk = n_k // n_shards
    shards = [(s * my_nk, (s + 1) * my_nk) for s in range(n_shards)]

    if not batch_on:
        lr = np.empty((n_k, 2, 2, n + 1), dtype=complex)
        gr = np.empty((n_k, 2, 2, n + 1), dtype=complex)
        lc = np.empty((n_k, 2, 2, n), dtype=complex)
        gc = np.empty((n_k, 2, 2, n), dtype=complex)
        for k in range(n_k):
            for l in range(n + 1):
                lr[k, :, :, l] = collision_lesser(state, sigma, k, n, l, rule, limit_mode)
                gr[k, :, :, l] = collision_greater(state, sigma, k, n, l, rule, limit_mode)
            for j in range(n):
                lc[k, :, :, j] = collision_lesser(state, sigma, k, j, n, rule, limit_mode)
                gc[k, :, :, j] = collision_greater(state, sigma, k, j, n, rule, limit_mode)
        return CollisionSlice(lr, gr, lc, gc)

    pieces = execute(
        lambda rng: (rng[0], _frontier_shard(state, sigma, n, rule, limit_mode, *rng)),
        shards,
        pool,
    )
    parts = [p for _, p in sorted(pieces, key=lambda x: x[0])]
    if len(parts) == 1:
        return parts[0]
    return CollisionSlice(
        lesser_row=combine_shards([(lo, p.lesser_row) for (lo, _), p in zip(shards, parts)]),
        greater_row=combine_shards([(lo, p.greater_row) for (lo, _), p in zip(shards, parts)]),
        lesser_col=combine_shards([(lo, p.lesser_col) for (lo, _), p in zip(shards, parts)]),
        greater_col=combine_shards([(lo, p.greater_col) for (lo, _), p in zip(shards, parts)]),
    )
