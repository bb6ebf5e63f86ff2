import numpy as np
import pytest

from kbesolve.engine import Schedule, WorkerPool
from kbesolve.kgrid import build_index_tables, build_kgrid
from kbesolve.selfenergy import (
    assemble_sigma,
    evaluate_sigma_batched,
    init_sigma_history,
    polarizability,
    sigma_first,
    sigma_second,
    sigma_slice,
)
from kbesolve.state import init_state, mirror_frontier


def _wrap_idx(value, k_values):
    tol = 1e-12
    while value < -np.pi - tol:
        value += 2 * np.pi
    while value >= np.pi - tol:
        value -= 2 * np.pi
    return int(np.argmin(np.abs(k_values - value)))


def _oracle_index_tables(k_values):
    """Sum/diff/composite index tables from the wrap-and-search oracle."""
    n_k = len(k_values)
    s = np.empty((n_k, n_k), dtype=int)
    d = np.empty((n_k, n_k), dtype=int)
    for a in range(n_k):
        for b in range(n_k):
            s[a, b] = _wrap_idx(k_values[a] + k_values[b], k_values)
            d[a, b] = _wrap_idx(k_values[a] - k_values[b], k_values)
    return s, d


def oracle_polarizability(gl, gg_rev, k_values):
    n_k = len(k_values)
    s, _ = _oracle_index_tables(k_values)
    out = np.zeros((n_k, 2, 2), dtype=complex)
    for q in range(n_k):
        for j in range(2):
            for m in range(2):
                for kp in range(n_k):
                    out[q, j, m] += gl[s[kp, q], j, m] * gg_rev[kp, m, j]
    return out


def oracle_sigma_first(gl, gg_rev, u1, u2, k_values):
    """Direct triple sum of the first term, no polarizability factorization."""
    n_k = len(k_values)
    s, d = _oracle_index_tables(k_values)
    out = np.zeros((n_k, 2, 2), dtype=complex)
    for k in range(n_k):
        for j in range(2):
            for m in range(2):
                acc = 0.0 + 0.0j
                for q in range(n_k):
                    for kp in range(n_k):
                        acc += (
                            gl[s[kp, q], 1 - j, 1 - m]
                            * gg_rev[kp, 1 - m, 1 - j]
                            * gl[d[k, q], j, m]
                        )
                out[k, j, m] = acc
    return out * u1 * u2 / n_k**2


def oracle_sigma_second(gl, gg_rev, u1, u2, k_values):
    """Five nested loops with wrap-and-search composite indices."""
    n_k = len(k_values)
    out = np.zeros((n_k, 2, 2), dtype=complex)
    for k in range(n_k):
        for j in range(2):
            for m in range(2):
                acc = 0.0 + 0.0j
                for q in range(n_k):
                    for kp in range(n_k):
                        comp = _wrap_idx(
                            k_values[kp] + k_values[q] - k_values[k], k_values
                        )
                        acc += (
                            gl[kp, j, 1 - m]
                            * gg_rev[comp, 1 - m, 1 - j]
                            * gl[q, 1 - j, m]
                        )
                out[k, j, m] = acc
    return out * u1 * u2 / n_k**2


def _seeded_slices(n_k, seed, pairs=None):
    rng = np.random.default_rng(seed)
    shape = (n_k, 2, 2) if pairs is None else (n_k, 2, 2, pairs)
    gl = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    gg = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return gl, gg


def _rel_err(a, b):
    scale = max(np.abs(b).max(), 1e-300)
    return np.abs(a - b).max() / scale


def test_polarizability_zero_input():
    grid = build_kgrid(4)
    gl = np.zeros((4, 2, 2), dtype=complex)
    gg, _ = _seeded_slices(4, 1)
    assert np.all(polarizability(gl, gg, grid) == 0)


def test_polarizability_shape_mismatch():
    grid = build_kgrid(4)
    gl, _ = _seeded_slices(4, 1)
    with pytest.raises(ValueError):
        polarizability(gl, gl[..., None].repeat(2, axis=-1), grid)


def test_polarizability_matches_double_loop_oracle():
    grid = build_kgrid(4)
    gl, gg = _seeded_slices(4, 2)
    got = polarizability(gl, gg, grid)
    want = oracle_polarizability(gl, gg, grid.k_values)
    assert _rel_err(got, want) <= 1e-13


def test_sigma_first_zero_interaction():
    grid = build_kgrid(4)
    gl, gg = _seeded_slices(4, 3)
    pol = polarizability(gl, gg, grid)
    assert np.all(sigma_first(pol, gl, 0.0, 0.7, grid) == 0)


def test_sigma_second_zero_input():
    grid = build_kgrid(4)
    gl, gg = _seeded_slices(4, 4)
    out = sigma_second(np.zeros_like(gl), gg, 0.5, 0.5, grid)
    assert np.all(out == 0)


@pytest.mark.parametrize("n_k", [2, 4, 8, 16])
def test_sigma_first_factorization_equivalence(n_k):
    # The factorized route must reproduce the direct triple contraction.
    grid = build_kgrid(n_k)
    gl, gg = _seeded_slices(n_k, 10 + n_k)
    pol = polarizability(gl, gg, grid)
    got = sigma_first(pol, gl, 0.8, 1.1, grid)
    want = oracle_sigma_first(gl, gg, 0.8, 1.1, grid.k_values)
    assert _rel_err(got, want) <= 1e-10


@pytest.mark.parametrize("n_k", [4, 8])
def test_sigma_second_matches_nested_loop_oracle(n_k):
    grid = build_kgrid(n_k)
    gl, gg = _seeded_slices(n_k, 20 + n_k)
    got = sigma_second(gl, gg, 0.9, 0.4, grid)
    want = oracle_sigma_second(gl, gg, 0.9, 0.4, grid.k_values)
    assert _rel_err(got, want) <= 1e-10


def test_sigma_second_schedule_modes_agree():
    grid = build_kgrid(8)
    gl, gg = _seeded_slices(8, 31)
    tables = build_index_tables(grid)
    base = sigma_second(gl, gg, 0.5, 0.5, grid, schedule=Schedule())
    for sched in (
        Schedule(block_size=5),
        Schedule(fusion_enabled=False),
        Schedule(reduce_mode="sequential"),
        Schedule(index_mode="lookup"),
    ):
        other = sigma_second(gl, gg, 0.5, 0.5, grid, schedule=sched, tables=tables)
        assert _rel_err(other, base) <= 1e-12


def test_sigma_second_lookup_bitwise_equals_on_the_fly():
    grid = build_kgrid(8)
    gl, gg = _seeded_slices(8, 32)
    tables = build_index_tables(grid)
    a = sigma_second(gl, gg, 0.5, 0.5, grid, schedule=Schedule(index_mode="on-the-fly"))
    b = sigma_second(gl, gg, 0.5, 0.5, grid, schedule=Schedule(index_mode="lookup"), tables=tables)
    np.testing.assert_array_equal(a, b)


def test_single_k_point_limit():
    # With one k-point every index collapses and the sums have one term.
    # n_k=2 grid sliced down is not available, so check n_k=2 against the
    # explicit two-term forms instead via the oracles at n_k=2.
    grid = build_kgrid(2)
    gl, gg = _seeded_slices(2, 40)
    got1 = sigma_first(polarizability(gl, gg, grid), gl, 1.3, 0.7, grid)
    want1 = oracle_sigma_first(gl, gg, 1.3, 0.7, grid.k_values)
    assert _rel_err(got1, want1) <= 1e-12
    got2 = sigma_second(gl, gg, 1.3, 0.7, grid)
    want2 = oracle_sigma_second(gl, gg, 1.3, 0.7, grid.k_values)
    assert _rel_err(got2, want2) <= 1e-12


def test_assemble_sigma():
    rng = np.random.default_rng(50)
    s1 = rng.standard_normal((4, 2, 2)) + 1j * rng.standard_normal((4, 2, 2))
    s2 = rng.standard_normal((4, 2, 2)) + 1j * rng.standard_normal((4, 2, 2))
    np.testing.assert_array_equal(assemble_sigma(s1, np.zeros_like(s2)), s1)
    np.testing.assert_array_equal(assemble_sigma(s1, s1), 0)
    np.testing.assert_array_equal(assemble_sigma(s1, s2), s1 - s2)


def _mirrored_random_state(n_k, n_steps, frontier, seed):
    rng = np.random.default_rng(seed)
    state = init_state(build_kgrid(n_k), n_steps, 0.05)
    shape = state.lesser.shape
    state.lesser[:] = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    state.greater[:] = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    state.frontier = frontier
    for n in range(frontier + 1):
        mirror_frontier(state, n)
    return state


def test_batched_diagonal_only_at_step_zero():
    grid = build_kgrid(4)
    state = _mirrored_random_state(4, 2, 0, 60)
    sigma = init_sigma_history(4, 2)
    u = np.array([0.5, 0.5, 0.5])
    evaluate_sigma_batched(state, sigma, 0, grid, u)
    assert np.any(sigma.lesser[:, :, :, 0, 0] != 0)
    assert np.all(sigma.lesser[:, :, :, 1:, :] == 0)
    assert np.all(sigma.lesser[:, :, :, :, 1:] == 0)


def test_batched_equals_per_pair_loop():
    n_k, n = 4, 4
    grid = build_kgrid(n_k)
    state = _mirrored_random_state(n_k, 6, n, 61)
    u = np.linspace(0.4, 0.9, 7)
    sig_batched = init_sigma_history(n_k, 6)
    evaluate_sigma_batched(state, sig_batched, n, grid, u, Schedule(batch_enabled=True))
    sig_loop = init_sigma_history(n_k, 6)
    evaluate_sigma_batched(state, sig_loop, n, grid, u, Schedule(batch_enabled=False))
    np.testing.assert_array_equal(sig_batched.lesser, sig_loop.lesser)
    np.testing.assert_array_equal(sig_batched.greater, sig_loop.greater)


def test_batched_mirror_matches_direct_evaluation():
    # The mirrored row of the lesser component must match evaluating the
    # pipeline directly on the row slices; exact up to floating roundoff
    # (the second term multiplies the same factors in a different order).
    n_k, n = 4, 3
    grid = build_kgrid(n_k)
    state = _mirrored_random_state(n_k, 5, n, 62)
    u = np.linspace(0.5, 1.0, 6)
    sigma = init_sigma_history(n_k, 5)
    evaluate_sigma_batched(state, sigma, n, grid, u)
    for j in range(n):
        direct = sigma_slice(
            state.lesser[:, :, :, n, j],
            state.greater[:, :, :, j, n],
            float(u[n]),
            float(u[j]),
            grid,
        )
        assert _rel_err(sigma.lesser[:, :, :, n, j], direct) <= 1e-13


def test_batched_zero_interaction_protocol():
    n_k, n = 4, 2
    grid = build_kgrid(n_k)
    state = _mirrored_random_state(n_k, 4, n, 63)
    sigma = init_sigma_history(n_k, 4)
    evaluate_sigma_batched(state, sigma, n, grid, np.zeros(5))
    assert np.all(sigma.lesser == 0)
    assert np.all(sigma.greater == 0)


@pytest.mark.parametrize("n_shards", [1, 2, 4, 8])
def test_shard_invariance(n_shards):
    n_k = 8
    grid = build_kgrid(n_k)
    gl, gg = _seeded_slices(n_k, 70, pairs=3)
    base = sigma_slice(gl, gg, 0.6, 0.8, grid, None, Schedule())
    sched = Schedule(n_shards=n_shards)
    pieces = []
    my_nk = n_k // n_shards
    for s in range(n_shards):
        rng_s = (s * my_nk, (s + 1) * my_nk)
        pieces.append(sigma_slice(gl, gg, 0.6, 0.8, grid, rng_s, sched))
    got = np.concatenate(pieces, axis=0)
    assert _rel_err(got, base) <= 1e-10


def test_worker_count_bitwise_invariance():
    grid = build_kgrid(8)
    gl, gg = _seeded_slices(8, 71, pairs=2)
    base = sigma_slice(gl, gg, 0.6, 0.8, grid, None, Schedule(workers=1))
    with WorkerPool(4) as pool:
        threaded = sigma_slice(gl, gg, 0.6, 0.8, grid, None, Schedule(workers=4), None, pool)
    np.testing.assert_array_equal(base, threaded)
