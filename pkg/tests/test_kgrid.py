import numpy as np
import pytest

from kbesolve.errors import ConfigError
from kbesolve.kgrid import (
    build_index_tables,
    build_kgrid,
    diff_index_array,
    index_of_diff,
    index_of_sum,
    sum_index_array,
)


def wrap_search_index(value: float, k_values: np.ndarray) -> int:
    """Independent oracle: fold into [-pi, pi), then nearest-point search.

    The fold uses a tolerance far below the grid spacing so sums that land
    mathematically on the +pi edge wrap despite float rounding.
    """
    tol = 1e-12
    while value < -np.pi - tol:
        value += 2 * np.pi
    while value >= np.pi - tol:
        value -= 2 * np.pi
    return int(np.argmin(np.abs(k_values - value))) + 1


def oracle_sum(grid, j1, j2):
    return wrap_search_index(grid.k_values[j1 - 1] + grid.k_values[j2 - 1], grid.k_values)


def oracle_diff(grid, j1, j2):
    return wrap_search_index(grid.k_values[j1 - 1] - grid.k_values[j2 - 1], grid.k_values)


def test_build_kgrid_n8_values():
    grid = build_kgrid(8)
    expected = np.pi * np.array([-1, -0.75, -0.5, -0.25, 0, 0.25, 0.5, 0.75])
    np.testing.assert_allclose(grid.k_values, expected, rtol=0, atol=0)


def test_build_kgrid_n2_values():
    grid = build_kgrid(2)
    np.testing.assert_array_equal(grid.k_values, [-np.pi, 0.0])


def test_build_kgrid_invariants():
    for n_k in (2, 4, 8, 16, 64):
        grid = build_kgrid(n_k)
        assert grid.k_values[n_k // 2] == 0.0
        assert np.all(np.diff(grid.k_values) > 0)
        assert grid.k_values[0] == -np.pi
        assert np.all(grid.k_values < np.pi)


@pytest.mark.parametrize("bad", [3, 0, -4, 1])
def test_build_kgrid_rejects_bad_counts(bad):
    with pytest.raises(ConfigError):
        build_kgrid(bad)


def test_index_of_sum_examples():
    assert index_of_sum(3, 5, 8) == 3       # k_5 = 0, identity
    assert index_of_sum(1, 1, 8) == 5
    assert index_of_sum(8, 8, 8) == 3


def test_index_of_diff_examples():
    assert index_of_diff(4, 4, 8) == 5      # zero difference
    assert index_of_diff(1, 8, 8) == 6
    assert index_of_diff(4, 1, 4) == 2


@pytest.mark.parametrize("j1,j2", [(0, 1), (1, 0), (9, 1), (1, 9)])
def test_index_ops_reject_out_of_range(j1, j2):
    with pytest.raises(ValueError):
        index_of_sum(j1, j2, 8)
    with pytest.raises(ValueError):
        index_of_diff(j1, j2, 8)


@pytest.mark.parametrize("n_k", [2, 4, 8, 16, 64])
def test_exhaustive_oracle_agreement(n_k):
    grid = build_kgrid(n_k)
    for j1 in range(1, n_k + 1):
        for j2 in range(1, n_k + 1):
            assert index_of_sum(j1, j2, n_k) == oracle_sum(grid, j1, j2)
            assert index_of_diff(j1, j2, n_k) == oracle_diff(grid, j1, j2)


@pytest.mark.parametrize("n_k", [2, 8, 16])
def test_sum_commutativity(n_k):
    for j1 in range(1, n_k + 1):
        for j2 in range(1, n_k + 1):
            assert index_of_sum(j1, j2, n_k) == index_of_sum(j2, j1, n_k)


def test_composition_matches_oracle_n8():
    # The k' + q - k composite used by the second self-energy term.
    grid = build_kgrid(8)
    for a in range(1, 9):
        for b in range(1, 9):
            for c in range(1, 9):
                composed = index_of_diff(index_of_sum(a, b, 8), c, 8)
                target = wrap_search_index(
                    grid.k_values[a - 1] + grid.k_values[b - 1] - grid.k_values[c - 1],
                    grid.k_values,
                )
                assert composed == target


def test_tables_n2_sum():
    tables = build_index_tables(build_kgrid(2))
    np.testing.assert_array_equal(tables.sum_table, [[2, 1], [1, 2]])


def test_tables_match_scalar_ops_n16():
    n_k = 16
    tables = build_index_tables(build_kgrid(n_k))
    for j1 in range(1, n_k + 1):
        for j2 in range(1, n_k + 1):
            assert tables.sum_table[j1 - 1, j2 - 1] == index_of_sum(j1, j2, n_k)
            assert tables.diff_table[j1 - 1, j2 - 1] == index_of_diff(j1, j2, n_k)


def test_diff_table_diagonal():
    for n_k in (2, 8, 16):
        tables = build_index_tables(build_kgrid(n_k))
        assert np.all(np.diag(tables.diff_table) == n_k // 2 + 1)


@pytest.mark.parametrize("n_k", [2, 4, 8, 64])
def test_zero_based_arrays_match_tables(n_k):
    tables = build_index_tables(build_kgrid(n_k))
    np.testing.assert_array_equal(sum_index_array(n_k), tables.sum_table - 1)
    np.testing.assert_array_equal(diff_index_array(n_k), tables.diff_table - 1)
