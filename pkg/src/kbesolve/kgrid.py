"""Uniform Brillouin-zone sampling and modular k-index arithmetic.

The 1D zone [-pi, pi) is sampled at an even number of points,

    k_j = -pi + 2*(j - 1)*pi / n_k,   j = 1..n_k,

so that sums and differences of grid momenta fold back onto the grid
under 2*pi periodicity.  Indices are one-based at the domain level; the
zero-based variants used by array kernels live behind
``sum_index_array`` / ``diff_index_array``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class KGrid:
    """Uniform momentum grid with an even point count."""

    n_k: int
    k_values: np.ndarray


def build_kgrid(n_k: int) -> KGrid:
    """Build the uniform grid; rejects odd or non-positive point counts."""
    if not isinstance(n_k, (int, np.integer)):
        raise ConfigError(f"n_k must be an integer, got {n_k!r}")
    if n_k < 2:
        raise ConfigError(f"n_k must be >= 2, got {n_k}")
    if n_k % 2 != 0:
        raise ConfigError(f"n_k must be even, got {n_k}")
    j = np.arange(1, n_k + 1)
    return KGrid(n_k=int(n_k), k_values=-np.pi + 2.0 * (j - 1) * np.pi / n_k)


def _check_index(j: int, n_k: int) -> None:
    if not 1 <= j <= n_k:
        raise ValueError(f"k-index {j} outside 1..{n_k}")


def index_of_sum(j1: int, j2: int, n_k: int) -> int:
    """One-based index of k_{j1} + k_{j2} folded back into [-pi, pi).

    Closed three-case form, split on where the raw sum lands relative to
    the zone edges; never consults a lookup table.
    """
    _check_index(j1, n_k)
    _check_index(j2, n_k)
    half = n_k // 2
    s = j1 + j2
    if s <= half + 1:           # raw sum below -pi, fold up by 2*pi
        return s + half - 1
    if s <= 3 * half + 1:       # already inside [-pi, pi)
        return s - half - 1
    return s - 3 * half - 1     # raw sum at or above pi, fold down


def index_of_diff(j1: int, j2: int, n_k: int) -> int:
    """One-based index of k_{j1} - k_{j2} folded back into [-pi, pi).

    Base form j1 - j2 + n_k/2 + 1, shifted by +-n_k when the raw
    difference leaves the zone.
    """
    _check_index(j1, n_k)
    _check_index(j2, n_k)
    half = n_k // 2
    d = j1 - j2
    if d < -half:               # raw difference below -pi
        return d + half + 1 + n_k
    if d < half:                # inside [-pi, pi)
        return d + half + 1
    return d + half + 1 - n_k   # at or above pi


@dataclass(frozen=True)
class IndexTables:
    """Dense one-based tables of pairwise sum/difference indices.

    ``sum_table[j1 - 1, j2 - 1] == index_of_sum(j1, j2, n_k)`` and
    likewise for differences.  Only consulted when a schedule selects
    lookup mode; the closed forms are the default.
    """

    sum_table: np.ndarray
    diff_table: np.ndarray


def build_index_tables(grid: KGrid) -> IndexTables:
    n_k = grid.n_k
    return IndexTables(
        sum_table=sum_index_array(n_k) + 1,
        diff_table=diff_index_array(n_k) + 1,
    )


def sum_index_array(n_k: int) -> np.ndarray:
    """Zero-based (j1, j2) -> sum-index matrix, computed on the fly."""
    a = np.arange(n_k)
    return (a[:, None] + a[None, :] - n_k // 2) % n_k


def diff_index_array(n_k: int) -> np.ndarray:
    """Zero-based (j1, j2) -> difference-index matrix."""
    a = np.arange(n_k)
    return (a[:, None] - a[None, :] + n_k // 2) % n_k
