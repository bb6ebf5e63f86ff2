"""Two-time storage of the lesser and greater Green's functions.

Both components are kept as full two-time tensors indexed
(k, band, band, t, t'); after every step the redundant triangle is filled
from the freshly advanced one through the conjugate symmetry

    G(t', t) = -[G(t, t')]^dagger   (dagger acting on the band indices)

so kernels can read either time ordering at any computed grid point.

The ground state is the zero-temperature filled valence band:
G<(0,0) = i * diag(1, 0), G>(0,0) = -i * diag(0, 1) per k-point.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import CapacityError
from .kgrid import KGrid

DEFAULT_MEMORY_BUDGET = 2 * 1024**3  # bytes

_COMPLEX_BYTES = 16


@dataclass
class TwoTimeGF:
    """Lesser/greater two-time tensors for a (possibly local) k-range."""

    n_k_local: int
    k_offset: int
    n_steps: int
    dt: float
    lesser: np.ndarray
    greater: np.ndarray
    frontier: int = 0


@dataclass
class Observables:
    """Per-k occupations and the k-averaged total density at one time."""

    n_v: np.ndarray
    n_c: np.ndarray
    density: float


def state_bytes(n_k: int, n_steps: int) -> int:
    """Memory footprint of the two G tensors."""
    return 2 * n_k * 4 * (n_steps + 1) ** 2 * _COMPLEX_BYTES


def init_state(
    grid: KGrid,
    n_steps: int,
    dt: float,
    memory_budget: int = DEFAULT_MEMORY_BUDGET,
    n_k_local: int | None = None,
    k_offset: int = 0,
) -> TwoTimeGF:
    """Allocate the two-time state and set the ground-state entry at (0, 0)."""
    if n_steps < 1:
        raise CapacityError(f"n_steps must be >= 1, got {n_steps}")
    if dt <= 0:
        raise CapacityError(f"dt must be > 0, got {dt}")
    nk = grid.n_k if n_k_local is None else n_k_local
    needed = state_bytes(nk, n_steps)
    if needed > memory_budget:
        raise CapacityError(
            f"state needs {needed} bytes for n_k={nk}, n_steps={n_steps}; "
            f"budget is {memory_budget}"
        )
    shape = (nk, 2, 2, n_steps + 1, n_steps + 1)
    out = TwoTimeGF(
        n_k_local=nk,
        k_offset=k_offset,
        n_steps=n_steps,
        dt=dt,
        lesser=np.zeros(shape, dtype=complex),
        greater=np.zeros(shape, dtype=complex),
    )
    out.lesser[:, 0, 0, 0, 0] = 1.0j
    out.greater[:, 1, 1, 0, 0] = -1.0j
    return out


def band_dagger(g: np.ndarray) -> np.ndarray:
    """Conjugate transpose on the band axes (axes 1 and 2)."""
    return np.conj(np.swapaxes(g, 1, 2))


def mirror_frontier(state: TwoTimeGF, n: int | None = None) -> None:
    """Populate the redundant triangle of the frontier at step n.

    The lesser component is advanced along its row (t = t_n), so the
    column entries are derived; the greater component is advanced along
    its column (t' = t_n), so the row entries are derived.  Idempotent.
    """
    if n is None:
        n = state.frontier
    if n == 0:
        return
    row_l = state.lesser[:, :, :, n, 0:n]        # (k, j, m, l)
    state.lesser[:, :, :, 0:n, n] = -np.conj(np.swapaxes(row_l, 1, 2))
    col_g = state.greater[:, :, :, 0:n, n]
    state.greater[:, :, :, n, 0:n] = -np.conj(np.swapaxes(col_g, 1, 2))


def symmetry_residual(state: TwoTimeGF, n: int | None = None) -> float:
    """Max deviation from conjugate symmetry on the frontier slices."""
    if n is None:
        n = state.frontier
    res = 0.0
    for g in (state.lesser, state.greater):
        row = g[:, :, :, n, 0 : n + 1]
        col = g[:, :, :, 0 : n + 1, n]
        diff = col + np.conj(np.swapaxes(row, 1, 2))
        res = max(res, float(np.abs(diff).max()))
    return res


def observables_at(state: TwoTimeGF, i: int) -> Observables:
    """Occupations n_b(k, t_i) = Im G<_bb(k; t_i, t_i) and total density."""
    n_v = np.imag(state.lesser[:, 0, 0, i, i]).copy()
    n_c = np.imag(state.lesser[:, 1, 1, i, i]).copy()
    density = float(np.mean(n_v + n_c))
    return Observables(n_v=n_v, n_c=n_c, density=density)


def anticommutation_drift(state: TwoTimeGF, i: int) -> float:
    """Max-abs deviation of G>(t,t) - G<(t,t) from -i * Id at t_i."""
    diff = state.greater[:, :, :, i, i] - state.lesser[:, :, :, i, i]
    diff = diff + 1.0j * np.eye(2)[None, :, :]
    return float(np.abs(diff).max())


def scatter(state: TwoTimeGF, n_shards: int) -> list[TwoTimeGF]:
    """Split the state into contiguous per-shard k-ranges."""
    if state.n_k_local % n_shards != 0:
        raise ValueError(f"{n_shards} shards do not divide n_k={state.n_k_local}")
    my_nk = state.n_k_local // n_shards
    shards = []
    for s in range(n_shards):
        lo, hi = s * my_nk, (s + 1) * my_nk
        shards.append(
            TwoTimeGF(
                n_k_local=my_nk,
                k_offset=state.k_offset + lo,
                n_steps=state.n_steps,
                dt=state.dt,
                lesser=state.lesser[lo:hi].copy(),
                greater=state.greater[lo:hi].copy(),
                frontier=state.frontier,
            )
        )
    return shards


def gather(shards: list[TwoTimeGF]) -> TwoTimeGF:
    """Concatenate per-shard states into the global one, ordered by k."""
    ordered = sorted(shards, key=lambda s: s.k_offset)
    base = ordered[0]
    expect = base.k_offset
    for sh in ordered:
        if sh.k_offset != expect:
            raise ValueError(f"shards not contiguous at k-offset {sh.k_offset}")
        if sh.n_steps != base.n_steps or sh.dt != base.dt or sh.frontier != base.frontier:
            raise ValueError("shards disagree on grid or frontier metadata")
        expect = sh.k_offset + sh.n_k_local
    return TwoTimeGF(
        n_k_local=expect - base.k_offset,
        k_offset=base.k_offset,
        n_steps=base.n_steps,
        dt=base.dt,
        lesser=np.concatenate([s.lesser for s in ordered], axis=0),
        greater=np.concatenate([s.greater for s in ordered], axis=0),
        frontier=base.frontier,
    )
