"""Two-time stepping: predictor, self-consistent corrector, dual sweeps.

Each step advances the lesser component along its row (t-direction), the
greater component along its column (t'-direction), and the equal-time
diagonal.  The homogeneous part uses a unitary Cayley step

    Phi = (1 + i dt h/2)^(-1) (1 - i dt h/2)

built from the midpoint Hamiltonian; it is second order and
unconditionally stable for Hermitian h.  The collision term enters as a
trapezoidal average of the old- and new-frontier integrals inside a
fixed-point corrector loop that stops when the max-abs frontier change
drops below eps or the iteration cap is reached.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .collision import CollisionSlice, QuadratureRule, collision_frontier
from .engine import KernelTimers, ScratchPool, Schedule, WorkerPool, combine_shards
from .errors import CapacityError, ConfigError, PoisonedStateError
from .kgrid import KGrid, build_index_tables
from .model import ModelConfig, build_h, u_values
from .selfenergy import (
    SigmaHistory,
    evaluate_sigma_batched,
    init_sigma_history,
)
from .state import (
    DEFAULT_MEMORY_BUDGET,
    TwoTimeGF,
    anticommutation_drift,
    init_state,
    mirror_frontier,
    observables_at,
    state_bytes,
)


@dataclass
class StepConfig:
    dt: float
    n_steps: int
    eps: float = 1e-9
    max_iter: int = 6
    quadrature: str = "trapezoid"
    limit_mode: str = "as-printed"
    memory_budget: int = DEFAULT_MEMORY_BUDGET

    def validate(self) -> None:
        if self.dt <= 0:
            raise ConfigError(f"dt must be > 0, got {self.dt}")
        if self.n_steps < 0:
            raise ConfigError(f"n_steps must be >= 0, got {self.n_steps}")
        if self.eps <= 0:
            raise ConfigError(f"eps must be > 0, got {self.eps}")
        if self.max_iter < 1:
            raise ConfigError(f"max_iter must be >= 1, got {self.max_iter}")


@dataclass
class StepReport:
    step: int
    iterations: int
    residual: float
    converged: bool
    anticommutation_drift: float
    density: float
    residual_history: list[float] = field(default_factory=list)
    timings: dict[str, float] = field(default_factory=dict)


def cayley_propagator(h: np.ndarray, dt: float) -> np.ndarray:
    """Unitary one-step propagator for a stack of Hermitian 2x2 matrices."""
    a = 0.5j * dt * np.asarray(h)
    m00 = 1.0 + a[:, 0, 0]
    m01 = a[:, 0, 1]
    m10 = a[:, 1, 0]
    m11 = 1.0 + a[:, 1, 1]
    n00 = 1.0 - a[:, 0, 0]
    n01 = -a[:, 0, 1]
    n10 = -a[:, 1, 0]
    n11 = 1.0 - a[:, 1, 1]
    det = m00 * m11 - m01 * m10
    phi = np.empty_like(a)
    phi[:, 0, 0] = (m11 * n00 - m01 * n10) / det
    phi[:, 0, 1] = (m11 * n01 - m01 * n11) / det
    phi[:, 1, 0] = (m00 * n10 - m10 * n00) / det
    phi[:, 1, 1] = (m00 * n11 - m10 * n01) / det
    return phi


def band_lmul(phi: np.ndarray, g: np.ndarray) -> np.ndarray:
    """phi @ g on the band axes; g has a trailing batch axis."""
    out = np.empty_like(g)
    for j in range(2):
        for m in range(2):
            out[:, j, m] = phi[:, j, 0, None] * g[:, 0, m] + phi[:, j, 1, None] * g[:, 1, m]
    return out


def band_rmul(g: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """g @ phi on the band axes; g has a trailing batch axis."""
    out = np.empty_like(g)
    for j in range(2):
        for m in range(2):
            out[:, j, m] = g[:, j, 0] * phi[:, 0, m, None] + g[:, j, 1] * phi[:, 1, m, None]
    return out


def _dagger(phi: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(phi, 1, 2))


def _antiherm(x: np.ndarray) -> np.ndarray:
    return 0.5 * (x - np.conj(np.swapaxes(x, 1, 2)))


@dataclass
class FrontierUpdate:
    lesser_row: np.ndarray     # (nk, 2, 2, n) pairs (t_n, t'_l), l = 0..n-1
    greater_col: np.ndarray    # (nk, 2, 2, n) pairs (t_j, t'_n), j = 0..n-1
    lesser_diag: np.ndarray    # (nk, 2, 2)
    greater_diag: np.ndarray


def _greater_col_full(coll: CollisionSlice, n_old: int) -> np.ndarray:
    """I> at (t_j, t'_{n_old}) for j = 0..n_old; the diagonal comes from the row."""
    return np.concatenate(
        [coll.greater_col, coll.greater_row[..., n_old : n_old + 1]], axis=-1
    )


def predict_frontier(
    state: TwoTimeGF,
    phi: np.ndarray,
    coll_old: CollisionSlice,
    n: int,
    k_range: tuple[int, int] | None = None,
) -> FrontierUpdate:
    """Explicit half of the step: advance from the converged old frontier.

    The diagonal is seeded by the two-sided rotation of the previous
    diagonal; its collision correction happens in the corrector, once the
    new-frontier integrals exist.
    """
    lo, hi = (0, state.n_k_local) if k_range is None else k_range
    dt = state.dt
    ph = phi[lo:hi]
    row_src = state.lesser[lo:hi, :, :, n - 1, 0:n]
    new_row = band_lmul(ph, row_src - 1j * dt * coll_old.lesser_row[lo:hi])
    col_src = state.greater[lo:hi, :, :, 0:n, n - 1]
    i_col = _greater_col_full(coll_old, n - 1)[lo:hi]
    new_col = band_rmul(col_src + 1j * dt * i_col, _dagger(ph))
    dl = state.lesser[lo:hi, :, :, n - 1, n - 1][..., None]
    dg = state.greater[lo:hi, :, :, n - 1, n - 1][..., None]
    lesser_diag = band_rmul(band_lmul(ph, dl), _dagger(ph))[..., 0]
    greater_diag = band_rmul(band_lmul(ph, dg), _dagger(ph))[..., 0]
    return FrontierUpdate(new_row, new_col, lesser_diag, greater_diag)


def correct_frontier(
    state: TwoTimeGF,
    phi: np.ndarray,
    coll_old: CollisionSlice,
    coll_new: CollisionSlice,
    n: int,
    k_range: tuple[int, int] | None = None,
) -> FrontierUpdate:
    """One corrector pass with the averaged collision term.

    The diagonal applies the t-direction step to the mirror of the freshly
    updated row (lesser) / column (greater) entry next to it.
    """
    lo, hi = (0, state.n_k_local) if k_range is None else k_range
    dt = state.dt
    ph = phi[lo:hi]
    phd = _dagger(ph)

    i_row = 0.5 * (coll_old.lesser_row[lo:hi] + coll_new.lesser_row[lo:hi, :, :, 0:n])
    row_src = state.lesser[lo:hi, :, :, n - 1, 0:n]
    new_row = band_lmul(ph, row_src - 1j * dt * i_row)

    i_col = 0.5 * (
        _greater_col_full(coll_old, n - 1)[lo:hi] + coll_new.greater_col[lo:hi]
    )
    col_src = state.greater[lo:hi, :, :, 0:n, n - 1]
    new_col = band_rmul(col_src + 1j * dt * i_col, phd)

    mirror_l = -np.conj(np.swapaxes(new_row[..., n - 1], 1, 2))
    i_dl = 0.5 * (
        coll_new.lesser_col[lo:hi, :, :, n - 1] + coll_new.lesser_row[lo:hi, :, :, n]
    )
    lesser_diag = band_lmul(ph, (mirror_l - 1j * dt * i_dl)[..., None])[..., 0]

    mirror_g = -np.conj(np.swapaxes(new_col[..., n - 1], 1, 2))
    i_dg = 0.5 * (
        coll_new.greater_row[lo:hi, :, :, n - 1] + coll_new.greater_row[lo:hi, :, :, n]
    )
    greater_diag = band_rmul((mirror_g + 1j * dt * i_dg)[..., None], phd)[..., 0]
    return FrontierUpdate(new_row, new_col, lesser_diag, greater_diag)


def _write_frontier(state: TwoTimeGF, upd: FrontierUpdate, n: int) -> None:
    state.lesser[:, :, :, n, 0:n] = upd.lesser_row
    state.greater[:, :, :, 0:n, n] = upd.greater_col
    state.lesser[:, :, :, n, n] = _antiherm(upd.lesser_diag)
    state.greater[:, :, :, n, n] = _antiherm(upd.greater_diag)


def _frontier_residual(state: TwoTimeGF, upd: FrontierUpdate, n: int) -> float:
    res = float(np.abs(upd.lesser_row - state.lesser[:, :, :, n, 0:n]).max(initial=0.0))
    res = max(res, float(np.abs(upd.greater_col - state.greater[:, :, :, 0:n, n]).max(initial=0.0)))
    res = max(res, float(np.abs(_antiherm(upd.lesser_diag) - state.lesser[:, :, :, n, n]).max()))
    res = max(res, float(np.abs(_antiherm(upd.greater_diag) - state.greater[:, :, :, n, n]).max()))
    return res


def _frontier_finite(state: TwoTimeGF, n: int) -> bool:
    row_l = state.lesser[:, :, :, n, 0 : n + 1]
    col_g = state.greater[:, :, :, 0 : n + 1, n]
    return bool(np.isfinite(row_l).all() and np.isfinite(col_g).all())


class PropagationDriver:
    """Owns the state and sigma history and advances them step by step."""

    def __init__(
        self,
        grid: KGrid,
        model: ModelConfig,
        step_cfg: StepConfig,
        schedule: Schedule | None = None,
        pool: WorkerPool | None = None,
    ):
        model.validate()
        step_cfg.validate()
        self.grid = grid
        self.model = model
        self.cfg = step_cfg
        self.schedule = schedule if schedule is not None else Schedule()
        self.schedule.validate(grid.n_k)
        self.pool = pool
        self.rule = QuadratureRule(step_cfg.quadrature)
        self.scratch = ScratchPool()
        self.tables = (
            build_index_tables(grid) if self.schedule.index_mode == "lookup" else None
        )
        capacity = max(step_cfg.n_steps, 1)
        # G pair plus sigma pair: twice the state footprint.
        if 2 * state_bytes(grid.n_k, capacity) > step_cfg.memory_budget:
            raise CapacityError(
                f"run needs {2 * state_bytes(grid.n_k, capacity)} bytes "
                f"(n_k={grid.n_k}, n_steps={capacity}); budget is {step_cfg.memory_budget}"
            )
        self.state = init_state(
            grid, capacity, step_cfg.dt, memory_budget=step_cfg.memory_budget
        )
        self.sigma = init_sigma_history(grid.n_k, capacity)
        self.u_table = u_values(model, capacity)
        self.interactions_on = bool(np.any(self.u_table != 0.0))
        self._shards = self._shard_ranges()

    def _shard_ranges(self):
        my_nk = self.grid.n_k // self.schedule.n_shards
        return [(s * my_nk, (s + 1) * my_nk) for s in range(self.schedule.n_shards)]

    def _rho(self, i: int) -> np.ndarray:
        return -1j * self.state.lesser[:, :, :, i, i]

    def _propagator_at_midpoint(self, n: int, rho: np.ndarray) -> np.ndarray:
        t_mid = (n - 0.5) * self.cfg.dt
        h_mid = build_h(self.grid, self.model, t_mid, rho, self.cfg.dt, self.u_table)
        return cayley_propagator(h_mid, self.cfg.dt)

    def _eval_sigma(self, n: int) -> None:
        if not self.interactions_on:
            return
        evaluate_sigma_batched(
            self.state,
            self.sigma,
            n,
            self.grid,
            self.u_table,
            self.schedule,
            self.tables,
            self.pool,
            self.scratch,
        )

    def _eval_collision(self, n: int) -> CollisionSlice:
        return collision_frontier(
            self.state,
            self.sigma,
            n,
            self.rule,
            self.schedule,
            self.cfg.limit_mode,
            self.pool,
        )

    def _combined_update(self, builder, *args) -> FrontierUpdate:
        pieces = [builder(*args, k_range=rng) for rng in self._shards]
        offs = [rng[0] for rng in self._shards]
        return FrontierUpdate(
            lesser_row=combine_shards(list(zip(offs, [p.lesser_row for p in pieces]))),
            greater_col=combine_shards(list(zip(offs, [p.greater_col for p in pieces]))),
            lesser_diag=combine_shards(list(zip(offs, [p.lesser_diag for p in pieces]))),
            greater_diag=combine_shards(list(zip(offs, [p.greater_diag for p in pieces]))),
        )

    def step(self) -> StepReport:
        state = self.state
        n_old = state.frontier
        n = n_old + 1
        if n > state.n_steps:
            raise CapacityError(
                f"step {n} exceeds allocated capacity n_steps={state.n_steps}"
            )
        if not _frontier_finite(state, n_old):
            raise PoisonedStateError(
                f"non-finite values on the frontier at step {n_old}"
            )
        timers = KernelTimers()

        # Refresh the old-frontier self-energy from the converged state,
        # then its collision integrals; both stay fixed during correction.
        mirror_frontier(state, n_old)
        with timers.timing("sigma"):
            self._eval_sigma(n_old)
        with timers.timing("collision"):
            coll_old = self._eval_collision(n_old)

        with timers.timing("update"):
            rho_prev = self._rho(n_old)
            phi = self._propagator_at_midpoint(n, rho_prev)
            upd = self._combined_update(predict_frontier, state, phi, coll_old, n)
            _write_frontier(state, upd, n)

        residual_history: list[float] = []
        iterations = 0
        converged = False
        for _ in range(self.cfg.max_iter):
            iterations += 1
            mirror_frontier(state, n)
            with timers.timing("sigma"):
                self._eval_sigma(n)
            with timers.timing("collision"):
                coll_new = self._eval_collision(n)
            with timers.timing("update"):
                if self.model.hf_mode == "on":
                    rho_mid = 0.5 * (rho_prev + self._rho(n))
                    phi = self._propagator_at_midpoint(n, rho_mid)
                upd = self._combined_update(
                    correct_frontier, state, phi, coll_old, coll_new, n
                )
                residual = _frontier_residual(state, upd, n)
                _write_frontier(state, upd, n)
            residual_history.append(residual)
            if residual <= self.cfg.eps:
                converged = True
                break

        mirror_frontier(state, n)
        state.frontier = n
        if not _frontier_finite(state, n):
            raise PoisonedStateError(f"non-finite values produced at step {n}")
        obs = observables_at(state, n)
        return StepReport(
            step=n,
            iterations=iterations,
            residual=residual_history[-1],
            converged=converged,
            anticommutation_drift=anticommutation_drift(state, n),
            density=obs.density,
            residual_history=residual_history,
            timings=dict(timers.seconds),
        )

    def run(self, observer=None) -> list[StepReport]:
        """Advance n_steps steps; the observer sees (state, report) after each."""
        reports = []
        for _ in range(self.cfg.n_steps):
            rep = self.step()
            reports.append(rep)
            if observer is not None:
                observer(self.state, rep)
        return reports


def run(
    grid: KGrid,
    model: ModelConfig,
    step_cfg: StepConfig,
    schedule: Schedule | None = None,
    pool: WorkerPool | None = None,
    observer=None,
) -> tuple[TwoTimeGF, list[StepReport]]:
    """Propagate a fresh state for step_cfg.n_steps steps."""
    driver = PropagationDriver(grid, model, step_cfg, schedule, pool)
    reports = driver.run(observer=observer)
    return driver.state, reports
