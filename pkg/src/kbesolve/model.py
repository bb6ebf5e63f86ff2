"""Two-band model: band energies, interaction protocol, pulse, and h(k; t).

Band 1 is the valence band, band 2 the conduction band.  The default
dispersion is a periodic 1D hopping band,

    eps_c(k) = band_gap/2 + 2*hopping*(1 - cos k),    eps_v(k) = -eps_c(k),

overridable per band by tabulated values.  The external field is a delta
pulse discretized as a single-grid-point kick of height I/dt, so the
integrated impulse is exactly I.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .kgrid import KGrid

# Guard for snapping t/dt to the nearest grid index; larger than the
# accumulated float error of n*dt but far below half a step.
_GRID_SNAP = 1e-9


@dataclass
class ModelConfig:
    band_gap: float = 2.0
    hopping: float = 1.0
    u_protocol: float | np.ndarray = 0.0
    pulse_intensity: float = 0.0
    pulse_center: float = 0.5
    dipole: complex = 1.0 + 0.0j
    hf_mode: str = "off"
    eps_v_table: np.ndarray | None = None
    eps_c_table: np.ndarray | None = None

    def validate(self) -> None:
        if self.hopping < 0:
            raise ConfigError(f"hopping must be >= 0, got {self.hopping}")
        if self.hf_mode not in ("off", "on"):
            raise ConfigError(f"hf_mode must be 'off' or 'on', got {self.hf_mode!r}")


def u_values(config: ModelConfig, n_steps: int) -> np.ndarray:
    """Interaction protocol on the time grid, one value per grid point."""
    u = config.u_protocol
    if np.isscalar(u):
        return np.full(n_steps + 1, float(u))
    u = np.asarray(u, dtype=float)
    if u.size < n_steps + 1:
        raise ConfigError(
            f"u_protocol has {u.size} entries, need >= {n_steps + 1}"
        )
    return u[: n_steps + 1].copy()


def u_at(u_table: np.ndarray, t: float, dt: float) -> float:
    """Protocol value at time t; linear interpolation between grid points."""
    x = t / dt
    j0 = int(np.floor(x + _GRID_SNAP))
    j0 = min(max(j0, 0), len(u_table) - 1)
    j1 = min(j0 + 1, len(u_table) - 1)
    w = x - j0
    if w <= _GRID_SNAP:
        return float(u_table[j0])
    return float((1.0 - w) * u_table[j0] + w * u_table[j1])


def band_energies(config: ModelConfig, grid: KGrid) -> tuple[np.ndarray, np.ndarray]:
    """Valence and conduction dispersions over the grid."""
    if config.eps_c_table is not None:
        eps_c = np.asarray(config.eps_c_table, dtype=float)
        if eps_c.size != grid.n_k:
            raise ConfigError(f"eps_c_table has {eps_c.size} entries, need {grid.n_k}")
    else:
        eps_c = 0.5 * config.band_gap + 2.0 * config.hopping * (1.0 - np.cos(grid.k_values))
    if config.eps_v_table is not None:
        eps_v = np.asarray(config.eps_v_table, dtype=float)
        if eps_v.size != grid.n_k:
            raise ConfigError(f"eps_v_table has {eps_v.size} entries, need {grid.n_k}")
    else:
        eps_v = -eps_c
    return eps_v, eps_c


def nearest_grid_index(t: float, dt: float) -> int:
    # round half up, with a guard so step midpoints resolve deterministically
    return int(np.floor(t / dt + 0.5 + _GRID_SNAP))


def pulse_amplitude(t: float, config: ModelConfig, dt: float) -> float:
    """Discretized delta pulse: I/dt on the grid point nearest the center.

    The support is the half-open window of width dt around the pulse grid
    point, so exactly one step midpoint sees the kick.
    """
    if config.pulse_intensity == 0.0:
        return 0.0
    if nearest_grid_index(t, dt) == nearest_grid_index(config.pulse_center, dt):
        return config.pulse_intensity / dt
    return 0.0


def hartree_fock(rho: np.ndarray, u: float, n_k: int) -> np.ndarray:
    """Mean-field term: opposite-band Hartree shift minus interband exchange.

    rho is the equal-time density matrix per k, shape (n_k, 2, 2),
    Hermitian.  The k-averaged occupation of each band shifts the other
    band's level; the k-averaged interband coherence enters with a minus
    sign.  Output is Hermitian whenever rho is.
    """
    hf = np.zeros((n_k, 2, 2), dtype=complex)
    mean = rho.mean(axis=0)
    hf[:, 0, 0] = u * mean[1, 1].real
    hf[:, 1, 1] = u * mean[0, 0].real
    hf[:, 0, 1] = -u * mean[0, 1]
    hf[:, 1, 0] = -u * mean[1, 0]
    return hf


def build_h(
    grid: KGrid,
    config: ModelConfig,
    t: float,
    rho: np.ndarray | None,
    dt: float,
    u_table: np.ndarray | None = None,
) -> np.ndarray:
    """Single-particle Hamiltonian h(k; t) as an (n_k, 2, 2) Hermitian stack.

    Diagonal: band energies, with the interaction protocol pulling the
    conduction band down by U(t).  Off-diagonal: dipole coupling to the
    discretized pulse.  With ``hf_mode == "on"`` the mean-field term built
    from rho is added.
    """
    if u_table is None:
        u_table = np.atleast_1d(np.asarray(config.u_protocol, dtype=float))
    u = u_at(u_table, t, dt)
    eps_v, eps_c = band_energies(config, grid)
    h = np.zeros((grid.n_k, 2, 2), dtype=complex)
    h[:, 0, 0] = eps_v
    h[:, 1, 1] = eps_c - u
    amp = pulse_amplitude(t, config, dt)
    if amp != 0.0:
        d = complex(config.dipole)
        h[:, 0, 1] += amp * np.conj(d)
        h[:, 1, 0] += amp * d
    if config.hf_mode == "on" and rho is not None:
        h += hartree_fock(rho, u, grid.n_k)
    return h
