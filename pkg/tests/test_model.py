import numpy as np
import pytest

from kbesolve.errors import ConfigError
from kbesolve.kgrid import build_kgrid
from kbesolve.model import (
    ModelConfig,
    band_energies,
    build_h,
    hartree_fock,
    pulse_amplitude,
    u_values,
)


def test_flat_band_limit():
    grid = build_kgrid(8)
    eps_v, eps_c = band_energies(ModelConfig(band_gap=2.0, hopping=0.0), grid)
    np.testing.assert_allclose(eps_c, 1.0)
    np.testing.assert_allclose(eps_v, -1.0)


def test_band_energy_at_zero_momentum():
    grid = build_kgrid(8)
    _, eps_c = band_energies(ModelConfig(band_gap=3.0, hopping=1.7), grid)
    assert eps_c[4] == pytest.approx(1.5)  # k = 0 kills the hopping term


def test_band_energy_at_zone_edge():
    grid = build_kgrid(8)
    _, eps_c = band_energies(ModelConfig(band_gap=2.0, hopping=1.0), grid)
    assert eps_c[0] == pytest.approx(5.0)  # k = -pi


def test_band_tables_override():
    grid = build_kgrid(4)
    cfg = ModelConfig(eps_v_table=[-1, -2, -3, -4], eps_c_table=[1, 2, 3, 4])
    eps_v, eps_c = band_energies(cfg, grid)
    np.testing.assert_array_equal(eps_v, [-1, -2, -3, -4])
    np.testing.assert_array_equal(eps_c, [1, 2, 3, 4])
    with pytest.raises(ConfigError):
        band_energies(ModelConfig(eps_c_table=[1.0, 2.0]), grid)


def test_pulse_zero_intensity():
    cfg = ModelConfig(pulse_intensity=0.0)
    for t in (0.0, 0.3, 0.5):
        assert pulse_amplitude(t, cfg, 0.1) == 0.0


def test_pulse_height_at_center():
    cfg = ModelConfig(pulse_intensity=0.2, pulse_center=0.5)
    assert pulse_amplitude(0.5, cfg, 0.1) == pytest.approx(2.0)


def test_pulse_off_center():
    cfg = ModelConfig(pulse_intensity=0.2, pulse_center=0.5)
    assert pulse_amplitude(0.3, cfg, 0.1) == 0.0


def test_pulse_window_covers_one_step_midpoint():
    # Only the midpoint of the step ending on the pulse point sees the kick.
    dt = 0.02
    cfg = ModelConfig(pulse_intensity=0.2, pulse_center=0.5)
    p = 25
    assert pulse_amplitude((p - 0.5) * dt, cfg, dt) == pytest.approx(10.0)
    assert pulse_amplitude((p + 0.5) * dt, cfg, dt) == 0.0
    assert pulse_amplitude((p - 1.5) * dt, cfg, dt) == 0.0


def test_u_values_constant_and_table():
    np.testing.assert_array_equal(u_values(ModelConfig(u_protocol=0.5), 3), [0.5] * 4)
    np.testing.assert_array_equal(
        u_values(ModelConfig(u_protocol=[1, 2, 3, 4, 5]), 3), [1, 2, 3, 4]
    )
    with pytest.raises(ConfigError):
        u_values(ModelConfig(u_protocol=[1.0, 2.0]), 3)


def test_free_hamiltonian_is_diagonal():
    grid = build_kgrid(8)
    cfg = ModelConfig(u_protocol=0.0, pulse_intensity=0.0)
    h = build_h(grid, cfg, 0.37, None, 0.01)
    eps_v, eps_c = band_energies(cfg, grid)
    np.testing.assert_array_equal(h[:, 0, 1], 0)
    np.testing.assert_array_equal(h[:, 1, 0], 0)
    np.testing.assert_allclose(h[:, 0, 0], eps_v)
    np.testing.assert_allclose(h[:, 1, 1], eps_c)


def test_dipole_structure_at_pulse_point():
    grid = build_kgrid(4)
    d = 0.8 + 0.6j
    cfg = ModelConfig(pulse_intensity=0.2, pulse_center=0.5, dipole=d)
    h = build_h(grid, cfg, 0.5, None, 0.1)
    np.testing.assert_allclose(h[:, 1, 0], 2.0 * d)
    np.testing.assert_allclose(h[:, 0, 1], 2.0 * np.conj(d))


def test_interaction_shifts_conduction_band():
    grid = build_kgrid(4)
    cfg = ModelConfig(band_gap=2.0, hopping=0.0, u_protocol=0.3)
    h = build_h(grid, cfg, 0.0, None, 0.1)
    np.testing.assert_allclose(h[:, 1, 1], 1.0 - 0.3)
    np.testing.assert_allclose(h[:, 0, 0], -1.0)


def _random_density(n_k, seed):
    rng = np.random.default_rng(seed)
    raw = rng.standard_normal((n_k, 2, 2)) + 1j * rng.standard_normal((n_k, 2, 2))
    return 0.5 * (raw + np.conj(np.swapaxes(raw, 1, 2)))


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_build_h_hermitian_with_mean_field(seed):
    grid = build_kgrid(8)
    cfg = ModelConfig(u_protocol=0.7, pulse_intensity=0.1, hf_mode="on")
    rho = _random_density(8, seed)
    h = build_h(grid, cfg, 0.5, rho, 0.1)
    assert np.abs(h - np.conj(np.swapaxes(h, 1, 2))).max() <= 1e-12


def test_hartree_fock_couples_opposite_band():
    rho = np.zeros((4, 2, 2), dtype=complex)
    rho[:, 0, 0] = 1.0  # filled valence
    hf = hartree_fock(rho, 0.5, 4)
    np.testing.assert_allclose(hf[:, 1, 1], 0.5)
    np.testing.assert_allclose(hf[:, 0, 0], 0.0)


def test_model_config_validation():
    with pytest.raises(ConfigError):
        ModelConfig(hopping=-1.0).validate()
    with pytest.raises(ConfigError):
        ModelConfig(hf_mode="maybe").validate()
