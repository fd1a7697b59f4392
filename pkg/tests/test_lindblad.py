import numpy as np
import pytest

from tcqb.bethe import SectorSpec
from tcqb.lindblad import (
    DensityMatrix,
    DimensionMismatch,
    OpenSystemConfig,
    StepUnstable,
    TruncationLeak,
    build_operators,
    evolve,
    lindblad_rhs,
)
from tcqb.oracle import oracle_F


def small_config(**kw):
    defaults = dict(n_atoms=2, n_max=7, kappa=0.0, gamma_phi=0.0, dt=1e-3, t_end=1.0)
    defaults.update(kw)
    return OpenSystemConfig(**defaults)


def random_hermitian(rng, dim):
    a = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    rho = a @ a.conj().T
    return rho / rho.trace()


class TestOperators:
    def test_bosonic_commutator_below_truncation(self):
        ops = build_operators(2, 7)
        comm = ops["a"] @ ops["adag"] - ops["adag"] @ ops["a"]
        block = slice(0, 7 * 3)  # photon levels below n_max
        assert np.allclose(comm[block, block], np.eye(8 * 3)[block, block])

    def test_spin_commutator_exact(self):
        ops = build_operators(3, 4)
        comm = ops["jplus"] @ ops["jminus"] - ops["jminus"] @ ops["jplus"]
        assert np.allclose(comm, 2 * ops["jz"], atol=1e-13)

    def test_ground_spin_projection(self):
        n_atoms = 5
        ops = build_operators(n_atoms, 3)
        ground = np.zeros(4 * (n_atoms + 1))
        ground[0] = 1.0  # n = 0, q = 0
        assert ground @ ops["jz"] @ ground == pytest.approx(-n_atoms / 2)

    def test_excitation_number_diagonal(self):
        ops = build_operators(2, 5)
        m = ops["m"]
        assert np.allclose(m, np.diag(np.diag(m)))


class TestRhs:
    def test_eigenprojector_is_stationary_without_dissipation(self):
        config = small_config()
        ops = build_operators(config.n_atoms, config.n_max)
        h = ops["adag"] @ ops["jminus"] + ops["jplus"] @ ops["a"]
        evals, evecs = np.linalg.eigh(h)
        proj = np.outer(evecs[:, 3], evecs[:, 3]).astype(complex)
        assert np.max(np.abs(lindblad_rhs(proj, config))) < 1e-12

    def test_tracefree_for_random_hermitian_state(self):
        config = small_config(kappa=0.7, gamma_phi=0.4)
        rng = np.random.default_rng(2)
        for _ in range(5):
            rho = random_hermitian(rng, config.dimension)
            assert abs(lindblad_rhs(rho, config).trace()) < 1e-12

    def test_excitation_number_conserved_without_decay(self):
        config = small_config(gamma_phi=1.3)
        ops = build_operators(config.n_atoms, config.n_max)
        rng = np.random.default_rng(3)
        for _ in range(5):
            rho = random_hermitian(rng, config.dimension)
            rate = np.trace(ops["m"] @ lindblad_rhs(rho, config))
            assert abs(rate) < 1e-12

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            lindblad_rhs(np.eye(4, dtype=complex), small_config())


class TestDensityMatrix:
    def test_fock_initializer_places_population(self):
        config = small_config()
        rho = DensityMatrix.fock(config, 2)
        idx = 2 * (config.n_atoms + 1)
        assert rho.matrix[idx, idx] == 1.0
        assert rho.matrix.trace() == pytest.approx(1.0)
        rho.validate()

    def test_fock_requires_headroom(self):
        with pytest.raises(ValueError):
            DensityMatrix.fock(small_config(), 5)  # n_max = 7 < 5 + 5

    def test_wrong_shape_rejected(self):
        with pytest.raises(DimensionMismatch):
            DensityMatrix(matrix=np.eye(5, dtype=complex), n_atoms=2, n_max=7)


class TestEvolve:
    def test_closed_system_matches_sector_dynamics(self):
        config = small_config(t_end=2.0)
        ts = evolve(DensityMatrix.fock(config, 2), config)
        expected = oracle_F(SectorSpec(2, 2), ts.t)
        assert np.max(np.abs(ts.energy - expected)) < 1e-4
        assert np.max(np.abs(ts.trace - 1.0)) < 1e-9
        assert ts.herm_drift < 1e-10
        assert np.max(np.abs(ts.m_expect - ts.m_expect[0])) < 1e-6
        assert ts.min_eig.min() > -1e-6

    def test_dephasing_reaches_diagonal_ensemble(self):
        # With kappa = 0 the sector block relaxes to its maximally mixed
        # state; for N = M = 2 the levels hold 0, 1, 2 quanta, so the
        # steady energy is (0 + 1 + 2)/3 = 1.
        config = small_config(gamma_phi=2.0, t_end=8.0)
        ts = evolve(DensityMatrix.fock(config, 2), config)
        assert np.max(np.abs(ts.m_expect - ts.m_expect[0])) < 1e-6
        assert abs(ts.energy[-1] - 1.0) < 0.05
        assert np.ptp(ts.energy[-10:]) < 1e-3

    def test_strong_decay_drains_the_battery(self):
        config = small_config(kappa=5.0, t_end=3.0)
        ts = evolve(DensityMatrix.fock(config, 2), config)
        assert ts.energy[-1] < 0.1 * ts.energy.max()

    def test_truncation_leak_detected(self):
        config = small_config()
        dim = config.dimension
        rho = np.zeros((dim, dim), dtype=complex)
        idx = config.n_max * (config.n_atoms + 1)  # population at the top level
        rho[idx, idx] = 1.0
        with pytest.raises(TruncationLeak):
            evolve(rho, config)

    def test_unstable_step_detected(self):
        config = small_config(dt=1.0, t_end=40.0)
        with pytest.raises(StepUnstable):
            evolve(DensityMatrix.fock(config, 2), config)

    def test_power_is_energy_over_time(self):
        config = small_config(t_end=0.5)
        ts = evolve(DensityMatrix.fock(config, 2), config)
        assert ts.power[0] == 0.0
        assert np.allclose(ts.power[1:], ts.energy[1:] / ts.t[1:])

    def test_config_basis_must_match_state(self):
        config = small_config()
        other = small_config(n_max=9)
        with pytest.raises(DimensionMismatch):
            evolve(DensityMatrix.fock(other, 2), config)


class TestConfig:
    def test_negative_rates_rejected(self):
        with pytest.raises(ValueError):
            small_config(kappa=-0.1)

    def test_omega_c_units_rescale(self):
        config = OpenSystemConfig(
            n_atoms=2, n_max=7, kappa=0.4, gamma_phi=0.2,
            rate_units="omega_c", g_in_omega_c=0.1,
        )
        assert config.kappa == pytest.approx(4.0)
        assert config.gamma_phi == pytest.approx(2.0)
        assert config.rate_units == "g"
