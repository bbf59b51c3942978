import numpy as np
import pytest
from numpy.testing import assert_allclose

from spintomo import (
    DecayChannels,
    Hamiltonian,
    PhysicalityError,
    coherent_spin_state,
    compensated_hamiltonian,
    covariance,
    evolve_lindblad,
    evolve_unitary,
    expectation,
    light_shift_hamiltonian,
    lindblad_trajectory,
    oat_hamiltonian,
    spin_operators,
    tact_hamiltonian,
    zeeman_hamiltonian,
)
from conftest import random_density_matrix

HALF_STEPS = [1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0]


class TestOneAxisTwisting:
    def test_half_spin_is_trivial(self):
        ops = spin_operators(0.5)
        h = oat_hamiltonian(ops, 0.7)
        assert_allclose(h.matrix, 0.7 / 4.0 * np.eye(2), atol=1e-15)

    def test_f4_spectrum(self, ops4):
        h = oat_hamiltonian(ops4, 1.0)
        assert_allclose(h.matrix, np.diag([16, 9, 4, 1, 0, 1, 4, 9, 16]).astype(float), atol=1e-14)

    def test_var_fz_conserved(self, ops4, css_x4):
        h = oat_hamiltonian(ops4, 1.0)
        for t in (0.05, 0.3, 1.2):
            evolved = evolve_unitary(css_x4, h, t)
            assert abs(covariance(evolved, ops4.fz, ops4.fz) - 2.0) <= 1e-10


class TestTwoAxisCountertwisting:
    @pytest.mark.parametrize("f", HALF_STEPS)
    def test_traceless(self, f):
        h = tact_hamiltonian(spin_operators(f), 1.3)
        assert abs(np.trace(h.matrix)) <= 1e-12

    @pytest.mark.parametrize("f", HALF_STEPS)
    def test_spectrum_symmetric_about_zero(self, f):
        # rotating by pi/2 about x maps H -> -H, so the spectrum is symmetric
        eigs = np.linalg.eigvalsh(tact_hamiltonian(spin_operators(f), 1.0).matrix)
        assert_allclose(eigs, -eigs[::-1], atol=1e-12)

    def test_short_time_squeezes(self, ops4, css_x4):
        from spintomo import squeezing_report

        h = tact_hamiltonian(ops4, 1.0)
        evolved = evolve_unitary(css_x4, h, 0.05)
        report = squeezing_report(evolved)
        assert report.min_variance < 2.0
        # brute-force angle scan agrees with the closed-form optimum
        angles = np.linspace(-np.pi / 2, np.pi / 2, 10001)
        cov = report.cov
        scanned = (
            cov[0, 0] * np.cos(angles) ** 2
            + cov[1, 1] * np.sin(angles) ** 2
            + 2.0 * cov[0, 1] * np.sin(angles) * np.cos(angles)
        )
        assert report.min_variance <= scanned.min() + 1e-12


class TestLightShift:
    def test_scalar_shift_changes_nothing(self, ops4):
        rng = np.random.default_rng(21)
        state = random_density_matrix(9, rng)
        h = light_shift_hamiltonian(ops4, a0=3.7, a2=0.0)
        evolved = evolve_unitary(state, h, 2.5)
        assert np.abs(evolved.rho - state.rho).max() <= 1e-12

    def test_pure_tensor_matches_oat(self, ops4):
        h_light = light_shift_hamiltonian(ops4, a0=0.0, a2=-4.0)
        h_oat = oat_hamiltonian(ops4, 1.0)
        assert np.abs(h_light.matrix - h_oat.matrix).max() <= 1e-14

    def test_eigenvalues(self, ops4):
        a0, a2 = 1.3, -0.8
        h = light_shift_hamiltonian(ops4, a0, a2)
        m = ops4.f.m_values
        expected = np.sort(-0.25 * (a0 + a2 * m**2))
        assert_allclose(np.linalg.eigvalsh(h.matrix), expected, atol=1e-12)


class TestZeeman:
    def test_pure_larmor_keeps_css_x(self, ops4, css_x4):
        h = zeeman_hamiltonian(ops4, omega_l=5.0, beta=0.0)
        evolved = evolve_unitary(css_x4, h, 1.7)
        assert np.abs(evolved.rho - css_x4.rho).max() <= 1e-10

    def test_css_z_precesses(self, ops4):
        omega = 5.0
        h = zeeman_hamiltonian(ops4, omega_l=omega, beta=0.0)
        css_z = coherent_spin_state(4, 0.0, 0.0)
        for t in (0.1, 0.75):
            evolved = evolve_unitary(css_z, h, t)
            assert abs(expectation(evolved, ops4.fz) - 4.0 * np.cos(omega * t)) <= 1e-10

    def test_eigenvalues_in_x_basis(self, ops4):
        omega, beta = 2.2, 0.4
        h = zeeman_hamiltonian(ops4, omega, beta)
        m = ops4.f.m_values
        expected = np.sort(omega * m + beta * m**2)
        assert_allclose(np.linalg.eigvalsh(h.matrix), expected, atol=1e-12)

    def test_larmor_period_at_322_kHz(self, ops4):
        # 2*pi*322 rad/ms precession returns <Fz> after 1/322 ms
        omega = 2.0 * np.pi * 322.0
        h = zeeman_hamiltonian(ops4, omega, 0.0)
        css_z = coherent_spin_state(4, 0.0, 0.0)
        period = 1.0 / 322.0
        evolved = evolve_unitary(css_z, h, period)
        assert abs(expectation(evolved, ops4.fz) - 4.0) <= 1e-8
        half = evolve_unitary(css_z, h, period / 2.0)
        assert abs(expectation(half, ops4.fz) + 4.0) <= 1e-8


class TestCompensation:
    @pytest.mark.parametrize("f", [1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0])
    def test_operator_identity(self, f):
        ops = spin_operators(f)
        beta, a0 = 0.37, 1.13
        h = compensated_hamiltonian(ops, beta, a0=a0)
        twisting = (beta / 2.0) * (ops.fz @ ops.fz - ops.fy @ ops.fy)
        resid = h.matrix - h.scalar_offset * np.eye(ops.dimension) - twisting
        assert np.abs(resid).max() <= 1e-12

    def test_zero_beta_means_no_twisting(self, ops4):
        h = compensated_hamiltonian(ops4, 0.0, a0=2.0)
        assert np.abs(h.matrix - h.scalar_offset * np.eye(9)).max() <= 1e-13

    def test_dynamics_match_tact_at_half_rate(self, ops4, css_x4):
        beta = 1.0
        h_comp = compensated_hamiltonian(ops4, beta)
        h_tact = tact_hamiltonian(ops4, beta / 2.0)
        for t in (0.1, 0.2, 0.35):
            a = evolve_unitary(css_x4, h_comp, t)
            b = evolve_unitary(css_x4, h_tact, t)
            va = covariance(a, ops4.fz, ops4.fz)
            vb = covariance(b, ops4.fz, ops4.fz)
            assert abs(va - vb) <= 1e-10

    def test_residual_knob_adds_fx2(self, ops4):
        beta, delta = 0.4, 0.05
        h0 = compensated_hamiltonian(ops4, beta)
        h1 = compensated_hamiltonian(ops4, beta, residual=delta)
        fx2 = np.asarray(ops4.fx) @ np.asarray(ops4.fx)
        assert np.abs((h1.matrix - h0.matrix) - delta * fx2).max() <= 1e-13


class TestUnitaryEvolution:
    def test_zero_time_is_identity(self, ops4, css_x4):
        h = tact_hamiltonian(ops4, 1.0)
        evolved = evolve_unitary(css_x4, h, 0.0)
        assert np.abs(evolved.rho - css_x4.rho).max() <= 1e-14

    def test_group_property(self, ops4):
        rng = np.random.default_rng(31)
        state = random_density_matrix(9, rng)
        h = tact_hamiltonian(ops4, 0.7)
        a = evolve_unitary(evolve_unitary(state, h, 0.3), h, 0.9)
        b = evolve_unitary(state, h, 1.2)
        assert np.abs(a.rho - b.rho).max() <= 1e-10

    def test_oat_revival_at_pi(self, ops4, css_x4):
        h = oat_hamiltonian(ops4, 1.0)
        evolved = evolve_unitary(css_x4, h, np.pi)
        assert abs(abs(expectation(evolved, ops4.fx)) - 4.0) <= 1e-10

    def test_spectrum_preserved(self, ops4):
        rng = np.random.default_rng(41)
        state = random_density_matrix(9, rng)
        h = tact_hamiltonian(ops4, 1.0)
        evolved = evolve_unitary(state, h, 0.8)
        assert_allclose(
            np.linalg.eigvalsh(evolved.rho), np.linalg.eigvalsh(state.rho), atol=1e-10
        )

    def test_dimension_mismatch(self, css_x4):
        h = tact_hamiltonian(spin_operators(1), 1.0)
        with pytest.raises(ValueError):
            evolve_unitary(css_x4, h, 0.1)


class TestDecayChannels:
    def test_rates(self):
        decay = DecayChannels(t1=80.0, t2=20.0)
        assert abs(decay.depolarization_rate - 1.0 / 80.0) <= 1e-15
        # nearest-neighbour coherence rate + depolarization = 1/t2
        assert abs(decay.dephasing_rate / 2.0 + 1.0 / 80.0 - 1.0 / 20.0) <= 1e-15

    def test_infinite_times_allowed(self):
        decay = DecayChannels(t1=np.inf, t2=np.inf)
        assert decay.depolarization_rate == 0.0
        assert decay.dephasing_rate == 0.0

    def test_complete_positivity_guard(self):
        with pytest.raises(ValueError):
            DecayChannels(t1=10.0, t2=30.0)  # t2 > t1

    def test_invalid_inputs(self):
        with pytest.raises(ValueError):
            DecayChannels(t1=-1.0, t2=1.0)
        with pytest.raises(ValueError):
            DecayChannels(t1=10.0, t2=5.0, extra_scatter_rate=-0.1)


class TestLindblad:
    def test_coherence_decay_closed_form(self, ops4):
        # with H = 0 the x-basis matrix elements decay independently:
        # off-diagonals at Gamma_d + gamma_phi (dm)^2 / 2, diagonals toward 1/d
        decay = DecayChannels(t1=80.0, t2=20.0)
        h0 = Hamiltonian(np.zeros((9, 9)), "zero")
        state = coherent_spin_state(4, 0.0, 0.0)  # stretched along z: rich x-coherences
        t = 2.0
        evolved = evolve_lindblad(state, h0, decay, t, dt=1e-3)
        w, v = np.linalg.eigh(np.asarray(ops4.fx))
        m = np.round(w).astype(int)
        r0 = v.conj().T @ state.rho @ v
        rt = v.conj().T @ evolved.rho @ v
        gamma_d = decay.depolarization_rate
        gamma_phi = decay.dephasing_rate
        dm = m[:, None] - m[None, :]
        factor = np.exp(-(gamma_d + gamma_phi * dm.astype(float) ** 2 / 2.0) * t)
        expected = r0 * factor
        idx = np.arange(9)
        expected[idx, idx] = 1.0 / 9.0 + (np.diag(r0) - 1.0 / 9.0) * np.exp(-gamma_d * t)
        assert np.abs(rt - expected).max() <= 1e-8

    def test_nearest_neighbour_rate_is_one_over_t2(self, ops4):
        decay = DecayChannels(t1=80.0, t2=20.0)
        h0 = Hamiltonian(np.zeros((9, 9)), "zero")
        state = coherent_spin_state(4, 0.0, 0.0)
        t = 3.0
        evolved = evolve_lindblad(state, h0, decay, t, dt=1e-3)
        w, v = np.linalg.eigh(np.asarray(ops4.fx))
        r0 = v.conj().T @ state.rho @ v
        rt = v.conj().T @ evolved.rho @ v
        ratio = abs(rt[0, 1]) / abs(r0[0, 1])
        assert abs(ratio - np.exp(-t / 20.0)) <= 1e-9

    def test_depolarization_fixed_point(self):
        decay = DecayChannels(t1=1.0, t2=1.0)  # pure depolarization
        h0 = Hamiltonian(np.zeros((5, 5)), "zero")
        state = coherent_spin_state(2, np.pi / 2.0, 0.3)
        evolved = evolve_lindblad(state, h0, decay, 20.0, dt=1e-3)
        assert np.abs(evolved.rho - np.eye(5) / 5.0).max() <= 1e-8

    def test_zero_decay_matches_unitary(self, ops4, css_x4):
        decay = DecayChannels(t1=np.inf, t2=np.inf)
        h = tact_hamiltonian(ops4, 0.5)
        a = evolve_lindblad(css_x4, h, decay, 1.0, dt=1e-3)
        b = evolve_unitary(css_x4, h, 1.0)
        assert np.abs(a.rho - b.rho).max() <= 1e-8

    def test_trace_preserved_over_six_ms(self, ops4, css_x4):
        decay = DecayChannels(t1=80.0, t2=20.0, extra_scatter_rate=0.01)
        h = tact_hamiltonian(ops4, 0.12)
        evolved = evolve_lindblad(css_x4, h, decay, 6.0, dt=1e-3)
        assert abs(np.trace(evolved.rho).real - 1.0) <= 1e-8

    def test_purity_contracts(self, ops4, css_x4):
        decay = DecayChannels(t1=80.0, t2=20.0)
        h = tact_hamiltonian(ops4, 0.12)
        states = lindblad_trajectory(css_x4, h, decay, [0.5, 1.0, 2.0, 4.0], dt=1e-3)
        purities = [s.purity() for s in states]
        assert all(b < a for a, b in zip(purities, purities[1:]))
        assert purities[0] < 1.0

    def test_trajectory_matches_single_calls(self, ops4, css_x4):
        decay = DecayChannels(t1=80.0, t2=20.0)
        h = tact_hamiltonian(ops4, 0.12)
        traj = lindblad_trajectory(css_x4, h, decay, [0.7, 1.4], dt=1e-3)
        single = evolve_lindblad(css_x4, h, decay, 1.4, dt=1e-3)
        assert np.abs(traj[1].rho - single.rho).max() <= 1e-12

    def test_validation(self, ops4, css_x4):
        decay = DecayChannels(t1=80.0, t2=20.0)
        h = tact_hamiltonian(ops4, 0.12)
        with pytest.raises(ValueError):
            evolve_lindblad(css_x4, h, decay, 0.5, dt=1.0)  # dt > t
        with pytest.raises(ValueError):
            evolve_lindblad(css_x4, h, decay, -1.0)
        with pytest.raises(ValueError):
            lindblad_trajectory(css_x4, h, decay, [1.0, 0.5])

    def test_step_size_failure_reports_time(self, ops4, css_x4):
        # a stiff generator at this dt makes RK4 blow up; the integrator
        # must abort with the offending time rather than return garbage
        decay = DecayChannels(t1=80.0, t2=20.0)
        h = tact_hamiltonian(ops4, 4000.0)
        with pytest.raises(PhysicalityError, match="t="):
            evolve_lindblad(css_x4, h, decay, 1.0, dt=1e-2)

    def test_rk4_step_criterion_met_at_default(self, ops4, css_x4):
        from spintomo.dynamics import rk4_convergence_probe

        decay = DecayChannels(t1=80.0, t2=20.0, extra_scatter_rate=0.01)
        h = compensated_hamiltonian(ops4, 0.24, residual=0.15)
        fz_var_change = rk4_convergence_probe(
            css_x4, h, decay, 2.0, np.asarray(ops4.fz) @ np.asarray(ops4.fz), dt=1e-3
        )
        assert fz_var_change < 1e-6


class TestHamiltonianContainer:
    def test_rejects_non_hermitian(self):
        m = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)
        with pytest.raises(PhysicalityError):
            Hamiltonian(m, "bad")

    @pytest.mark.parametrize("f", HALF_STEPS)
    def test_constructors_hermitian(self, f):
        ops = spin_operators(f)
        for h in (
            oat_hamiltonian(ops, 0.3),
            tact_hamiltonian(ops, -1.2),
            light_shift_hamiltonian(ops, 0.5, 2.0),
            zeeman_hamiltonian(ops, 1.0, 0.2),
            compensated_hamiltonian(ops, 0.7, a0=0.1, residual=0.02),
        ):
            assert np.abs(h.matrix - h.matrix.conj().T).max() <= 1e-12
