"""
Tests for the reduced Chaplygin sphere: vector fields, Hamiltonians,
measures, the classical 3-D ball, the homogeneous ball and reconstruction.
"""

import numpy as np
import pytest
from scipy import linalg

from chaplab import chaplygin
from chaplab.inertia import ChaplyginParams, chaplygin_inertia, principal_from_chaplygin_3d
from chaplab.numerics import (
    IntegratorConfig,
    fd_divergence,
    fd_gradient,
    integrate,
    random_admissible_params,
    random_cotangent_point,
    relative_drift,
)
from chaplab.son_geometry import proj_h_gamma, vee, wedge


E1 = np.array([1.0, 0.0, 0.0])
E2 = np.array([0.0, 1.0, 0.0])


@pytest.fixture
def worked():
    """gamma = e1, p = e2, A = diag(1, 2, 3), D = 10."""
    return E1, E2, ChaplyginParams([1.0, 2.0, 3.0], 10.0)


@pytest.fixture
def params4():
    return ChaplyginParams([0.6, 0.9, 1.3, 1.8], 12.0)


def closed_field(params):
    n = params.n

    def rhs(y):
        return np.concatenate(chaplygin.cotangent_rhs_closed(y[:n], y[n:], params))

    return rhs


class TestWorkedPoint:
    """Test every reduction level at gamma = e1, p = e2."""

    def test_closed_field(self, worked):
        """Test gamma' = (0, 0.08, 0) and p' = (-0.08, 0, 0)."""
        gamma, p, params = worked
        gamma_dot, p_dot = chaplygin.cotangent_rhs_closed(gamma, p, params)
        assert np.allclose(gamma_dot, [0.0, 0.08, 0.0], atol=1e-15)
        assert np.allclose(p_dot, [-0.08, 0.0, 0.0], atol=1e-15)

    def test_generic_field_matches(self, worked):
        """Test the generic xi-solve with the Chaplygin operator gives the same field."""
        gamma, p, params = worked
        gamma_dot, p_dot = chaplygin.cotangent_rhs(gamma, p, chaplygin_inertia(params), params.D)
        assert np.allclose(gamma_dot, [0.0, 0.08, 0.0], atol=1e-14)
        assert np.allclose(p_dot, [-0.08, 0.0, 0.0], atol=1e-14)

    def test_xi_and_omega(self, worked):
        """Test xi = (0, 0.2, 0) and omega = 0.08 e1^e2."""
        gamma, p, params = worked
        assert np.allclose(chaplygin.xi_closed(gamma, p, params), [0.0, 0.2, 0.0])
        assert np.allclose(chaplygin.xi_from_p(gamma, p, chaplygin_inertia(params), params.D), [0.0, 0.2, 0.0])
        assert np.allclose(chaplygin.omega_closed(gamma, p, params), 0.08 * wedge(E1, E2))

    def test_hamiltonian_and_momentum(self, worked):
        """Test H = 0.04 in closed and generic form, K = 1."""
        gamma, p, params = worked
        assert chaplygin.hamiltonian_closed(gamma, p, params) == pytest.approx(0.04)
        assert chaplygin.hamiltonian_reduced(gamma, p, chaplygin_inertia(params), params.D) == pytest.approx(0.04)
        assert chaplygin.momentum_K(gamma, p) == pytest.approx(1.0)

    def test_full_energy(self, worked):
        """Test 1/2 <k, omega> on the embedded state equals H."""
        gamma, p, params = worked
        state = chaplygin.embed(gamma, p)
        energy = chaplygin.energy_full(state.k, state.gamma, chaplygin_inertia(params), params.D)
        assert energy == pytest.approx(0.04)


class TestCotangentField:
    """Test the (gamma, p) flow for n = 4 at random points."""

    def test_generic_matches_closed(self, params4):
        """Test the xi-solve and the closed form agree on the constraint manifold."""
        rng = np.random.default_rng(11)
        inertia = chaplygin_inertia(params4)
        for _ in range(20):
            gamma, p = random_cotangent_point(4, rng)
            generic = np.concatenate(chaplygin.cotangent_rhs(gamma, p, inertia, params4.D))
            closed = np.concatenate(chaplygin.cotangent_rhs_closed(gamma, p, params4))
            assert np.allclose(generic, closed, atol=1e-12)
            assert chaplygin.hamiltonian_reduced(gamma, p, inertia, params4.D) == pytest.approx(
                chaplygin.hamiltonian_closed(gamma, p, params4), rel=1e-12)

    def test_omega_rotates_gamma(self, params4):
        """Test gamma' = -omega gamma with the closed-form omega."""
        gamma, p = random_cotangent_point(4, np.random.default_rng(2))
        gamma_dot, _ = chaplygin.cotangent_rhs_closed(gamma, p, params4)
        assert np.allclose(gamma_dot, -chaplygin.omega_closed(gamma, p, params4) @ gamma, atol=1e-14)

    def test_constraints_preserved_off_manifold(self, params4):
        """Test phi1, phi2 and K have zero derivative along the extended field."""
        rng = np.random.default_rng(5)
        gamma = 1.3 * rng.standard_normal(4)
        p = rng.standard_normal(4)
        gamma_dot, p_dot = chaplygin.cotangent_rhs_closed(gamma, p, params4)
        assert gamma @ gamma_dot == pytest.approx(0.0, abs=1e-13)
        assert gamma_dot @ p + gamma @ p_dot == pytest.approx(0.0, abs=1e-13)
        assert p @ p_dot == pytest.approx(0.0, abs=1e-13)

    def test_undefined_at_origin(self, params4):
        """Test gamma = 0 is refused."""
        with pytest.raises(ValueError, match="undefined at gamma = 0"):
            chaplygin.cotangent_rhs_closed(np.zeros(4), np.ones(4), params4)

    def test_hamiltonian_gradient(self, params4):
        """Test the analytic gradient of H against central differences."""
        gamma, p = random_cotangent_point(4, np.random.default_rng(8))
        x = np.concatenate([gamma, p])
        numeric = fd_gradient(lambda z: chaplygin.hamiltonian_closed(z[:4], z[4:], params4), x)
        assert np.allclose(chaplygin.hamiltonian_closed_gradient(gamma, p, params4), numeric, atol=1e-8)

    def test_energy_conserved(self, params4):
        """Test H and K stay constant along a short run."""
        gamma, p = random_cotangent_point(4, np.random.default_rng(21))
        traj = integrate(closed_field(params4), np.concatenate([gamma, p]), IntegratorConfig(step=1e-3, t_end=2.0))
        H = traj.map_states(lambda y: chaplygin.hamiltonian_closed(y[:4], y[4:], params4))
        K = traj.map_states(lambda y: chaplygin.momentum_K(y[:4], y[4:]))
        assert relative_drift(H) < 1e-10
        assert relative_drift(K) < 1e-10


@pytest.mark.integration
class TestConservationSweep:
    """Test the invariants over many admissible parameter sets without projection."""

    @pytest.mark.parametrize('n', [3, 4, 5])
    def test_invariants_over_random_parameters(self, n):
        """Test H, K, phi1 and phi2 drift at most 1e-8 over t in [0, 10] for 20 seeds."""
        config = IntegratorConfig(method='rk4', step=1e-3, t_end=10.0, projection=False, stride=100)
        for seed in range(20):
            rng = np.random.default_rng(1000 * n + seed)
            params = random_admissible_params(n, rng)
            gamma, p = random_cotangent_point(n, rng)
            traj = integrate(closed_field(params), np.concatenate([gamma, p]), config)
            H = traj.map_states(lambda y: chaplygin.hamiltonian_closed(y[:n], y[n:], params))
            K = traj.map_states(lambda y: chaplygin.momentum_K(y[:n], y[n:]))
            phi1 = traj.map_states(lambda y: y[:n] @ y[:n] - 1.0)
            phi2 = traj.map_states(lambda y: y[:n] @ y[n:])
            assert relative_drift(H) <= 1e-8, f"H drift at seed {seed}, a = {params.a}, D = {params.D}"
            assert relative_drift(K) <= 1e-8, f"K drift at seed {seed}, a = {params.a}, D = {params.D}"
            assert np.max(np.abs(phi1)) <= 1e-8
            assert np.max(np.abs(phi2)) <= 1e-8


class TestPoints:
    """Test the state containers."""

    def test_cotangent_point_validation(self):
        """Test both constraint violations are reported."""
        chaplygin.CotangentPoint(E1, E2).validate()
        with pytest.raises(ValueError, match=r"\(gamma, gamma\) must equal 1"):
            chaplygin.CotangentPoint(2 * E1, E2).validate()
        with pytest.raises(ValueError, match=r"\(gamma, p\) must vanish"):
            chaplygin.CotangentPoint(E1, E1 + E2).validate()

    def test_cotangent_point_shape(self):
        """Test gamma and p must have equal length."""
        with pytest.raises(ValueError, match="same length"):
            chaplygin.CotangentPoint([1.0, 0.0], [0.0, 1.0, 0.0])

    def test_full_state_vector(self):
        """Test the flat (k, gamma) layout."""
        state = chaplygin.embed(E1, E2)
        back = chaplygin.ReducedFullState.from_vector(state.as_vector(), 3)
        assert np.allclose(back.k, wedge(E1, E2))
        assert np.allclose(back.gamma, E1)


class TestFullReduction:
    """Test the so(n)* x S^{n-1} level and its zero-momentum embedding."""

    def test_embedding_has_zero_momentum(self):
        """Test pr_{so(n-1)^gamma}(gamma ^ p) = 0."""
        gamma, p = random_cotangent_point(5, np.random.default_rng(4))
        state = chaplygin.embed(gamma, p)
        assert np.allclose(chaplygin.momentum_map(state.k, state.gamma), 0.0, atol=1e-14)

    def test_embedding_intertwines_fields(self, params4):
        """Test the full field at gamma ^ p is the pushforward of the cotangent field."""
        rng = np.random.default_rng(9)
        inertia = chaplygin_inertia(params4)
        for _ in range(5):
            gamma, p = random_cotangent_point(4, rng)
            gamma_dot, p_dot = chaplygin.cotangent_rhs_closed(gamma, p, params4)
            k_dot, gamma_dot_full = chaplygin.full_reduced_rhs(wedge(gamma, p), gamma, inertia, params4.D)
            assert np.allclose(k_dot, chaplygin.embed_velocity(gamma, p, gamma_dot, p_dot), atol=1e-12)
            assert np.allclose(gamma_dot_full, gamma_dot, atol=1e-12)

    def test_energy_matches_hamiltonian(self, params4):
        """Test 1/2 <k, omega> = H on the embedded manifold."""
        gamma, p = random_cotangent_point(4, np.random.default_rng(13))
        state = chaplygin.embed(gamma, p)
        energy = chaplygin.energy_full(state.k, state.gamma, chaplygin_inertia(params4), params4.D)
        assert energy == pytest.approx(chaplygin.hamiltonian_closed(gamma, p, params4), rel=1e-12)

    def test_omega_from_k_inverts_kappa(self, params4):
        """Test k = I omega + D proj_h_gamma(omega) is recovered."""
        rng = np.random.default_rng(17)
        gamma, _ = random_cotangent_point(4, rng)
        omega = wedge(rng.standard_normal(4), rng.standard_normal(4))
        inertia = chaplygin_inertia(params4)
        k = inertia.apply(omega) + params4.D * proj_h_gamma(omega, gamma)
        assert np.allclose(chaplygin.omega_from_k(k, gamma, inertia, params4.D), omega, atol=1e-12)


class TestMeasures:
    """Test the invariant measure and divergence formulas."""

    def test_divergence_formula_off_manifold(self, params4):
        """Test the closed divergence against central differences, also with (gamma, p) != 0."""
        rng = np.random.default_rng(3)
        rhs = closed_field(params4)
        for _ in range(5):
            gamma = rng.standard_normal(4)
            gamma /= np.linalg.norm(gamma)
            p = rng.standard_normal(4)
            y = np.concatenate([gamma, p])
            assert fd_divergence(rhs, y) == pytest.approx(chaplygin.divergence_formula(gamma, p, params4), abs=1e-6)

    def test_density_gradient(self):
        """Test the analytic gradient of the density."""
        a = np.array([0.5, 1.0, 1.5, 2.0])
        gamma = np.array([0.4, -0.5, 0.3, 0.7])
        numeric = fd_gradient(lambda g: chaplygin.measure_density(g, a), gamma)
        assert np.allclose(chaplygin.measure_density_gradient(gamma, a), numeric, atol=1e-8)

    def test_density_trivial_for_n_two(self):
        """Test the exponent -(n-2)/2 vanishes for n = 2."""
        assert chaplygin.measure_density([0.6, 0.8], [1.0, 3.0]) == pytest.approx(1.0)

    def test_full_density_matches_classical(self):
        """Test the so(3) determinant equals the vector-form density."""
        params = ChaplyginParams([0.8, 1.2, 1.7], 10.0)
        I = principal_from_chaplygin_3d(params)
        gamma, _ = random_cotangent_point(3, np.random.default_rng(6))
        full = chaplygin.measure_density_full(gamma, chaplygin_inertia(params), params.D)
        assert full == pytest.approx(chaplygin.classical3d_measure(gamma, I, params.D), rel=1e-10)

    def test_classical_density_proportional_to_reduced(self):
        """Test the classical density is a constant multiple of (gamma, A^{-1} gamma)^{-1/2}."""
        params = ChaplyginParams([0.8, 1.2, 1.7], 10.0)
        I = principal_from_chaplygin_3d(params)
        rng = np.random.default_rng(7)
        ratios = []
        for _ in range(20):
            gamma, _ = random_cotangent_point(3, rng)
            ratios.append(chaplygin.classical3d_measure(gamma, I, params.D) / chaplygin.measure_density(gamma, params.a))
        assert np.ptp(ratios) / np.mean(ratios) < 1e-10


class TestClassicalBall:
    """Test the 3-D ball in vector form."""

    def test_matches_matrix_form(self):
        """Test the vector field is the hat image of the so(3) field."""
        params = ChaplyginParams([0.8, 1.2, 1.7], 10.0)
        I = principal_from_chaplygin_3d(params)
        inertia = chaplygin_inertia(params)
        rng = np.random.default_rng(12)
        for _ in range(5):
            gamma, p = random_cotangent_point(3, rng)
            k = wedge(gamma, p)
            k_dot, gamma_dot = chaplygin.full_reduced_rhs(k, gamma, inertia, params.D)
            kv_dot, gv_dot = chaplygin.classical3d_rhs(vee(k), gamma, I, params.D)
            assert np.allclose(vee(k_dot), kv_dot, atol=1e-12)
            assert np.allclose(gamma_dot, gv_dot, atol=1e-12)

    def test_momentum_round_trip(self):
        """Test classical3d_omega inverts classical3d_momentum."""
        I, D = np.array([2.0, 3.0, 4.0]), 10.0
        omega = np.array([0.3, -0.1, 0.7])
        gamma = np.array([0.0, 0.6, 0.8])
        k = chaplygin.classical3d_momentum(omega, gamma, I, D)
        assert np.allclose(chaplygin.classical3d_omega(k, gamma, I, D), omega)

    def test_integrals_conserved(self):
        """Test F1..F4 along a short run."""
        I, D = np.array([2.0, 3.0, 4.0]), 10.0

        def rhs(y):
            return np.concatenate(chaplygin.classical3d_rhs(y[:3], y[3:], I, D))

        y0 = np.array([0.2, -0.5, 0.4, 0.0, 0.6, 0.8])
        traj = integrate(rhs, y0, IntegratorConfig(step=1e-2, t_end=5.0))
        values = np.array([chaplygin.classical3d_integrals(y[:3], y[3:], I, D) for y in traj.states])
        assert np.max(np.abs(values - values[0])) < 1e-10

    def test_lagrange_integral_conserved(self):
        """Test the I1 = I2 extra integral on the slice (k, gamma) = 0."""
        I, D = np.array([2.0, 2.0, 3.0]), 10.0

        def rhs(y):
            return np.concatenate(chaplygin.classical3d_rhs(y[:3], y[3:], I, D))

        gamma = np.array([0.3, 0.4, np.sqrt(0.75)])
        k = np.cross(gamma, [0.2, -0.7, 0.5])
        traj = integrate(rhs, np.concatenate([k, gamma]), IntegratorConfig(step=1e-2, t_end=5.0))
        values = traj.map_states(lambda y: chaplygin.classical3d_lagrange_integral(y[:3], y[3:], I, D))
        assert relative_drift(values) < 1e-9

    def test_lagrange_integral_needs_equal_moments(self):
        """Test I1 != I2 is refused."""
        with pytest.raises(ValueError, match="I1 = I2"):
            chaplygin.classical3d_lagrange_integral(E1, E2, [1.0, 2.0, 3.0], 10.0)


class TestHomogeneousBall:
    """Test the homogeneous ball and the great-circle solution."""

    def test_matches_chaplygin_with_equal_parameters(self):
        """Test a_i = alpha gives the round-sphere geodesic flow with s = c_ij."""
        alpha, D = 1.5, 10.0
        params = ChaplyginParams([alpha] * 4, D)
        s = alpha ** 2 * D / (D - alpha ** 2)
        gamma, p = random_cotangent_point(4, np.random.default_rng(1))
        closed = np.concatenate(chaplygin.cotangent_rhs_closed(gamma, p, params))
        assert np.allclose(np.concatenate(chaplygin.homogeneous_rhs(gamma, p, s, D)), closed, atol=1e-14)

    def test_great_circle_solution(self):
        """Test the analytic solution against RK4."""
        s, D = 1.0, 10.0
        gamma, p = random_cotangent_point(4, np.random.default_rng(0))

        def rhs(y):
            return np.concatenate(chaplygin.homogeneous_rhs(y[:4], y[4:], s, D))

        traj = integrate(rhs, np.concatenate([gamma, p]), IntegratorConfig(step=1e-2, t_end=10.0))
        gammas, ps = chaplygin.homogeneous_solution(gamma, p, s, D, traj.times)
        assert np.max(np.abs(traj.states - np.hstack([gammas, ps]))) < 1e-9

    def test_omega_constant(self):
        """Test (gamma ^ p)/(s + D) is constant along the great circle."""
        gamma, p = random_cotangent_point(3, np.random.default_rng(5))
        gammas, ps = chaplygin.homogeneous_solution(gamma, p, 1.0, 10.0, np.linspace(0.0, 7.0, 8))
        omegas = [chaplygin.homogeneous_omega(g, q, 1.0, 10.0) for g, q in zip(gammas, ps)]
        assert np.max(np.abs(np.array(omegas) - omegas[0])) < 1e-14

    def test_rest_state(self):
        """Test p = 0 stays put."""
        gammas, ps = chaplygin.homogeneous_solution(E1, np.zeros(3), 1.0, 10.0, [0.0, 1.0])
        assert np.allclose(gammas, E1)
        assert np.allclose(ps, 0.0)


class TestReconstruction:
    """Test attitude and contact-point reconstruction."""

    def test_constant_omega(self):
        """Test g(t) = exp(t omega) and a straight contact path."""
        omega = 0.4 * wedge([1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0, 1.0]) + 0.2 * wedge([0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0])
        times = np.linspace(0.0, 3.0, 31)
        pose = chaplygin.reconstruct(times, np.repeat(omega[None], times.size, axis=0), np.eye(4), np.zeros(3),
                                     rho=2.0, step=1e-2)
        assert np.allclose(pose.rotations[-1], linalg.expm(3.0 * omega), atol=1e-9)
        assert pose.orthogonality_defect() < 1e-12
        assert pose.straightness_defect() < 1e-10
        assert np.allclose(pose.positions[-1], 3.0 * 2.0 * omega[:3, 3], atol=1e-9)

    def test_contact_velocity_is_horizontal(self):
        """Test the vertical component of the contact velocity vanishes."""
        rng = np.random.default_rng(10)
        g = linalg.expm(wedge(rng.standard_normal(4), rng.standard_normal(4)))
        omega = wedge(rng.standard_normal(4), rng.standard_normal(4))
        assert abs(chaplygin.contact_velocity(g, omega, 1.0)[3]) < 1e-12

    def test_rejects_reflection(self):
        """Test the initial attitude must be a rotation."""
        with pytest.raises(ValueError, match="determinant"):
            chaplygin.reconstruct([0.0, 1.0], np.zeros((2, 3, 3)), np.diag([1.0, 1.0, -1.0]), np.zeros(2), 1.0)


if __name__ == '__main__':
    pytest.main([__file__, '-v'])
