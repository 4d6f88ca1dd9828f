"""
Tests for the Veselova flows, the Fedorov map and the ellipsoid
Gauss-map correspondence.
"""

import numpy as np
import pytest

from chaplab import veselova
from chaplab.inertia import ParameterError
from chaplab.numerics import (
    IntegratorConfig,
    integrate,
    liouville_check,
    random_cotangent_point,
    relative_drift,
)


A3 = np.array([1.0, 2.0, 3.0])
J = np.array([1.5, 2.0, 3.0])


def reduced_field(a):
    n = len(a)

    def rhs(y):
        return np.concatenate(veselova.veselova_reduced_rhs(y[:n], y[n:], a))

    return rhs


def body_field(inertia):
    def rhs(y):
        return np.concatenate(veselova.veselova3d_rhs(y[:3], y[3:], inertia))

    return rhs


class TestReducedFlow:
    """Test the reduced n-dimensional Veselova equations."""

    def test_worked_point(self):
        """Test gamma' = (0, 2, 0) and p' = (-2, 0, 0) at gamma = e1, p = e2."""
        gamma_dot, p_dot = veselova.veselova_reduced_rhs([1.0, 0.0, 0.0], [0.0, 1.0, 0.0], A3)
        assert np.allclose(gamma_dot, [0.0, 2.0, 0.0])
        assert np.allclose(p_dot, [-2.0, 0.0, 0.0])

    def test_integrals_have_zero_derivative(self):
        """Test (p, p), phi1, phi2 and (A p, p)/c are stationary at a random point."""
        a = np.array([0.8, 1.2, 1.7, 2.0])
        gamma, p = random_cotangent_point(4, np.random.default_rng(3))
        gamma_dot, p_dot = veselova.veselova_reduced_rhs(gamma, p, a)
        assert p @ p_dot == pytest.approx(0.0, abs=1e-13)
        assert gamma @ gamma_dot == pytest.approx(0.0, abs=1e-13)
        assert gamma_dot @ p + gamma @ p_dot == pytest.approx(0.0, abs=1e-13)

    def test_energy_ratio_conserved(self):
        """Test (A p, p)/(gamma, A^{-1} gamma) along a short run."""
        a = np.array([0.8, 1.2, 1.7])
        gamma, p = random_cotangent_point(3, np.random.default_rng(4))
        traj = integrate(reduced_field(a), np.concatenate([gamma, p]), IntegratorConfig(step=1e-3, t_end=2.0))
        ratio = traj.map_states(lambda y: veselova.veselova_energy_ratio(y[:3], y[3:], a))
        assert relative_drift(ratio) < 1e-9

    def test_undefined_at_origin(self):
        """Test gamma = 0 is refused."""
        with pytest.raises(ValueError, match="undefined at gamma = 0"):
            veselova.veselova_reduced_rhs(np.zeros(3), np.ones(3), A3)


class TestBody:
    """Test the classical 3-D Veselova body."""

    def test_constraint_preserved(self):
        """Test d/dt (w, gamma) = 0 with the reaction multiplier."""
        w = np.array([0.3, -0.4, 0.2])
        gamma = np.array([0.0, 0.6, 0.8])
        w_dot, gamma_dot = veselova.veselova3d_rhs(w, gamma, J)
        assert w_dot @ gamma + w @ gamma_dot == pytest.approx(0.0, abs=1e-14)

    def test_integrals_conserved(self):
        """Test f2, f3 and f4 along a run on the constraint (w, gamma) = 0."""
        gamma = np.array([0.0, 0.6, 0.8])
        w = np.cross(gamma, [1.0, 0.5, -0.3])
        traj = integrate(body_field(J), np.concatenate([w, gamma]), IntegratorConfig(step=1e-3, t_end=5.0))
        values = np.array([veselova.veselova3d_integrals(y[:3], y[3:], J) for y in traj.states])
        assert np.max(np.abs(values - values[0])) < 1e-10
        assert abs(values[0][0]) < 1e-14

    def test_state_container(self):
        """Test the constraint value and the 3-vector guard."""
        state = veselova.Veselova3dState([1.0, 0.0, 0.0], [0.0, 0.0, 1.0])
        assert state.constraint() == 0.0
        assert np.allclose(veselova.Veselova3dState.from_vector(state.as_vector()).w, [1.0, 0.0, 0.0])
        with pytest.raises(ValueError, match="two 3-vectors"):
            veselova.Veselova3dState([1.0, 0.0], [0.0, 1.0])

    def test_measure_density(self):
        """Test sqrt((I^{-1} gamma, gamma)) at a principal axis and a mixed direction."""
        assert veselova.veselova3d_measure([0.0, 0.0, 1.0], J) == pytest.approx(np.sqrt(1.0 / 3.0))
        assert veselova.veselova3d_measure([0.0, 0.6, 0.8], J) == pytest.approx(np.sqrt(0.36 / 2.0 + 0.64 / 3.0))

    def test_measure_is_invariant(self):
        """Test div(mu X) vanishes for mu = sqrt((I^{-1} gamma, gamma)) and not for mu = 1."""
        inertia = np.array([2.0, 3.0, 5.0])
        rng = np.random.default_rng(11)
        points = []
        for _ in range(50):
            gamma, w = random_cotangent_point(3, rng)
            points.append(np.concatenate([w, gamma]))
        field = body_field(inertia)
        report = liouville_check(field, lambda y: veselova.veselova3d_measure(y[3:], inertia), points)
        assert report['mode'] == 'finite-difference'
        assert report['max_abs'] < 1e-8
        assert liouville_check(field, lambda y: 1.0, points)['max_abs'] > 1e-2

    def test_tensor_eigenvalues(self):
        """Test eigenvalues not above 1 are refused."""
        with pytest.raises(ParameterError, match="exceed 1"):
            veselova.veselova3d_rhs(np.ones(3), np.array([0.0, 0.0, 1.0]), [1.0, 2.0, 3.0])


class TestFedorov:
    """Test the Fedorov correspondence of level sets."""

    def test_level_map_residuals_vanish(self):
        """Test F1 = -f1, F2 = f2, F3 = (f4 - 2 f3)/(2D), F4 = f4 at random states."""
        rng = np.random.default_rng(0)
        for _ in range(10):
            gamma, w = random_cotangent_point(3, rng)
            w = w + 0.3 * gamma
            report = veselova.fedorov_check(w, gamma, J, 10.0)
            assert report['max_residual'] < 1e-12
            assert report['momentum_residual'] < 1e-12

    def test_raw_differences_are_reported(self):
        """Test the raw F_i - f_i are listed alongside the residuals."""
        report = veselova.fedorov_check([0.3, -0.2, 0.1], [0.0, 0.6, 0.8], J, 10.0)
        assert len(report['raw_differences']) == 4
        assert report['raw_differences'][1] == pytest.approx(0.0)
        assert len(report['level_map_residuals']) == 4


class TestEllipsoid:
    """Test the ellipsoid geodesics and the Gauss map."""

    def test_matched_initial_data(self):
        """Test x0 = e1, v0 = e2 at gamma = e1 with a_1 = 1."""
        x0, v0 = veselova.veselova_reduced_to_ellipsoid([1.0, 0.0, 0.0], [0.0, 1.0, 0.0], A3)
        assert np.allclose(x0, [1.0, 0.0, 0.0])
        assert np.allclose(v0, [0.0, 1.0, 0.0])
        assert np.allclose(veselova.gauss_map(x0, A3), [1.0, 0.0, 0.0])

    def test_gauss_map_of_matched_point(self):
        """Test the Gauss image of A^{-1} gamma / sqrt(c) is gamma."""
        a = np.array([0.8, 1.2, 1.7])
        gamma, p = random_cotangent_point(3, np.random.default_rng(1))
        x0, _ = veselova.veselova_reduced_to_ellipsoid(gamma, p, a)
        assert np.allclose(veselova.gauss_map(x0, a), gamma)

    def test_validation(self):
        """Test points off the ellipsoid and normal velocities are refused."""
        with pytest.raises(ValueError, match=r"\(x, A x\) must equal 1"):
            veselova.validate_ellipsoid_point([2.0, 0.0, 0.0], [0.0, 1.0, 0.0], A3)
        with pytest.raises(ValueError, match="tangent"):
            veselova.validate_ellipsoid_point([1.0, 0.0, 0.0], [1.0, 0.0, 0.0], A3)

    def test_projection(self):
        """Test the projector lands on the ellipsoid with a tangent velocity."""
        y = veselova.project_ellipsoid(A3)(np.array([1.1, 0.1, 0.0, 0.3, 1.0, 0.0]))
        d1, d2 = veselova.ellipsoid_defects(y[:3], y[3:], A3)
        assert d1 < 1e-14 and d2 < 1e-14

    def test_gauss_image_follows_veselova_curve(self):
        """Test the Gauss image of a geodesic traces the reduced Veselova gamma-curve."""
        a = np.array([0.8, 1.2, 1.7])
        gamma, p = random_cotangent_point(3, np.random.default_rng(6))
        ves = integrate(reduced_field(a), np.concatenate([gamma, p]), IntegratorConfig(step=1e-3, t_end=1.0))
        x0, v0 = veselova.veselova_reduced_to_ellipsoid(gamma, p, a)

        def geodesic(y):
            return np.concatenate(veselova.ellipsoid_geodesic_rhs(y[:3], y[3:], a))

        ell = integrate(geodesic, np.concatenate([x0, v0]), IntegratorConfig(step=1e-3, t_end=2.0))
        report = veselova.gauss_curve_distance(ves, ell, a)
        assert report['sup_distance'] < 1e-4
        assert report['arclength'] > 0


if __name__ == '__main__':
    pytest.main([__file__, '-v'])
