"""
Veselova problem.

The reduced n-dimensional flow on T*S^{n-1}, the classical 3-D body
with the nonholonomic constraint (w, gamma) = 0, the Fedorov map to the
Chaplygin ball and the Gauss-map correspondence with geodesics on the
ellipsoid (x, A x) = 1.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Dict, Tuple

import numpy as np

from chaplab import chaplygin
from chaplab.inertia import ParameterError, fedorov_map_3d
from chaplab.numerics import Trajectory, compare_trajectories


logger = logging.getLogger(__name__)

ELLIPSOID_TOLERANCE = 1e-10


@dataclass(frozen=True, eq=False)
class Veselova3dState:
    """Angular velocity w and vertical gamma of the classical Veselova body."""

    w: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'w', np.array(self.w, dtype=float).ravel())
        object.__setattr__(self, 'gamma', np.array(self.gamma, dtype=float).ravel())
        if self.w.shape != (3,) or self.gamma.shape != (3,):
            raise ValueError("Veselova3dState holds two 3-vectors")

    def constraint(self) -> float:
        """f1 = (w, gamma), zero on the constraint submanifold."""
        return float(self.w @ self.gamma)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.w, self.gamma])

    @classmethod
    def from_vector(cls, y) -> 'Veselova3dState':
        return cls(y[:3], y[3:6])


def _check_veselova_tensor(inertia) -> np.ndarray:
    inertia = np.asarray(inertia, dtype=float)
    if inertia.shape != (3,):
        raise ParameterError("Veselova tensor must be given by its 3 diagonal entries")
    if np.any(inertia <= 1.0):
        raise ParameterError(f"Veselova tensor eigenvalues must exceed 1, got {inertia.tolist()}")
    return inertia


# -- reduced n-dimensional flow -----------------------------------------------

def veselova_reduced_rhs(gamma, p, a) -> Tuple[np.ndarray, np.ndarray]:
    """
    Extended reduced Veselova equations gamma' = -Phi gamma, p' = -Phi p.

    Phi = (gamma ^ A p)/(gamma, A^{-1} gamma), so

        gamma' = ((gamma, gamma) A p - (p, A gamma) gamma) / c
        p'     = ((p, gamma) A p - (p, A p) gamma) / c

    Raises:
        ValueError: If gamma = 0
    """
    gamma = np.asarray(gamma, dtype=float)
    p = np.asarray(p, dtype=float)
    if not np.any(gamma):
        raise ValueError("Veselova field is undefined at gamma = 0")
    a = np.asarray(a, dtype=float)
    c = float(gamma @ (gamma / a))
    Ap = a * p
    gamma_dot = (float(gamma @ gamma) * Ap - float(p @ (a * gamma)) * gamma) / c
    p_dot = (float(p @ gamma) * Ap - float(p @ Ap) * gamma) / c
    return gamma_dot, p_dot


def veselova_hamiltonian(gamma, p_tilde, a, D: float) -> float:
    """Geodesic Hamiltonian (D^2/2)(A p~, p~)."""
    p_tilde = np.asarray(p_tilde, dtype=float)
    return 0.5 * D * D * float(p_tilde @ (np.asarray(a, dtype=float) * p_tilde))


def veselova_hamiltonian_gradient(gamma, p_tilde, a, D: float) -> np.ndarray:
    p_tilde = np.asarray(p_tilde, dtype=float)
    return np.concatenate([np.zeros_like(p_tilde), D * D * np.asarray(a, dtype=float) * p_tilde])


def veselova_energy_ratio(gamma, p, a) -> float:
    """(A p, p)/(gamma, A^{-1} gamma), conserved on the constraint manifold."""
    gamma = np.asarray(gamma, dtype=float)
    p = np.asarray(p, dtype=float)
    a = np.asarray(a, dtype=float)
    return float(p @ (a * p)) / float(gamma @ (gamma / a))


# -- classical 3-D body -------------------------------------------------------

def veselova3d_multiplier(w, gamma, inertia) -> float:
    """Reaction multiplier keeping (w, gamma) constant."""
    inertia = np.asarray(inertia, dtype=float)
    w = np.asarray(w, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    u = gamma / inertia
    return -float(np.cross(inertia * w, w) @ u) / float(u @ gamma)


def veselova3d_rhs(w, gamma, inertia) -> Tuple[np.ndarray, np.ndarray]:
    """
    I w' = I w x w + lambda gamma, gamma' = gamma x w.

    Args:
        w: Angular velocity
        gamma: Vertical vector
        inertia: Diagonal Veselova tensor (eigenvalues > 1)

    Returns:
        Tuple (w', gamma')
    """
    inertia = _check_veselova_tensor(inertia)
    w = np.asarray(w, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    lam = veselova3d_multiplier(w, gamma, inertia)
    w_dot = (np.cross(inertia * w, w) + lam * gamma) / inertia
    return w_dot, np.cross(gamma, w)


def veselova3d_momentum(w, gamma, inertia) -> np.ndarray:
    """K = I w - ((I - Id) w, gamma) gamma."""
    inertia = np.asarray(inertia, dtype=float)
    w = np.asarray(w, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    return inertia * w - float(((inertia - 1.0) * w) @ gamma) * gamma


def veselova3d_integrals(w, gamma, inertia) -> Tuple[float, float, float, float]:
    """
    First integrals (f1, f2, f3, f4) of the 3-D Veselova body.

    f1 = (K, gamma), f2 = (gamma, gamma),
    f3 = 1/2 (K, w) - 1/2 (K, gamma)((I - Id) w, gamma), f4 = (K, K)
    """
    inertia = np.asarray(inertia, dtype=float)
    w = np.asarray(w, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    K = veselova3d_momentum(w, gamma, inertia)
    f1 = float(K @ gamma)
    f3 = 0.5 * float(K @ w) - 0.5 * f1 * float(((inertia - 1.0) * w) @ gamma)
    return f1, float(gamma @ gamma), f3, float(K @ K)


def veselova3d_measure(gamma, inertia) -> float:
    """Invariant density sqrt((I^{-1} gamma, gamma))."""
    gamma = np.asarray(gamma, dtype=float)
    return float(np.sqrt(gamma @ (gamma / np.asarray(inertia, dtype=float))))


def fedorov_check(w, gamma, inertia, D: float) -> Dict:
    """
    Pull the classical Chaplygin integrals back through the Fedorov map.

    The map sends k to -K, so the level-set correspondence reads
    F1 = -f1, F2 = f2, F3 = (f4 - 2 f3)/(2D), F4 = f4.

    Returns:
        Report with the raw differences F_i - f_i and the level-map
        residuals (the latter vanish identically)
    """
    inertia = _check_veselova_tensor(inertia)
    I, omega, gamma_c = fedorov_map_3d(inertia, D, w, gamma)
    k = chaplygin.classical3d_momentum(omega, gamma_c, I, D)
    F = chaplygin.classical3d_integrals(k, gamma_c, I, D)
    f = veselova3d_integrals(w, gamma, inertia)
    images = (-f[0], f[1], (f[3] - 2.0 * f[2]) / (2.0 * D), f[3])
    residuals = [abs(Fi - gi) / (1.0 + abs(gi)) for Fi, gi in zip(F, images)]
    return {
        'chaplygin_integrals': [float(x) for x in F],
        'veselova_integrals': [float(x) for x in f],
        'raw_differences': [float(Fi - fi) for Fi, fi in zip(F, f)],
        'level_map_residuals': [float(r) for r in residuals],
        'max_residual': float(max(residuals)),
        'momentum_residual': float(np.max(np.abs(k + veselova3d_momentum(w, gamma, inertia)))),
    }


# -- ellipsoid geodesics ------------------------------------------------------

def ellipsoid_geodesic_rhs(x, v, a) -> Tuple[np.ndarray, np.ndarray]:
    """Geodesics on (x, A x) = 1: x' = v, v' = -((v, A v)/(A x, A x)) A x."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    a = np.asarray(a, dtype=float)
    Ax = a * x
    return v.copy(), -float(v @ (a * v)) / float(Ax @ Ax) * Ax


def ellipsoid_defects(x, v, a) -> Tuple[float, float]:
    """(|(x, A x) - 1|, |(v, A x)|)."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    Ax = np.asarray(a, dtype=float) * x
    return abs(float(x @ Ax) - 1.0), abs(float(v @ Ax))


def validate_ellipsoid_point(x, v, a, tolerance: float = ELLIPSOID_TOLERANCE) -> None:
    """
    Raises:
        ValueError: If x is off the ellipsoid or v is not tangent
    """
    d1, d2 = ellipsoid_defects(x, v, a)
    if d1 > tolerance:
        raise ValueError(f"(x, A x) must equal 1 (defect {d1:.3e})")
    if d2 > tolerance:
        raise ValueError(f"Velocity must be tangent, (v, A x) = {d2:.3e}")


def gauss_map(x, a) -> np.ndarray:
    """Unit normal A x / |A x| of the ellipsoid."""
    Ax = np.asarray(a, dtype=float) * np.asarray(x, dtype=float)
    return Ax / np.linalg.norm(Ax)


def project_ellipsoid(a) -> Callable[[np.ndarray], np.ndarray]:
    """Projector pulling (x, v) back onto the ellipsoid and its tangent space."""
    a = np.asarray(a, dtype=float)

    def _project(y: np.ndarray) -> np.ndarray:
        n = y.size // 2
        x = y[:n] / np.sqrt(y[:n] @ (a * y[:n]))
        normal = a * x
        v = y[n:] - (y[n:] @ normal) / (normal @ normal) * normal
        return np.concatenate([x, v])

    return _project


def veselova_reduced_to_ellipsoid(gamma, p, a) -> Tuple[np.ndarray, np.ndarray]:
    """
    Ellipsoid initial data whose Gauss image starts at gamma in the direction of p.

    x0 = A^{-1} gamma / sqrt(gamma, A^{-1} gamma), v0 = p
    """
    gamma = np.asarray(gamma, dtype=float)
    a = np.asarray(a, dtype=float)
    x0 = gamma / a / np.sqrt(gamma @ (gamma / a))
    v0 = np.array(p, dtype=float)
    validate_ellipsoid_point(x0, v0, a)
    return x0, v0


def _arclength(curve: np.ndarray) -> np.ndarray:
    return np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(curve, axis=0), axis=1))])


def gauss_curve_distance(veselova: Trajectory, ellipsoid: Trajectory, a) -> Dict:
    """
    Distance between the Veselova gamma-curve and the Gauss image of a geodesic.

    Only the shared arclength range of the two gamma-curves is compared,
    since the two flows trace the curve at different speeds.

    Returns:
        compare_trajectories report in curve mode, plus the compared arclength
    """
    n = veselova.states.shape[1] // 2
    ves_curve = veselova.states[:, :n]
    gauss_curve = np.array([gauss_map(x, a) for x in ellipsoid.states[:, :n]])
    s_ves, s_gauss = _arclength(ves_curve), _arclength(gauss_curve)
    length = min(s_ves[-1], s_gauss[-1])
    keep = s_ves <= length
    reference = Trajectory(np.arange(int(keep.sum()), dtype=float), ves_curve[keep])
    target = Trajectory(ellipsoid.times, gauss_curve)
    report = compare_trajectories(reference, target, mode='curve')
    report['arclength'] = float(length)
    logger.debug("Gauss-map comparison over arclength %.4g: %.3e", length, report['sup_distance'])
    return report
