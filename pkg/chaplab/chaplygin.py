"""
Reduced Chaplygin sphere.

Vector fields, Hamiltonians, first integrals and measure densities at
every reduction level: (k, gamma) on so(n)* x S^{n-1}, (gamma, p) on
T*S^{n-1} for a generic diagonal inertia operator and for the Chaplygin
operator in closed form, the classical 3-D ball, the homogeneous ball,
and reconstruction of the attitude g and contact point r.

Conventions: Gamma = E_n is the vertical, c = (gamma, A^{-1} gamma).
"""

from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np
from scipy import linalg
from scipy.interpolate import CubicSpline

from chaplab.inertia import ChaplyginParams, DiagonalInertia
from chaplab.numerics import IntegratorConfig, integrate
from chaplab.son_geometry import (
    coefficients,
    commutator,
    from_coefficients,
    inner,
    orthogonality_defect,
    proj_complement,
    proj_h_gamma,
    validate_rotation,
    wedge,
)


CONSTRAINT_TOLERANCE = 1e-10


@dataclass(frozen=True, eq=False)
class CotangentPoint:
    """Redundant coordinates (gamma, p) of a point of T*S^{n-1}."""

    gamma: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        gamma = np.array(self.gamma, dtype=float).ravel()
        p = np.array(self.p, dtype=float).ravel()
        if gamma.shape != p.shape:
            raise ValueError(f"gamma and p must have the same length, got {gamma.size} and {p.size}")
        object.__setattr__(self, 'gamma', gamma)
        object.__setattr__(self, 'p', p)

    @property
    def n(self) -> int:
        return self.gamma.size

    def constraint_defects(self) -> Tuple[float, float]:
        """(|phi1 - 1|, |phi2|) with phi1 = (gamma, gamma), phi2 = (gamma, p)."""
        return abs(float(self.gamma @ self.gamma) - 1.0), abs(float(self.gamma @ self.p))

    def validate(self, tolerance: float = CONSTRAINT_TOLERANCE) -> None:
        """
        Raises:
            ValueError: If the point is off the constraint manifold
        """
        d1, d2 = self.constraint_defects()
        if d1 > tolerance:
            raise ValueError(f"(gamma, gamma) must equal 1 (defect {d1:.3e})")
        if d2 > tolerance:
            raise ValueError(f"(gamma, p) must vanish (defect {d2:.3e})")

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.gamma, self.p])

    @classmethod
    def from_vector(cls, y) -> 'CotangentPoint':
        y = np.asarray(y, dtype=float)
        return cls(y[:y.size // 2], y[y.size // 2:])


@dataclass(frozen=True, eq=False)
class ReducedFullState:
    """(k, gamma) on so(n)* x S^{n-1}; k is the momentum about the contact point."""

    k: np.ndarray
    gamma: np.ndarray

    def as_vector(self) -> np.ndarray:
        return np.concatenate([np.asarray(self.k).ravel(), self.gamma])

    @classmethod
    def from_vector(cls, y, n: int) -> 'ReducedFullState':
        y = np.asarray(y, dtype=float)
        return cls(y[:n * n].reshape(n, n), y[n * n:])


def split(y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Split a flat (gamma, p) vector."""
    n = y.size // 2
    return y[:n], y[n:]


def _c(gamma: np.ndarray, params: ChaplyginParams) -> float:
    return float(gamma @ (gamma / params.a))


# -- so(n)* x S^{n-1} ---------------------------------------------------------

def kappa_matrix(gamma, inertia: DiagonalInertia, D: float) -> np.ndarray:
    """
    Matrix of omega -> I omega + D proj_h_gamma(omega) in the E_i^E_j basis.

    Args:
        gamma: Unit vector
        inertia: Diagonal inertia operator
        D: m rho^2

    Returns:
        Symmetric positive definite m x m matrix, m = n(n-1)/2
    """
    gamma = np.asarray(gamma, dtype=float)
    n = gamma.size
    m = n * (n - 1) // 2
    columns = []
    for b in range(m):
        e = np.zeros(m)
        e[b] = 1.0
        columns.append(coefficients(proj_h_gamma(from_coefficients(e, n), gamma)))
    return inertia.matrix() + D * np.array(columns).T


def omega_from_k(k: np.ndarray, gamma, inertia: DiagonalInertia, D: float) -> np.ndarray:
    """
    Angular velocity from the momentum about the contact point.

    Solves k = I omega + D proj_h_gamma(omega) on the coefficient space.

    Raises:
        ValueError: If the linear system is singular
    """
    gamma = np.asarray(gamma, dtype=float)
    n = gamma.size
    try:
        coeffs = linalg.solve(kappa_matrix(gamma, inertia, D), coefficients(k), assume_a='pos')
    except linalg.LinAlgError as e:
        raise ValueError(f"Singular momentum-velocity map at gamma = {gamma}: {e}")
    return from_coefficients(coeffs, n)


def full_reduced_rhs(k: np.ndarray, gamma, inertia: DiagonalInertia, D: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Reduced Chaplygin equations k' = [k, omega], gamma' = -omega gamma.

    Returns:
        Tuple (k', gamma')
    """
    omega = omega_from_k(k, gamma, inertia, D)
    return commutator(k, omega), -omega @ gamma


def momentum_map(k: np.ndarray, gamma) -> np.ndarray:
    """SO(n-1) momentum pr_{so(n-1)^gamma}(k)."""
    return proj_complement(k, gamma)


def energy_full(k: np.ndarray, gamma, inertia: DiagonalInertia, D: float) -> float:
    """Kinetic energy 1/2 <k, omega>."""
    return 0.5 * inner(k, omega_from_k(k, gamma, inertia, D))


def embed(gamma, p) -> ReducedFullState:
    """Zero-momentum embedding (gamma, p) -> (gamma ^ p, gamma)."""
    return ReducedFullState(wedge(gamma, p), np.array(gamma, dtype=float))


def embed_velocity(gamma, p, gamma_dot, p_dot) -> np.ndarray:
    """Pushforward of a (gamma, p) velocity: gamma' ^ p + gamma ^ p'."""
    return wedge(gamma_dot, p) + wedge(gamma, p_dot)


# -- T*S^{n-1}, generic diagonal inertia --------------------------------------

def xi_from_p(gamma, p, inertia: DiagonalInertia, D: float) -> np.ndarray:
    """
    Solve p = xi - D I^{-1}(gamma ^ xi) gamma for xi orthogonal to gamma.

    The system is restricted to the orthogonal complement of gamma.

    Raises:
        ValueError: If the restricted system is singular
    """
    gamma = np.asarray(gamma, dtype=float)
    p = np.asarray(p, dtype=float)
    n = gamma.size

    def operator(xi):
        return xi - D * inertia.apply_inverse(wedge(gamma, xi)) @ gamma

    basis = linalg.null_space(gamma[None, :])
    restricted = np.array([basis.T @ operator(basis[:, j]) for j in range(n - 1)]).T
    try:
        eta = linalg.solve(restricted, basis.T @ p)
    except linalg.LinAlgError as e:
        raise ValueError(f"Singular xi-system at gamma = {gamma}: {e}")
    return basis @ eta


def xi_closed(gamma, p, params: ChaplyginParams) -> np.ndarray:
    """Closed form xi = (A p - (p, A gamma) gamma) / (D (gamma, A^{-1} gamma))."""
    gamma = np.asarray(gamma, dtype=float)
    p = np.asarray(p, dtype=float)
    Ap = params.a * p
    return (Ap - float(p @ (params.a * gamma)) * gamma) / (params.D * _c(gamma, params))


def cotangent_rhs(gamma, p, inertia: DiagonalInertia, D: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Reduced flow on T*S^{n-1}: omega = I^{-1}(gamma ^ xi), gamma' = -omega gamma, p' = -omega p.
    """
    xi = xi_from_p(gamma, p, inertia, D)
    omega = inertia.apply_inverse(wedge(gamma, xi))
    return -omega @ gamma, -omega @ p


def omega_closed(gamma, p, params: ChaplyginParams) -> np.ndarray:
    """Angular velocity (A^{-1}gamma ^ p - gamma ^ A p / D) / (D c) for the Chaplygin operator."""
    gamma = np.asarray(gamma, dtype=float)
    p = np.asarray(p, dtype=float)
    D = params.D
    return (wedge(gamma / params.a, p) - wedge(gamma, params.a * p) / D) / (D * _c(gamma, params))


def cotangent_rhs_closed(gamma, p, params: ChaplyginParams) -> Tuple[np.ndarray, np.ndarray]:
    """
    Extended reduced Chaplygin equations on R^{2n} minus {gamma = 0}.

    Args:
        gamma: Vector, not necessarily unit
        p: Momentum, not necessarily orthogonal to gamma
        params: ChaplyginParams

    Returns:
        Tuple (gamma', p')

    Raises:
        ValueError: If gamma = 0
    """
    gamma = np.asarray(gamma, dtype=float)
    p = np.asarray(p, dtype=float)
    if not np.any(gamma):
        raise ValueError("Extended Chaplygin field is undefined at gamma = 0")
    a, D = params.a, params.D
    c = _c(gamma, params)
    a_inv_gamma = gamma / a
    Ap = a * p
    gp, gg, pp = gamma @ p, gamma @ gamma, p @ p
    gamma_dot = (p / D - gp / (D * c) * a_inv_gamma + (gamma @ Ap) / (D * D * c) * gamma
                 - gg / (D * D * c) * Ap)
    p_dot = ((p @ a_inv_gamma) / (D * c) * p - pp / (D * c) * a_inv_gamma
             + (p @ Ap) / (D * D * c) * gamma - gp / (D * D * c) * Ap)
    return gamma_dot, p_dot


def hamiltonian_reduced(gamma, p, inertia: DiagonalInertia, D: float) -> float:
    """Reduced Hamiltonian 1/2 <gamma ^ p, I^{-1}(gamma ^ xi)>."""
    xi = xi_from_p(gamma, p, inertia, D)
    return 0.5 * inner(wedge(gamma, p), inertia.apply_inverse(wedge(gamma, xi)))


def hamiltonian_closed(gamma, p, params: ChaplyginParams) -> float:
    """Chaplygin Hamiltonian (D c (p, p) - (p, A p)) / (2 D^2 c)."""
    gamma = np.asarray(gamma, dtype=float)
    p = np.asarray(p, dtype=float)
    c = _c(gamma, params)
    D = params.D
    return float((D * c * (p @ p) - p @ (params.a * p)) / (2.0 * D * D * c))


def hamiltonian_closed_gradient(gamma, p, params: ChaplyginParams) -> np.ndarray:
    """Gradient of hamiltonian_closed with respect to (gamma, p)."""
    gamma = np.asarray(gamma, dtype=float)
    p = np.asarray(p, dtype=float)
    D = params.D
    c = _c(gamma, params)
    d_gamma = float(p @ (params.a * p)) * (gamma / params.a) / (D * D * c * c)
    d_p = p / D - params.a * p / (D * D * c)
    return np.concatenate([d_gamma, d_p])


def momentum_K(gamma, p) -> float:
    """Reduced momentum K = (gamma, gamma)(p, p) - (gamma, p)^2."""
    gamma = np.asarray(gamma, dtype=float)
    p = np.asarray(p, dtype=float)
    return float((gamma @ gamma) * (p @ p) - (gamma @ p) ** 2)


# -- invariant measures -------------------------------------------------------

def measure_density(gamma, a) -> float:
    """Invariant density (gamma, A^{-1} gamma)^{-(n-2)/2}."""
    gamma = np.asarray(gamma, dtype=float)
    c = float(gamma @ (gamma / np.asarray(a, dtype=float)))
    return c ** (-(gamma.size - 2) / 2.0)


def measure_density_gradient(gamma, a) -> np.ndarray:
    """Gradient of measure_density in gamma: -(n-2) c^{-n/2} A^{-1} gamma."""
    gamma = np.asarray(gamma, dtype=float)
    a = np.asarray(a, dtype=float)
    n = gamma.size
    c = float(gamma @ (gamma / a))
    return -(n - 2) * c ** (-n / 2.0) * gamma / a


def divergence_formula(gamma, p, params: ChaplyginParams) -> float:
    """
    Divergence of the extended Chaplygin field in R^{2n}.

    (n-2) [(gamma, A^{-1}p)/(D c) + (gamma, A p)/(D^2 c)] + Psi, where Psi
    is proportional to (gamma, p).
    """
    gamma = np.asarray(gamma, dtype=float)
    p = np.asarray(p, dtype=float)
    a, D = params.a, params.D
    n = gamma.size
    c = _c(gamma, params)
    main = (n - 2) * ((gamma @ (p / a)) / (D * c) + (gamma @ (a * p)) / (D * D * c))
    psi = (2.0 * (gamma @ (gamma / a ** 2)) / (D * c * c) + 2.0 * (gamma @ gamma) / (D * D * c * c)
           - np.sum(1.0 / a) / (D * c) - np.sum(a) / (D * D * c)) * (gamma @ p)
    return float(main + psi)


def measure_density_full(gamma, inertia: DiagonalInertia, D: float) -> float:
    """Density 1/sqrt(det(I + D proj_h_gamma)) on so(n)* x S^{n-1}."""
    sign, logdet = np.linalg.slogdet(kappa_matrix(gamma, inertia, D))
    if sign <= 0:
        raise ValueError("Momentum-velocity map is not positive definite")
    return float(np.exp(-0.5 * logdet))


# -- classical 3-D ball -------------------------------------------------------

def classical3d_omega(k, gamma, I, D: float) -> np.ndarray:
    """Solve k = I w + D w - D (w, gamma) gamma for the angular velocity."""
    gamma = np.asarray(gamma, dtype=float)
    matrix = np.diag(np.asarray(I, dtype=float)) + D * (np.eye(3) - np.outer(gamma, gamma))
    return linalg.solve(matrix, np.asarray(k, dtype=float), assume_a='pos')


def classical3d_momentum(omega, gamma, I, D: float) -> np.ndarray:
    """k = I w + D w - D (w, gamma) gamma."""
    omega = np.asarray(omega, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    return np.asarray(I, dtype=float) * omega + D * omega - D * float(omega @ gamma) * gamma


def classical3d_rhs(k, gamma, I, D: float) -> Tuple[np.ndarray, np.ndarray]:
    """Classical Chaplygin ball: k' = k x w, gamma' = gamma x w."""
    omega = classical3d_omega(k, gamma, I, D)
    return np.cross(k, omega), np.cross(gamma, omega)


def classical3d_integrals(k, gamma, I, D: float) -> Tuple[float, float, float, float]:
    """(F1, F2, F3, F4) = ((k, gamma), (gamma, gamma), 1/2 (k, w), (k, k))."""
    k = np.asarray(k, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    omega = classical3d_omega(k, gamma, I, D)
    return float(k @ gamma), float(gamma @ gamma), float(0.5 * k @ omega), float(k @ k)


def classical3d_measure(gamma, I, D: float) -> float:
    """
    Chaplygin density 1/sqrt(det(I + D) (1 - D (gamma, (I + D)^{-1} gamma))).

    Raises:
        ValueError: If the radicand is not positive
    """
    gamma = np.asarray(gamma, dtype=float)
    shifted = np.asarray(I, dtype=float) + D
    radicand = float(np.prod(shifted) * (1.0 - D * (gamma @ (gamma / shifted))))
    if radicand <= 0:
        raise ValueError(f"Chaplygin density radicand must be positive, got {radicand:g}")
    return 1.0 / np.sqrt(radicand)


def classical3d_lagrange_integral(k, gamma, I, D: float) -> float:
    """
    Extra integral k_3^2 / (1 - D (gamma, (I + D)^{-1} gamma)) for I1 = I2.

    Conserved on the zero-momentum slice (k, gamma) = 0.

    Raises:
        ValueError: If I1 != I2
    """
    I = np.asarray(I, dtype=float)
    if not np.isclose(I[0], I[1], rtol=1e-14, atol=0.0):
        raise ValueError("Lagrange integral requires I1 = I2")
    gamma = np.asarray(gamma, dtype=float)
    k3 = float(k[2])
    return k3 ** 2 / (1.0 - D * float(gamma @ (gamma / (I + D))))


# -- homogeneous ball ---------------------------------------------------------

def homogeneous_rhs(gamma, p, s: float, D: float) -> Tuple[np.ndarray, np.ndarray]:
    """Geodesic flow of the round sphere: gamma' = p/(s+D), p' = -(p, p) gamma/(s+D)."""
    gamma = np.asarray(gamma, dtype=float)
    p = np.asarray(p, dtype=float)
    return p / (s + D), -(p @ p) * gamma / (s + D)


def homogeneous_omega(gamma, p, s: float, D: float) -> np.ndarray:
    """Constant angular velocity (gamma ^ p)/(s + D) of the homogeneous ball."""
    return wedge(gamma, p) / (s + D)


def homogeneous_solution(gamma0, p0, s: float, D: float, t) -> Tuple[np.ndarray, np.ndarray]:
    """
    Great-circle solution of homogeneous_rhs.

    Returns:
        Arrays (gamma(t), p(t)) of shape (len(t), n)
    """
    gamma0 = np.asarray(gamma0, dtype=float)
    p0 = np.asarray(p0, dtype=float)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    speed = np.linalg.norm(p0)
    if speed == 0:
        return np.tile(gamma0, (t.size, 1)), np.zeros((t.size, gamma0.size))
    nu = speed / (s + D)
    u = p0 / speed
    cos, sin = np.cos(nu * t)[:, None], np.sin(nu * t)[:, None]
    return cos * gamma0 + sin * u, speed * (cos * u - sin * gamma0)


# -- reconstruction -----------------------------------------------------------

@dataclass
class PoseTrajectory:
    """Attitude g(t) in SO(n) and contact point r(t) in the plane."""

    times: np.ndarray
    rotations: np.ndarray
    positions: np.ndarray
    rho: float

    def orthogonality_defect(self) -> float:
        return max(orthogonality_defect(g) for g in self.rotations)

    def straightness_defect(self) -> float:
        """Max distance of r(t) from the chord between r(0) and r(T), at uniform speed."""
        T = self.times[-1] - self.times[0]
        fraction = ((self.times - self.times[0]) / T)[:, None]
        line = self.positions[0] + fraction * (self.positions[-1] - self.positions[0])
        return float(np.max(np.linalg.norm(self.positions - line, axis=1)))


def contact_velocity(g: np.ndarray, omega: np.ndarray, rho: float) -> np.ndarray:
    """Velocity rho g omega g^T Gamma of the ball center; its Gamma component vanishes."""
    n = g.shape[0]
    return rho * (g @ omega @ g.T)[:, n - 1]


def reconstruct(times, omegas, g0: np.ndarray, r0, rho: float,
                step: float = 1e-3, projection: bool = True,
                omega_of_t: Optional[Callable[[float], np.ndarray]] = None) -> PoseTrajectory:
    """
    Integrate g' = g omega and r'_i = rho (g omega g^T Gamma)_i, i < n.

    Args:
        times: Sample times of omega (increasing, starting at the initial time)
        omegas: Sampled angular velocities, shape (m, n, n)
        g0: Initial attitude in SO(n)
        r0: Initial contact point, length n - 1
        rho: Ball radius
        step: RK4 step
        projection: Re-orthogonalize g after each step (polar factor)
        omega_of_t: Optional exact omega(t) overriding the sampled data

    Returns:
        PoseTrajectory

    Raises:
        ValueError: If g0 is not a rotation
    """
    validate_rotation(g0)
    times = np.asarray(times, dtype=float)
    omegas = np.asarray(omegas, dtype=float)
    n = g0.shape[0]
    t0 = float(times[0])
    if omega_of_t is None:
        spline = CubicSpline(times, omegas.reshape(times.size, -1), axis=0)

        def omega_of_t(t):
            return spline(t).reshape(n, n)

    def rhs(y):
        t = t0 + y[0]
        g = y[1:1 + n * n].reshape(n, n)
        omega = omega_of_t(t)
        g_dot = g @ omega
        r_dot = contact_velocity(g, omega, rho)[:n - 1]
        return np.concatenate([[1.0], g_dot.ravel(), r_dot])

    def project(y):
        out = y.copy()
        g = y[1:1 + n * n].reshape(n, n)
        out[1:1 + n * n] = linalg.polar(g)[0].ravel()
        return out

    y0 = np.concatenate([[0.0], np.asarray(g0, dtype=float).ravel(), np.asarray(r0, dtype=float)])
    config = IntegratorConfig(method='rk4', step=step, t_end=float(times[-1] - t0), projection=projection)
    traj = integrate(rhs, y0, config, project=project)
    rotations = traj.states[:, 1:1 + n * n].reshape(-1, n, n)
    return PoseTrajectory(traj.times + t0, rotations, traj.states[:, 1 + n * n:], float(rho))
