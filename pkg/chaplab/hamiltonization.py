"""
Hamiltonization of the reduced Chaplygin sphere.

The multiplier N = 1/(D sqrt(gamma, A^{-1} gamma)) turns the t-flow
into the geodesic flow of H* in the new time tau (dtau = N dt) after
rescaling the momenta, p_tilde = N p. The geodesic flow is written on
R^{2n} with the Dirac bracket of the constraints psi1 = (gamma, gamma),
psi2 = (gamma, p_tilde).
"""

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np
from scipy import linalg
from scipy.interpolate import CubicSpline, PchipInterpolator

from chaplab import chaplygin
from chaplab.inertia import ChaplyginParams
from chaplab.numerics import Trajectory, fd_gradient


logger = logging.getLogger(__name__)

Gradient = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class TildePoint:
    """(gamma, p_tilde) with psi1 = 1 and psi2 = 0."""

    gamma: np.ndarray
    p_tilde: np.ndarray

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.gamma, self.p_tilde])

    def validate(self, tolerance: float = 1e-10) -> None:
        chaplygin.CotangentPoint(self.gamma, self.p_tilde).validate(tolerance)


def _c(gamma, a) -> float:
    gamma = np.asarray(gamma, dtype=float)
    return float(gamma @ (gamma / np.asarray(a, dtype=float)))


def multiplier(gamma, a, D: float) -> float:
    """Reducing multiplier N = 1/(D sqrt(gamma, A^{-1} gamma))."""
    return 1.0 / (D * np.sqrt(_c(gamma, a)))


def clock_bounds(a, D: float) -> Tuple[float, float]:
    """Range of N on the unit sphere: [1/(D sqrt(a_max)), 1/(D sqrt(a_min))]."""
    a = np.asarray(a, dtype=float)
    return 1.0 / (D * np.sqrt(a.max())), 1.0 / (D * np.sqrt(a.min()))


def to_tilde(gamma, p, a, D: float) -> np.ndarray:
    """Momentum rescaling p_tilde = N(gamma) p."""
    return np.asarray(p, dtype=float) * multiplier(gamma, a, D)


def from_tilde(gamma, p_tilde, a, D: float) -> np.ndarray:
    """Inverse of to_tilde."""
    return np.asarray(p_tilde, dtype=float) / multiplier(gamma, a, D)


def hamiltonian_star(gamma, p_tilde, a, D: float) -> float:
    """Geodesic Hamiltonian 1/2 (D (gamma, A^{-1} gamma)(p~, p~) - (p~, A p~))."""
    p_tilde = np.asarray(p_tilde, dtype=float)
    a = np.asarray(a, dtype=float)
    return 0.5 * float(D * _c(gamma, a) * (p_tilde @ p_tilde) - p_tilde @ (a * p_tilde))


def hamiltonian_star_gradient(gamma, p_tilde, a, D: float) -> np.ndarray:
    """Gradient of H*: (D (p~, p~) A^{-1} gamma, D c p~ - A p~)."""
    gamma = np.asarray(gamma, dtype=float)
    p_tilde = np.asarray(p_tilde, dtype=float)
    a = np.asarray(a, dtype=float)
    d_gamma = D * float(p_tilde @ p_tilde) * gamma / a
    d_p = D * _c(gamma, a) * p_tilde - a * p_tilde
    return np.concatenate([d_gamma, d_p])


def momentum_K_tilde(gamma, p_tilde, a, D: float) -> float:
    """Reduced momentum in tilde variables, K = D^2 (gamma, A^{-1} gamma)(p~, p~)."""
    p_tilde = np.asarray(p_tilde, dtype=float)
    return float(D * D * _c(gamma, a) * (p_tilde @ p_tilde))


def momentum_K_tilde_gradient(gamma, p_tilde, a, D: float) -> np.ndarray:
    gamma = np.asarray(gamma, dtype=float)
    p_tilde = np.asarray(p_tilde, dtype=float)
    a = np.asarray(a, dtype=float)
    return np.concatenate([2.0 * D * D * float(p_tilde @ p_tilde) * gamma / a,
                           2.0 * D * D * _c(gamma, a) * p_tilde])


def psi_gradients(gamma, p_tilde) -> Tuple[np.ndarray, np.ndarray]:
    """Gradients of psi1 = (gamma, gamma) and psi2 = (gamma, p~)."""
    gamma = np.asarray(gamma, dtype=float)
    p_tilde = np.asarray(p_tilde, dtype=float)
    return (np.concatenate([2.0 * gamma, np.zeros_like(gamma)]),
            np.concatenate([p_tilde, gamma]))


def lagrange_multipliers(gamma, p_tilde, a, D: float) -> Tuple[float, float]:
    """
    Multipliers keeping psi1 and psi2 invariant.

    Returns:
        (lambda, mu) with lambda = (A p~, p~)/(2 (gamma, gamma)) and
        mu = (D c (p~, gamma) - (A p~, gamma))/(gamma, gamma)
    """
    gamma = np.asarray(gamma, dtype=float)
    p_tilde = np.asarray(p_tilde, dtype=float)
    a = np.asarray(a, dtype=float)
    gg = float(gamma @ gamma)
    Ap = a * p_tilde
    lam = float(Ap @ p_tilde) / (2.0 * gg)
    mu = (D * _c(gamma, a) * float(p_tilde @ gamma) - float(Ap @ gamma)) / gg
    return lam, mu


def geodesic_rhs(gamma, p_tilde, a, D: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Geodesic flow of H* in the time tau, extended to R^{2n} minus {gamma = 0}.

    gamma' = dH/dp~ - mu gamma, p~' = -dH/dgamma + 2 lambda gamma + mu p~.

    Raises:
        ValueError: If gamma = 0
    """
    gamma = np.asarray(gamma, dtype=float)
    p_tilde = np.asarray(p_tilde, dtype=float)
    if not np.any(gamma):
        raise ValueError("Geodesic field is undefined at gamma = 0")
    a = np.asarray(a, dtype=float)
    gg = float(gamma @ gamma)
    c = _c(gamma, a)
    Ap = a * p_tilde
    g_Ap = float(gamma @ Ap)
    Dc_pg = D * c * float(p_tilde @ gamma)
    gamma_prime = D * c * p_tilde - Ap + g_Ap / gg * gamma - Dc_pg / gg * gamma
    p_prime = (-D * float(p_tilde @ p_tilde) * gamma / a + float(p_tilde @ Ap) / gg * gamma
               - g_Ap / gg * p_tilde + Dc_pg / gg * p_tilde)
    return gamma_prime, p_prime


def canonical_bracket(grad_f: np.ndarray, grad_g: np.ndarray) -> float:
    """{F, G} = sum dF/dgamma_i dG/dp_i - dF/dp_i dG/dgamma_i."""
    n = grad_f.size // 2
    return float(grad_f[:n] @ grad_g[n:] - grad_f[n:] @ grad_g[:n])


def dirac_bracket(grad_f: np.ndarray, grad_g: np.ndarray, gamma, p_tilde) -> float:
    """
    Dirac bracket of two functions from their gradients at (gamma, p~).

    {F, G}_d = {F, G} - ({F, psi1}{G, psi2} - {F, psi2}{G, psi1}) / {psi1, psi2}

    Raises:
        ValueError: If {psi1, psi2} = 2 (gamma, gamma) vanishes
    """
    d_psi1, d_psi2 = psi_gradients(gamma, p_tilde)
    denominator = canonical_bracket(d_psi1, d_psi2)
    if denominator == 0.0:
        raise ValueError("Dirac bracket is undefined at gamma = 0")
    correction = (canonical_bracket(grad_f, d_psi1) * canonical_bracket(grad_g, d_psi2)
                  - canonical_bracket(grad_f, d_psi2) * canonical_bracket(grad_g, d_psi1))
    return canonical_bracket(grad_f, grad_g) - correction / denominator


def dirac_bracket_of(f: Callable[[np.ndarray], float], g: Callable[[np.ndarray], float], gamma, p_tilde,
                     grad_f: Optional[Gradient] = None, grad_g: Optional[Gradient] = None,
                     step: float = 1e-6) -> float:
    """
    Dirac bracket of scalar functions of the flat state (gamma, p~).

    Analytic gradients are used when supplied; central differences
    otherwise.
    """
    x = np.concatenate([gamma, p_tilde])
    gf = grad_f(gamma, p_tilde) if grad_f is not None else fd_gradient(f, x, step)
    gg = grad_g(gamma, p_tilde) if grad_g is not None else fd_gradient(g, x, step)
    return dirac_bracket(gf, gg, gamma, p_tilde)


def dirac_flow(grad_h: np.ndarray, gamma, p_tilde) -> np.ndarray:
    """Vector field x_i' = {x_i, H}_d for all coordinates x = (gamma, p~)."""
    n = np.asarray(gamma).size
    basis = np.eye(2 * n)
    return np.array([dirac_bracket(basis[i], grad_h, gamma, p_tilde) for i in range(2 * n)])


def almost_symplectic_matrix(gamma, p, a) -> np.ndarray:
    """
    Matrix W of the reduced almost symplectic form in (gamma, p), w(Y, Z) = Y^T W Z.

    w = sum dp_i ^ dgamma_i - (p_i a_j^{-1} gamma_j / c) dgamma_j ^ dgamma_i
    """
    gamma = np.asarray(gamma, dtype=float)
    p = np.asarray(p, dtype=float)
    n = gamma.size
    u = gamma / np.asarray(a, dtype=float)
    c = float(gamma @ u)
    W = np.zeros((2 * n, 2 * n))
    W[n:, :n] = np.eye(n)
    W[:n, n:] = -np.eye(n)
    W[:n, :n] = (np.outer(p, u) - np.outer(u, p)) / c
    return W


def almost_symplectic_check(gamma, p, params: ChaplyginParams) -> float:
    """
    Residual of i_X w = dH on the tangent space of T*S^{n-1}.

    Returns:
        max over a tangent basis v of |w(v, X) - dH(v)|
    """
    gamma = np.asarray(gamma, dtype=float)
    p = np.asarray(p, dtype=float)
    n = gamma.size
    W = almost_symplectic_matrix(gamma, p, params.a)
    X = np.concatenate(chaplygin.cotangent_rhs_closed(gamma, p, params))
    dH = chaplygin.hamiltonian_closed_gradient(gamma, p, params)
    constraints = np.zeros((2, 2 * n))
    constraints[0, :n] = gamma
    constraints[1, :n] = p
    constraints[1, n:] = gamma
    tangent = linalg.null_space(constraints)
    residuals = tangent.T @ W @ X - tangent.T @ dH
    return float(np.max(np.abs(residuals)))


@dataclass(frozen=True, eq=False)
class ClockMap:
    """Monotone correspondence between the times t and tau."""

    t: np.ndarray
    tau: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        tau = np.asarray(self.tau, dtype=float)
        if t.shape != tau.shape or t.size < 2:
            raise ValueError("ClockMap needs matching t and tau samples (at least two)")
        if np.any(np.diff(t) <= 0) or np.any(np.diff(tau) <= 0):
            raise ValueError("ClockMap must be strictly increasing in both clocks")
        object.__setattr__(self, 't', t)
        object.__setattr__(self, 'tau', tau)

    def tau_of(self, t) -> np.ndarray:
        return PchipInterpolator(self.t, self.tau)(t)

    def t_of(self, tau) -> np.ndarray:
        return PchipInterpolator(self.tau, self.t)(tau)

    def rates(self) -> np.ndarray:
        """Finite-difference dtau/dt between samples."""
        return np.diff(self.tau) / np.diff(self.t)


def reparametrize(traj_t: Trajectory, a, D: float) -> Tuple[ClockMap, Trajectory]:
    """
    Map a t-flow trajectory of the Chaplygin sphere to the tau clock.

    tau(t) is taken from the trajectory when it was integrated with the
    multiplier as a clock, otherwise from the spline antiderivative of N
    sampled along the trajectory.

    Args:
        traj_t: Trajectory with (gamma, p) states
        a: Parameters a_i
        D: m rho^2

    Returns:
        Tuple of (ClockMap, Trajectory in tau with (gamma, p~) states)
    """
    n = traj_t.states.shape[1] // 2
    gammas = traj_t.states[:, :n]
    if traj_t.tau is not None:
        tau = traj_t.tau - traj_t.tau[0]
    else:
        rates = np.array([multiplier(g, a, D) for g in gammas])
        tau = CubicSpline(traj_t.times, rates).antiderivative()(traj_t.times)
        tau -= tau[0]
    clock = ClockMap(traj_t.times, tau)
    states = np.array([np.concatenate([g, to_tilde(g, p, a, D)])
                       for g, p in zip(gammas, traj_t.states[:, n:])])
    metadata = dict(traj_t.metadata)
    metadata['clock'] = 'tau'
    logger.debug("Reparametrized %d samples, tau_end = %.6g", len(traj_t), tau[-1])
    return clock, Trajectory(tau, states, tau=tau, metadata=metadata)
