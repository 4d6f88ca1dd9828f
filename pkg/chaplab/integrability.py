"""
Integrability of the geodesic flows on T*S^{n-1}.

Spheroconical coordinates, the Staeckel family F_0, ..., F_{n-2} of
commuting quadratic integrals (F_0 is the Veselova Hamiltonian), the
linear integrals f_ij for equal parameters, the Lagrange-case integrals
of the Chaplygin flow and the shared-foliation check.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg, optimize

from chaplab import chaplygin, hamiltonization, veselova
from chaplab.inertia import ChaplyginParams, ParameterError
from chaplab.numerics import (
    IntegratorConfig,
    Trajectory,
    integrate,
    max_drift,
)


logger = logging.getLogger(__name__)

ROOT_TOLERANCE = 1e-15
SPECTRAL_GAP = 1e-6
CHART_BOUNDARY = 1e-12
CHART_MARGIN = 1e-3
COMPLEX_STEP = 1e-30
RANK_TOLERANCE = 1e-8


class ChartError(ValueError):
    """Raised when a point lies outside the spheroconical chart."""


@dataclass(frozen=True, eq=False)
class SpheroconicalPoint:
    """Coordinates a_1 < lambda_1 < a_2 < ... < lambda_{n-1} < a_n and momenta mu_k."""

    lam: np.ndarray
    mu: np.ndarray

    def __post_init__(self):
        lam = np.array(self.lam, dtype=float).ravel()
        mu = np.array(self.mu, dtype=float).ravel()
        if lam.shape != mu.shape:
            raise ChartError(f"lambda and mu must have the same length, got {lam.size} and {mu.size}")
        object.__setattr__(self, 'lam', lam)
        object.__setattr__(self, 'mu', mu)

    def validate(self, a) -> None:
        """
        Raises:
            ChartError: If the interlacing a_k < lambda_k < a_{k+1} fails
        """
        a = np.asarray(a, dtype=float)
        if self.lam.size != a.size - 1:
            raise ChartError(f"Need {a.size - 1} coordinates for n = {a.size}, got {self.lam.size}")
        if np.any(self.lam <= a[:-1]) or np.any(self.lam >= a[1:]):
            raise ChartError(f"Coordinates {self.lam.tolist()} do not interlace {a.tolist()}")


def check_spectrum(a) -> np.ndarray:
    """
    Raises:
        ChartError: If a is not strictly increasing with gaps above SPECTRAL_GAP
    """
    a = np.asarray(a, dtype=float)
    gaps = np.diff(a)
    if np.any(gaps < SPECTRAL_GAP):
        raise ChartError(f"Spheroconical chart needs a_1 < ... < a_n separated by {SPECTRAL_GAP:g}, got {a.tolist()}")
    return a


def chart_vectors(gamma, lam, a) -> np.ndarray:
    """Coordinate vectors d gamma / d lambda_k = -gamma_i / (2 (a_i - lambda_k)), one per row."""
    gamma = np.asarray(gamma, dtype=float)
    a = np.asarray(a, dtype=float)
    return -0.5 * gamma[None, :] / (a[None, :] - np.asarray(lam, dtype=float)[:, None])


def _stackel_weights(lam, a) -> np.ndarray:
    """-4 prod_i (lambda_k - a_i) / prod_{s != k} (lambda_k - lambda_s), i.e. 1 / |d gamma / d lambda_k|^2."""
    k_count = lam.size
    weights = []
    for k in range(k_count):
        others = np.delete(lam, k)
        weights.append(-4.0 * np.prod(lam[k] - a) / np.prod(lam[k] - others))
    return np.array(weights)


def cartesian_from_spheroconical(pt: SpheroconicalPoint, a, signs=None) -> hamiltonization.TildePoint:
    """
    Map (lambda, mu) to (gamma, p~) on T*S^{n-1}.

    Args:
        pt: SpheroconicalPoint
        a: Strictly increasing parameters
        signs: Sign pattern of gamma (defaults to all positive)

    Returns:
        TildePoint

    Raises:
        ChartError: On interlacing violation
    """
    a = check_spectrum(a)
    pt.validate(a)
    n = a.size
    squares = np.array([np.prod(a[i] - pt.lam) / np.prod(a[i] - np.delete(a, i)) for i in range(n)])
    signs = np.ones(n) if signs is None else np.sign(np.asarray(signs, dtype=float))
    gamma = signs * np.sqrt(np.maximum(squares, 0.0))
    vectors = chart_vectors(gamma, pt.lam, a)
    weights = _stackel_weights(pt.lam, a)
    p_tilde = (weights * pt.mu) @ vectors
    return hamiltonization.TildePoint(gamma, p_tilde)


def _secular(lam: float, gamma2: np.ndarray, a: np.ndarray) -> float:
    return float(np.sum(gamma2 / (a - lam)))


def spheroconical_from_cartesian(gamma, p_tilde, a) -> SpheroconicalPoint:
    """
    Invert cartesian_from_spheroconical.

    lambda_k are the roots of sum gamma_i^2/(a_i - lambda) in (a_k, a_{k+1}),
    found by bracketed root finding; mu_k = (p~, d gamma / d lambda_k).

    Raises:
        ChartError: If gamma lies on a coordinate hyperplane
    """
    a = check_spectrum(a)
    gamma = np.asarray(gamma, dtype=float)
    p_tilde = np.asarray(p_tilde, dtype=float)
    gamma2 = gamma ** 2
    if np.any(gamma2 <= CHART_BOUNDARY):
        raise ChartError(f"gamma = {gamma.tolist()} lies on the chart boundary (a component vanishes)")
    lam = np.empty(a.size - 1)
    for k in range(a.size - 1):
        # the secular function increases from -inf to +inf across (a_k, a_{k+1})
        lo, hi = np.nextafter(a[k], a[k + 1]), np.nextafter(a[k + 1], a[k])
        if not (_secular(lo, gamma2, a) < 0.0 < _secular(hi, gamma2, a)):
            raise ChartError(f"Cannot bracket lambda_{k + 1} in ({a[k]:g}, {a[k + 1]:g}); gamma is too close to the chart boundary")
        logger.debug("Root bracket %d: [%.17g, %.17g]", k, lo, hi)
        lam[k] = optimize.brentq(_secular, lo, hi, args=(gamma2, a), xtol=ROOT_TOLERANCE * a[k + 1],
                                 rtol=4 * np.finfo(float).eps)
    mu = chart_vectors(gamma, lam, a) @ p_tilde
    return SpheroconicalPoint(lam, mu)


def chart_identities(gamma, p_tilde, a) -> Dict[str, float]:
    """
    Residuals of the quadratic-form identities in spheroconical variables.

    (p~, p~) = sum w_k mu_k^2, (A p~, p~) = sum w_k lambda_k mu_k^2,
    (gamma, A^{-1} gamma) = prod lambda / prod a, with
    w_k = -4 prod_i (lambda_k - a_i) / prod_{s != k}(lambda_k - lambda_s).
    """
    a = check_spectrum(a)
    gamma = np.asarray(gamma, dtype=float)
    p_tilde = np.asarray(p_tilde, dtype=float)
    chart = spheroconical_from_cartesian(gamma, p_tilde, a)
    weights = _stackel_weights(chart.lam, a)
    return {
        'p_norm': abs(float(p_tilde @ p_tilde) - float(np.sum(weights * chart.mu ** 2))),
        'c': abs(float(gamma @ (gamma / a)) - float(np.prod(chart.lam) / np.prod(a))),
        'A_norm': abs(float(p_tilde @ (a * p_tilde)) - float(np.sum(weights * chart.lam * chart.mu ** 2))),
    }


def _stackel_family(lam, mu, a, D: float) -> np.ndarray:
    """F_m = sum_k poly(lambda without k)[m] U_k / prod_{s != k}(lambda_k - lambda_s); works on complex input."""
    count = lam.size
    family = np.zeros(count, dtype=np.result_type(lam, mu))
    for k in range(count):
        others = np.delete(lam, k)
        U = -2.0 * D * D * np.prod(lam[k] - a) * lam[k] * mu[k] ** 2
        coefficients = np.poly(others) if count > 1 else np.ones(1)
        family += coefficients * U / np.prod(lam[k] - others)
    return family


def staeckel_integrals(gamma, p_tilde, a, D: float) -> np.ndarray:
    """
    Commuting quadratic integrals F_0, ..., F_{n-2} of the geodesic flows.

    With U_k = -2 D^2 prod_i (lambda_k - a_i) lambda_k mu_k^2,
    F_m = sum_k (-1)^m e_m(lambda without k) U_k / prod_{s != k}(lambda_k - lambda_s).
    F_0 is the Veselova Hamiltonian and F_{n-2} = (-1)^n (prod a / 2) K.

    Raises:
        ChartError: Outside the chart interior
    """
    a = check_spectrum(a)
    chart = spheroconical_from_cartesian(gamma, p_tilde, a)
    return np.real(_stackel_family(chart.lam, chart.mu, a, D)).astype(float)


def staeckel_gradients(gamma, p_tilde, a, D: float) -> np.ndarray:
    """
    Gradients of F_0, ..., F_{n-2} with respect to (gamma, p~), one per row.

    Derivatives in (lambda, mu) are taken by complex step; the chart
    Jacobian is analytic.
    """
    a = check_spectrum(a)
    gamma = np.asarray(gamma, dtype=float)
    p_tilde = np.asarray(p_tilde, dtype=float)
    chart = spheroconical_from_cartesian(gamma, p_tilde, a)
    lam, mu = chart.lam, chart.mu
    count = lam.size
    n = a.size

    d_lam = np.zeros((count, count))
    d_mu = np.zeros((count, count))
    for j in range(count):
        shifted = lam.astype(complex)
        shifted[j] += 1j * COMPLEX_STEP
        d_lam[:, j] = np.imag(_stackel_family(shifted, mu.astype(complex), a, D)) / COMPLEX_STEP
        shifted = mu.astype(complex)
        shifted[j] += 1j * COMPLEX_STEP
        d_mu[:, j] = np.imag(_stackel_family(lam.astype(complex), shifted, a, D)) / COMPLEX_STEP

    # chart Jacobians: rows k, columns gamma_j / p_j
    inv = 1.0 / (a[None, :] - lam[:, None])
    secular_slope = np.sum(gamma[None, :] ** 2 * inv ** 2, axis=1)
    lam_gamma = -(2.0 * gamma[None, :] * inv) / secular_slope[:, None]
    mu_lam = -0.5 * np.sum(p_tilde[None, :] * gamma[None, :] * inv ** 2, axis=1)
    mu_gamma = -0.5 * p_tilde[None, :] * inv + mu_lam[:, None] * lam_gamma
    mu_p = -0.5 * gamma[None, :] * inv

    grad_gamma = d_lam @ lam_gamma + d_mu @ mu_gamma
    grad_p = d_mu @ mu_p
    out = np.zeros((count, 2 * n))
    out[:, :n] = grad_gamma
    out[:, n:] = grad_p
    return out


def _equal_pairs(a, pairs) -> List[Tuple[int, int]]:
    a = np.asarray(a, dtype=float)
    checked = []
    for i, j in pairs:
        if not (0 <= i < a.size and 0 <= j < a.size) or i == j:
            raise ParameterError(f"Invalid index pair ({i}, {j}) for n = {a.size}")
        if a[i] != a[j]:
            raise ParameterError(f"Linear integral f_{i + 1}{j + 1} requires a_i = a_j, got {a[i]:g} and {a[j]:g}")
        checked.append((int(i), int(j)))
    return checked


def linear_integral(gamma, p_tilde, i: int, j: int) -> float:
    """f_ij = gamma_i p~_j - gamma_j p~_i (no parameter check)."""
    return float(gamma[i] * p_tilde[j] - gamma[j] * p_tilde[i])


def linear_integral_gradient(gamma, p_tilde, i: int, j: int) -> np.ndarray:
    n = np.asarray(gamma).size
    grad = np.zeros(2 * n)
    grad[i], grad[j] = p_tilde[j], -p_tilde[i]
    grad[n + j], grad[n + i] = gamma[i], -gamma[j]
    return grad


def linear_integrals(gamma, p_tilde, a, pairs: Sequence[Tuple[int, int]]) -> List[float]:
    """
    Linear integrals f_ij for pairs of equal parameters.

    Args:
        gamma, p_tilde: Point of T*S^{n-1}
        a: Parameters
        pairs: Zero-based (i, j) pairs

    Raises:
        ParameterError: If a pair has a_i != a_j
    """
    return [linear_integral(gamma, p_tilde, i, j) for i, j in _equal_pairs(a, pairs)]


def is_lagrange_case(a) -> bool:
    a = np.asarray(a, dtype=float)
    return bool(a.size >= 3 and np.all(a[:-1] == a[0]) and a[-1] != a[0])


def lagrange_integrals(gamma, p, params: ChaplyginParams, strict: bool = True) -> Dict[Tuple[int, int], float]:
    """
    Integrals F_ij = (gamma_i p_j - gamma_j p_i)^2 / (gamma, A^{-1} gamma) of the Lagrange case.

    Defined for 1 <= i < j <= n-1 (zero-based keys). Under the momentum
    rescaling F_ij = D^2 f_ij^2.

    Args:
        gamma, p: Point of T*S^{n-1}
        params: Chaplygin parameters
        strict: Refuse parameters outside the Lagrange case; when off the
            same expressions are evaluated for any a (negative controls)

    Raises:
        ParameterError: With strict on, unless a_1 = ... = a_{n-1} != a_n
    """
    if strict and not is_lagrange_case(params.a):
        raise ParameterError(f"Lagrange integrals need a_1 = ... = a_(n-1) != a_n, got {params.a.tolist()}")
    gamma = np.asarray(gamma, dtype=float)
    p = np.asarray(p, dtype=float)
    c = float(gamma @ (gamma / params.a))
    values = {}
    for i in range(params.n - 1):
        for j in range(i + 1, params.n - 1):
            values[(i, j)] = (gamma[i] * p[j] - gamma[j] * p[i]) ** 2 / c
    return values


def jacobian_rank(gradients: np.ndarray, gamma, p_tilde, tolerance: float = RANK_TOLERANCE) -> int:
    """
    Numerical rank of a stack of integral gradients on the tangent space.

    The constraint directions are projected out so the rank counts
    independent integrals on T*S^{n-1}.
    """
    gamma = np.asarray(gamma, dtype=float)
    p_tilde = np.asarray(p_tilde, dtype=float)
    n = gamma.size
    constraints = np.zeros((2, 2 * n))
    constraints[0, :n] = gamma
    constraints[1, :n] = p_tilde
    constraints[1, n:] = gamma
    tangent = linalg.null_space(constraints)
    restricted = np.atleast_2d(gradients) @ tangent
    singular = np.linalg.svd(restricted, compute_uv=False)
    return int(np.sum(singular > tolerance * max(1.0, singular.max(initial=0.0))))


def return_times(traj: Trajectory, component: int, level: float = 0.0, clock: str = 't') -> np.ndarray:
    """
    Upward crossing times of state[component] through level (linear interpolation).

    Returns:
        Array of successive crossing times
    """
    times = traj.clock(clock)
    values = traj.states[:, component] - level
    crossings = np.nonzero((values[:-1] < 0) & (values[1:] >= 0))[0]
    fractions = -values[crossings] / (values[crossings + 1] - values[crossings])
    return times[crossings] + fractions * (times[crossings + 1] - times[crossings])


def _tilde_quantities(gamma, p, params: ChaplyginParams) -> Dict[str, float]:
    """Shared integrals at (gamma, p); the F_m are left out near coordinate hyperplanes."""
    a, D = params.a, params.D
    p_tilde = hamiltonization.to_tilde(gamma, p, a, D)
    values = {
        'H_star': hamiltonization.hamiltonian_star(gamma, p_tilde, a, D),
        'K': hamiltonization.momentum_K_tilde(gamma, p_tilde, a, D),
        'H_veselova': veselova.veselova_hamiltonian(gamma, p_tilde, a, D),
    }
    if np.min(np.asarray(gamma) ** 2) > CHART_MARGIN:
        for m, F in enumerate(staeckel_integrals(gamma, p_tilde, a, D)):
            values[f'F_{m}'] = float(F)
    return values


def _drifts(samples: List[Dict[str, float]]) -> Dict[str, float]:
    keys = []
    for sample in samples:
        keys.extend(key for key in sample if key not in keys)
    drifts = {}
    for key in keys:
        values = [sample[key] for sample in samples if key in sample]
        drifts[key] = max_drift(values)
    return drifts


def foliation_check(gamma0, p0, params: ChaplyginParams, config: Optional[IntegratorConfig] = None,
                    section: Optional[int] = None) -> Dict:
    """
    Integrate the Chaplygin and Veselova flows from the same (gamma, p).

    Evaluates H*, K, the Veselova Hamiltonian and F_0, ..., F_{n-2}
    through the momentum rescaling along both flows. Both flows share
    these level sets, so every drift should vanish.

    Args:
        gamma0, p0: Common initial point
        params: Chaplygin parameters (a strictly increasing)
        config: Integrator settings (projection is forced off)
        section: Optional state component used for the return-time report

    Returns:
        Report with per-flow drift dictionaries and, when section is
        given, the return times of both flows on the tau clock, their
        mean intervals and period_ratio (None with fewer than two crossings)
    """
    check_spectrum(params.a)
    config = config or IntegratorConfig()
    config = IntegratorConfig(method=config.method, step=config.step, t_end=config.t_end,
                              tolerance=config.tolerance, projection=False, stride=config.stride)
    n = params.n
    a, D = params.a, params.D
    y0 = np.concatenate([gamma0, p0])

    def chaplygin_rhs(y):
        return np.concatenate(chaplygin.cotangent_rhs_closed(y[:n], y[n:], params))

    def veselova_rhs(y):
        return np.concatenate(veselova.veselova_reduced_rhs(y[:n], y[n:], a))

    def clock(y):
        return hamiltonization.multiplier(y[:n], a, D)

    report = {'flows': {}}
    for name, rhs in (('chaplygin', chaplygin_rhs), ('veselova', veselova_rhs)):
        traj = integrate(rhs, y0, config, clock=clock)
        samples = [_tilde_quantities(y[:n], y[n:], params) for y in traj.states]
        drifts = _drifts(samples)
        entry = {'drifts': drifts, 'samples': len(traj)}
        if section is not None:
            crossings = return_times(traj, section, clock='tau')
            entry['return_times'] = crossings.tolist()
            entry['mean_return_interval'] = float(np.mean(np.diff(crossings))) if crossings.size > 1 else None
        report['flows'][name] = entry
        logger.info("Foliation drifts along %s flow: %s", name, drifts)
    report['max_drift'] = max(max(entry['drifts'].values()) for entry in report['flows'].values())
    if section is not None:
        # frequencies differ between the flows; not expected to be 1
        first, second = (report['flows'][name]['mean_return_interval'] for name in ('chaplygin', 'veselova'))
        report['period_ratio'] = first / second if first and second else None
    return report


def commutation_defect(gamma0, p0, params: ChaplyginParams, duration: float,
                       config: Optional[IntegratorConfig] = None, clock: str = 'tau') -> Dict:
    """
    Compose the Chaplygin and Veselova flows in both orders.

    On the tau clock both flows are translations on the same invariant
    tori, so Chaplygin-then-Veselova and Veselova-then-Chaplygin land on
    the same point. On the t clock the multiplier varies along the torus
    and the compositions differ.

    Args:
        gamma0, p0: Starting point
        params: Chaplygin parameters
        duration: Time run along each flow, on the chosen clock
        config: Integrator settings (step, method); t_end is replaced
        clock: 'tau' or 't'

    Returns:
        Report with the discrepancy between the two end points
    """
    if clock not in ('t', 'tau'):
        raise ValueError(f"clock must be 't' or 'tau', got '{clock}'")
    config = config or IntegratorConfig()
    n = params.n
    a, D = params.a, params.D
    scale = (lambda y: 1.0 / hamiltonization.multiplier(y[:n], a, D)) if clock == 'tau' else (lambda y: 1.0)

    def chaplygin_rhs(y):
        return scale(y) * np.concatenate(chaplygin.cotangent_rhs_closed(y[:n], y[n:], params))

    def veselova_rhs(y):
        return scale(y) * np.concatenate(veselova.veselova_reduced_rhs(y[:n], y[n:], a))

    settings = IntegratorConfig(method=config.method, step=config.step, t_end=duration,
                                tolerance=config.tolerance, projection=False, stride=10 ** 9)

    def run(rhs, y):
        return integrate(rhs, y, settings).final_state

    y0 = np.concatenate([gamma0, p0])
    chaplygin_first = run(veselova_rhs, run(chaplygin_rhs, y0))
    veselova_first = run(chaplygin_rhs, run(veselova_rhs, y0))
    discrepancy = float(np.max(np.abs(chaplygin_first - veselova_first)))
    logger.info("Commutation defect on the %s clock after %g: %.3e", clock, duration, discrepancy)
    return {
        'discrepancy': discrepancy,
        'displacement': float(np.max(np.abs(chaplygin_first - y0))),
        'clock': clock,
        'duration': duration,
    }


def integrals_in_involution(gamma, p_tilde, a, D: float,
                            extra: Optional[Dict[str, Callable[[np.ndarray, np.ndarray], np.ndarray]]] = None) -> Dict[str, float]:
    """
    Pairwise Dirac brackets of {H*, K, F_0, ..., F_{n-2}} (plus optional extra gradients).

    Returns:
        {'A|B': bracket value} for every unordered pair
    """
    gradients = {
        'H_star': hamiltonization.hamiltonian_star_gradient(gamma, p_tilde, a, D),
        'K': hamiltonization.momentum_K_tilde_gradient(gamma, p_tilde, a, D),
    }
    for m, row in enumerate(staeckel_gradients(gamma, p_tilde, a, D)):
        gradients[f'F_{m}'] = row
    for name, grad in (extra or {}).items():
        gradients[name] = grad(gamma, p_tilde)
    names = list(gradients)
    brackets = {}
    for i, first in enumerate(names):
        for second in names[i + 1:]:
            brackets[f'{first}|{second}'] = hamiltonization.dirac_bracket(
                gradients[first], gradients[second], gamma, p_tilde)
    return brackets


__all__ = [
    'ChartError', 'SpheroconicalPoint', 'cartesian_from_spheroconical', 'spheroconical_from_cartesian',
    'chart_identities', 'staeckel_integrals', 'staeckel_gradients', 'linear_integrals',
    'lagrange_integrals', 'jacobian_rank', 'return_times', 'foliation_check', 'commutation_defect',
    'integrals_in_involution',
]
