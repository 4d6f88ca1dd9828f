"""
Named checks run against a scenario.

Each check measures one number along an integrated trajectory (or at a
sample of random points for the model's parameters) and is compared
against the tolerance given in the scenario. Checks named
"family:argument" pass the argument through, e.g. "conservation:H".
"""

import logging
import re
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from scipy.interpolate import CubicSpline

from chaplab import chaplygin, hamiltonization, integrability, veselova
from chaplab.inertia import ParameterError
from chaplab.models import BoundModel, omega_along
from chaplab.numerics import (
    IntegratorConfig,
    Trajectory,
    fd_divergence,
    liouville_check,
    observed_order,
    random_cotangent_point,
    relative_drift,
)
from chaplab.reports import CheckResult


logger = logging.getLogger(__name__)

LINEAR_INTEGRAL = re.compile(r'^f_?(\d)(\d)$')


@dataclass
class RunContext:
    """Everything a check may look at."""

    model: BoundModel
    traj: Trajectory
    y0: np.ndarray
    integrator: IntegratorConfig
    rng: np.random.Generator


CheckFunc = Callable[[RunContext, Optional[str], Dict], Tuple[float, Dict]]


@dataclass(frozen=True)
class CheckDefinition:
    name: str
    description: str
    models: Tuple[str, ...]
    func: CheckFunc
    default_tolerance: float
    needs_argument: bool = False


CHECKS: Dict[str, CheckDefinition] = {}

COTANGENT_MODELS = ('chaplygin_cotangent', 'chaplygin_homogeneous', 'geodesic_tilde', 'veselova_reduced')
TILDE_MODELS = ('chaplygin_cotangent', 'geodesic_tilde', 'veselova_reduced')


def register(name: str, description: str, models: Tuple[str, ...], default_tolerance: float,
             needs_argument: bool = False):
    """Decorator adding a check function to the registry."""

    def decorator(func: CheckFunc) -> CheckFunc:
        CHECKS[name] = CheckDefinition(name, description, models, func, default_tolerance, needs_argument)
        return func

    return decorator


def split_name(name: str) -> Tuple[str, Optional[str]]:
    base, _, argument = name.partition(':')
    return base, (argument or None)


def list_checks() -> List[CheckDefinition]:
    return sorted(CHECKS.values(), key=lambda check: check.name)


def run_check(name: str, tolerance: float, ctx: RunContext, options: Optional[Dict] = None) -> CheckResult:
    """
    Run one named check.

    Raises:
        ValueError: For an unknown check or one not defined for the model
        ParameterError: When the model parameters do not support the check
    """
    base, argument = split_name(name)
    if base not in CHECKS:
        raise ValueError(f"Unknown check '{base}', run 'checks --list' for the available names")
    check = CHECKS[base]
    if ctx.model.name not in check.models:
        raise ValueError(f"Check '{base}' is not defined for model '{ctx.model.name}' "
                         f"(supported: {', '.join(check.models)})")
    if check.needs_argument and not argument:
        raise ValueError(f"Check '{base}' needs an argument, e.g. '{base}:<name>'")
    value, details = check.func(ctx, argument, dict(options or {}))
    logger.info("Check %s: %.3e (tolerance %.1e)", name, value, tolerance)
    return CheckResult(name, float(value), float(tolerance), details)


# -- helpers ------------------------------------------------------------------

def _random_points(model: BoundModel, rng: np.random.Generator, count: int,
                   margin: float = 0.0) -> List[Tuple[np.ndarray, np.ndarray]]:
    """Random (gamma, p) points; with a margin, every gamma_i^2 exceeds it."""
    points = []
    attempts = 0
    while len(points) < count:
        attempts += 1
        if attempts > 1000 * count:
            raise RuntimeError(f"Could not draw {count} points with gamma_i^2 > {margin:g}")
        gamma, p = random_cotangent_point(model.n, rng)
        if np.min(gamma ** 2) > margin:
            points.append((gamma, p))
    return points


def _tilde_states(ctx: RunContext) -> List[Tuple[np.ndarray, np.ndarray]]:
    return [ctx.model.tilde(y) for y in ctx.traj.states]


# -- trajectory checks --------------------------------------------------------

@register('conservation', "Relative drift of a tracked invariant (conservation:<name>, or f_ij)",
          ('chaplygin_cotangent', 'chaplygin_full', 'chaplygin_homogeneous', 'classical3d',
           'geodesic_tilde', 'veselova_reduced', 'veselova3d', 'ellipsoid'),
          1e-8, needs_argument=True)
def check_conservation(ctx: RunContext, argument: Optional[str], options: Dict) -> Tuple[float, Dict]:
    match = LINEAR_INTEGRAL.match(argument)
    if match and argument not in ctx.model.invariants and ctx.model.tilde is not None:
        pair = [int(match.group(1)), int(match.group(2))]
        return check_linear_integral(ctx, None, dict(options, pairs=[pair]))
    if argument not in ctx.model.invariants:
        raise ValueError(f"Model '{ctx.model.name}' does not track '{argument}' "
                         f"(available: {', '.join(ctx.model.invariants)})")
    values = ctx.model.evaluate(ctx.traj, [argument])[argument]
    return relative_drift(values), {'initial': float(values[0]), 'final': float(values[-1])}


@register('constraints', "Largest constraint defect along the trajectory",
          ('chaplygin_cotangent', 'chaplygin_full', 'chaplygin_homogeneous', 'classical3d',
           'geodesic_tilde', 'veselova_reduced', 'veselova3d', 'ellipsoid'), 1e-8)
def check_constraints(ctx: RunContext, argument: Optional[str], options: Dict) -> Tuple[float, Dict]:
    model, states = ctx.model, ctx.traj.states
    n = model.n
    if model.name in COTANGENT_MODELS:
        defects = {
            'unit': np.abs(np.einsum('ij,ij->i', states[:, :n], states[:, :n]) - 1.0),
            'tangent': np.abs(np.einsum('ij,ij->i', states[:, :n], states[:, n:])),
        }
    elif model.name == 'ellipsoid':
        defects = dict(zip(('surface', 'tangency'),
                           np.array([veselova.ellipsoid_defects(y[:n], y[n:], model.a) for y in states]).T))
    else:
        tails = states[:, -3:] if model.name != 'chaplygin_full' else states[:, -n:]
        defects = {'unit': np.abs(np.einsum('ij,ij->i', tails, tails) - 1.0)}
        if model.name == 'veselova3d':
            defects['tangent'] = np.abs([veselova.Veselova3dState.from_vector(y).constraint() for y in states])
    maxima = {key: float(np.max(values)) for key, values in defects.items()}
    return max(maxima.values()), maxima


@register('projection_bound', "Largest projection displacement per step over the local truncation estimate",
          ('chaplygin_cotangent', 'chaplygin_full', 'chaplygin_homogeneous', 'classical3d',
           'geodesic_tilde', 'veselova_reduced', 'veselova3d', 'ellipsoid'), 10.0)
def check_projection_bound(ctx: RunContext, argument: Optional[str], options: Dict) -> Tuple[float, Dict]:
    if not ctx.integrator.projection:
        raise ValueError("projection_bound needs 'projection': true in the integrator settings")
    meta = ctx.traj.metadata
    return meta['max_projection_ratio'], {
        'max_projection_shift': meta['max_projection_shift'],
        'within_bound': meta['projection_within_bound'],
    }


@register('great_circle', "Distance from the analytic great-circle solution of the homogeneous ball",
          ('chaplygin_homogeneous',), 1e-8)
def check_great_circle(ctx: RunContext, argument: Optional[str], options: Dict) -> Tuple[float, Dict]:
    n = ctx.model.n
    s, D = float(ctx.model.parameters['s']), float(ctx.model.parameters['D'])
    gammas, ps = chaplygin.homogeneous_solution(ctx.y0[:n], ctx.y0[n:], s, D, ctx.traj.times)
    exact = np.hstack([gammas, ps])
    omegas = np.array([omega_along(ctx.model, y) for y in ctx.traj.states])
    omega_drift = float(np.max(np.abs(omegas - omegas[0])))
    return float(np.max(np.abs(ctx.traj.states - exact))), {'omega_drift': omega_drift}


def check_linear_integral(ctx: RunContext, argument: Optional[str], options: Dict) -> Tuple[float, Dict]:
    """Drift of f_ij = gamma_i p~_j - gamma_j p~_i for 1-based pairs."""
    model = ctx.model
    pairs = [(int(i) - 1, int(j) - 1) for i, j in options.get('pairs', [])]
    if not pairs:
        raise ValueError("linear_integral needs options.pairs, e.g. [[1, 2]]")
    a = model.a
    details = {}
    worst = 0.0
    tilde = _tilde_states(ctx)
    for i, j in pairs:
        if not (0 <= i < model.n and 0 <= j < model.n) or i == j:
            raise ParameterError(f"Invalid index pair ({i + 1}, {j + 1}) for n = {model.n}")
        values = [integrability.linear_integral(g, pt, i, j) for g, pt in tilde]
        drift = relative_drift(values)
        key = f'f_{i + 1}{j + 1}'
        details[key] = drift
        if a[i] != a[j]:
            details[f'{key}_note'] = f"a_{i + 1} = {a[i]:g} differs from a_{j + 1} = {a[j]:g}; not an integral"
        worst = max(worst, drift)
    return worst, details


register('linear_integral', "Drift of f_ij for pairs with a_i = a_j (options.pairs, 1-based)",
         TILDE_MODELS, 1e-8)(check_linear_integral)


@register('lagrange_integrals', "Drift of the Lagrange-case integrals F_ij along the t-flow",
          ('chaplygin_cotangent',), 1e-8)
def check_lagrange_integrals(ctx: RunContext, argument: Optional[str], options: Dict) -> Tuple[float, Dict]:
    params = ctx.model.params
    n = params.n
    strict = bool(options.get('strict', True))
    samples = [integrability.lagrange_integrals(y[:n], y[n:], params, strict=strict) for y in ctx.traj.states]
    details = {f'F_{i + 1}{j + 1}': relative_drift([sample[(i, j)] for sample in samples])
               for (i, j) in samples[0]}
    # the product form c * (gamma_i p_j - gamma_j p_i)^2 is reported, not checked
    c2 = [float(y[:n] @ (y[:n] / params.a)) ** 2 for y in ctx.traj.states]
    for (i, j) in samples[0]:
        details[f'product_form_{i + 1}{j + 1}'] = relative_drift(
            [scale * sample[(i, j)] for scale, sample in zip(c2, samples)])
    details['lagrange_case'] = integrability.is_lagrange_case(params.a)
    drifts = [value for key, value in details.items() if key.startswith('F_')]
    return (max(drifts) if drifts else 0.0), details


@register('staeckel', "Drift of the separable integrals F_0 ... F_{n-2} (chart interior samples)",
          TILDE_MODELS, 1e-8)
def check_staeckel(ctx: RunContext, argument: Optional[str], options: Dict) -> Tuple[float, Dict]:
    a, D = ctx.model.a, ctx.model.D
    integrability.check_spectrum(a)
    margin = float(options.get('margin', integrability.CHART_MARGIN))
    samples = [integrability.staeckel_integrals(g, pt, a, D)
               for g, pt in _tilde_states(ctx) if np.min(g ** 2) > margin]
    if not samples:
        raise ValueError(f"No trajectory sample stays inside the chart (gamma_i^2 > {margin:g})")
    samples = np.array(samples)
    drifts = {f'F_{m}': relative_drift(samples[:, m]) for m in range(samples.shape[1])}
    return max(drifts.values()), dict(drifts, samples=int(samples.shape[0]))


@register('hamiltonian_identity', "Max |H* - (K/(2D) - H_veselova/D^2)| along the trajectory",
          TILDE_MODELS, 1e-13)
def check_hamiltonian_identity(ctx: RunContext, argument: Optional[str], options: Dict) -> Tuple[float, Dict]:
    a, D = ctx.model.a, ctx.model.D
    residuals = []
    for g, pt in _tilde_states(ctx):
        h_star = hamiltonization.hamiltonian_star(g, pt, a, D)
        K = hamiltonization.momentum_K_tilde(g, pt, a, D)
        h_ves = veselova.veselova_hamiltonian(g, pt, a, D)
        residuals.append(abs(h_star - (K / (2.0 * D) - h_ves / D ** 2)))
    return float(max(residuals)), {'samples': len(residuals)}


@register('reconstruction', "Orthogonality defect of the reconstructed attitude g(t)",
          ('chaplygin_cotangent', 'chaplygin_homogeneous'), 1e-8)
def check_reconstruction(ctx: RunContext, argument: Optional[str], options: Dict) -> Tuple[float, Dict]:
    pose, omegas = _reconstruct(ctx, options)
    n = ctx.model.n
    spline = CubicSpline(ctx.traj.times, omegas.reshape(len(omegas), -1), axis=0)
    vertical = max(abs(chaplygin.contact_velocity(g, spline(t).reshape(n, n), pose.rho)[n - 1])
                   for g, t in zip(pose.rotations, pose.times))
    return pose.orthogonality_defect(), {'vertical_velocity': float(vertical), 'samples': len(pose.times)}


@register('straight_rolling', "Distance of the homogeneous ball's contact path from a uniform straight line",
          ('chaplygin_homogeneous',), 1e-8)
def check_straight_rolling(ctx: RunContext, argument: Optional[str], options: Dict) -> Tuple[float, Dict]:
    pose, _ = _reconstruct(ctx, options)
    return pose.straightness_defect(), {'distance': float(np.linalg.norm(pose.positions[-1] - pose.positions[0]))}


def _reconstruct(ctx: RunContext, options: Dict) -> Tuple[chaplygin.PoseTrajectory, np.ndarray]:
    n = ctx.model.n
    omegas = np.array([omega_along(ctx.model, y) for y in ctx.traj.states])
    step = float(options.get('step', ctx.integrator.step))
    pose = chaplygin.reconstruct(ctx.traj.times, omegas, np.eye(n), np.zeros(n - 1),
                                 float(options.get('rho', 1.0)), step=step)
    return pose, omegas


@register('fedorov_levels', "Level-map residuals of the Fedorov correspondence along the trajectory",
          ('veselova3d',), 1e-12)
def check_fedorov_levels(ctx: RunContext, argument: Optional[str], options: Dict) -> Tuple[float, Dict]:
    D = ctx.model.parameters.get('D')
    if D is None:
        raise ParameterError("fedorov_levels needs parameter D")
    stride = max(1, int(options.get('stride', 1)))
    reports = [veselova.fedorov_check(y[:3], y[3:], ctx.model.parameters['inertia'], float(D))
               for y in ctx.traj.states[::stride]]
    return (max(report['max_residual'] for report in reports),
            {'momentum_residual': max(report['momentum_residual'] for report in reports),
             'initial_raw_differences': reports[0]['raw_differences']})


@register('lagrange3d', "Drift of the extra integral of the 3-D ball with I1 = I2 on the zero-momentum slice",
          ('classical3d',), 1e-8)
def check_lagrange3d(ctx: RunContext, argument: Optional[str], options: Dict) -> Tuple[float, Dict]:
    if 'F_lagrange' not in ctx.model.invariants:
        raise ParameterError(f"lagrange3d needs I1 = I2, got inertia {ctx.model.parameters['inertia']}")
    values = ctx.model.evaluate(ctx.traj, ['F_lagrange', 'F1'])
    slice_defect = abs(float(values['F1'][0]))
    return max(relative_drift(values['F_lagrange']), slice_defect), {'F1_initial': slice_defect}


# -- point-sample checks ------------------------------------------------------

@register('liouville', "Max |div(mu X)| at random points (analytic divergence; finite differences for veselova3d)",
          ('chaplygin_cotangent', 'veselova3d'), 1e-10)
def check_liouville(ctx: RunContext, argument: Optional[str], options: Dict) -> Tuple[float, Dict]:
    count = int(options.get('points', 200))
    if ctx.model.name == 'veselova3d':
        J = np.asarray(ctx.model.parameters['inertia'], dtype=float)
        # states are [w, gamma] with (w, gamma) = 0
        points = [np.concatenate([p, gamma]) for gamma, p in _random_points(ctx.model, ctx.rng, count)]
        report = liouville_check(ctx.model.rhs, lambda y: veselova.veselova3d_measure(y[3:], J), points)
        return report['max_abs'], report
    params = ctx.model.params
    n = params.n
    points = [np.concatenate(pt) for pt in _random_points(ctx.model, ctx.rng, count)]
    report = liouville_check(
        ctx.model.rhs,
        lambda y: chaplygin.measure_density(y[:n], params.a),
        points,
        divergence=lambda y: chaplygin.divergence_formula(y[:n], y[n:], params),
        density_gradient=lambda y: np.concatenate([chaplygin.measure_density_gradient(y[:n], params.a), np.zeros(n)]),
    )
    return report['max_abs'], report


@register('divergence_formula', "Max |finite-difference divergence - closed form| at random points",
          ('chaplygin_cotangent',), 1e-6)
def check_divergence_formula(ctx: RunContext, argument: Optional[str], options: Dict) -> Tuple[float, Dict]:
    params = ctx.model.params
    diffs = []
    for gamma, p in _random_points(ctx.model, ctx.rng, int(options.get('points', 50))):
        y = np.concatenate([gamma, p])
        diffs.append(abs(fd_divergence(ctx.model.rhs, y) - chaplygin.divergence_formula(gamma, p, params)))
    return float(max(diffs)), {'points': len(diffs)}


@register('almost_symplectic', "Max residual of i_X w = dH on the tangent space at random points",
          ('chaplygin_cotangent',), 1e-10)
def check_almost_symplectic(ctx: RunContext, argument: Optional[str], options: Dict) -> Tuple[float, Dict]:
    params = ctx.model.params
    residuals = [hamiltonization.almost_symplectic_check(gamma, p, params)
                 for gamma, p in _random_points(ctx.model, ctx.rng, int(options.get('points', 100)))]
    return float(max(residuals)), {'points': len(residuals)}


@register('involution', "Max |Dirac bracket| among H*, K and F_0 ... F_{n-2} at chart-interior points",
          TILDE_MODELS, 1e-9)
def check_involution(ctx: RunContext, argument: Optional[str], options: Dict) -> Tuple[float, Dict]:
    a, D = ctx.model.a, ctx.model.D
    integrability.check_spectrum(a)
    worst = {}
    for gamma, p in _random_points(ctx.model, ctx.rng, int(options.get('points', 100)), integrability.CHART_MARGIN):
        p_tilde = hamiltonization.to_tilde(gamma, p, a, D)
        for pair, value in integrability.integrals_in_involution(gamma, p_tilde, a, D).items():
            worst[pair] = max(worst.get(pair, 0.0), abs(value))
    return max(worst.values()), worst


@register('chart_identities', "Spheroconical chart identities at chart-interior points",
          TILDE_MODELS, 1e-10)
def check_chart_identities(ctx: RunContext, argument: Optional[str], options: Dict) -> Tuple[float, Dict]:
    a, D = ctx.model.a, ctx.model.D
    integrability.check_spectrum(a)
    worst = {}
    for gamma, p in _random_points(ctx.model, ctx.rng, int(options.get('points', 100)), integrability.CHART_MARGIN):
        p_tilde = hamiltonization.to_tilde(gamma, p, a, D)
        for key, value in integrability.chart_identities(gamma, p_tilde, a).items():
            worst[key] = max(worst.get(key, 0.0), value)
    return max(worst.values()), worst


@register('observed_order', "|observed RK4 order - 4| by step halving from the initial state",
          ('chaplygin_cotangent', 'chaplygin_full', 'chaplygin_homogeneous', 'classical3d',
           'geodesic_tilde', 'veselova_reduced', 'veselova3d', 'ellipsoid'), 0.1)
def check_observed_order(ctx: RunContext, argument: Optional[str], options: Dict) -> Tuple[float, Dict]:
    order = observed_order(ctx.model.rhs, ctx.y0, float(options.get('t_end', 1.0)), float(options.get('step', 0.05)))
    return abs(order - 4.0), {'order': order}


@register('commuting_flows', "Gap between Chaplygin-then-Veselova and Veselova-then-Chaplygin tau-flows from the initial state",
          ('chaplygin_cotangent',), 1e-9)
def check_commuting_flows(ctx: RunContext, argument: Optional[str], options: Dict) -> Tuple[float, Dict]:
    n = ctx.model.n
    settings = IntegratorConfig(method=ctx.integrator.method, step=float(options.get('step', 1e-4)),
                                tolerance=ctx.integrator.tolerance)
    report = integrability.commutation_defect(ctx.y0[:n], ctx.y0[n:], ctx.model.params,
                                              float(options.get('tau', 0.05)), settings)
    return report['discrepancy'], report
