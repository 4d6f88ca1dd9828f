"""
Integrators, finite-difference oracles and trajectory utilities.

All right-hand sides are autonomous callables rhs(y) -> dy/dt acting on
flat numpy state vectors. An optional clock N(y) > 0 is integrated
alongside the state to produce the reparametrized time tau with
dtau/dt = N.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Tuple

import numpy as np
from scipy.interpolate import CubicSpline
from tqdm import tqdm

from chaplab.inertia import ChaplyginParams


logger = logging.getLogger(__name__)

METHODS = ('rk4', 'rkf45')
FD_GRADIENT_STEP = 1e-5
FD_DIVERGENCE_STEP = 1e-4
MAX_CONSECUTIVE_REJECTIONS = 60
# projection displacement per step, in units of the local truncation estimate
PROJECTION_RATIO_LIMIT = 10.0
SHIFT_FLOOR = 1e-14

Rhs = Callable[[np.ndarray], np.ndarray]
Projector = Callable[[np.ndarray], np.ndarray]


class IntegrationError(RuntimeError):
    """Raised when an integration cannot proceed."""


@dataclass
class IntegratorConfig:
    """Settings for integrate()."""

    method: str = 'rk4'
    step: float = 1e-3
    t_end: float = 10.0
    tolerance: float = 1e-10
    projection: bool = False
    stride: int = 1

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"Unknown integration method '{self.method}', expected one of {METHODS}")
        if not self.step > 0:
            raise ValueError(f"Integrator step must be positive, got {self.step}")
        if not self.t_end > 0:
            raise ValueError(f"t_end must be positive, got {self.t_end}")
        if not self.tolerance > 0:
            raise ValueError(f"Tolerance must be positive, got {self.tolerance}")
        if int(self.stride) < 1:
            raise ValueError(f"Sampling stride must be >= 1, got {self.stride}")
        self.stride = int(self.stride)

    def to_dict(self) -> Dict:
        return {
            'method': self.method,
            'step': self.step,
            't_end': self.t_end,
            'tolerance': self.tolerance,
            'projection': self.projection,
            'stride': self.stride,
        }


@dataclass
class Trajectory:
    """Sampled solution with optional reparametrized clock tau."""

    times: np.ndarray
    states: np.ndarray
    tau: Optional[np.ndarray] = None
    metadata: Dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.atleast_2d(np.asarray(self.states, dtype=float))
        if self.states.shape[0] != self.times.size:
            raise ValueError("Trajectory needs one state per sample time")
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("Trajectory sample times must be strictly increasing")
        if self.tau is not None:
            self.tau = np.asarray(self.tau, dtype=float)

    def __len__(self) -> int:
        return self.times.size

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    def clock(self, name: str = 't') -> np.ndarray:
        """Sample times on the requested clock ('t' or 'tau')."""
        if name == 't':
            return self.times
        if name == 'tau':
            if self.tau is None:
                raise ValueError("Trajectory has no tau clock")
            return self.tau
        raise ValueError(f"Unknown clock '{name}'")

    def interpolate(self, at, clock: str = 't') -> np.ndarray:
        """Cubic-spline state interpolation at the given clock values."""
        spline = CubicSpline(self.clock(clock), self.states, axis=0)
        return spline(np.asarray(at, dtype=float))

    def map_states(self, func: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        return np.array([func(y) for y in self.states])


def project_cotangent(y: np.ndarray) -> np.ndarray:
    """
    Pull a (gamma, p) state back onto |gamma| = 1, (gamma, p) = 0.

    Works for the tilde momenta as well.
    """
    n = y.size // 2
    gamma = y[:n] / np.linalg.norm(y[:n])
    p = y[n:] - np.dot(gamma, y[n:]) * gamma
    return np.concatenate([gamma, p])


def project_unit_tail(n: int) -> Projector:
    """Projector for states whose last n entries form a unit vector."""

    def _project(y: np.ndarray) -> np.ndarray:
        out = y.copy()
        out[-n:] = y[-n:] / np.linalg.norm(y[-n:])
        return out

    return _project


def rk4_step(rhs: Rhs, y: np.ndarray, h: float) -> np.ndarray:
    """Classical fourth-order Runge-Kutta step."""
    k1 = rhs(y)
    k2 = rhs(y + 0.5 * h * k1)
    k3 = rhs(y + 0.5 * h * k2)
    k4 = rhs(y + h * k3)
    return y + h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0


def rkf45_step(rhs: Rhs, y: np.ndarray, h: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Runge-Kutta-Fehlberg step.

    Returns:
        Tuple of (fifth-order solution, local error estimate vector)
    """
    k1 = rhs(y)
    k2 = rhs(y + 0.25 * h * k1)
    k3 = rhs(y + h * (3.0 * k1 + 9.0 * k2) / 32.0)
    k4 = rhs(y + h * (1932.0 * k1 - 7200.0 * k2 + 7296.0 * k3) / 2197.0)
    k5 = rhs(y + h * (439.0 * k1 / 216.0 - 8.0 * k2 + 3680.0 * k3 / 513.0 - 845.0 * k4 / 4104.0))
    k6 = rhs(y + h * (-8.0 * k1 / 27.0 + 2.0 * k2 - 3544.0 * k3 / 2565.0
                      + 1859.0 * k4 / 4104.0 - 11.0 * k5 / 40.0))
    y_next = y + h * (16.0 * k1 / 135.0 + 6656.0 * k3 / 12825.0 + 28561.0 * k4 / 56430.0
                      - 9.0 * k5 / 50.0 + 2.0 * k6 / 55.0)
    err = h * (k1 / 360.0 - 128.0 * k3 / 4275.0 - 2197.0 * k4 / 75240.0 + k5 / 50.0 + 2.0 * k6 / 55.0)
    return y_next, err


def _augment(rhs: Rhs, clock: Optional[Callable[[np.ndarray], float]]) -> Rhs:
    if clock is None:
        return rhs

    def _rhs(y: np.ndarray) -> np.ndarray:
        x = y[:-1]
        return np.append(rhs(x), clock(x))

    return _rhs


def _apply_projection(y: np.ndarray, project: Optional[Projector], has_clock: bool) -> Tuple[np.ndarray, float]:
    if project is None:
        return y, 0.0
    if has_clock:
        projected = np.append(project(y[:-1]), y[-1])
    else:
        projected = project(y)
    return projected, float(np.max(np.abs(projected - y)))


def integrate(rhs: Rhs, y0, config: IntegratorConfig,
              project: Optional[Projector] = None,
              clock: Optional[Callable[[np.ndarray], float]] = None,
              metadata: Optional[Dict] = None,
              progress: bool = False) -> Trajectory:
    """
    Integrate rhs from y0 over [0, config.t_end].

    Args:
        rhs: Autonomous vector field
        y0: Initial state
        config: IntegratorConfig
        project: Constraint projector applied after every step when
            config.projection is on
        clock: Optional multiplier N(y); when given, tau is integrated as
            an extra component and stored on the trajectory
        metadata: Extra metadata to attach (model, parameters, seed)
        progress: Show a tqdm progress bar

    Returns:
        Trajectory sampled every config.stride steps (final state always kept);
        metadata carries max_projection_shift, max_projection_ratio (shift
        over the local truncation estimate) and projection_within_bound

    Raises:
        IntegrationError: On non-finite states or a rejection cascade
    """
    y = np.asarray(y0, dtype=float).copy()
    has_clock = clock is not None
    if has_clock:
        y = np.append(y, 0.0)
    field_ = _augment(rhs, clock)
    projector = project if config.projection else None

    if not np.all(np.isfinite(field_(y))):
        raise IntegrationError("Vector field is not finite at the initial state")

    if config.method == 'rk4':
        times, states, stats = _run_fixed(field_, y, config, projector, has_clock, progress)
    else:
        times, states, stats = _run_adaptive(field_, y, config, projector, has_clock, progress)

    states = np.array(states)
    tau = None
    if has_clock:
        tau = states[:, -1].copy()
        states = states[:, :-1]

    info = {'integrator': config.to_dict()}
    info.update(stats)
    if metadata:
        info.update(metadata)
    logger.info("Integrated %d samples with %s (%s)", len(times), config.method, stats)
    return Trajectory(np.array(times), states, tau=tau, metadata=info)


def _truncation_estimate(rhs, y, h, y_full):
    """Step-doubling estimate of the local error of the full RK4 step, max norm."""
    y_half = rk4_step(rhs, rk4_step(rhs, y, 0.5 * h), 0.5 * h)
    return float(np.max(np.abs(y_full - y_half))) * 16.0 / 15.0


def _projection_stats(max_shift: float, max_ratio: float) -> Dict:
    if max_ratio > PROJECTION_RATIO_LIMIT:
        logger.warning("Projection moved the state %.1f times the local truncation estimate (limit %g)",
                       max_ratio, PROJECTION_RATIO_LIMIT)
    return {
        'max_projection_shift': max_shift,
        'max_projection_ratio': max_ratio,
        'projection_within_bound': bool(max_ratio <= PROJECTION_RATIO_LIMIT),
    }


def _run_fixed(rhs, y, config, project, has_clock, progress):
    steps = max(1, int(round(config.t_end / config.step)))
    h = config.t_end / steps
    times, states = [0.0], [y.copy()]
    max_shift = max_ratio = 0.0
    for k in tqdm(range(1, steps + 1), desc="Integrating", unit="step", disable=not progress, leave=False):
        y_full = rk4_step(rhs, y, h)
        if project is not None:
            truncation = _truncation_estimate(rhs, y, h, y_full)
        y, shift = _apply_projection(y_full, project, has_clock)
        if project is not None:
            max_shift = max(max_shift, shift)
            max_ratio = max(max_ratio, shift / max(truncation, SHIFT_FLOOR))
        if not np.all(np.isfinite(y)):
            raise IntegrationError(f"Non-finite state at t = {k * h:g}")
        if k % config.stride == 0 or k == steps:
            times.append(k * h)
            states.append(y.copy())
    stats = {'steps': steps}
    stats.update(_projection_stats(max_shift, max_ratio))
    return times, states, stats


def _run_adaptive(rhs, y, config, project, has_clock, progress):
    t, h = 0.0, min(config.step, config.t_end)
    times, states = [0.0], [y.copy()]
    prev_error = 1.0
    accepted = rejected = streak = 0
    max_shift = max_ratio = 0.0
    bar = tqdm(total=config.t_end, desc="Integrating", unit="t", disable=not progress, leave=False)
    while t < config.t_end:
        h = min(h, config.t_end - t)
        y_next, err = rkf45_step(rhs, y, h)
        scale = config.tolerance * (1.0 + np.maximum(np.abs(y), np.abs(y_next)))
        error = float(np.max(np.abs(err) / scale))
        if not np.isfinite(error):
            error = np.inf
        if error <= 1.0:
            t += h
            y, shift = _apply_projection(y_next, project, has_clock)
            max_shift = max(max_shift, shift)
            max_ratio = max(max_ratio, shift / max(float(np.max(np.abs(err))), SHIFT_FLOOR))
            accepted += 1
            streak = 0
            bar.update(h)
            if accepted % config.stride == 0 or t >= config.t_end:
                times.append(t)
                states.append(y.copy())
            # PI controller
            error = max(error, 1e-10)
            factor = 0.9 * error ** (-0.7 / 5.0) * prev_error ** (0.4 / 5.0)
            h *= min(5.0, max(0.2, factor))
            prev_error = error
        else:
            rejected += 1
            streak += 1
            logger.debug("Rejected step h=%.3e at t=%.6g (error ratio %.3e)", h, t, error)
            if streak > MAX_CONSECUTIVE_REJECTIONS or h < 1e-14 * (1.0 + t):
                bar.close()
                raise IntegrationError(f"Step size underflow at t = {t:g} after {streak} rejections")
            factor = 0.9 * error ** (-0.2) if np.isfinite(error) else 0.1
            h *= max(0.1, factor)
    bar.close()
    if times[-1] < config.t_end and t >= config.t_end:
        times.append(t)
        states.append(y.copy())
    stats = {'steps': accepted, 'rejected_steps': rejected}
    stats.update(_projection_stats(max_shift, max_ratio))
    return times, states, stats


def fd_gradient(f: Callable[[np.ndarray], float], x, step: float = FD_GRADIENT_STEP) -> np.ndarray:
    """
    Central-difference gradient of a scalar function.

    Args:
        f: Scalar function of a flat vector
        x: Evaluation point
        step: Difference step

    Returns:
        Gradient vector, error O(step^2)
    """
    x = np.asarray(x, dtype=float)
    grad = np.zeros_like(x)
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = step
        grad[j] = (f(x + e) - f(x - e)) / (2.0 * step)
    return grad


def fd_jacobian(field_: Rhs, x, step: float = FD_DIVERGENCE_STEP) -> np.ndarray:
    """Central-difference Jacobian, column j = d field / d x_j."""
    x = np.asarray(x, dtype=float)
    columns = []
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = step
        columns.append((field_(x + e) - field_(x - e)) / (2.0 * step))
    return np.array(columns).T


def fd_divergence(field_: Rhs, x, step: float = FD_DIVERGENCE_STEP) -> float:
    """Central-difference divergence of a vector field."""
    return float(np.trace(fd_jacobian(field_, x, step)))


def liouville_check(field_: Rhs, density: Callable[[np.ndarray], float], points,
                    divergence: Optional[Callable[[np.ndarray], float]] = None,
                    density_gradient: Optional[Callable[[np.ndarray], np.ndarray]] = None,
                    step: float = FD_DIVERGENCE_STEP) -> Dict:
    """
    Evaluate div(mu X) = X . grad(mu) + mu div(X) over a point set.

    Analytic divergence and density gradient are used when supplied,
    central differences otherwise.

    Returns:
        Report dict with max_abs, mean_abs, points and mode
    """
    values = []
    analytic = divergence is not None and density_gradient is not None
    for x in points:
        x = np.asarray(x, dtype=float)
        div = divergence(x) if divergence is not None else fd_divergence(field_, x, step)
        grad = density_gradient(x) if density_gradient is not None else fd_gradient(density, x)
        values.append(float(np.dot(field_(x), grad) + density(x) * div))
    values = np.abs(np.array(values))
    return {
        'max_abs': float(values.max()) if values.size else 0.0,
        'mean_abs': float(values.mean()) if values.size else 0.0,
        'points': int(values.size),
        'mode': 'analytic' if analytic else 'finite-difference',
    }


def _polyline_distance(points: np.ndarray, curve: np.ndarray, chunk: int = 256) -> np.ndarray:
    starts = curve[:-1]
    seg = curve[1:] - starts
    seg_len2 = np.maximum(np.einsum('ij,ij->i', seg, seg), 1e-300)
    out = np.empty(points.shape[0])
    for lo in range(0, points.shape[0], chunk):
        block = points[lo:lo + chunk]
        rel = block[:, None, :] - starts[None, :, :]
        s = np.clip(np.einsum('kij,ij->ki', rel, seg) / seg_len2, 0.0, 1.0)
        nearest = starts[None, :, :] + s[:, :, None] * seg[None, :, :]
        out[lo:lo + chunk] = np.min(np.linalg.norm(block[:, None, :] - nearest, axis=2), axis=1)
    return out


def compare_trajectories(a: Trajectory, b: Trajectory, mode: str = 'time',
                         a_clock: str = 't', b_clock: str = 't') -> Dict:
    """
    Compare two trajectories.

    Args:
        a: Reference trajectory (its samples are the comparison points)
        b: Trajectory to compare against
        mode: 'time' interpolates b at a's clock values; 'curve' measures
            the distance from each a sample to the piecewise-linear b curve
        a_clock: Clock of a used in time mode
        b_clock: Clock of b used in time mode

    Returns:
        Report dict with sup_distance and samples

    Raises:
        ValueError: On unknown mode or empty overlap
    """
    if mode == 'time':
        ta, tb = a.clock(a_clock), b.clock(b_clock)
        slack = 1e-12 * max(1.0, abs(tb[-1]))
        mask = (ta >= tb[0] - slack) & (ta <= tb[-1] + slack)
        if not np.any(mask):
            raise ValueError("Trajectories have no overlapping time range")
        at = np.clip(ta[mask], tb[0], tb[-1])
        diff = a.states[mask] - b.interpolate(at, clock=b_clock)
        distances = np.max(np.abs(diff), axis=1)
    elif mode == 'curve':
        if len(b) < 2 or len(a) == 0:
            raise ValueError("Curve comparison needs at least two samples on the target curve")
        distances = _polyline_distance(a.states, b.states)
    else:
        raise ValueError(f"Unknown comparison mode '{mode}'")
    return {
        'mode': mode,
        'sup_distance': float(distances.max()),
        'samples': int(distances.size),
    }


def random_cotangent_point(n: int, rng: np.random.Generator, p_scale: float = 1.0) -> Tuple[np.ndarray, np.ndarray]:
    """
    Random point of T*S^{n-1}: unit gamma and p orthogonal to it.

    The momentum is rescaled to |p| = p_scale.
    """
    gamma = rng.standard_normal(n)
    gamma /= np.linalg.norm(gamma)
    p = rng.standard_normal(n)
    p -= np.dot(gamma, p) * gamma
    p *= p_scale / np.linalg.norm(p)
    return gamma, p


def random_admissible_params(n: int, rng: np.random.Generator,
                             a_range: Tuple[float, float] = (0.5, 2.0),
                             D_range: Tuple[float, float] = (10.0, 20.0)) -> ChaplyginParams:
    """Random sorted a in a_range and D in D_range (admissible since a_max^2 < D)."""
    if a_range[1] ** 2 >= D_range[0]:
        raise ValueError("a_range and D_range must satisfy a_max^2 < D_min")
    a = np.sort(rng.uniform(a_range[0], a_range[1], size=n))
    return ChaplyginParams(a, float(rng.uniform(*D_range)))


def observed_order(rhs: Rhs, y0, t_end: float, h: float) -> float:
    """
    Convergence order of RK4 estimated by step halving.

    log2(|y_h - y_{h/2}| / |y_{h/2} - y_{h/4}|)
    """
    finals = []
    for step in (h, h / 2.0, h / 4.0):
        traj = integrate(rhs, y0, IntegratorConfig(method='rk4', step=step, t_end=t_end,
                                                   stride=10 ** 9))
        finals.append(traj.final_state)
    coarse = np.linalg.norm(finals[0] - finals[1])
    fine = np.linalg.norm(finals[1] - finals[2])
    return float(np.log2(coarse / fine))


def max_drift(values) -> float:
    """Largest deviation of a sampled quantity from its initial value."""
    values = np.asarray(values, dtype=float)
    return float(np.max(np.abs(values - values[0])))


def relative_drift(values) -> float:
    """max_drift scaled by 1 + |initial value|."""
    values = np.asarray(values, dtype=float)
    return max_drift(values) / (1.0 + abs(values[0]))
