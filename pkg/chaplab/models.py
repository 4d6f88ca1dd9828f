"""
Model registry for scenario runs.

Each model binds raw scenario parameters to a vector field on a flat
state, its constraint projector, the invariants tracked along a run and
the column names used in trajectory tables.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from chaplab import chaplygin, hamiltonization, veselova
from chaplab.inertia import ChaplyginParams, ParameterError, chaplygin_inertia
from chaplab.numerics import Projector, Rhs, Trajectory, project_cotangent, project_unit_tail, random_cotangent_point
from chaplab.son_geometry import inner, wedge


logger = logging.getLogger(__name__)

Invariant = Callable[[np.ndarray], float]

STATE_TOLERANCE = 1e-10


@dataclass
class BoundModel:
    """A model with concrete parameters, ready to integrate."""

    name: str
    n: int
    rhs: Rhs
    columns: List[str]
    invariants: Dict[str, Invariant]
    project: Optional[Projector] = None
    clock: Optional[Callable[[np.ndarray], float]] = None
    params: Optional[ChaplyginParams] = None
    parameters: Dict = field(default_factory=dict)
    tilde: Optional[Callable[[np.ndarray], Tuple[np.ndarray, np.ndarray]]] = None

    def evaluate(self, traj: Trajectory, names: Optional[List[str]] = None) -> Dict[str, np.ndarray]:
        """Invariant values at every sample of a trajectory."""
        names = names or list(self.invariants)
        return {name: traj.map_states(self.invariants[name]) for name in names}

    @property
    def a(self) -> np.ndarray:
        if self.params is not None:
            return self.params.a
        return np.asarray(self.parameters['a'], dtype=float)

    @property
    def D(self) -> float:
        if self.params is not None:
            return self.params.D
        return float(self.parameters.get('D', 1.0))


@dataclass(frozen=True)
class ModelSpec:
    """Registry entry: how to bind parameters and build an initial state."""

    name: str
    description: str
    required: Tuple[str, ...]
    builder: Callable[[Dict], BoundModel]
    initializer: Callable[[BoundModel, Dict, np.random.Generator], np.ndarray]


# -- parameter helpers --------------------------------------------------------

def _require(parameters: Dict, keys: Tuple[str, ...], model: str) -> None:
    missing = [key for key in keys if parameters.get(key) is None]
    if missing:
        raise ParameterError(f"Model '{model}' needs parameters: {', '.join(missing)}")


def _chaplygin_params(parameters: Dict) -> ChaplyginParams:
    params = ChaplyginParams(parameters['a'], parameters['D'])
    if parameters.get('n') is not None and int(parameters['n']) != params.n:
        raise ParameterError(f"n = {parameters['n']} does not match len(a) = {params.n}")
    return params


def _inertia3(parameters: Dict) -> np.ndarray:
    inertia = np.asarray(parameters['inertia'], dtype=float)
    if inertia.shape != (3,) or np.any(inertia <= 0):
        raise ParameterError(f"inertia must be three positive numbers, got {parameters['inertia']}")
    return inertia


def _vector_columns(prefix: str, n: int) -> List[str]:
    return [f'{prefix}_{i + 1}' for i in range(n)]


def _pair(field_: Callable, n: int) -> Rhs:
    """Wrap field_(first, second) -> (first', second') into a flat rhs."""

    def rhs(y: np.ndarray) -> np.ndarray:
        return np.concatenate(field_(y[:n], y[n:]))

    return rhs


# -- initial states -----------------------------------------------------------

def _cotangent_initial(model: BoundModel, initial: Dict, rng: np.random.Generator) -> np.ndarray:
    if initial.get('gamma') is not None:
        gamma = np.asarray(initial['gamma'], dtype=float)
        p = np.asarray(initial.get('p', np.zeros_like(gamma)), dtype=float)
        if gamma.size != model.n or p.size != model.n:
            raise ParameterError(f"Initial gamma and p must have length n = {model.n}")
        chaplygin.CotangentPoint(gamma, p).validate(STATE_TOLERANCE)
        return np.concatenate([gamma, p])
    gamma, p = random_cotangent_point(model.n, rng, float(initial.get('p_scale', 1.0)))
    return np.concatenate([gamma, p])


def _tilde_initial(model: BoundModel, initial: Dict, rng: np.random.Generator) -> np.ndarray:
    if initial.get('p_tilde') is not None:
        gamma = np.asarray(initial['gamma'], dtype=float)
        p_tilde = np.asarray(initial['p_tilde'], dtype=float)
        hamiltonization.TildePoint(gamma, p_tilde).validate(STATE_TOLERANCE)
        return np.concatenate([gamma, p_tilde])
    y = _cotangent_initial(model, initial, rng)
    n = model.n
    return np.concatenate([y[:n], hamiltonization.to_tilde(y[:n], y[n:], model.a, model.D)])


def _full_initial(model: BoundModel, initial: Dict, rng: np.random.Generator) -> np.ndarray:
    n = model.n
    if initial.get('k') is not None:
        k = np.asarray(initial['k'], dtype=float)
        gamma = np.asarray(initial['gamma'], dtype=float)
        if k.shape != (n, n):
            raise ParameterError(f"Initial k must be a {n} x {n} skew matrix")
        return np.concatenate([k.ravel(), gamma])
    y = _cotangent_initial(model, initial, rng)
    return chaplygin.embed(y[:n], y[n:]).as_vector()


def _classical3d_initial(model: BoundModel, initial: Dict, rng: np.random.Generator) -> np.ndarray:
    if initial.get('k') is not None:
        return np.concatenate([np.asarray(initial['k'], dtype=float), np.asarray(initial['gamma'], dtype=float)])
    gamma, p = random_cotangent_point(3, rng, float(initial.get('p_scale', 1.0)))
    k = p if initial.get('on_constraint', True) else p + rng.standard_normal() * gamma
    return np.concatenate([k, gamma])


def _veselova3d_initial(model: BoundModel, initial: Dict, rng: np.random.Generator) -> np.ndarray:
    if initial.get('w') is not None:
        return np.concatenate([np.asarray(initial['w'], dtype=float), np.asarray(initial['gamma'], dtype=float)])
    gamma, w = random_cotangent_point(3, rng, float(initial.get('p_scale', 1.0)))
    if not initial.get('on_constraint', True):
        w = w + 0.3 * gamma
    return np.concatenate([w, gamma])


def _ellipsoid_initial(model: BoundModel, initial: Dict, rng: np.random.Generator) -> np.ndarray:
    if initial.get('x') is not None:
        x = np.asarray(initial['x'], dtype=float)
        v = np.asarray(initial['v'], dtype=float)
        veselova.validate_ellipsoid_point(x, v, model.a)
        return np.concatenate([x, v])
    y = _cotangent_initial(model, initial, rng)
    x, v = veselova.veselova_reduced_to_ellipsoid(y[:model.n], y[model.n:], model.a)
    return np.concatenate([x, v])


# -- builders -----------------------------------------------------------------

def _cotangent_invariants(n: int) -> Dict[str, Invariant]:
    return {
        'phi1': lambda y: float(y[:n] @ y[:n]),
        'phi2': lambda y: float(y[:n] @ y[n:]),
        'K': lambda y: chaplygin.momentum_K(y[:n], y[n:]),
    }


def _tilde_invariants(tilde, a, D) -> Dict[str, Invariant]:
    def h_star(y):
        return hamiltonization.hamiltonian_star(*tilde(y), a, D)

    def h_veselova(y):
        return veselova.veselova_hamiltonian(*tilde(y), a, D)

    return {'H_star': h_star, 'H_veselova': h_veselova}


def _build_chaplygin_cotangent(parameters: Dict) -> BoundModel:
    params = _chaplygin_params(parameters)
    n, a, D = params.n, params.a, params.D

    def tilde(y):
        return y[:n], hamiltonization.to_tilde(y[:n], y[n:], a, D)

    invariants = {'H': lambda y: chaplygin.hamiltonian_closed(y[:n], y[n:], params)}
    invariants.update(_cotangent_invariants(n))
    invariants.update(_tilde_invariants(tilde, a, D))
    return BoundModel(
        name='chaplygin_cotangent', n=n,
        rhs=_pair(lambda g, p: chaplygin.cotangent_rhs_closed(g, p, params), n),
        columns=_vector_columns('gamma', n) + _vector_columns('p', n),
        invariants=invariants, project=project_cotangent,
        clock=lambda y: hamiltonization.multiplier(y[:n], a, D),
        params=params, parameters=parameters, tilde=tilde,
    )


def _build_chaplygin_full(parameters: Dict) -> BoundModel:
    params = _chaplygin_params(parameters)
    n, D = params.n, params.D
    inertia = chaplygin_inertia(params)
    m = n * n

    def rhs(y):
        k_dot, gamma_dot = chaplygin.full_reduced_rhs(y[:m].reshape(n, n), y[m:], inertia, D)
        return np.concatenate([k_dot.ravel(), gamma_dot])

    invariants = {
        'E': lambda y: chaplygin.energy_full(y[:m].reshape(n, n), y[m:], inertia, D),
        'k_norm': lambda y: inner(y[:m].reshape(n, n), y[:m].reshape(n, n)),
        'phi1': lambda y: float(y[m:] @ y[m:]),
        'momentum_norm': lambda y: float(np.linalg.norm(chaplygin.momentum_map(y[:m].reshape(n, n), y[m:]))),
    }
    columns = [f'k_{i + 1}{j + 1}' for i in range(n) for j in range(n)] + _vector_columns('gamma', n)
    return BoundModel(
        name='chaplygin_full', n=n, rhs=rhs, columns=columns, invariants=invariants,
        project=project_unit_tail(n), params=params, parameters=parameters,
    )


def _build_chaplygin_homogeneous(parameters: Dict) -> BoundModel:
    n, s, D = int(parameters['n']), float(parameters['s']), float(parameters['D'])
    if n < 2 or s <= 0 or D <= 0:
        raise ParameterError(f"Homogeneous ball needs n >= 2, s > 0, D > 0 (got n={n}, s={s:g}, D={D:g})")
    invariants = {'H': lambda y: float(y[n:] @ y[n:]) / (2.0 * (s + D))}
    invariants.update(_cotangent_invariants(n))
    return BoundModel(
        name='chaplygin_homogeneous', n=n,
        rhs=_pair(lambda g, p: chaplygin.homogeneous_rhs(g, p, s, D), n),
        columns=_vector_columns('gamma', n) + _vector_columns('p', n),
        invariants=invariants, project=project_cotangent,
        parameters=parameters,
    )


def _build_classical3d(parameters: Dict) -> BoundModel:
    I = _inertia3(parameters)
    D = float(parameters['D'])
    if D <= 0:
        raise ParameterError(f"D must be positive, got {D:g}")

    def integral(index):
        return lambda y: chaplygin.classical3d_integrals(y[:3], y[3:], I, D)[index]

    invariants = {f'F{i + 1}': integral(i) for i in range(4)}
    if np.isclose(I[0], I[1], rtol=1e-14, atol=0.0):
        invariants['F_lagrange'] = lambda y: chaplygin.classical3d_lagrange_integral(y[:3], y[3:], I, D)
    return BoundModel(
        name='classical3d', n=3, rhs=_pair(lambda k, g: chaplygin.classical3d_rhs(k, g, I, D), 3),
        columns=_vector_columns('k', 3) + _vector_columns('gamma', 3), invariants=invariants,
        project=project_unit_tail(3), parameters=parameters,
    )


def _build_geodesic_tilde(parameters: Dict) -> BoundModel:
    params = _chaplygin_params(parameters)
    n, a, D = params.n, params.a, params.D

    def tilde(y):
        return y[:n], y[n:]

    invariants = {
        'psi1': lambda y: float(y[:n] @ y[:n]),
        'psi2': lambda y: float(y[:n] @ y[n:]),
        'K': lambda y: hamiltonization.momentum_K_tilde(y[:n], y[n:], a, D),
    }
    invariants.update(_tilde_invariants(tilde, a, D))
    return BoundModel(
        name='geodesic_tilde', n=n,
        rhs=_pair(lambda g, p: hamiltonization.geodesic_rhs(g, p, a, D), n),
        columns=_vector_columns('gamma', n) + _vector_columns('p_tilde', n),
        invariants=invariants, project=project_cotangent,
        params=params, parameters=parameters, tilde=tilde,
    )


def _build_veselova_reduced(parameters: Dict) -> BoundModel:
    a = np.asarray(parameters['a'], dtype=float)
    if a.size < 2 or np.any(a <= 0):
        raise ParameterError(f"All a_i must be positive, got {parameters['a']}")
    n = a.size
    D = float(parameters.get('D') or 1.0)

    def tilde(y):
        return y[:n], hamiltonization.to_tilde(y[:n], y[n:], a, D)

    invariants = dict(_cotangent_invariants(n))
    invariants['p_norm'] = lambda y: float(y[n:] @ y[n:])
    invariants['energy_ratio'] = lambda y: veselova.veselova_energy_ratio(y[:n], y[n:], a)
    invariants.update(_tilde_invariants(tilde, a, D))
    return BoundModel(
        name='veselova_reduced', n=n,
        rhs=_pair(lambda g, p: veselova.veselova_reduced_rhs(g, p, a), n),
        columns=_vector_columns('gamma', n) + _vector_columns('p', n),
        invariants=invariants, project=project_cotangent,
        clock=lambda y: hamiltonization.multiplier(y[:n], a, D),
        parameters=dict(parameters, D=D), tilde=tilde,
    )


def _build_veselova3d(parameters: Dict) -> BoundModel:
    J = _inertia3(parameters)
    if np.any(J <= 1.0):
        raise ParameterError(f"Veselova tensor eigenvalues must exceed 1, got {J.tolist()}")

    def integral(index):
        return lambda y: veselova.veselova3d_integrals(y[:3], y[3:], J)[index]

    return BoundModel(
        name='veselova3d', n=3, rhs=_pair(lambda w, g: veselova.veselova3d_rhs(w, g, J), 3),
        columns=_vector_columns('w', 3) + _vector_columns('gamma', 3),
        invariants={f'f{i + 1}': integral(i) for i in range(4)},
        project=project_unit_tail(3), parameters=parameters,
    )


def _build_ellipsoid(parameters: Dict) -> BoundModel:
    a = np.asarray(parameters['a'], dtype=float)
    if a.size < 2 or np.any(a <= 0):
        raise ParameterError(f"All a_i must be positive, got {parameters['a']}")
    n = a.size
    invariants = {
        'surface': lambda y: float(y[:n] @ (a * y[:n])),
        'tangency': lambda y: float(y[n:] @ (a * y[:n])),
        'speed': lambda y: float(y[n:] @ y[n:]),
    }
    return BoundModel(
        name='ellipsoid', n=n, rhs=_pair(lambda x, v: veselova.ellipsoid_geodesic_rhs(x, v, a), n),
        columns=_vector_columns('x', n) + _vector_columns('v', n), invariants=invariants,
        project=veselova.project_ellipsoid(a), parameters=parameters,
    )


REGISTRY: Dict[str, ModelSpec] = {
    spec.name: spec for spec in (
        ModelSpec('chaplygin_cotangent', 'Reduced Chaplygin sphere on T*S^{n-1} in the time t',
                  ('a', 'D'), _build_chaplygin_cotangent, _cotangent_initial),
        ModelSpec('chaplygin_full', 'Reduced Chaplygin sphere on so(n)* x S^{n-1}',
                  ('a', 'D'), _build_chaplygin_full, _full_initial),
        ModelSpec('chaplygin_homogeneous', 'Homogeneous ball (inertia s Id)',
                  ('n', 's', 'D'), _build_chaplygin_homogeneous, _cotangent_initial),
        ModelSpec('classical3d', 'Classical 3-D Chaplygin ball in vector form',
                  ('inertia', 'D'), _build_classical3d, _classical3d_initial),
        ModelSpec('geodesic_tilde', 'Hamiltonized geodesic flow of H* in the time tau',
                  ('a', 'D'), _build_geodesic_tilde, _tilde_initial),
        ModelSpec('veselova_reduced', 'Reduced Veselova flow on T*S^{n-1}',
                  ('a',), _build_veselova_reduced, _cotangent_initial),
        ModelSpec('veselova3d', 'Classical 3-D Veselova body',
                  ('inertia',), _build_veselova3d, _veselova3d_initial),
        ModelSpec('ellipsoid', 'Geodesic flow on the ellipsoid (x, A x) = 1',
                  ('a',), _build_ellipsoid, _ellipsoid_initial),
    )
}

MODEL_NAMES = tuple(REGISTRY)


def get_model(name: str) -> ModelSpec:
    """
    Raises:
        ValueError: For an unknown model name
    """
    if name not in REGISTRY:
        raise ValueError(f"Unknown model '{name}', expected one of {', '.join(MODEL_NAMES)}")
    return REGISTRY[name]


def bind_model(name: str, parameters: Dict) -> BoundModel:
    """
    Bind scenario parameters to a model.

    Raises:
        ParameterError: On missing or inadmissible parameters
        ValueError: For an unknown model name
    """
    spec = get_model(name)
    _require(parameters, spec.required, name)
    model = spec.builder(dict(parameters))
    logger.debug("Bound model %s with n = %d", name, model.n)
    return model


def initial_state(model: BoundModel, initial: Dict, rng: np.random.Generator) -> np.ndarray:
    """Initial state from explicit vectors or seeded random data."""
    return REGISTRY[model.name].initializer(model, initial, rng)


def omega_along(model: BoundModel, y: np.ndarray) -> np.ndarray:
    """Angular velocity at a state of a cotangent Chaplygin model."""
    n = model.n
    if model.name == 'chaplygin_cotangent':
        return chaplygin.omega_closed(y[:n], y[n:], model.params)
    if model.name == 'chaplygin_homogeneous':
        return chaplygin.homogeneous_omega(y[:n], y[n:], float(model.parameters['s']), float(model.parameters['D']))
    raise ValueError(f"Angular velocity is not available for model '{model.name}'")


def embed_state(y: np.ndarray, n: int) -> np.ndarray:
    """Flat (k, gamma) image of a flat (gamma, p) state."""
    return np.concatenate([wedge(y[:n], y[n:]).ravel(), y[:n]])
