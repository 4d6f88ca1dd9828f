"""
Inertia operators on so(n) that are diagonal in the basis E_i^E_j.

Covers the Chaplygin operator built from A = diag(a) and D = m rho^2,
the Veselova operator, the multidimensional Lagrange case and the
three-dimensional parameter maps (principal moments, Fedorov map).
"""

from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np

from chaplab.son_geometry import coefficients


class ParameterError(ValueError):
    """Raised when physical parameters violate an admissibility condition."""


@dataclass(frozen=True, eq=False)
class DiagonalInertia:
    """
    Diagonal operator M_ij -> c_ij M_ij on so(n).

    The table is symmetric with ones on the diagonal, so applying it
    elementwise to a skew matrix never touches the (zero) diagonal.
    """

    table: np.ndarray

    def __post_init__(self):
        table = np.array(self.table, dtype=float)
        if table.ndim != 2 or table.shape[0] != table.shape[1]:
            raise ParameterError(f"Inertia table must be square, got shape {table.shape}")
        if not np.allclose(table, table.T, rtol=1e-14, atol=0.0):
            raise ParameterError("Inertia table must be symmetric")
        np.fill_diagonal(table, 1.0)
        if not np.all(np.isfinite(table)) or np.any(table <= 0):
            raise ParameterError("All inertia coefficients c_ij must be positive and finite")
        table.setflags(write=False)
        object.__setattr__(self, 'table', table)

    @classmethod
    def from_pairs(cls, n: int, values: Dict[Tuple[int, int], float]) -> 'DiagonalInertia':
        """Build from a {(i, j): c_ij} mapping with zero-based i < j."""
        table = np.ones((n, n))
        for (i, j), value in values.items():
            table[i, j] = table[j, i] = value
        return cls(table)

    @classmethod
    def scalar(cls, n: int, s: float) -> 'DiagonalInertia':
        """Homogeneous operator s * Id."""
        return cls(np.full((n, n), float(s)))

    @property
    def n(self) -> int:
        return self.table.shape[0]

    def coefficient(self, i: int, j: int) -> float:
        return float(self.table[i, j])

    def coefficient_vector(self) -> np.ndarray:
        """c_ij for i < j in the row-major basis order."""
        return coefficients(self.table) if self.n > 1 else np.zeros(0)

    def matrix(self) -> np.ndarray:
        """Diagonal matrix of the operator in the E_i^E_j coefficient basis."""
        return np.diag(self.coefficient_vector())

    def apply(self, m: np.ndarray) -> np.ndarray:
        _check_dimension(self, m)
        return self.table * m

    def apply_inverse(self, m: np.ndarray) -> np.ndarray:
        _check_dimension(self, m)
        return m / self.table


def _check_dimension(inertia: DiagonalInertia, m: np.ndarray) -> None:
    if np.shape(m) != (inertia.n, inertia.n):
        raise ValueError(f"Dimension mismatch: operator on so({inertia.n}), matrix {np.shape(m)}")


def apply(inertia: DiagonalInertia, m: np.ndarray) -> np.ndarray:
    """Apply the operator coefficient-wise."""
    return inertia.apply(m)


def apply_inverse(inertia: DiagonalInertia, m: np.ndarray) -> np.ndarray:
    """Apply the inverse operator coefficient-wise."""
    return inertia.apply_inverse(m)


@dataclass(frozen=True, eq=False)
class ChaplyginParams:
    """
    Parameters of the Chaplygin ball: A = diag(a) and D = m rho^2.

    Admissibility requires 0 < a_i a_j < D for every pair i < j.
    """

    a: np.ndarray
    D: float
    notes: Dict[str, str] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        a = np.array(self.a, dtype=float).ravel()
        if a.size < 2:
            raise ParameterError("Need at least two parameters a_i")
        if not np.all(np.isfinite(a)) or np.any(a <= 0):
            raise ParameterError(f"All a_i must be positive, got {a.tolist()}")
        if not np.isfinite(self.D) or self.D <= 0:
            raise ParameterError(f"D must be positive, got {self.D}")
        products = np.outer(a, a)
        rows, cols = np.triu_indices(a.size, 1)
        worst = int(np.argmax(products[rows, cols]))
        i, j = rows[worst], cols[worst]
        if products[i, j] >= self.D:
            raise ParameterError(
                f"Inadmissible parameters: a_{i + 1}*a_{j + 1} = {products[i, j]:g} "
                f"must be < D = {self.D:g} (0 < a_i a_j < D)"
            )
        a.setflags(write=False)
        object.__setattr__(self, 'a', a)
        object.__setattr__(self, 'D', float(self.D))

    @property
    def n(self) -> int:
        return self.a.size

    @property
    def A(self) -> np.ndarray:
        return np.diag(self.a)

    @property
    def a_inv(self) -> np.ndarray:
        return 1.0 / self.a

    def is_homogeneous(self) -> bool:
        return bool(np.all(self.a == self.a[0]))


def chaplygin_inertia(params: ChaplyginParams) -> DiagonalInertia:
    """
    Chaplygin inertia operator c_ij = a_i a_j D / (D - a_i a_j).

    Args:
        params: Admissible ChaplyginParams

    Returns:
        DiagonalInertia
    """
    products = np.outer(params.a, params.a)
    table = np.ones_like(products)
    rows, cols = np.triu_indices(params.n, 1)
    values = products[rows, cols] * params.D / (params.D - products[rows, cols])
    table[rows, cols] = values
    table[cols, rows] = values
    return DiagonalInertia(table)


def veselova_inertia(a) -> DiagonalInertia:
    """
    Veselova inertia operator c_ij = 1 / (a_i a_j).

    Raises:
        ParameterError: If any a_i is not positive
    """
    a = np.asarray(a, dtype=float)
    if np.any(a <= 0):
        raise ParameterError(f"All a_i must be positive, got {a.tolist()}")
    return DiagonalInertia(1.0 / np.outer(a, a))


def veselova_chaplygin_relation(a, D: float) -> float:
    """
    Residual of D * Veselova = Id + D * Chaplygin^{-1}, coefficient-wise.

    Returns:
        Largest absolute coefficient residual
    """
    params = ChaplyginParams(a, D)
    ves = veselova_inertia(params.a).coefficient_vector()
    cha = chaplygin_inertia(params).coefficient_vector()
    return float(np.max(np.abs(D * ves - (1.0 + D / cha))))


def inertia_from_principal_3d(I1: float, I2: float, I3: float, D: float) -> ChaplyginParams:
    """
    Recover A = diag(a1, a2, a3) from principal moments of a 3-D ball.

    Under the hat-map identification I1 = c_23, I2 = c_13, I3 = c_12.

    Args:
        I1, I2, I3: Principal moments of inertia (positive)
        D: m rho^2 (positive)

    Returns:
        ChaplyginParams whose Chaplygin operator is diag(I1, I2, I3)

    Raises:
        ParameterError: On non-positive input or inadmissible result
    """
    moments = np.array([I1, I2, I3], dtype=float)
    if np.any(moments <= 0) or D <= 0:
        raise ParameterError("Principal moments and D must be positive")
    scale = np.sqrt(np.prod(moments) * D) / np.sqrt(np.prod(moments + D))
    a = scale * (moments + D) / moments
    return ChaplyginParams(a, D)


def principal_from_chaplygin_3d(params: ChaplyginParams) -> Tuple[float, float, float]:
    """Principal moments (c_23, c_13, c_12) of a 3-D Chaplygin operator."""
    if params.n != 3:
        raise ParameterError(f"Principal moments need n = 3, got n = {params.n}")
    table = chaplygin_inertia(params).table
    return float(table[1, 2]), float(table[0, 2]), float(table[0, 1])


def lagrange_params(a1: float, an: float, D: float, n: int) -> Tuple[ChaplyginParams, np.ndarray]:
    """
    Multidimensional Lagrange case a_1 = ... = a_{n-1} != a_n.

    The Chaplygin operator then reads I w = J w + w J with the mass
    tensor J = diag(J_1, ..., J_1, J_n).

    Args:
        a1: Repeated parameter
        an: Last parameter
        D: m rho^2
        n: Dimension (at least 3)

    Returns:
        Tuple of (params, J)

    Raises:
        ParameterError: If a1 == an, J is not positive, or c_ij != J_i + J_j
    """
    if n < 3:
        raise ParameterError(f"Lagrange case needs n >= 3, got {n}")
    if a1 == an:
        raise ParameterError("Lagrange case requires a_1 != a_n")
    a = np.full(n, float(a1))
    a[-1] = an
    params = ChaplyginParams(a, D)

    J1 = a1 ** 2 * D / (2.0 * (D - a1 ** 2))
    Jn = a1 * an * D / (D - a1 * an) - J1
    if J1 <= 0 or Jn <= 0:
        raise ParameterError(
            f"Mass tensor must be positive: J_1 = {J1:g}, J_n = {Jn:g} "
            f"(requires 2 a_n D > a_1 D + a_1^2 a_n)"
        )
    J = np.full(n, J1)
    J[-1] = Jn

    table = chaplygin_inertia(params).table
    expected = J[:, None] + J[None, :]
    rows, cols = np.triu_indices(n, 1)
    residual = np.max(np.abs(table[rows, cols] - expected[rows, cols]) / expected[rows, cols])
    if residual > 1e-12:
        raise ParameterError(f"I w = J w + w J fails (relative residual {residual:.3e})")

    printed = 2 * an * D > a1 * an + a1 * D
    params.notes['lagrange_printed_inequality'] = 'holds' if printed else 'fails'
    params.notes['physical'] = 'Lagrange rigid body with mass tensor J'
    return params, J


def fedorov_map_3d(ves_inertia, D: float, w, gamma) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Fedorov map from the Veselova body to the Chaplygin ball (n = 3).

    I = D (J - Id)^{-1}, omega = -(1/D)(J - Id) w, gamma unchanged,
    where J is the Veselova inertia tensor.

    Args:
        ves_inertia: Diagonal of the Veselova tensor (eigenvalues > 1)
        D: m rho^2
        w: Veselova angular velocity
        gamma: Vertical unit vector

    Returns:
        Tuple (I diagonal, omega, gamma)

    Raises:
        ParameterError: If an eigenvalue is not greater than 1
    """
    J = np.asarray(ves_inertia, dtype=float)
    if J.shape != (3,):
        raise ParameterError("Fedorov map expects the 3 diagonal entries of the Veselova tensor")
    if np.any(J <= 1.0):
        raise ParameterError(f"Veselova tensor eigenvalues must exceed 1, got {J.tolist()}")
    I = D / (J - 1.0)
    omega = -(J - 1.0) * np.asarray(w, dtype=float) / D
    return I, omega, np.asarray(gamma, dtype=float).copy()


def fedorov_inverse_3d(chap_inertia, D: float, omega, gamma) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Inverse of fedorov_map_3d: J = Id + D I^{-1}, w = -I omega."""
    I = np.asarray(chap_inertia, dtype=float)
    J = 1.0 + D / I
    w = -I * np.asarray(omega, dtype=float)
    return J, w, np.asarray(gamma, dtype=float).copy()


__all__ = [
    'ParameterError', 'DiagonalInertia', 'ChaplyginParams', 'apply', 'apply_inverse',
    'chaplygin_inertia', 'veselova_inertia', 'veselova_chaplygin_relation',
    'inertia_from_principal_3d', 'principal_from_chaplygin_3d', 'lagrange_params',
    'fedorov_map_3d', 'fedorov_inverse_3d',
]
