"""
Linear algebra on so(n).

Skew-symmetric matrices are plain n x n numpy arrays. The basis
E_i^E_j (i < j) gives the coefficient view used by diagonal inertia
operators: the coefficient of M along E_i^E_j is simply M[i, j].
"""

from typing import Tuple

import numpy as np


SKEW_TOLERANCE = 1e-10
ORTHOGONALITY_TOLERANCE = 1e-10


def _check_same_shape(x: np.ndarray, y: np.ndarray, what: str) -> None:
    if x.shape != y.shape:
        raise ValueError(f"Dimension mismatch in {what}: {x.shape} vs {y.shape}")


def wedge(x, y) -> np.ndarray:
    """
    Wedge product of two vectors, x^y = x y^T - y x^T.

    Args:
        x: Vector of length n
        y: Vector of length n

    Returns:
        n x n skew-symmetric matrix

    Raises:
        ValueError: If x and y have different lengths
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    _check_same_shape(x, y, "wedge")
    return np.outer(x, y) - np.outer(y, x)


def inner(m: np.ndarray, n: np.ndarray) -> float:
    """
    Invariant scalar product <M, N> = -1/2 tr(MN).

    Args:
        m: Skew matrix
        n: Skew matrix of the same dimension

    Returns:
        Scalar product value

    Raises:
        ValueError: On dimension mismatch
    """
    m = np.asarray(m, dtype=float)
    n = np.asarray(n, dtype=float)
    _check_same_shape(m, n, "inner")
    # -1/2 tr(MN) written elementwise to avoid forming the product
    return float(-0.5 * np.sum(m * n.T))


def commutator(m: np.ndarray, n: np.ndarray) -> np.ndarray:
    """Matrix commutator [M, N] = MN - NM."""
    _check_same_shape(np.asarray(m), np.asarray(n), "commutator")
    return m @ n - n @ m


def proj_h_gamma(m: np.ndarray, gamma) -> np.ndarray:
    """
    Orthogonal projection of M onto h^gamma = R^n ^ gamma.

    Args:
        m: Skew matrix
        gamma: Unit vector

    Returns:
        (M gamma) ^ gamma
    """
    gamma = np.asarray(gamma, dtype=float)
    if m.shape != (gamma.size, gamma.size):
        raise ValueError(f"Dimension mismatch in proj_h_gamma: {m.shape} vs {gamma.size}")
    return wedge(m @ gamma, gamma)


def proj_complement(m: np.ndarray, gamma) -> np.ndarray:
    """
    Projection of M onto so(n-1)^gamma, the complement of h^gamma.

    Args:
        m: Skew matrix
        gamma: Unit vector

    Returns:
        M - proj_h_gamma(M, gamma)
    """
    return m - proj_h_gamma(m, gamma)


def validate_skew(m: np.ndarray, tolerance: float = SKEW_TOLERANCE) -> None:
    """
    Check that a square matrix is antisymmetric.

    Raises:
        ValueError: If the matrix is not square or M^T != -M beyond tolerance
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"Expected a square matrix, got shape {m.shape}")
    scale = max(1.0, float(np.max(np.abs(m))))
    defect = float(np.max(np.abs(m + m.T)))
    if defect > tolerance * scale:
        raise ValueError(f"Matrix is not skew-symmetric (defect {defect:.3e})")


def orthogonality_defect(g: np.ndarray) -> float:
    """Return max |g^T g - I| entrywise."""
    g = np.asarray(g, dtype=float)
    return float(np.max(np.abs(g.T @ g - np.eye(g.shape[0]))))


def validate_rotation(g: np.ndarray, tolerance: float = ORTHOGONALITY_TOLERANCE) -> None:
    """
    Check that g lies in SO(n).

    Raises:
        ValueError: If g is not orthogonal or has determinant -1
    """
    g = np.asarray(g, dtype=float)
    if g.ndim != 2 or g.shape[0] != g.shape[1]:
        raise ValueError(f"Expected a square matrix, got shape {g.shape}")
    defect = orthogonality_defect(g)
    if defect > tolerance:
        raise ValueError(f"Matrix is not orthogonal (defect {defect:.3e})")
    det = float(np.linalg.det(g))
    if abs(det - 1.0) > tolerance:
        raise ValueError(f"Rotation must have determinant +1, got {det:.12f}")


def adjoint(g: np.ndarray, m: np.ndarray) -> np.ndarray:
    """
    Adjoint action Ad_g M = g M g^T.

    Args:
        g: Rotation matrix in SO(n)
        m: Skew matrix

    Returns:
        Rotated skew matrix

    Raises:
        ValueError: If g is not a rotation or dimensions differ
    """
    validate_rotation(g)
    _check_same_shape(np.asarray(g), np.asarray(m), "adjoint")
    return g @ m @ g.T


def coefficient_indices(n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Row-major (i, j) index arrays of the E_i^E_j basis, i < j."""
    return np.triu_indices(n, 1)


def coefficients(m: np.ndarray) -> np.ndarray:
    """Coefficients M_ij = <M, E_i^E_j>, i < j, in row-major order."""
    rows, cols = coefficient_indices(m.shape[0])
    return np.asarray(m, dtype=float)[rows, cols]


def from_coefficients(c, n: int) -> np.ndarray:
    """Inverse of coefficients(): rebuild the skew matrix."""
    c = np.asarray(c, dtype=float)
    rows, cols = coefficient_indices(n)
    if c.size != rows.size:
        raise ValueError(f"Expected {rows.size} coefficients for n={n}, got {c.size}")
    m = np.zeros((n, n))
    m[rows, cols] = c
    m[cols, rows] = -c
    return m


def hat(v) -> np.ndarray:
    """
    3-D hat map: vector -> skew matrix with hat(x) y = x cross y.

    Raises:
        ValueError: If v is not a 3-vector
    """
    v = np.asarray(v, dtype=float)
    if v.shape != (3,):
        raise ValueError(f"hat map is defined for 3-vectors only, got shape {v.shape}")
    return np.array([
        [0.0, -v[2], v[1]],
        [v[2], 0.0, -v[0]],
        [-v[1], v[0], 0.0],
    ])


def vee(m: np.ndarray) -> np.ndarray:
    """
    Inverse of hat().

    Raises:
        ValueError: If m is not 3 x 3
    """
    m = np.asarray(m, dtype=float)
    if m.shape != (3, 3):
        raise ValueError(f"vee map is defined for 3 x 3 matrices only, got shape {m.shape}")
    return np.array([m[2, 1], m[0, 2], m[1, 0]])
