"""
Small dense matrix calculus used by every moment formula: vec / vech,
duplication and commutation matrices, Kronecker products and definiteness
checks.

Matrices are plain ``numpy.ndarray`` values. ``vech`` stacks the lower
triangle column by column, the convention under which ``D @ vech(B) == vec(B)``.
Fourth-moment matrices are dense ``G**2 x G**2`` arrays, so the number of
characteristics is capped at ``MAX_CHARACTERISTICS``.
"""

import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import linalg

from stratalloc.core.exceptions import ValidationError

logger = logging.getLogger(__name__)

MAX_CHARACTERISTICS = 16


def vech_length(G):
    """Number of distinct entries of a symmetric ``G x G`` matrix."""
    return G * (G + 1) // 2


def dimension_from_vech_length(k):
    """
    Inverse of :func:`vech_length`.

    :param k: Length of a half-vectorized matrix.
    :return: The dimension ``G`` with ``G(G+1)/2 == k``.
    :raises ValidationError: If ``k`` is not a triangular number.
    """
    G = int(round((np.sqrt(8 * k + 1) - 1) / 2))
    if G < 1 or vech_length(G) != k:
        raise ValidationError(f"{k} is not a valid half-vectorized length G(G+1)/2.")
    return G


@lru_cache(maxsize=None)
def vech_indices(G):
    """
    Row and column indices of the lower triangle in vech order.

    :return: Tuple ``(rows, cols)`` of index arrays, column-major over the lower triangle.
    """
    upper_rows, upper_cols = np.triu_indices(G)
    rows, cols = upper_cols, upper_rows
    rows.setflags(write=False)
    cols.setflags(write=False)
    return rows, cols


def vech_position(i, j, G):
    """Position of entry ``(i, j)`` (either triangle) inside ``vech`` of a ``G x G`` matrix."""
    row, col = max(i, j), min(i, j)
    return col * G - col * (col - 1) // 2 + (row - col)


def vec(A):
    """
    Stack the columns of ``A`` into one vector.

    :param A: A 2-D array of shape (m, n).
    :return: Vector of length m*n, column 1 first.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise ValidationError(f"vec expects a 2-D matrix, got shape {A.shape}.")
    return A.reshape(-1, order="F")


def vech(B):
    """
    Half-vectorize a symmetric matrix.

    :param B: A symmetric 2-D array; symmetry is checked exactly.
    :return: Vector of the G(G+1)/2 lower-triangle entries, column-major.
    :raises ValidationError: If ``B`` is not square or not exactly symmetric.
    """
    B = np.asarray(B, dtype=float)
    if B.ndim != 2 or B.shape[0] != B.shape[1]:
        raise ValidationError(f"vech expects a square matrix, got shape {B.shape}.")
    if not np.array_equal(B, B.T):
        raise ValidationError("vech expects a symmetric matrix; input differs from its transpose.")
    rows, cols = vech_indices(B.shape[0])
    return B[rows, cols].copy()


def unvech(v, G):
    """
    Rebuild the symmetric matrix whose vech is ``v``.

    :param v: Vector of length G(G+1)/2.
    :param G: Dimension of the result.
    :return: Symmetric ``G x G`` array.
    :raises ValidationError: If the length of ``v`` does not match ``G``.
    """
    v = np.asarray(v, dtype=float).ravel()
    if G < 1 or v.shape[0] != vech_length(G):
        raise ValidationError(f"unvech: vector of length {v.shape[0]} does not match G={G}.")
    rows, cols = vech_indices(G)
    B = np.zeros((G, G))
    B[rows, cols] = v
    B[cols, rows] = v
    return B


@dataclass(frozen=True)
class DuplicationMatrix:
    """
    Duplication matrix ``D`` of order ``G`` and its Moore-Penrose inverse.

    ``D @ vech(B) == vec(B)`` and ``Dpinv @ vec(B) == vech(B)`` for symmetric ``B``.
    """

    G: int
    D: np.ndarray
    Dpinv: np.ndarray


@lru_cache(maxsize=None)
def duplication(G):
    """
    Build the duplication matrix of order ``G``.

    ``D.T @ D`` is diagonal (1 for diagonal entries, 2 for off-diagonal ones),
    so the pseudo-inverse is the exact closed form ``(D'D)^-1 D'``.

    :param G: Dimension of the symmetric matrices (1 <= G <= MAX_CHARACTERISTICS).
    :return: A :class:`DuplicationMatrix`; the arrays are read-only.
    """
    if G < 1 or G > MAX_CHARACTERISTICS:
        raise ValidationError(f"duplication: G must lie in [1, {MAX_CHARACTERISTICS}], got {G}.")
    k = vech_length(G)
    D = np.zeros((G * G, k))
    for col in range(G):
        for row in range(G):
            D[col * G + row, vech_position(row, col, G)] = 1.0
    multiplicity = D.sum(axis=0)
    Dpinv = D.T / multiplicity[:, None]
    D.setflags(write=False)
    Dpinv.setflags(write=False)
    return DuplicationMatrix(G=G, D=D, Dpinv=Dpinv)


@lru_cache(maxsize=None)
def commutation(m, n):
    """
    Commutation matrix ``K_mn`` with ``K_mn @ vec(C) == vec(C.T)`` for every m x n ``C``.

    :return: Read-only permutation matrix of shape (m*n, m*n).
    """
    if m < 1 or n < 1:
        raise ValidationError(f"commutation: dimensions must be positive, got ({m}, {n}).")
    K = np.zeros((m * n, m * n))
    for i in range(m):
        for j in range(n):
            K[i * n + j, j * m + i] = 1.0
    K.setflags(write=False)
    return K


def kron(A, B):
    """Kronecker product: block (i, j) of the result is ``A[i, j] * B``."""
    return np.kron(np.atleast_2d(np.asarray(A, dtype=float)), np.atleast_2d(np.asarray(B, dtype=float)))


def is_positive_definite(B, tol=0.0):
    """
    Check whether every eigenvalue of the symmetric matrix ``B`` exceeds ``tol``.

    :param B: Symmetric matrix.
    :param tol: Absolute eigenvalue threshold.
    :return: True iff ``min eigenvalue > tol``.
    """
    B = np.asarray(B, dtype=float)
    return bool(linalg.eigvalsh(B).min() > tol)


def is_positive_semidefinite(B, rel_tol=1e-10):
    """
    Check that the smallest eigenvalue of ``B`` is not below ``-rel_tol * ||B||``.

    :param B: Symmetric matrix.
    :param rel_tol: Tolerance relative to the spectral norm of ``B``.
    """
    B = np.asarray(B, dtype=float)
    if B.size == 0:
        return True
    eigenvalues = linalg.eigvalsh((B + B.T) / 2.0)
    scale = max(np.abs(eigenvalues).max(), np.finfo(float).tiny)
    return bool(eigenvalues.min() >= -rel_tol * scale)


def nearest_kronecker_residual(M, shape_a, shape_b):
    """
    Relative Frobenius distance from ``M`` to the nearest ``A kron B``.

    Uses the rearrangement of ``M`` into a matrix whose rank-1 approximations
    correspond to Kronecker products; the residual is the energy outside the
    leading singular value.

    :param M: Matrix of shape (m1*m2, n1*n2).
    :param shape_a: Shape (m1, n1) of the left factor.
    :param shape_b: Shape (m2, n2) of the right factor.
    :return: ``||M - A kron B||_F / ||M||_F`` for the best factors (0.0 for a zero ``M``).
    """
    M = np.asarray(M, dtype=float)
    m1, n1 = shape_a
    m2, n2 = shape_b
    if M.shape != (m1 * m2, n1 * n2):
        raise ValidationError(f"nearest_kronecker_residual: shape {M.shape} does not split into {shape_a} x {shape_b}.")
    norm = linalg.norm(M)
    if norm == 0.0:
        return 0.0
    blocks = M.reshape(m1, m2, n1, n2).transpose(0, 2, 1, 3).reshape(m1 * n1, m2 * n2)
    singular_values = linalg.svdvals(blocks)
    return float(np.sqrt(np.sum(singular_values[1:] ** 2)) / norm)
