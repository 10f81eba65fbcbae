"""Dense linear-algebra kernel shared by every other module.

All functions are pure: inputs are never modified and outputs are fresh arrays.
"""
from dataclasses import dataclass
from typing import Any, Optional

import numpy as np
import scipy.linalg as sla

from src.func.errors import InputError, NoConvergence, NotSchurStable, RankDeficient

EPS: float = float(np.finfo(float).eps)

DARE_MAX_ITERS = 100_000
DARE_STEP_TOL = 1e-13


@dataclass(frozen=True)
class RankReport:
    numerical_rank: int
    singular_values: np.ndarray
    tolerance_used: float


def as_matrix(value: Any, name: str = "matrix") -> np.ndarray:
    """
    Converts value into a 2-D float array and validates it.

    Args:
        value: Anything numpy can turn into an array. Scalars and vectors are
            promoted to 1x1 and 1xN matrices.
        name: Used in the error message.

    Returns:
        A new float64 array with positive dimensions and finite entries.
    """

    matrix = np.array(value, dtype=float, ndmin=2)
    if matrix.ndim != 2:
        raise InputError(f"{name}: expected a 2-D matrix, got {matrix.ndim} dims")
    if matrix.size == 0:
        raise InputError(f"{name}: dimensions must be positive, got {matrix.shape}")
    if not np.all(np.isfinite(matrix)):
        raise InputError(f"{name}: entries must be finite")
    return matrix


def as_square(value: Any, name: str = "matrix") -> np.ndarray:
    matrix = as_matrix(value, name)
    if matrix.shape[0] != matrix.shape[1]:
        raise InputError(f"{name}: expected a square matrix, got {matrix.shape}")
    return matrix


def rank_with_tolerance(M: Any, tol: Optional[float] = None) -> RankReport:
    """
    Numerical rank by singular values.

    Args:
        M: Matrix to inspect.
        tol: Singular values strictly above tol count. Defaults to
            max(rows, cols) * eps * largest singular value.
    """

    matrix = as_matrix(M)
    singular_values = sla.svdvals(matrix)
    if tol is None:
        largest = singular_values[0] if singular_values.size else 0.0
        tol = max(matrix.shape) * EPS * largest
    rank = int(np.count_nonzero(singular_values > tol))
    return RankReport(
        numerical_rank=rank, singular_values=singular_values, tolerance_used=float(tol)
    )


def pivoted_independent_rows(M: Any, k: int, tol: Optional[float] = None) -> list[int]:
    """
    Selects k linearly independent rows greedily by largest remaining pivot.

    Column-pivoted QR of M^T picks, at every step, the row whose component
    orthogonal to the rows already chosen has the largest norm. LAPACK takes
    the first maximum, so ties go to the smallest row index. Transpose the
    argument to select columns instead.

    Raises:
        RankDeficient: M has numerical rank below k at tol.
    """

    matrix = as_matrix(M)
    report = rank_with_tolerance(matrix, tol)
    if report.numerical_rank < k:
        raise RankDeficient(report.numerical_rank, k)
    if k == 0:
        return []

    _, _, pivots = sla.qr(matrix.T, mode="economic", pivoting=True)
    selected = [int(index) for index in pivots[:k]]

    achieved = rank_with_tolerance(matrix[selected], report.tolerance_used)
    if achieved.numerical_rank < k:
        raise RankDeficient(achieved.numerical_rank, k)
    return selected


def spectral_radius(M: Any) -> float:
    """Largest eigenvalue magnitude"""

    matrix = as_square(M)
    return float(np.max(np.abs(sla.eigvals(matrix))))


def solve_discrete_lyapunov(Phi: Any, Qeff: Any) -> np.ndarray:
    """
    Solves Theta = Phi^T Theta Phi + Qeff.

    The n^2 linear system (I - (Phi kron Phi)^T) vec(Theta) = vec(Qeff) is
    solved directly; the result is symmetrized.

    Raises:
        NotSchurStable: Phi has spectral radius >= 1 or the system is singular.
    """

    phi = as_square(Phi, "Phi")
    qeff = as_square(Qeff, "Qeff")
    n = phi.shape[0]
    if qeff.shape != (n, n):
        raise InputError(f"Qeff: expected shape {(n, n)}, got {qeff.shape}")

    radius = spectral_radius(phi)
    if radius >= 1.0:
        raise NotSchurStable(radius)

    lhs = np.eye(n * n) - np.kron(phi, phi).T
    try:
        vec_theta = sla.solve(lhs, qeff.reshape(-1))
    except (sla.LinAlgError, ValueError) as e:
        raise NotSchurStable(radius, f"vectorized Lyapunov system is singular: {e}")

    theta = vec_theta.reshape(n, n)
    return (theta + theta.T) / 2


def riccati_residual(
    A: np.ndarray, B: np.ndarray, Qxi: np.ndarray, R: np.ndarray, P: np.ndarray
) -> np.ndarray:
    """Left-hand side of the discrete algebraic Riccati equation at P"""

    gain_term = A.T @ P @ B @ np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)
    return Qxi + A.T @ P @ A - P - gain_term


def solve_dare(
    A: Any, B: Any, Qxi: Any, R: Any, max_iters: int = DARE_MAX_ITERS
) -> np.ndarray:
    """
    Stabilizing solution of the DARE by fixed-point Riccati iteration.

    Starts from P = Qxi and iterates until the Frobenius change is at most
    1e-13 * (1 + ||P||).

    Raises:
        NoConvergence: the iteration cap was hit or P left the finite range.
    """

    a = as_square(A, "A")
    b = as_matrix(B, "B")
    qxi = as_square(Qxi, "Qxi")
    r = as_square(R, "R")
    n, m = a.shape[0], r.shape[0]
    if b.shape != (n, m) or qxi.shape != (n, n):
        raise InputError(
            f"DARE dimensions inconsistent: A {a.shape}, B {b.shape}, "
            f"Qxi {qxi.shape}, R {r.shape}"
        )

    P = qxi.copy()
    for iteration in range(1, max_iters + 1):
        P_next = qxi + a.T @ P @ a - a.T @ P @ b @ np.linalg.solve(
            r + b.T @ P @ b, b.T @ P @ a
        )
        P_next = (P_next + P_next.T) / 2
        if not np.all(np.isfinite(P_next)):
            raise NoConvergence(iteration, "Riccati iterate became non-finite")
        change = np.linalg.norm(P_next - P)
        P = P_next
        if change <= DARE_STEP_TOL * (1 + np.linalg.norm(P)):
            return P

    raise NoConvergence(max_iters)
