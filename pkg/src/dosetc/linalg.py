"""Small dense linear-algebra kernel.

Only what the certification and simulation code needs: a Jacobi
eigensolver for symmetric matrices, positive-definiteness tests, the
spectral norm, a Kronecker-vectorized Lyapunov solver and the right
pseudo-inverse. Dimensions here are tiny (at most a dozen or so), so
clarity wins over speed.
"""
from __future__ import annotations

import numpy as np

SYM_TOL = 1e-9
RANK_TOL = 1e-10


class DimensionError(ValueError):
    pass


class SymmetryError(ValueError):
    pass


class NoSolutionError(ArithmeticError):
    pass


class RankError(ArithmeticError):
    pass


def as_matrix(M, name="matrix") -> np.ndarray:
    """Coerce to a finite 2-D float array."""
    a = np.array(M, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a.reshape(1, -1)
    if a.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    return a


def symmetrize(M) -> np.ndarray:
    """Check the symmetry defect and return (M + M^T)/2."""
    a = as_matrix(M)
    if a.shape[0] != a.shape[1]:
        raise DimensionError(f"expected a square matrix, got {a.shape}")
    if a.size == 0:
        return a
    scale = 1.0 + np.max(np.abs(a))
    if np.max(np.abs(a - a.T)) > SYM_TOL * scale:
        raise SymmetryError("matrix is not symmetric within tolerance")
    return 0.5 * (a + a.T)


def sym_eig(M, max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns ``(w, V)`` with ``w`` ascending and ``M = V diag(w) V^T``.
    """
    a = symmetrize(M).copy()
    n = a.shape[0]
    v = np.eye(n)
    if n <= 1:
        return np.diag(a).copy(), v
    norm = np.sqrt(np.sum(a * a))
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.triu(a, 1) ** 2))
        if off <= 1e-16 * norm:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if theta == 0.0:
                    t = 1.0
                elif abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                # A <- J^T A J with J the (p, q) rotation
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap = a[p, :].copy()
                aq = a[q, :].copy()
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                a[p, q] = a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order]


def eigvalsh(M) -> np.ndarray:
    return sym_eig(M)[0]


def lambda_min(M) -> float:
    return float(sym_eig(M)[0][0])


def lambda_max(M) -> float:
    return float(sym_eig(M)[0][-1])


def is_positive_definite(M, tol: float = 0.0) -> bool:
    return lambda_min(M) > tol


def spectral_norm(M) -> float:
    a = as_matrix(M)
    if a.size == 0:
        raise DimensionError("spectral norm of an empty matrix")
    g = a.T @ a if a.shape[0] >= a.shape[1] else a @ a.T
    return float(np.sqrt(max(lambda_max(g), 0.0)))


def singular_values(M) -> np.ndarray:
    """Singular values, descending."""
    # a Gram-matrix eigensolve would lose half the digits near rank deficiency
    return np.linalg.svd(as_matrix(M), compute_uv=False)


def rank(M, rel_tol: float = 1e-9) -> int:
    s = singular_values(M)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > rel_tol * s[0]))


def solve_lyapunov(A, Q, rtol: float = 1e-8) -> np.ndarray:
    """Solve ``A^T P + P A = -Q`` for symmetric ``P``.

    The n^2 x n^2 Kronecker system is solved by dense LU. A non-Hurwitz
    ``A`` is detected after the fact: a singular system, a large residual,
    or (for positive definite ``Q``) a ``P`` that is not positive definite.
    """
    A = as_matrix(A, "A")
    Q = symmetrize(Q)
    n = A.shape[0]
    if A.shape != (n, n) or Q.shape != (n, n):
        raise DimensionError(f"incompatible shapes {A.shape} and {Q.shape}")
    eye = np.eye(n)
    # vec(A^T P) = (I kron A^T) vec(P), vec(P A) = (A^T kron I) vec(P)  (column-major vec)
    big = np.kron(eye, A.T) + np.kron(A.T, eye)
    rhs = -Q.reshape(-1, order="F")
    try:
        vec = np.linalg.solve(big, rhs)
    except np.linalg.LinAlgError as exc:
        raise NoSolutionError("Lyapunov operator is singular; A is not Hurwitz") from exc
    P = vec.reshape(n, n, order="F")
    P = 0.5 * (P + P.T)
    resid = A.T @ P + P @ A + Q
    scale = 2.0 * np.max(np.abs(A)) * np.max(np.abs(P)) + np.max(np.abs(Q))
    if not np.all(np.isfinite(P)) or np.max(np.abs(resid)) > rtol * max(scale, 1e-300):
        raise NoSolutionError("Lyapunov residual too large; A is not Hurwitz")
    if n and is_positive_definite(Q, 0.0) and not is_positive_definite(P, 0.0):
        raise NoSolutionError("Lyapunov solution is not positive definite; A is not Hurwitz")
    return P


def right_pseudo_inverse(C) -> np.ndarray:
    """``C^T (C C^T)^{-1}`` for a full-row-rank ``C``."""
    C = as_matrix(C, "C")
    m, n = C.shape
    if m > n:
        raise DimensionError(f"right pseudo-inverse needs rows <= cols, got {C.shape}")
    s = singular_values(C)
    if s.size == 0 or s[0] == 0.0 or s[-1] <= RANK_TOL * s[0]:
        raise RankError("C does not have full row rank")
    return C.T @ np.linalg.inv(C @ C.T)


def sym_part(M) -> np.ndarray:
    a = as_matrix(M)
    return 0.5 * (a + a.T)


def he(M) -> np.ndarray:
    """Hermitian part without the 1/2: ``M + M^T``."""
    a = as_matrix(M)
    return a + a.T
