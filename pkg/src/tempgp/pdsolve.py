"""Dense symmetric positive-definite linear algebra.

One Cholesky factorization per matrix; solves, log-determinants and
quadratic forms are derived from the factor. Inverses are only formed
explicitly where a full matrix is genuinely needed (likelihood
gradients), via LAPACK ``dpotri`` on the existing factor.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .exceptions import NotPositiveDefiniteError

__all__ = [
    "PDFactorization",
    "factorize",
    "factorize_with_jitter",
    "solve",
    "log_det",
]


class PDFactorization:
    """Lower-triangular Cholesky factor of an n-by-n SPD matrix."""

    __slots__ = ("L", "n")

    def __init__(self, L: np.ndarray):
        self.L = L
        self.n = L.shape[0]

    def solve(self, b: np.ndarray) -> np.ndarray:
        """Solve A x = b for an n-vector or n-by-k right-hand side."""
        b = np.asarray(b, dtype=float)
        if b.shape[0] != self.n:
            raise ValueError(
                f"right-hand side has leading dimension {b.shape[0]}, expected {self.n}"
            )
        return scipy.linalg.cho_solve((self.L, True), b, check_finite=False)

    def log_det(self) -> float:
        """log determinant of A, as 2*sum(log diag L)."""
        return 2.0 * float(np.sum(np.log(np.diag(self.L))))

    def quad_form(self, b: np.ndarray) -> float:
        """b^T A^{-1} b via one triangular solve; never forms A^{-1}."""
        z = scipy.linalg.solve_triangular(
            self.L, np.asarray(b, dtype=float), lower=True, check_finite=False
        )
        return float(z @ z)

    def inverse(self) -> np.ndarray:
        """Explicit A^{-1} (symmetric), computed from the factor in place-free form."""
        inv, info = scipy.linalg.lapack.dpotri(self.L, lower=1)
        if info != 0:
            raise NotPositiveDefiniteError(f"dpotri failed with info={info}")
        # dpotri fills only the lower triangle
        return inv + np.tril(inv, -1).T

    def reconstruct(self) -> np.ndarray:
        """Rebuild the original matrix as L L^T (testing aid)."""
        return self.L @ self.L.T


def factorize(A: np.ndarray, *, check_symmetry: bool = True) -> PDFactorization:
    """Cholesky-factorize a symmetric positive-definite matrix.

    Raises
    ------
    NotPositiveDefiniteError
        If the matrix is not positive definite to working precision.
        Callers may add jitter or reject the hyperparameters.
    ValueError
        If the matrix is not square or not symmetric.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    if check_symmetry:
        scale = max(1.0, float(np.max(np.abs(A))))
        if np.max(np.abs(A - A.T)) > 1e-12 * scale:
            raise ValueError("matrix is not symmetric within 1e-12 relative")
    try:
        L = scipy.linalg.cholesky(A, lower=True, check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(str(exc)) from exc
    return PDFactorization(L)


def factorize_with_jitter(
    A: np.ndarray, jitter: float, *, check_symmetry: bool = False
) -> tuple[PDFactorization, float]:
    """Factorize, retrying once with ``jitter`` added to the diagonal.

    The jitter is applied only if the plain factorization fails. Returns
    the factorization and the jitter actually used (0.0 when none).
    """
    try:
        return factorize(A, check_symmetry=check_symmetry), 0.0
    except NotPositiveDefiniteError:
        if jitter <= 0:
            raise
        Aj = A + jitter * np.eye(A.shape[0])
        return factorize(Aj, check_symmetry=False), jitter


def solve(fact: PDFactorization, b: np.ndarray) -> np.ndarray:
    return fact.solve(b)


def log_det(fact: PDFactorization) -> float:
    return fact.log_det()
