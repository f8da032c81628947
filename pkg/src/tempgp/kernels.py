"""Stationary covariance functions for the regression and time components.

All four families are functions of the anisotropic scaled distance

    r = sqrt( sum_l ((x_l - x'_l) / theta_l)^2 )

with a signal variance out front, so k(x, x) equals the variance for
every family. Hyperparameter derivatives are reported with respect to
log-variance and log-lengthscales: the optimizer works in log space to
keep everything positive without constraints.

The time component uses the same families on the 1-D distance |t - t'|
with a single lengthscale; ``time_kernel_matrix`` evaluates that path
directly from absolute time differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "FAMILIES",
    "KernelSpec",
    "kernel_eval",
    "kernel_grad",
    "gram_matrix",
    "cross_matrix",
    "gram_with_gradients",
    "time_kernel_matrix",
    "time_kernel_vector",
]

FAMILIES = ("squared_exponential", "matern32", "matern52", "exponential")

_SQRT3 = np.sqrt(3.0)
_SQRT5 = np.sqrt(5.0)


@dataclass(frozen=True)
class KernelSpec:
    """Covariance family plus its hyperparameters.

    lengthscales has one entry per input dimension (a single entry for
    the time kernel). All hyperparameters must be strictly positive.
    """

    family: str
    variance: float
    lengthscales: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(
                f"unknown kernel family {self.family!r}; choose from {FAMILIES}"
            )
        if not np.isfinite(self.variance) or self.variance <= 0:
            raise ValueError(f"variance must be positive and finite, got {self.variance}")
        ls = np.atleast_1d(np.asarray(self.lengthscales, dtype=float))
        if ls.ndim != 1 or ls.size == 0:
            raise ValueError("lengthscales must be a non-empty 1-D vector")
        if not np.all(np.isfinite(ls)) or np.any(ls <= 0):
            raise ValueError("all lengthscales must be positive and finite")
        ls.setflags(write=False)
        object.__setattr__(self, "lengthscales", ls)
        object.__setattr__(self, "variance", float(self.variance))

    @property
    def dim(self) -> int:
        return self.lengthscales.size


def _shape(family: str, r: np.ndarray) -> np.ndarray:
    """Correlation h(r) with h(0) = 1, so k = variance * h(r)."""
    if family == "squared_exponential":
        return np.exp(-0.5 * r * r)
    if family == "matern32":
        s = _SQRT3 * r
        return (1.0 + s) * np.exp(-s)
    if family == "matern52":
        s = _SQRT5 * r
        return (1.0 + s + s * s / 3.0) * np.exp(-s)
    if family == "exponential":
        return np.exp(-r)
    raise ValueError(f"unknown kernel family {family!r}")


def _shape_dweight(family: str, r: np.ndarray) -> np.ndarray:
    """w(r) = -h'(r)/r, the common factor in lengthscale derivatives.

    dh/dlog(theta_l) = ((dx_l/theta_l)^2) * w(r). The limit at r = 0 is
    finite for all families except the exponential, where the factor
    (dx_l/theta_l)^2 <= r^2 kills the singularity; there we return 0 at
    r = 0 (exact, since dx = 0 implies no lengthscale dependence).
    """
    if family == "squared_exponential":
        return np.exp(-0.5 * r * r)
    if family == "matern32":
        return 3.0 * np.exp(-_SQRT3 * r)
    if family == "matern52":
        s = _SQRT5 * r
        return (5.0 / 3.0) * (1.0 + s) * np.exp(-s)
    if family == "exponential":
        out = np.zeros_like(r)
        np.divide(np.exp(-r), r, out=out, where=r > 0)
        return out
    raise ValueError(f"unknown kernel family {family!r}")


def _check_dim(spec: KernelSpec, x: np.ndarray) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape[-1] != spec.dim:
        raise ValueError(
            f"input has dimension {x.shape[-1]}, kernel expects {spec.dim}"
        )
    return x


def kernel_eval(spec: KernelSpec, x: np.ndarray, x2: np.ndarray) -> float:
    """Covariance between two points."""
    x = _check_dim(spec, x)
    x2 = _check_dim(spec, x2)
    z = (x - x2) / spec.lengthscales
    r = np.sqrt(np.sum(z * z))
    return float(spec.variance * _shape(spec.family, r))


def kernel_grad(spec: KernelSpec, x: np.ndarray, x2: np.ndarray) -> np.ndarray:
    """Derivatives of k(x, x') w.r.t. (log variance, log theta_1..d).

    Returns a (d+1)-vector; entry 0 is dk/dlog(variance) = k itself.
    """
    x = _check_dim(spec, x)
    x2 = _check_dim(spec, x2)
    z2 = ((x - x2) / spec.lengthscales) ** 2
    r = np.sqrt(np.sum(z2))
    out = np.empty(spec.dim + 1)
    out[0] = spec.variance * _shape(spec.family, r)
    out[1:] = spec.variance * _shape_dweight(spec.family, np.asarray(r)) * z2
    return out


def _scaled_dists(spec: KernelSpec, X: np.ndarray, X2: np.ndarray | None = None):
    """Anisotropic scaled distance matrix between row sets."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != spec.dim:
        raise ValueError(f"input has {X.shape[1]} columns, kernel expects {spec.dim}")
    if X2 is None:
        X2 = X
    else:
        X2 = np.atleast_2d(np.asarray(X2, dtype=float))
        if X2.shape[1] != spec.dim:
            raise ValueError(
                f"input has {X2.shape[1]} columns, kernel expects {spec.dim}"
            )
    R2 = np.zeros((X.shape[0], X2.shape[0]))
    for ell in range(spec.dim):
        d = (X[:, ell, None] - X2[None, :, ell]) / spec.lengthscales[ell]
        R2 += d * d
    return np.sqrt(R2)


def gram_matrix(spec: KernelSpec, X: np.ndarray) -> np.ndarray:
    """n-by-n covariance matrix of a set of rows (symmetric, diag = variance)."""
    R = _scaled_dists(spec, X)
    K = spec.variance * _shape(spec.family, R)
    # enforce exact symmetry and exact variance on the diagonal
    K = 0.5 * (K + K.T)
    np.fill_diagonal(K, spec.variance)
    return K


def cross_matrix(spec: KernelSpec, X: np.ndarray, X2: np.ndarray) -> np.ndarray:
    """n-by-m covariance matrix between two sets of rows."""
    R = _scaled_dists(spec, X, X2)
    return spec.variance * _shape(spec.family, R)


def gram_with_gradients(spec: KernelSpec, X: np.ndarray):
    """Gram matrix plus its derivatives w.r.t. log hyperparameters.

    Returns (K, dK_list) where dK_list[0] = dK/dlog(variance) (= K) and
    dK_list[1+l] = dK/dlog(theta_l). Used by the likelihood gradient;
    per-dimension distance matrices are recomputed rather than stored to
    keep peak memory at two n-by-n temporaries.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != spec.dim:
        raise ValueError(f"input has {X.shape[1]} columns, kernel expects {spec.dim}")
    R = _scaled_dists(spec, X)
    K = spec.variance * _shape(spec.family, R)
    K = 0.5 * (K + K.T)
    np.fill_diagonal(K, spec.variance)
    W = spec.variance * _shape_dweight(spec.family, R)
    grads = [K]
    for ell in range(spec.dim):
        d = (X[:, ell, None] - X[None, :, ell]) / spec.lengthscales[ell]
        grads.append(W * d * d)
    return K, grads


def time_kernel_matrix(
    family: str, variance: float, phi: float, t: np.ndarray
) -> np.ndarray:
    """Covariance matrix over integer time indices, from |t_i - t_j| / phi."""
    if variance < 0 or phi <= 0:
        raise ValueError("time kernel needs variance >= 0 and lengthscale > 0")
    t = np.asarray(t, dtype=float)
    r = np.abs(t[:, None] - t[None, :]) / phi
    return variance * _shape(family, r)


def time_kernel_vector(
    family: str, variance: float, phi: float, t_star: float, t: np.ndarray
) -> np.ndarray:
    """Covariance vector between one time point and a set of time points."""
    if variance < 0 or phi <= 0:
        raise ValueError("time kernel needs variance >= 0 and lengthscale > 0")
    r = np.abs(float(t_star) - np.asarray(t, dtype=float)) / phi
    return variance * _shape(family, r)
