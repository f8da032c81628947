"""Synthetic benchmark generators with stored ground truth.

Every dataset is built as response = f(covariates) + temporal component
+ i.i.d. noise, with each piece kept alongside the data so tests can
score estimates against the truth. Covariates follow stationary AR
processes (so they are serially correlated like real environmental
measurements), and the temporal component is a stationary GP path over
the integer time grid sampled in blocks with conditional continuation,
which keeps path generation linear-ish in length.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.signal

from .data import TimeSeriesDataset
from .exceptions import ConfigError
from .kernels import _shape, time_kernel_matrix
from .pdsolve import factorize_with_jitter

__all__ = [
    "SimConfig",
    "SimOutput",
    "TRUE_FUNCTIONS",
    "ar_from_partial_autocorrelations",
    "sample_ar",
    "sample_gp_path",
    "simulate_fig2",
    "simulate_temporal",
]


def _quad_sine(X: np.ndarray) -> np.ndarray:
    """5 x1^2 + 3 sin(pi x2): a curved effect plus a bounded wave, driven
    by the first two covariates only; the rest are nuisance."""
    if X.shape[1] < 2:
        raise ConfigError("quad_sine needs at least two covariates")
    return 5.0 * X[:, 0] ** 2 + 3.0 * np.sin(np.pi * X[:, 1])


def _quad(X: np.ndarray) -> np.ndarray:
    return 5.0 * X[:, 0] ** 2


TRUE_FUNCTIONS = {"quad_sine": _quad_sine, "quad": _quad}


@dataclass(frozen=True)
class SimConfig:
    """Settings for the temporal-overfitting benchmark generator."""

    n: int
    ar_coefficients: tuple[tuple[float, ...], ...]
    function: str = "quad_sine"
    g_family: str = "matern32"
    g_variance: float = 4.0
    g_lengthscale: float = 4.0
    noise_variance: float = 0.25
    seed: int = 0

    def __post_init__(self):
        if self.n < 2:
            raise ConfigError("need at least two rows")
        if self.function not in TRUE_FUNCTIONS:
            raise ConfigError(
                f"unknown true function {self.function!r}; choose from {sorted(TRUE_FUNCTIONS)}"
            )
        if self.g_variance < 0 or self.noise_variance < 0:
            raise ConfigError("variances must be nonnegative")
        if self.g_lengthscale <= 0:
            raise ConfigError("g lengthscale must be positive")
        for coefs in self.ar_coefficients:
            _check_stationary(coefs)

    @property
    def d(self) -> int:
        return len(self.ar_coefficients)


@dataclass(frozen=True)
class SimOutput:
    """Dataset plus the hidden truth; y = f + g + noise exactly by
    construction."""

    dataset: TimeSeriesDataset
    f_values: np.ndarray
    g_values: np.ndarray
    noise: np.ndarray


def _check_stationary(coefs) -> None:
    coefs = np.asarray(coefs, dtype=float)
    if coefs.size == 0:
        return  # white noise
    p = coefs.size
    companion = np.zeros((p, p))
    companion[0, :] = coefs
    if p > 1:
        companion[1:, :-1] = np.eye(p - 1)
    radius = float(np.max(np.abs(np.linalg.eigvals(companion))))
    if radius >= 1.0:
        raise ConfigError(
            f"AR coefficients {list(coefs)} are non-stationary (spectral radius {radius:.3f})"
        )


def ar_from_partial_autocorrelations(kappas) -> tuple[float, ...]:
    """AR coefficients whose theoretical PACF equals the given values at
    lags 1..p and zero beyond (inverse of the Durbin-Levinson recursion).

    Handy for building AR(p) processes with a guaranteed PACF cutoff.
    Each kappa must lie strictly inside (-1, 1).
    """
    kappas = np.asarray(kappas, dtype=float)
    if np.any(np.abs(kappas) >= 1):
        raise ConfigError("partial autocorrelations must lie in (-1, 1)")
    phi = np.array([kappas[0]])
    for k in range(1, kappas.size):
        a = kappas[k]
        phi = np.concatenate([phi - a * phi[::-1], [a]])
    return tuple(float(v) for v in phi)


def sample_ar(coefs, n: int, rng: np.random.Generator, burn: int | None = None) -> np.ndarray:
    """One stationary AR path with unit-variance innovations, normalized
    to unit sample standard deviation (PACF is unaffected)."""
    _check_stationary(coefs)
    coefs = np.asarray(coefs, dtype=float)
    p = coefs.size
    if burn is None:
        burn = max(500, 20 * p)
    total = n + burn
    eps = rng.standard_normal(total)
    if p == 0:
        x = eps
    else:
        # AR(p) driven by eps is an all-pole filter with zero initial state
        x = scipy.signal.lfilter([1.0], np.concatenate([[1.0], -coefs]), eps)
    path = x[burn:]
    sd = path.std()
    return path / sd if sd > 0 else path


def sample_gp_path(
    family: str,
    variance: float,
    lengthscale: float,
    t: np.ndarray,
    rng: np.random.Generator,
    block_size: int = 768,
) -> np.ndarray:
    """Stationary zero-mean GP path over sorted time points.

    Sampled block by block, each block conditioned on a trailing window
    of already-sampled points wide enough (several lengthscales) that
    the truncation error is far below Monte Carlo noise.
    """
    t = np.asarray(t, dtype=float)
    n = t.shape[0]
    if variance == 0.0:
        return np.zeros(n)
    window = int(min(max(32, np.ceil(6.0 * lengthscale)), 600))
    jitter = 1e-10 * variance
    out = np.empty(n)
    pos = 0
    while pos < n:
        end = min(pos + block_size, n)
        t_new = t[pos:end]
        K_nn = time_kernel_matrix(family, variance, lengthscale, t_new)
        if pos == 0:
            mean = np.zeros(end - pos)
            cov = K_nn
        else:
            lo = max(0, pos - window)
            t_old = t[lo:pos]
            K_oo = time_kernel_matrix(family, variance, lengthscale, t_old)
            fact, _ = factorize_with_jitter(K_oo + jitter * np.eye(t_old.size), jitter * 100)
            K_no = variance * _shape(
                family, np.abs(t_new[:, None] - t_old[None, :]) / lengthscale
            )
            sol = fact.solve(K_no.T)
            mean = sol.T @ out[lo:pos]
            cov = K_nn - K_no @ sol
            cov = 0.5 * (cov + cov.T)
        fact_new, _ = factorize_with_jitter(cov + jitter * np.eye(cov.shape[0]), jitter * 100)
        out[pos:end] = mean + fact_new.L @ rng.standard_normal(end - pos)
        pos = end
    return out


def _as_dataset(y, X, t, f_vals, g_vals, noise, names=None) -> SimOutput:
    d = X.shape[1]
    names = tuple(names) if names else tuple(f"x{i + 1}" for i in range(d))
    ds = TimeSeriesDataset(
        y=y,
        X=X,
        t=t,
        covariate_names=names,
        raw_columns=X.copy(),
        raw_names=names,
    )
    return SimOutput(dataset=ds, f_values=f_vals, g_values=g_vals, noise=noise)


def simulate_fig2(
    n: int,
    lengthscale: float = 0.05,
    seed: int = 0,
    error_variance: float = 0.5,
    correlated: bool = True,
) -> SimOutput:
    """One-covariate overfitting showcase: slow input, curved truth.

    The input is an AR(1) path (coefficient 0.98) rescaled into [0, 1]
    and the truth is 5 x^2. With ``correlated=True`` the error is a
    zero-mean GP over the input values with an exponential kernel
    (default lengthscale 0.05), so the error looks like structure along
    the curve; otherwise it is i.i.d. noise of matched variance.
    """
    if n < 2:
        raise ConfigError("need at least two rows")
    if lengthscale <= 0:
        raise ConfigError("invalid lengthscale")
    if n > 8000 and correlated:
        raise ConfigError("correlated variant factorizes an n-by-n matrix; keep n <= 8000")
    rng = np.random.default_rng(seed)
    raw = sample_ar((0.98,), n, rng)
    x = (raw - raw.min()) / (raw.max() - raw.min())
    f_vals = 5.0 * x**2
    if error_variance == 0.0:
        e = np.zeros(n)
    elif correlated:
        r = np.abs(x[:, None] - x[None, :]) / lengthscale
        K = error_variance * _shape("exponential", r)
        fact, _ = factorize_with_jitter(K + 1e-10 * error_variance * np.eye(n), 1e-8)
        e = fact.L @ rng.standard_normal(n)
    else:
        e = rng.normal(0.0, np.sqrt(error_variance), n)
    g_vals = e if correlated else np.zeros(n)
    noise = np.zeros(n) if correlated else e
    return _as_dataset(f_vals + e, x[:, None], np.arange(n), f_vals, g_vals, noise, ("x1",))


def simulate_temporal(config: SimConfig) -> SimOutput:
    """Temporal-overfitting benchmark: AR covariates, fixed smooth truth
    on the causal covariates, an autocorrelated temporal component, and
    i.i.d. noise. Identical seeds give bit-identical output."""
    rng = np.random.default_rng(config.seed)
    cols = [sample_ar(coefs, config.n, rng) for coefs in config.ar_coefficients]
    X = np.column_stack(cols)
    t = np.arange(config.n)
    f_vals = TRUE_FUNCTIONS[config.function](X)
    g_vals = sample_gp_path(
        config.g_family, config.g_variance, config.g_lengthscale, t, rng
    )
    noise = (
        rng.normal(0.0, np.sqrt(config.noise_variance), config.n)
        if config.noise_variance > 0
        else np.zeros(config.n)
    )
    return _as_dataset(f_vals + g_vals + noise, X, t, f_vals, g_vals, noise)
