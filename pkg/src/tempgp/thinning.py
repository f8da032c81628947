"""Partial autocorrelation, thinning-number selection, and interleaved bins.

The thinning number T is the smallest lag at which every covariate's
sample PACF falls inside the two-standard-error band 2/sqrt(N),
maximized over covariates. The dataset is then split into T interleaved
bins: bin j takes rows j, j+T, j+2T, ... so no two rows in a bin are
closer than T time slots.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import TimeSeriesDataset
from .exceptions import DataError, NumericalError

__all__ = [
    "PacfResult",
    "ThinnedBins",
    "compute_pacf",
    "pacf_cutoff_lag",
    "select_thinning_number",
    "thinning_report",
    "thin_dataset",
]


@dataclass(frozen=True)
class PacfResult:
    """Sample PACF at lags 1..H with the white-noise significance band."""

    values: np.ndarray
    threshold: float
    n: int

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def max_lag(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class ThinnedBins:
    """T interleaved index bins partitioning rows 0..n-1."""

    T: int
    bins: tuple[np.ndarray, ...]
    n: int

    def __post_init__(self):
        for b in self.bins:
            b.setflags(write=False)


def _sample_autocovariance(x: np.ndarray, max_lag: int) -> np.ndarray:
    """Biased (1/N) autocovariances at lags 0..max_lag, via FFT."""
    n = x.shape[0]
    xc = x - x.mean()
    nfft = 1 << int(np.ceil(np.log2(2 * n)))
    f = np.fft.rfft(xc, nfft)
    acov = np.fft.irfft(f * np.conj(f), nfft)[: max_lag + 1] / n
    return acov


def compute_pacf(series: np.ndarray, max_lag: int) -> PacfResult:
    """Sample PACF by the Durbin-Levinson recursion on autocovariances.

    Invariant to affine transforms of the series. Requires
    len(series) > max_lag + 1 and a non-constant series.
    """
    x = np.asarray(series, dtype=float).ravel()
    n = x.shape[0]
    if max_lag < 1:
        raise ValueError("max_lag must be at least 1")
    if n <= max_lag + 1:
        raise DataError(f"max_lag={max_lag} too large for series of length {n}")
    acov = _sample_autocovariance(x, max_lag)
    if acov[0] <= 0:
        raise DataError("constant series has no partial autocorrelation")
    rho = acov / acov[0]

    pacf = np.empty(max_lag)
    phi_prev = np.empty(max_lag)
    phi_cur = np.empty(max_lag)
    pacf[0] = phi_prev[0] = rho[1]
    v = 1.0 - rho[1] ** 2
    for k in range(2, max_lag + 1):
        if v <= 1e-15:
            raise NumericalError(
                f"prediction variance vanished at lag {k}; series is nearly deterministic"
            )
        a = (rho[k] - phi_prev[: k - 1] @ rho[k - 1 : 0 : -1]) / v
        phi_cur[: k - 1] = phi_prev[: k - 1] - a * phi_prev[k - 2 :: -1]
        phi_cur[k - 1] = a
        pacf[k - 1] = a
        v *= 1.0 - a * a
        phi_prev, phi_cur = phi_cur, phi_prev
    return PacfResult(values=pacf, threshold=2.0 / np.sqrt(n), n=n)


def pacf_cutoff_lag(result: PacfResult) -> int | None:
    """Smallest lag with |PACF| inside the band, or None if none qualifies."""
    inside = np.abs(result.values) <= result.threshold
    hits = np.flatnonzero(inside)
    return int(hits[0]) + 1 if hits.size else None


def thinning_report(dataset: TimeSeriesDataset, max_lag: int = 200) -> dict:
    """Per-covariate PACF cutoff lags and the resulting thinning number."""
    per_covariate = {}
    cutoffs = []
    for j, name in enumerate(dataset.covariate_names):
        col = dataset.X[:, j]
        if np.std(col) == 0:
            raise DataError(f"constant column {name!r} has no PACF")
        res = compute_pacf(col, max_lag)
        cut = pacf_cutoff_lag(res)
        per_covariate[name] = {
            "cutoff_lag": cut,
            "threshold": res.threshold,
            "max_abs_pacf": float(np.max(np.abs(res.values))),
        }
        if cut is None:
            raise DataError(
                f"covariate {name!r}: no lag <= {max_lag} has |PACF| <= {res.threshold:.4g}; "
                "raise max_lag"
            )
        cutoffs.append(cut)
    T = int(max(cutoffs))
    return {"T": T, "max_lag": max_lag, "per_covariate": per_covariate}


def select_thinning_number(dataset: TimeSeriesDataset, max_lag: int = 200) -> int:
    """Thinning number: max over covariates of the first in-band PACF lag."""
    return thinning_report(dataset, max_lag)["T"]


def thin_dataset(dataset_or_n, T: int) -> ThinnedBins:
    """Split row indices 0..n-1 into T interleaved bins.

    Bin j holds {j, j+T, j+2T, ...}; bins partition the index set and
    their sizes differ by at most one. Accepts a dataset or a row count.
    """
    n = dataset_or_n.n if isinstance(dataset_or_n, TimeSeriesDataset) else int(dataset_or_n)
    if not 1 <= T <= n:
        raise ValueError(f"thinning number T={T} out of range [1, {n}]")
    bins = tuple(np.arange(j, n, T, dtype=np.int64) for j in range(T))
    return ThinnedBins(T=T, bins=bins, n=n)
