"""Dataset ingestion, validation, preprocessing and temporal partitioning.

A dataset is an immutable bundle of response, covariate matrix and a
strictly increasing integer time index (one unit = one sampling
interval, 10 minutes by default). Raw pre-embedding covariate columns
are kept alongside the model matrix because the binning baseline wants
physical wind speed, not standardized columns.

All operations are pure: they return new datasets and never mutate
their inputs.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

import numpy as np

from .exceptions import DataError

__all__ = [
    "TimeSeriesDataset",
    "StandardizationParams",
    "TemporalPartition",
    "CsvSchema",
    "ingest_csv",
    "export_csv",
    "embed_circular",
    "standardize",
    "apply_standardization",
    "invert_standardization",
    "partition_temporal",
]

DEFAULT_INTERVAL_SECONDS = 600


@dataclass(frozen=True)
class TimeSeriesDataset:
    """Response, covariates and integer time index for N rows.

    X is the model matrix (post-embedding, possibly standardized);
    raw_columns holds the original physical columns in schema order,
    wind speed first by convention. epoch/interval record how integer
    slots map back to timestamps (epoch is None for data born as slots).
    """

    y: np.ndarray
    X: np.ndarray
    t: np.ndarray
    covariate_names: tuple[str, ...]
    raw_columns: np.ndarray
    raw_names: tuple[str, ...]
    epoch: str | None = None
    interval_seconds: int = DEFAULT_INTERVAL_SECONDS

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        t = np.asarray(self.t, dtype=np.int64)
        raw = np.atleast_2d(np.asarray(self.raw_columns, dtype=float))
        n = y.shape[0]
        if n < 1:
            raise DataError("dataset must contain at least one row")
        if X.shape[0] != n or t.shape[0] != n or raw.shape[0] != n:
            raise DataError(
                f"row mismatch: y={n}, X={X.shape[0]}, t={t.shape[0]}, raw={raw.shape[0]}"
            )
        if len(self.covariate_names) != X.shape[1]:
            raise DataError("covariate_names must name every column of X")
        if len(self.raw_names) != raw.shape[1]:
            raise DataError("raw_names must name every raw column")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(X)) and np.all(np.isfinite(raw))):
            raise DataError("non-finite values present after ingestion")
        if n > 1 and np.any(np.diff(t) <= 0):
            raise DataError("non-monotone time")
        for arr in (y, X, t, raw):
            arr.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "raw_columns", raw)
        object.__setattr__(self, "covariate_names", tuple(self.covariate_names))
        object.__setattr__(self, "raw_names", tuple(self.raw_names))

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def take(self, indices: np.ndarray) -> "TimeSeriesDataset":
        """Row subset (order preserved); indices must keep time increasing."""
        idx = np.asarray(indices)
        return replace(
            self,
            y=self.y[idx],
            X=self.X[idx],
            t=self.t[idx],
            raw_columns=self.raw_columns[idx],
        )

    def with_X(self, X: np.ndarray, names: tuple[str, ...] | None = None) -> "TimeSeriesDataset":
        return replace(
            self, X=X, covariate_names=names if names is not None else self.covariate_names
        )


@dataclass(frozen=True)
class StandardizationParams:
    """Per-column mean and standard deviation of the model matrix."""

    mean: np.ndarray
    sd: np.ndarray
    names: tuple[str, ...] = ()

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        sd = np.atleast_1d(np.asarray(self.sd, dtype=float))
        if mean.shape != sd.shape:
            raise DataError("mean and sd must have the same length")
        if np.any(sd <= 0) or not np.all(np.isfinite(sd)):
            raise DataError("standard deviations must be strictly positive")
        mean.setflags(write=False)
        sd.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "sd", sd)


@dataclass(frozen=True)
class TemporalPartition:
    """Two time indices splitting [t_min, t_max] into three ordered spans.

    Span 1 is t <= first, span 2 is first < t <= second, span 3 the rest.
    """

    first: int
    second: int

    def __post_init__(self):
        if self.second <= self.first:
            raise DataError("partition boundaries must be strictly increasing")


@dataclass(frozen=True)
class CsvSchema:
    """Column-role map for ingestion."""

    response: str
    time: str
    covariates: tuple[str, ...]
    circular: tuple[str, ...] = ()
    delimiter: str = ","
    interval_seconds: int = DEFAULT_INTERVAL_SECONDS


def _parse_time_cell(cell: str):
    """A time cell is either an integer slot or an ISO-8601 timestamp."""
    txt = cell.strip()
    try:
        return int(txt)
    except ValueError:
        pass
    try:
        return np.datetime64(txt.replace(" ", "T"), "s")
    except ValueError as exc:
        raise DataError(f"cannot parse time value {cell!r}") from exc


def ingest_csv(path: str, schema: CsvSchema) -> tuple[TimeSeriesDataset, int]:
    """Read a CSV file into a dataset, dropping unusable rows.

    Rows with any missing or non-finite field among the schema columns
    are dropped and counted. Timestamps are converted to integer slot
    indices (nearest multiple of the sampling interval, measured from
    the earliest kept timestamp); rows are sorted by time and duplicate
    time indices are rejected.

    Returns (dataset, number_of_dropped_rows).
    """
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.DictReader(fh, delimiter=schema.delimiter)
        if reader.fieldnames is None:
            raise DataError(f"{path}: empty file, header row required")
        header = [h.strip() for h in reader.fieldnames]
        wanted = [schema.response, schema.time, *schema.covariates]
        for col in wanted:
            if col not in header:
                raise DataError(f"{path}: unknown column {col!r} (header: {header})")
        for col in schema.circular:
            if col not in schema.covariates:
                raise DataError(f"circular column {col!r} is not a covariate")
        y_list: list[float] = []
        t_list = []
        x_rows: list[list[float]] = []
        dropped = 0
        for row in reader:
            row = {(k.strip() if k else k): v for k, v in row.items()}
            try:
                t_val = _parse_time_cell(row[schema.time])
                y_val = float(row[schema.response])
                x_vals = [float(row[c]) for c in schema.covariates]
            except (DataError, TypeError, ValueError, KeyError):
                dropped += 1
                continue
            if not math.isfinite(y_val) or not all(math.isfinite(v) for v in x_vals):
                dropped += 1
                continue
            y_list.append(y_val)
            t_list.append(t_val)
            x_rows.append(x_vals)
    if not y_list:
        raise DataError(f"{path}: zero usable rows")

    epoch = None
    if isinstance(t_list[0], np.datetime64):
        if not all(isinstance(v, np.datetime64) for v in t_list):
            raise DataError(f"{path}: mixed timestamp and integer time values")
        stamps = np.array(t_list, dtype="datetime64[s]")
        origin = stamps.min()
        epoch = str(origin)
        seconds = (stamps - origin) / np.timedelta64(1, "s")
        slots = np.rint(seconds / schema.interval_seconds).astype(np.int64)
    else:
        if not all(isinstance(v, int) for v in t_list):
            raise DataError(f"{path}: mixed timestamp and integer time values")
        slots = np.asarray(t_list, dtype=np.int64)

    order = np.argsort(slots, kind="stable")
    slots = slots[order]
    if np.any(np.diff(slots) == 0):
        raise DataError(f"{path}: non-monotone time (duplicate time index after sorting)")
    y = np.asarray(y_list, dtype=float)[order]
    X = np.asarray(x_rows, dtype=float)[order]

    ds = TimeSeriesDataset(
        y=y,
        X=X,
        t=slots,
        covariate_names=tuple(schema.covariates),
        raw_columns=X.copy(),
        raw_names=tuple(schema.covariates),
        epoch=epoch,
        interval_seconds=schema.interval_seconds,
    )
    return ds, dropped


def export_csv(dataset: TimeSeriesDataset, path: str, response_name: str = "y") -> None:
    """Write y, t (slots) and the model matrix; floats round-trip exactly."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([response_name, "t", *dataset.covariate_names])
        for i in range(dataset.n):
            writer.writerow(
                ["%.17g" % dataset.y[i], int(dataset.t[i])]
                + ["%.17g" % v for v in dataset.X[i]]
            )


def embed_circular(dataset: TimeSeriesDataset, column: str) -> TimeSeriesDataset:
    """Replace a degree-valued column by its sine and cosine.

    The two new columns sit where the original column was, keeping the
    embedding continuous across the 360-degree wrap. Values must lie in
    [0, 360).
    """
    if column not in dataset.covariate_names:
        raise DataError(f"column {column!r} not found")
    j = dataset.covariate_names.index(column)
    deg = dataset.X[:, j]
    if np.any(deg < 0) or np.any(deg >= 360.0):
        raise DataError(f"column {column!r} has values outside [0, 360)")
    rad = np.deg2rad(deg)
    X = np.column_stack(
        [dataset.X[:, :j], np.sin(rad), np.cos(rad), dataset.X[:, j + 1 :]]
    )
    names = (
        dataset.covariate_names[:j]
        + (f"{column}_sin", f"{column}_cos")
        + dataset.covariate_names[j + 1 :]
    )
    return dataset.with_X(X, names)


def standardize(dataset: TimeSeriesDataset) -> tuple[TimeSeriesDataset, StandardizationParams]:
    """Center and scale every covariate column to mean 0, sd 1."""
    mean = dataset.X.mean(axis=0)
    sd = dataset.X.std(axis=0, ddof=0)
    bad = np.flatnonzero(sd == 0)
    if bad.size:
        name = dataset.covariate_names[bad[0]]
        raise DataError(f"constant column {name!r} cannot be standardized")
    params = StandardizationParams(mean=mean, sd=sd, names=dataset.covariate_names)
    return apply_standardization(dataset, params), params


def apply_standardization(
    dataset: TimeSeriesDataset, params: StandardizationParams
) -> TimeSeriesDataset:
    if params.mean.shape[0] != dataset.d:
        raise DataError(
            f"standardization params cover {params.mean.shape[0]} columns, dataset has {dataset.d}"
        )
    return dataset.with_X((dataset.X - params.mean) / params.sd)


def invert_standardization(
    dataset: TimeSeriesDataset, params: StandardizationParams
) -> TimeSeriesDataset:
    return dataset.with_X(dataset.X * params.sd + params.mean)


def partition_temporal(
    dataset: TimeSeriesDataset, boundaries: TemporalPartition | tuple[int, int]
) -> tuple[TimeSeriesDataset, TimeSeriesDataset, TimeSeriesDataset]:
    """Split rows into three temporally disjoint datasets by time index."""
    if not isinstance(boundaries, TemporalPartition):
        boundaries = TemporalPartition(int(boundaries[0]), int(boundaries[1]))
    t_min, t_max = int(dataset.t[0]), int(dataset.t[-1])
    if not (t_min <= boundaries.first < t_max) or not (t_min < boundaries.second < t_max):
        raise DataError(
            f"boundaries ({boundaries.first}, {boundaries.second}) must lie inside "
            f"[{t_min}, {t_max})"
        )
    first = dataset.t <= boundaries.first
    second = (dataset.t > boundaries.first) & (dataset.t <= boundaries.second)
    third = dataset.t > boundaries.second
    parts = []
    for mask, label in ((first, "T1"), (second, "T2"), (third, "T3")):
        if not mask.any():
            raise DataError(f"empty partition {label}")
        parts.append(dataset.take(np.flatnonzero(mask)))
    return parts[0], parts[1], parts[2]
