"""Gaussian process power-curve regression under temporal autocorrelation.

The core model splits the response into a time-invariant regression
component fit on interleaved thinned bins (so serial correlation cannot
leak into it) and a locally estimated temporal residual component that
decays to zero away from the training period.
"""

from .data import (
    CsvSchema,
    StandardizationParams,
    TemporalPartition,
    TimeSeriesDataset,
    apply_standardization,
    embed_circular,
    ingest_csv,
    partition_temporal,
    standardize,
)
from .exceptions import (
    ConfigError,
    DataError,
    NotPositiveDefiniteError,
    NumericalError,
    TempGPError,
)
from .kernels import FAMILIES, KernelSpec, gram_matrix, kernel_eval, kernel_grad
from .thinning import (
    PacfResult,
    ThinnedBins,
    compute_pacf,
    select_thinning_number,
    thin_dataset,
)

__version__ = "0.1.0"
