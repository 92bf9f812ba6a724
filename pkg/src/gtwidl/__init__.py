"""Generalized time warping invariant dictionary learning.

Joint estimation of continuous warping paths, dictionary atoms and
non-negative sparse codes for misaligned (multichannel) time series, with
per-class classification, iterative clustering and DTW-family baselines.
"""
__version__ = "0.1.0"

from .core import Dictionary, FitReport, SparseCode, TimeSeries, WarpMatrix, WarpModel, objective, reconstruct
from .estimators import DTWNeighborsClassifier, GTWIDL, GTWIDLClassifier, GTWIDLClustering, check_series
from .exceptions import (
    ConfigurationError,
    DegenerateWarpError,
    GTWIDLError,
    InvalidArgumentError,
    NumericalFailureError,
    ParseError,
    QPInfeasibleError,
    QPNonConvergenceError,
    SchemaError,
)
from .optimizer import TrainConfig, fit

__all__ = [
    "ConfigurationError",
    "DTWNeighborsClassifier",
    "DegenerateWarpError",
    "Dictionary",
    "FitReport",
    "GTWIDL",
    "GTWIDLClassifier",
    "GTWIDLClustering",
    "GTWIDLError",
    "InvalidArgumentError",
    "NumericalFailureError",
    "ParseError",
    "QPInfeasibleError",
    "QPNonConvergenceError",
    "SchemaError",
    "SparseCode",
    "TimeSeries",
    "TrainConfig",
    "WarpMatrix",
    "WarpModel",
    "check_series",
    "fit",
    "objective",
    "reconstruct",
]
