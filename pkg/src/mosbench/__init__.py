"""Toolkit for non-intrusive speech quality benchmarks.

Builds degraded-speech corpora, turns crowdsourced votes into MOS labels,
and scores MOS predictors with RMSE, Pearson correlation, outlier ratio and
RMSE after a per-dataset monotone cubic mapping.
"""
from .core import (
    AdapterError,
    AudioFormatError,
    Clip,
    DataIOError,
    DatasetManifest,
    ManifestRow,
    MappingCoefficients,
    MOSLabel,
    MosbenchError,
    PredictionSet,
    RatingRecord,
    ValidationError,
)
from .mapping import MonotonicPolynomialMapping, apply_mapping, fit_monotone_cubic, rmse_map
from .metrics import MetricReport, outlier_ratio, pcc, perror, rmse

__version__ = "0.1.0"

__all__ = [
    "AdapterError",
    "AudioFormatError",
    "Clip",
    "DataIOError",
    "DatasetManifest",
    "ManifestRow",
    "MOSLabel",
    "MappingCoefficients",
    "MetricReport",
    "MonotonicPolynomialMapping",
    "MosbenchError",
    "PredictionSet",
    "RatingRecord",
    "ValidationError",
    "apply_mapping",
    "fit_monotone_cubic",
    "outlier_ratio",
    "pcc",
    "perror",
    "rmse",
    "rmse_map",
]
