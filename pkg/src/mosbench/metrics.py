"""Prediction-accuracy metrics used to score MOS predictors.

Every function takes subjective scores first and predictions second, as
1-d arrays aligned by clip. Alignment by clip id happens upstream in
:mod:`mosbench.harness`.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Any, Optional, Sequence

import numpy as np
from sklearn.utils import column_or_1d

from .core import MOSLabel, ValidationError


def _pair(labels, preds, min_len: int = 1) -> tuple[np.ndarray, np.ndarray]:
    x = column_or_1d(np.asarray(labels, dtype=np.float64))
    y = column_or_1d(np.asarray(preds, dtype=np.float64))
    if x.shape != y.shape:
        raise ValidationError(f"length mismatch: {len(x)} labels vs {len(y)} predictions")
    if len(x) < min_len:
        raise ValidationError(f"need at least {min_len} values, got {len(x)}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValidationError("non-finite value in labels or predictions")
    return x, y


def perror(labels, preds) -> np.ndarray:
    """Per-clip prediction error ``MOS - MOS_predicted``."""
    x, y = _pair(labels, preds)
    return x - y


def rmse(labels, preds, ddof: int = 1) -> float:
    """Root mean squared prediction error.

    The sum of squares is divided by ``N - ddof``. The default ``ddof=1`` is
    the convention used for challenge scoring; pass ``ddof=0`` for the
    textbook ``1/N`` form when comparing against other tools.
    """
    x, y = _pair(labels, preds, min_len=ddof + 1)
    err = x - y
    return float(np.sqrt(np.dot(err, err) / (len(err) - ddof)))


def pcc(labels, preds) -> float:
    """Pearson correlation. Constant inputs raise instead of returning NaN."""
    x, y = _pair(labels, preds, min_len=2)
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = np.dot(dx, dx)
    syy = np.dot(dy, dy)
    if sxx == 0.0 or syy == 0.0:
        which = "labels" if sxx == 0.0 else "predictions"
        raise ValidationError(f"PCC undefined: {which} have zero variance")
    r = np.dot(dx, dy) / np.sqrt(sxx * syy)
    return float(np.clip(r, -1.0, 1.0))


def outlier_ratio(labels: Sequence[MOSLabel], preds) -> float:
    """Fraction of clips whose absolute error is strictly above the clip's ci95."""
    missing = [lab.clip_id for lab in labels if getattr(lab, "ci95", None) is None]
    if missing:
        raise ValidationError(f"missing ci95 for {', '.join(missing[:10])}")
    mos = [lab.mos for lab in labels]
    ci = np.array([lab.ci95 for lab in labels], dtype=np.float64)
    err = perror(mos, preds)
    return float(np.count_nonzero(np.abs(err) > ci) / len(err))


@dataclass(frozen=True)
class MetricReport:
    dataset: str
    model_id: str
    pcc: float
    rmse: float
    rmse_map: float
    outlier_ratio: float
    n: int
    mapping: Optional[dict[str, float]] = None
    mapping_order: int = 3

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "MetricReport":
        return cls(**doc)
