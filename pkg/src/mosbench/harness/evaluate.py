"""Per-dataset scoring of prediction sets and the cross-dataset leaderboard."""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Mapping, Optional, Sequence, Union

import numpy as np

from ..core import MOSLabel, PredictionSet, ValidationError, as_label_map
from ..io import PathLike, atomic_write
from ..mapping import MonotonicPolynomialMapping
from ..metrics import MetricReport, outlier_ratio, pcc, rmse

Scores = Union[PredictionSet, Mapping[str, float]]

# Means are compared at this resolution so float noise does not break ties.
TIE_DECIMALS = 12


def _entries(preds: Scores) -> Mapping[str, float]:
    return preds.entries if isinstance(preds, PredictionSet) else preds


def align(labels: Sequence[MOSLabel], preds: Scores, dataset: str = "") -> np.ndarray:
    """Scores ordered like ``labels``. Missing or unknown clip ids are errors."""
    entries = _entries(preds)
    label_map = as_label_map(labels)
    missing = [lab.clip_id for lab in labels if lab.clip_id not in entries]
    if missing:
        raise ValidationError(
            f"{dataset or 'dataset'}: predictions missing for {len(missing)} clip(s): "
            + ", ".join(missing[:20])
        )
    extra = sorted(set(entries) - set(label_map))
    if extra:
        raise ValidationError(
            f"{dataset or 'dataset'}: predictions for clip(s) not in the manifest: "
            + ", ".join(extra[:20])
        )
    return np.array([entries[lab.clip_id] for lab in labels], dtype=np.float64)


def evaluate_dataset(
    labels: Sequence[MOSLabel],
    preds: Scores,
    dataset: str,
    model_id: str,
    grid_points: int = 1001,
    ddof: int = 1,
) -> MetricReport:
    """PCC and RMSE on raw scores; RMSE_MAP and outlier ratio after this dataset's own mapping."""
    y = align(labels, preds, dataset)
    x = np.array([lab.mos for lab in labels])
    mapper = MonotonicPolynomialMapping(grid_points=grid_points).fit(y, x)
    mapped = mapper.predict(y)
    return MetricReport(
        dataset=dataset,
        model_id=model_id,
        pcc=pcc(x, y),
        rmse=rmse(x, y, ddof=ddof),
        rmse_map=rmse(x, mapped, ddof=ddof),
        outlier_ratio=outlier_ratio(labels, mapped),
        n=len(labels),
        mapping=mapper.coefficients_.to_dict(),
        mapping_order=int(mapper.order_),
    )


def evaluate_model(
    predictions: Mapping[str, Scores],
    labels: Mapping[str, Sequence[MOSLabel]],
    model_id: Optional[str] = None,
    grid_points: int = 1001,
    ddof: int = 1,
    workers: int = 1,
) -> list[MetricReport]:
    """Score one model on every labelled dataset, in ``labels`` order."""
    absent = [ds for ds in labels if ds not in predictions]
    if absent:
        raise ValidationError(f"no predictions for dataset(s): {', '.join(absent)}")
    extra = [ds for ds in predictions if ds not in labels]
    if extra:
        raise ValidationError(f"predictions for unknown dataset(s): {', '.join(extra)}")
    if model_id is None:
        ids = {p.model_id for p in predictions.values() if isinstance(p, PredictionSet)}
        model_id = ids.pop() if len(ids) == 1 else "model"

    def one(ds):
        return evaluate_dataset(labels[ds], predictions[ds], ds, model_id, grid_points, ddof)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(one, labels))
    return [one(ds) for ds in labels]


@dataclass(frozen=True)
class LeaderboardRow:
    rank: int
    model_id: str
    mean_rmse_map: float
    mean_rmse: float
    mean_pcc: float
    mean_or: float
    reports: tuple[MetricReport, ...] = field(default_factory=tuple)

    def report_for(self, dataset: str) -> MetricReport:
        for r in self.reports:
            if r.dataset == dataset:
                return r
        raise KeyError(dataset)


@dataclass(frozen=True)
class Leaderboard:
    rows: tuple[LeaderboardRow, ...]
    datasets: tuple[str, ...]
    weighting: str = "unweighted"

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": 1,
            "weighting": self.weighting,
            "datasets": list(self.datasets),
            "rows": [
                {**{k: v for k, v in asdict(r).items() if k != "reports"},
                 "reports": [rep.to_dict() for rep in r.reports]}
                for r in self.rows
            ],
        }

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "Leaderboard":
        rows = tuple(
            LeaderboardRow(
                rank=r["rank"], model_id=r["model_id"], mean_rmse_map=r["mean_rmse_map"],
                mean_rmse=r["mean_rmse"], mean_pcc=r["mean_pcc"], mean_or=r["mean_or"],
                reports=tuple(MetricReport.from_dict(x) for x in r["reports"]),
            )
            for r in doc["rows"]
        )
        return cls(rows, tuple(doc["datasets"]), doc.get("weighting", "unweighted"))

    def save_json(self, path: PathLike) -> None:
        with atomic_write(path, encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    @classmethod
    def load_json(cls, path: PathLike) -> "Leaderboard":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _mean(values: Sequence[float], weights: Optional[Sequence[float]]) -> float:
    if weights is None:
        return math.fsum(values) / len(values)
    return math.fsum(v * w for v, w in zip(values, weights)) / math.fsum(weights)


def rank_models(reports: Mapping[str, Sequence[MetricReport]], weighted: bool = False) -> Leaderboard:
    """Order models by mean RMSE_MAP over datasets (lower is better).

    Ties fall back to lower mean RMSE, then higher mean PCC, then model id.
    With ``weighted=True`` dataset means are weighted by clip count.
    """
    if not reports:
        raise ValidationError("no model reports to rank")
    coverage = {m: sorted(r.dataset for r in reps) for m, reps in reports.items()}
    reference = next(iter(coverage.values()))
    bad = sorted(m for m, ds in coverage.items() if ds != reference)
    if bad:
        raise ValidationError(
            f"models evaluated on different dataset lists: {', '.join(bad)} vs {reference}"
        )
    if len(set(reference)) != len(reference):
        raise ValidationError("a model has more than one report for the same dataset")

    entries = []
    for model_id, reps in reports.items():
        reps = sorted(reps, key=lambda r: r.dataset)
        w = [r.n for r in reps] if weighted else None
        entries.append(dict(
            model_id=model_id,
            mean_rmse_map=_mean([r.rmse_map for r in reps], w),
            mean_rmse=_mean([r.rmse for r in reps], w),
            mean_pcc=_mean([r.pcc for r in reps], w),
            mean_or=_mean([r.outlier_ratio for r in reps], w),
            reports=tuple(reps),
        ))
    entries.sort(key=lambda e: (
        round(e["mean_rmse_map"], TIE_DECIMALS),
        round(e["mean_rmse"], TIE_DECIMALS),
        -round(e["mean_pcc"], TIE_DECIMALS),
        e["model_id"],
    ))
    rows = tuple(LeaderboardRow(rank=i, **e) for i, e in enumerate(entries, start=1))
    return Leaderboard(rows, tuple(reference), "clip_count" if weighted else "unweighted")
