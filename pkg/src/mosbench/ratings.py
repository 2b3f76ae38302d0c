"""From raw crowdsourced votes to MOS labels, summary statistics and splits."""
from __future__ import annotations

import csv
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import stats

from .core import DatasetManifest, MOSLabel, RatingRecord, ValidationError
from .io import PathLike, atomic_write

log = logging.getLogger(__name__)

DEFAULT_MOS_BINS = 8


@dataclass(frozen=True)
class Exclusion:
    clip_id: str
    reason: str
    n_ratings: int


@dataclass(frozen=True)
class Aggregation:
    labels: list[MOSLabel]
    excluded: list[Exclusion] = field(default_factory=list)
    duplicate_votes: int = 0


def ci95_halfwidth(votes: np.ndarray) -> float:
    """Student-t 95% half-width of the mean; 0 for a single vote."""
    n = len(votes)
    if n < 2:
        return 0.0
    s = float(np.std(votes, ddof=1))
    if s == 0.0:
        return 0.0
    return float(stats.t.ppf(0.975, n - 1) * s / math.sqrt(n))


def find_repeat_raters(records: Iterable[RatingRecord]) -> list[tuple[str, str]]:
    """(clip_id, rater_id) pairs that occur more than once, in sorted order."""
    counts: dict[tuple[str, str], int] = defaultdict(int)
    for r in records:
        counts[(r.clip_id, r.rater_id)] += 1
    return sorted(k for k, n in counts.items() if n > 1)


def aggregate_ratings(records: Sequence[RatingRecord], min_votes: int = 1) -> Aggregation:
    """Average votes per clip into MOS labels.

    Exact duplicate rows are dropped first. Clips with fewer than
    ``min_votes`` remaining votes are left out and listed in
    ``Aggregation.excluded``. Output is sorted by clip id, so the result does
    not depend on the order of ``records``.
    """
    if not records:
        raise ValidationError("no rating records to aggregate")
    if min_votes < 1:
        raise ValidationError(f"min_votes must be >= 1, got {min_votes}")

    unique = set(records)
    n_dup = len(records) - len(unique)
    if n_dup:
        log.info("dropped %d exact duplicate rating rows", n_dup)
    repeats = find_repeat_raters(unique)
    if repeats:
        log.warning("%d (clip, rater) pairs carry more than one distinct vote", len(repeats))

    votes: dict[str, list[float]] = defaultdict(list)
    for r in unique:
        votes[r.clip_id].append(r.rating)

    labels, excluded = [], []
    for clip_id in sorted(votes):
        v = np.sort(np.asarray(votes[clip_id], dtype=np.float64))
        if len(v) < min_votes:
            excluded.append(Exclusion(clip_id, f"fewer than {min_votes} votes", len(v)))
            continue
        labels.append(MOSLabel(clip_id, float(v.mean()), ci95_halfwidth(v), len(v)))
    if not labels:
        raise ValidationError(
            f"no clip has at least {min_votes} votes "
            f"({len(votes)} clips, max {max(len(v) for v in votes.values())} votes)"
        )
    return Aggregation(labels, excluded, n_dup)


def save_exclusions(excluded: Iterable[Exclusion], path: PathLike) -> None:
    with atomic_write(path, newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["clip_id", "reason", "n_ratings"])
        for e in excluded:
            w.writerow([e.clip_id, e.reason, e.n_ratings])


@dataclass(frozen=True)
class DescriptiveStats:
    dataset: str
    avg_ratings_per_clip: float
    avg_ci95: float
    mos_min: float
    mos_max: float
    clip_count: int

    COLUMNS = ("Dataset", "Average No. ratings p. clip", "Average 95%CI", "MOS min", "MOS max")

    def as_row(self) -> list[str]:
        """Display row: vote count to the unit, the rest to two decimals."""
        return [
            self.dataset,
            f"{self.avg_ratings_per_clip:.0f}",
            f"{self.avg_ci95:.2f}",
            f"{self.mos_min:.2f}",
            f"{self.mos_max:.2f}",
        ]


def descriptive_stats(groups: Mapping[str, Sequence[MOSLabel]]) -> list[DescriptiveStats]:
    out = []
    for name, labels in groups.items():
        if not labels:
            raise ValidationError(f"dataset {name!r} has no labels")
        mos = np.array([lab.mos for lab in labels])
        out.append(DescriptiveStats(
            dataset=name,
            avg_ratings_per_clip=float(np.mean([lab.n_ratings for lab in labels])),
            avg_ci95=float(np.mean([lab.ci95 for lab in labels])),
            mos_min=float(mos.min()),
            mos_max=float(mos.max()),
            clip_count=len(labels),
        ))
    return out


def save_stats(rows: Iterable[DescriptiveStats], path: PathLike) -> None:
    with atomic_write(path, newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(DescriptiveStats.COLUMNS)
        for r in rows:
            w.writerow(r.as_row())


# --- splitting -------------------------------------------------------------------


def _apportion(quota: np.ndarray, total: int) -> list[int]:
    counts = np.floor(quota).astype(int)
    short = total - int(counts.sum())
    order = sorted(range(len(quota)), key=lambda i: (-(quota[i] - counts[i]), i))
    for i in order[:short]:
        counts[i] += 1
    return counts.tolist()


def largest_remainder(total: int, weights: Sequence[float]) -> list[int]:
    """Integer counts summing to ``total``, each within 1 of ``total * w``.

    Leftover units go to the largest fractional parts; ties go to the
    earlier entry.
    """
    w = np.asarray(weights, dtype=np.float64)
    if total < 0:
        raise ValidationError("total must be non-negative")
    if np.any(w < 0) or not np.all(np.isfinite(w)) or w.sum() <= 0:
        raise ValidationError("weights must be finite, non-negative, with a positive sum")
    return _apportion(total * w / w.sum(), total)


def mos_bin(mos: float, n_bins: int) -> int:
    return min(int((mos - 1.0) / 4.0 * n_bins), n_bins - 1)


def _stratum_seed(seed: int, key: tuple[str, int]) -> np.random.Generator:
    tag = f"{key[0]}\x00{key[1]}".encode()
    return np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, *tag])


def stratified_split(
    manifest: DatasetManifest,
    train_fraction: float,
    mos_bins: int = DEFAULT_MOS_BINS,
    seed: int = 0,
) -> tuple[DatasetManifest, DatasetManifest]:
    """Split into (train, eval) with balanced condition and MOS distributions.

    Strata are (condition tag, equal-width MOS bin). Each stratum sends
    ``fraction * size`` clips to train, rounded by largest remainder across
    strata so the global train count is ``round(fraction * N)`` (half to
    even).
    """
    if len(manifest) < 2:
        raise ValidationError("need at least 2 clips to split")
    if not 0.0 < train_fraction < 1.0:
        raise ValidationError(f"train_fraction must be in (0, 1), got {train_fraction}")
    if mos_bins < 1:
        raise ValidationError("mos_bins must be >= 1")

    strata: dict[tuple[str, int], list] = defaultdict(list)
    for row in manifest.rows:
        b = mos_bin(row.label.mos, mos_bins) if row.label is not None else -1
        strata[(row.condition, b)].append(row)
    keys = sorted(strata)
    sizes = np.array([len(strata[k]) for k in keys], dtype=np.float64)
    n_train = int(round(train_fraction * len(manifest)))
    quotas = _apportion(train_fraction * sizes, n_train)

    train_ids: set[str] = set()
    for key, quota in zip(keys, quotas):
        ids = sorted(r.clip_id for r in strata[key])
        order = _stratum_seed(seed, key).permutation(len(ids))
        train_ids.update(ids[i] for i in order[:quota])

    train = tuple(r for r in manifest.rows if r.clip_id in train_ids)
    held = tuple(r for r in manifest.rows if r.clip_id not in train_ids)
    return (DatasetManifest(manifest.dataset, train), DatasetManifest(manifest.dataset, held))
