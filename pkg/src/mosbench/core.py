"""Domain types shared by every stage of the toolkit.

All types are frozen value objects. Sample buffers are stored as read-only
numpy arrays so a :class:`Clip` can be handed to worker threads safely.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Iterator, Mapping, NamedTuple, Optional, Sequence

import numpy as np

MOS_MIN = 1.0
MOS_MAX = 5.0
MONOTONE_EPS = 1e-9


class MosbenchError(Exception):
    """Base class for every error raised by the toolkit."""


class ValidationError(MosbenchError, ValueError):
    """Input data violates a documented invariant."""


class DataIOError(MosbenchError, OSError):
    """A file could not be read or written in the expected format."""


class AudioFormatError(DataIOError):
    """WAV file uses an encoding the toolkit does not read, or is truncated."""


class AdapterError(MosbenchError):
    """An external processing command failed.

    ``diagnostics`` holds whatever the process printed, for the log.
    """

    def __init__(self, message: str, diagnostics: str = "") -> None:
        super().__init__(message)
        self.diagnostics = diagnostics


class Step(NamedTuple):
    """One processing step applied to a clip."""

    op: str
    params: Mapping[str, Any]


@dataclass(frozen=True, eq=False)
class Clip:
    clip_id: str
    sample_rate: int
    samples: np.ndarray
    dataset: str = ""
    provenance: tuple[Step, ...] = ()

    def __post_init__(self) -> None:
        if int(self.sample_rate) <= 0:
            raise ValidationError(f"clip {self.clip_id!r}: sample_rate must be positive")
        arr = np.array(self.samples, dtype=np.float64)
        if arr.ndim != 1:
            raise ValidationError(
                f"clip {self.clip_id!r}: expected mono samples, got shape {arr.shape}"
            )
        if not np.all(np.isfinite(arr)):
            raise ValidationError(f"clip {self.clip_id!r}: non-finite amplitude")
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    @property
    def channel_count(self) -> int:
        return 1

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate

    def replace(self, samples: np.ndarray, step: Optional[Step] = None, **changes) -> "Clip":
        """Return a copy with new samples and ``step`` appended to the provenance."""
        base = tuple(changes.pop("provenance", self.provenance))
        fields = dict(
            clip_id=self.clip_id,
            sample_rate=self.sample_rate,
            dataset=self.dataset,
            provenance=base + ((step,) if step is not None else ()),
        )
        fields.update(changes)
        return Clip(samples=samples, **fields)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Clip):
            return NotImplemented
        return (
            self.clip_id == other.clip_id
            and self.sample_rate == other.sample_rate
            and self.dataset == other.dataset
            and np.array_equal(self.samples, other.samples)
        )

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True)
class RatingRecord:
    clip_id: str
    rater_id: str
    rating: float

    def __post_init__(self) -> None:
        if not (MOS_MIN <= self.rating <= MOS_MAX):
            raise ValidationError(
                f"rating {self.rating} for clip {self.clip_id!r} outside [{MOS_MIN}, {MOS_MAX}]"
            )


@dataclass(frozen=True)
class MOSLabel:
    clip_id: str
    mos: float
    ci95: float
    n_ratings: int

    def __post_init__(self) -> None:
        if not (math.isfinite(self.mos) and MOS_MIN <= self.mos <= MOS_MAX):
            raise ValidationError(f"clip {self.clip_id!r}: mos {self.mos} outside [1, 5]")
        if not (math.isfinite(self.ci95) and self.ci95 >= 0):
            raise ValidationError(f"clip {self.clip_id!r}: ci95 must be >= 0, got {self.ci95}")
        if int(self.n_ratings) < 1:
            raise ValidationError(f"clip {self.clip_id!r}: n_ratings must be positive")


@dataclass(frozen=True)
class PredictionSet:
    model_id: str
    entries: Mapping[str, float]

    def __post_init__(self) -> None:
        bad = [k for k, v in self.entries.items() if not math.isfinite(v)]
        if bad:
            raise ValidationError(f"model {self.model_id!r}: non-finite scores for {bad[:5]}")
        object.__setattr__(self, "entries", dict(self.entries))

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class MappingCoefficients:
    """Cubic ``a + b*y + c*y**2 + d*y**3`` and the interval it is monotone on."""

    a: float
    b: float
    c: float
    d: float
    range_lo: float
    range_hi: float

    @classmethod
    def identity(cls, lo: float = MOS_MIN, hi: float = MOS_MAX) -> "MappingCoefficients":
        return cls(0.0, 1.0, 0.0, 0.0, lo, hi)

    @property
    def coef(self) -> tuple[float, float, float, float]:
        return (self.a, self.b, self.c, self.d)

    def __call__(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=np.float64)
        return self.a + y * (self.b + y * (self.c + y * self.d))

    def derivative(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=np.float64)
        return self.b + y * (2.0 * self.c + 3.0 * self.d * y)

    def is_monotone(self, grid_points: int = 1001, eps: float = MONOTONE_EPS) -> bool:
        grid = np.linspace(self.range_lo, self.range_hi, grid_points)
        return bool(np.all(self.derivative(grid) >= -eps))

    def to_dict(self) -> dict[str, float]:
        return {k: getattr(self, k) for k in ("a", "b", "c", "d", "range_lo", "range_hi")}


@dataclass(frozen=True)
class ManifestRow:
    clip_id: str
    dataset: str
    audio_path: str = ""
    label: Optional[MOSLabel] = None
    condition: str = ""


@dataclass(frozen=True)
class DatasetManifest:
    dataset: str
    rows: tuple[ManifestRow, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        rows = tuple(self.rows)
        object.__setattr__(self, "rows", rows)
        seen: dict[str, int] = {}
        for row in rows:
            seen[row.clip_id] = seen.get(row.clip_id, 0) + 1
        dups = sorted(k for k, n in seen.items() if n > 1)
        if dups:
            raise ValidationError(f"duplicate clip_id(s) in manifest: {', '.join(dups)}")

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self) -> Iterator[ManifestRow]:
        return iter(self.rows)

    @property
    def clip_ids(self) -> list[str]:
        return [r.clip_id for r in self.rows]

    def labels(self) -> list[MOSLabel]:
        missing = [r.clip_id for r in self.rows if r.label is None]
        if missing:
            raise ValidationError(
                f"manifest {self.dataset!r} has unlabeled clips: {', '.join(missing[:10])}"
            )
        return [r.label for r in self.rows]  # type: ignore[misc]

    def datasets(self) -> dict[str, "DatasetManifest"]:
        """Split a mixed manifest by its per-row dataset tag."""
        groups: dict[str, list[ManifestRow]] = {}
        for row in self.rows:
            groups.setdefault(row.dataset or self.dataset, []).append(row)
        return {name: DatasetManifest(name, tuple(rows)) for name, rows in groups.items()}


def as_label_map(labels: Sequence[MOSLabel]) -> dict[str, MOSLabel]:
    out: dict[str, MOSLabel] = {}
    for lab in labels:
        if lab.clip_id in out:
            raise ValidationError(f"duplicate label for clip {lab.clip_id!r}")
        out[lab.clip_id] = lab
    return out
