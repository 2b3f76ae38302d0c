"""Readers and writers for the CSV, WAV and JSON interchange formats."""
from __future__ import annotations

import contextlib
import csv
import io
import json
import math
import os
import tempfile
import wave
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Iterator, Mapping, Optional, Sequence, Union

import numpy as np

from .core import (
    AudioFormatError,
    Clip,
    DataIOError,
    DatasetManifest,
    ManifestRow,
    MOSLabel,
    PredictionSet,
    RatingRecord,
    ValidationError,
)

PathLike = Union[str, os.PathLike]

MANIFEST_COLUMNS = ("clip_id", "dataset", "audio_path", "mos", "ci95", "n_ratings", "condition")
RATINGS_COLUMNS = ("clip_id", "rater_id", "rating")
PREDICTIONS_COLUMNS = ("clip_id", "score")

_PCM_SCALE = 32768.0


@contextlib.contextmanager
def atomic_write(path: PathLike, mode: str = "w", **kwargs) -> Iterator[io.IOBase]:
    """Write to a sibling temp file and rename it over ``path`` on success."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode, **kwargs) as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


def _read_csv(path: PathLike, required: Sequence[str]) -> list[tuple[int, dict[str, str]]]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            header = reader.fieldnames or []
            missing = [c for c in required if c not in header]
            if missing:
                raise ValidationError(f"{path}: header missing column(s) {', '.join(missing)}")
            rows = []
            for row in reader:
                if None in row or any(v is None for v in row.values()):
                    raise ValidationError(
                        f"{path}:{reader.line_num}: wrong number of fields"
                    )
                rows.append((reader.line_num, row))
            return rows
    except OSError as exc:
        raise DataIOError(f"cannot read {path}: {exc}") from exc


def _parse_float(value: str, path: PathLike, line: int, column: str) -> float:
    try:
        out = float(value)
    except ValueError:
        raise ValidationError(f"{path}:{line}: column {column!r}: not a number: {value!r}") from None
    if not math.isfinite(out):
        raise ValidationError(f"{path}:{line}: column {column!r}: non-finite value {value!r}")
    return out


def _parse_int(value: str, path: PathLike, line: int, column: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise ValidationError(f"{path}:{line}: column {column!r}: not an integer: {value!r}") from None


def load_manifest(path: PathLike, dataset: Optional[str] = None) -> DatasetManifest:
    """Load a manifest CSV.

    ``mos``, ``ci95`` and ``n_ratings`` must be either all present or all
    empty; empty means the clip has not been rated yet.
    """
    rows = []
    for line, rec in _read_csv(path, MANIFEST_COLUMNS):
        clip_id = rec["clip_id"].strip()
        if not clip_id:
            raise ValidationError(f"{path}:{line}: column 'clip_id': empty")
        label_fields = [rec["mos"].strip(), rec["ci95"].strip(), rec["n_ratings"].strip()]
        label = None
        if any(label_fields):
            for col, val in zip(("mos", "ci95", "n_ratings"), label_fields):
                if not val:
                    raise ValidationError(f"{path}:{line}: column {col!r}: empty")
            mos = _parse_float(label_fields[0], path, line, "mos")
            if not 1.0 <= mos <= 5.0:
                raise ValidationError(f"{path}:{line}: column 'mos': {mos} outside [1, 5]")
            try:
                label = MOSLabel(
                    clip_id,
                    mos,
                    _parse_float(label_fields[1], path, line, "ci95"),
                    _parse_int(label_fields[2], path, line, "n_ratings"),
                )
            except ValidationError as exc:
                raise ValidationError(f"{path}:{line}: {exc}") from None
        rows.append(
            ManifestRow(
                clip_id=clip_id,
                dataset=rec["dataset"].strip(),
                audio_path=rec["audio_path"].strip(),
                label=label,
                condition=rec["condition"].strip(),
            )
        )
    if dataset is None:
        names = {r.dataset for r in rows if r.dataset}
        dataset = names.pop() if len(names) == 1 else Path(path).stem
    return DatasetManifest(dataset, tuple(rows))


def _fmt(x: float) -> str:
    return repr(float(x))


def save_manifest(manifest: DatasetManifest, path: PathLike) -> None:
    with atomic_write(path, newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_COLUMNS)
        for r in manifest.rows:
            lab = r.label
            writer.writerow([
                r.clip_id,
                r.dataset,
                r.audio_path,
                _fmt(lab.mos) if lab else "",
                _fmt(lab.ci95) if lab else "",
                lab.n_ratings if lab else "",
                r.condition,
            ])


def manifest_from_labels(
    dataset: str, labels: Iterable[MOSLabel], audio_paths: Optional[Mapping[str, str]] = None,
    conditions: Optional[Mapping[str, str]] = None,
) -> DatasetManifest:
    audio_paths = audio_paths or {}
    conditions = conditions or {}
    return DatasetManifest(dataset, tuple(
        ManifestRow(lab.clip_id, dataset, audio_paths.get(lab.clip_id, ""), lab,
                    conditions.get(lab.clip_id, ""))
        for lab in labels
    ))


def load_ratings(path: PathLike) -> list[RatingRecord]:
    out = []
    for line, rec in _read_csv(path, RATINGS_COLUMNS):
        rating = _parse_float(rec["rating"], path, line, "rating")
        try:
            out.append(RatingRecord(rec["clip_id"].strip(), rec["rater_id"].strip(), rating))
        except ValidationError as exc:
            raise ValidationError(f"{path}:{line}: column 'rating': {exc}") from None
    return out


def save_ratings(records: Iterable[RatingRecord], path: PathLike) -> None:
    with atomic_write(path, newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(RATINGS_COLUMNS)
        for r in records:
            writer.writerow([r.clip_id, r.rater_id, _fmt(r.rating)])


def load_predictions(path: PathLike, model_id: Optional[str] = None) -> PredictionSet:
    """Read a ``clip_id,score`` file. Duplicate clip rows are an error."""
    entries: dict[str, float] = {}
    dups = []
    for line, rec in _read_csv(path, PREDICTIONS_COLUMNS):
        cid = rec["clip_id"].strip()
        if cid in entries:
            dups.append(cid)
        entries[cid] = _parse_float(rec["score"], path, line, "score")
    if dups:
        raise ValidationError(f"{path}: duplicate prediction rows for {', '.join(sorted(set(dups)))}")
    return PredictionSet(model_id or Path(path).stem, entries)


def save_predictions(preds: PredictionSet, path: PathLike) -> None:
    with atomic_write(path, newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(PREDICTIONS_COLUMNS)
        for cid, score in preds.entries.items():
            writer.writerow([cid, _fmt(score)])


# --- audio -----------------------------------------------------------------

_WAVE_FORMATS = {1: "PCM", 3: "IEEE float", 6: "A-law", 7: "mu-law", 0xFFFE: "extensible"}


def _wav_format_tag(path: PathLike) -> Optional[int]:
    """Peek at the fmt chunk so unsupported encodings get a precise message."""
    with open(path, "rb") as fh:
        head = fh.read(12)
        if len(head) < 12 or head[:4] != b"RIFF" or head[8:12] != b"WAVE":
            return None
        while True:
            chunk = fh.read(8)
            if len(chunk) < 8:
                return None
            size = int.from_bytes(chunk[4:], "little")
            if chunk[:4] == b"fmt ":
                body = fh.read(min(size, 2))
                return int.from_bytes(body, "little") if len(body) == 2 else None
            fh.seek(size + (size & 1), os.SEEK_CUR)


def load_audio(path: PathLike, clip_id: Optional[str] = None, dataset: str = "") -> Clip:
    """Read a 16-bit PCM WAV, scale by 1/32768 and average channels to mono."""
    path = Path(path)
    try:
        tag = _wav_format_tag(path)
    except OSError as exc:
        raise DataIOError(f"cannot read {path}: {exc}") from exc
    if tag is None:
        raise AudioFormatError(f"{path}: not a RIFF/WAVE file or truncated header")
    if tag != 1:
        name = _WAVE_FORMATS.get(tag, f"format tag {tag}")
        raise AudioFormatError(f"{path}: unsupported encoding {name}; expected 16-bit PCM")
    try:
        with wave.open(str(path), "rb") as wf:
            width = wf.getsampwidth()
            channels = wf.getnchannels()
            rate = wf.getframerate()
            nframes = wf.getnframes()
            if width != 2:
                raise AudioFormatError(
                    f"{path}: unsupported encoding {8 * width}-bit PCM; expected 16-bit PCM"
                )
            if channels not in (1, 2):
                raise AudioFormatError(f"{path}: unsupported channel count {channels}")
            raw = wf.readframes(nframes)
    except (wave.Error, EOFError) as exc:
        raise AudioFormatError(f"{path}: {exc}") from exc
    if len(raw) != nframes * channels * width:
        raise AudioFormatError(
            f"{path}: truncated data chunk ({len(raw)} of {nframes * channels * width} bytes)"
        )
    data = np.frombuffer(raw, dtype="<i2").astype(np.float64) / _PCM_SCALE
    if channels == 2:
        data = data.reshape(-1, 2).mean(axis=1)
    return Clip(clip_id or path.stem, rate, data, dataset=dataset)


def quantize(samples: np.ndarray) -> np.ndarray:
    """Clamp to the int16 range and round to the nearest code."""
    x = np.clip(np.asarray(samples, dtype=np.float64), -1.0, 1.0 - 2.0**-15)
    return np.rint(x * _PCM_SCALE).astype("<i2")


def save_audio(clip: Clip, path: PathLike) -> None:
    if len(clip.samples) == 0:
        raise ValidationError(f"clip {clip.clip_id!r}: cannot write an empty sample sequence")
    pcm = quantize(clip.samples)
    path = Path(path)
    try:
        with atomic_write(path, "wb") as fh:
            with wave.open(fh, "wb") as wf:
                wf.setnchannels(1)
                wf.setsampwidth(2)
                wf.setframerate(clip.sample_rate)
                wf.writeframes(pcm.tobytes())
    except OSError as exc:
        raise DataIOError(f"cannot write {path}: {exc}") from exc


# --- config ------------------------------------------------------------------


@dataclass
class Config:
    """Run configuration; every field can be overridden from a JSON document."""

    seed: int = 0
    paths: dict[str, str] = field(default_factory=dict)
    stage1_weights: Optional[dict[str, float]] = None
    stage2_weights: Optional[dict[str, float]] = None
    adapters: dict[str, str] = field(default_factory=dict)
    adapter_timeout: float = 120.0
    rmse_denominator: str = "n-1"
    weighted_mean: bool = False
    grid_points: int = 1001
    mos_bins: int = 8
    min_votes: int = 1
    workers: int = 1

    @property
    def rmse_ddof(self) -> int:
        if self.rmse_denominator not in ("n-1", "n"):
            raise ValidationError(
                f"rmse_denominator must be 'n-1' or 'n', got {self.rmse_denominator!r}"
            )
        return 1 if self.rmse_denominator == "n-1" else 0


def load_config(path: Optional[PathLike]) -> Config:
    if path is None:
        return Config()
    try:
        with open(path, encoding="utf-8") as fh:
            doc: Any = json.load(fh)
    except OSError as exc:
        raise DataIOError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config {path}: invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ValidationError(f"config {path}: top level must be an object")
    known = set(Config.__dataclass_fields__)
    unknown = sorted(set(doc) - known)
    if unknown:
        raise ValidationError(f"config {path}: unknown key(s) {', '.join(unknown)}")
    return Config(**doc)
