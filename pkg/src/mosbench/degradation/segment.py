"""Cut long recordings into fixed-length clips with enough speech activity."""
from __future__ import annotations

import numpy as np

from ..core import Clip, Step, ValidationError

FRAME_SECONDS = 0.010
RELATIVE_THRESHOLD = 0.05
REFERENCE_PERCENTILE = 95.0


def frame_rms(x: np.ndarray, frame_len: int) -> np.ndarray:
    n = len(x) // frame_len
    frames = np.asarray(x[: n * frame_len]).reshape(n, frame_len)
    return np.sqrt(np.mean(frames**2, axis=1))


def speech_activity(x: np.ndarray, sample_rate: int) -> float:
    """Fraction of 10 ms frames louder than 5% of the 95th-percentile frame RMS."""
    frame_len = max(1, int(round(FRAME_SECONDS * sample_rate)))
    rms = frame_rms(x, frame_len)
    if len(rms) == 0:
        return 0.0
    threshold = RELATIVE_THRESHOLD * np.percentile(rms, REFERENCE_PERCENTILE)
    return float(np.mean(rms > threshold))


def segment_speech(audio: Clip, segment_seconds: float = 10.0, min_activity: float = 0.5) -> list[Clip]:
    """Consecutive, non-overlapping segments whose activity is at least ``min_activity``.

    The tail shorter than one segment is dropped. Kept segments are named
    ``{clip_id}_seg{index:03d}`` after their position in the recording.
    """
    if segment_seconds <= 0:
        raise ValidationError("segment_seconds must be positive")
    if not 0.0 <= min_activity <= 1.0:
        raise ValidationError("min_activity must be in [0, 1]")
    seg_len = int(round(segment_seconds * audio.sample_rate))
    x = audio.samples
    kept = []
    for i in range(len(x) // seg_len):
        chunk = x[i * seg_len:(i + 1) * seg_len]
        activity = speech_activity(chunk, audio.sample_rate)
        if activity >= min_activity:
            kept.append(Clip(
                f"{audio.clip_id}_seg{i:03d}", audio.sample_rate, chunk, dataset=audio.dataset,
                provenance=audio.provenance + (Step("segment", {
                    "index": i, "start_s": i * segment_seconds, "activity": activity,
                }),),
            ))
    return kept
