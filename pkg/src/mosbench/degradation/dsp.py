"""Signal-level impairments: additive noise, filtering, clipping, reverberation.

Every function takes and returns a :class:`~mosbench.core.Clip`. Outputs
never exceed unit amplitude; when a sum would, the whole clip is scaled
down and the gain is recorded in the provenance step. SNRs are referenced
to full-clip mean-square power.
"""
from __future__ import annotations

import numpy as np
from scipy import signal

from ..core import Clip, Step, ValidationError

FILTER_ORDER = 6


def mean_power(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=np.float64)
    return float(np.dot(x, x) / len(x)) if len(x) else 0.0


def snr_db(clean: np.ndarray, noise: np.ndarray) -> float:
    return 10.0 * np.log10(mean_power(clean) / mean_power(noise))


def _peak_limit(x: np.ndarray) -> tuple[np.ndarray, float]:
    peak = float(np.max(np.abs(x))) if len(x) else 0.0
    if peak <= 1.0:
        return x, 1.0
    gain = 1.0 / peak
    return x * gain, gain


def _gain_for_snr(signal_power: float, noise_power: float, snr: float) -> float:
    return float(np.sqrt(signal_power / (noise_power * 10.0 ** (snr / 10.0))))


def add_white_noise(clip: Clip, snr_db: float, seed: int) -> Clip:
    if not np.isfinite(snr_db):
        raise ValidationError("snr_db must be finite")
    x = clip.samples
    ps = mean_power(x)
    if ps == 0.0:
        raise ValidationError(f"clip {clip.clip_id!r}: zero signal power, SNR undefined")
    noise = np.random.default_rng(seed).standard_normal(len(x))
    gain = _gain_for_snr(ps, mean_power(noise), snr_db)
    out, peak_gain = _peak_limit(x + gain * noise)
    return clip.replace(out, Step("white_noise", {
        "snr_db": float(snr_db), "seed": int(seed), "noise_gain": gain, "peak_gain": peak_gain,
    }))


def loop_to_length(noise: np.ndarray, length: int, offset: int = 0) -> np.ndarray:
    """Tile ``noise`` circularly from ``offset`` until it covers ``length`` samples."""
    idx = (offset + np.arange(length)) % len(noise)
    return noise[idx]


def mix_background_noise(clip: Clip, noise: Clip, snr_db: float, seed: int) -> Clip:
    """Add a recorded noise at a target SNR.

    The noise starts at a seeded offset and wraps around when shorter than
    the clip.
    """
    if noise.sample_rate != clip.sample_rate:
        raise ValidationError(
            f"sample rate mismatch: clip {clip.sample_rate} Hz, noise {noise.sample_rate} Hz"
        )
    if not np.isfinite(snr_db):
        raise ValidationError("snr_db must be finite")
    if len(noise.samples) == 0:
        raise ValidationError(f"noise {noise.clip_id!r} is empty")
    x = clip.samples
    ps = mean_power(x)
    if ps == 0.0:
        raise ValidationError(f"clip {clip.clip_id!r}: zero signal power, SNR undefined")
    offset = int(np.random.default_rng(seed).integers(len(noise.samples)))
    n = loop_to_length(noise.samples, len(x), offset)
    pn = mean_power(n)
    if pn == 0.0:
        raise ValidationError(f"noise {noise.clip_id!r}: zero power over the mixed span")
    gain = _gain_for_snr(ps, pn, snr_db)
    out, peak_gain = _peak_limit(x + gain * n)
    return clip.replace(out, Step("background_noise", {
        "snr_db": float(snr_db), "seed": int(seed), "noise_id": noise.clip_id,
        "offset": offset, "noise_gain": gain, "peak_gain": peak_gain,
        "loops": len(x) / len(noise.samples),
    }))


def butterworth_sos(kind: str, cutoff_hz: float, sample_rate: int) -> np.ndarray:
    if kind not in ("lowpass", "highpass"):
        raise ValidationError(f"filter kind must be 'lowpass' or 'highpass', got {kind!r}")
    if not 0.0 < cutoff_hz < sample_rate / 2.0:
        raise ValidationError(
            f"cutoff {cutoff_hz} Hz outside (0, {sample_rate / 2.0}) for {sample_rate} Hz audio"
        )
    return signal.butter(FILTER_ORDER, cutoff_hz, btype=kind, fs=sample_rate, output="sos")


def apply_filter(clip: Clip, kind: str, cutoff_hz: float) -> Clip:
    sos = butterworth_sos(kind, cutoff_hz, clip.sample_rate)
    y = signal.sosfilt(sos, clip.samples)
    out, peak_gain = _peak_limit(y)
    return clip.replace(out, Step(kind, {"cutoff_hz": float(cutoff_hz), "peak_gain": peak_gain}))


def clip_amplitude(clip: Clip, threshold_frac: float) -> Clip:
    """Hard-clip at ``threshold_frac`` of the clip's own peak."""
    if not 0.0 < threshold_frac <= 1.0:
        raise ValidationError(f"threshold_frac must be in (0, 1], got {threshold_frac}")
    x = clip.samples
    if len(x) == 0:
        raise ValidationError(f"clip {clip.clip_id!r} is empty")
    level = threshold_frac * float(np.max(np.abs(x)))
    out = np.clip(x, -level, level)
    return clip.replace(out, Step("clipping", {"threshold_frac": float(threshold_frac),
                                               "level": level}))


def convolve_rir(clip: Clip, rir: Clip) -> Clip:
    """Reverberate and rescale to the input's peak; output keeps the input length."""
    if rir.sample_rate != clip.sample_rate:
        raise ValidationError(
            f"sample rate mismatch: clip {clip.sample_rate} Hz, RIR {rir.sample_rate} Hz"
        )
    if len(rir.samples) == 0:
        raise ValidationError(f"RIR {rir.clip_id!r} is empty")
    x = clip.samples
    y = signal.oaconvolve(x, rir.samples, mode="full")[: len(x)]
    in_peak = float(np.max(np.abs(x))) if len(x) else 0.0
    out_peak = float(np.max(np.abs(y))) if len(y) else 0.0
    if out_peak > 0.0:
        y = y * (in_peak / out_peak)
    return clip.replace(y, Step("reverb", {"rir_id": rir.clip_id}))


def synthetic_rir(sample_rate: int, rt60: float, seed: int, length_s: float | None = None) -> Clip:
    """Exponentially decaying Gaussian noise tail behind a unit direct path.

    Energy falls by 60 dB after ``rt60`` seconds. The tail peaks at half the
    direct path.
    """
    if rt60 <= 0:
        raise ValidationError("rt60 must be positive")
    n = int(round((length_s if length_s is not None else rt60) * sample_rate))
    n = max(n, 1)
    t = np.arange(n) / sample_rate
    h = np.random.default_rng(seed).standard_normal(n) * np.exp(-3.0 * np.log(10.0) * t / rt60)
    if n > 1:
        h[1:] *= 0.5 / np.max(np.abs(h[1:]))
    h[0] = 1.0
    return Clip(f"rir_rt{rt60:g}_{seed}", sample_rate, h)
