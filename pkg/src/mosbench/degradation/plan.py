"""Assign degradation chains to clips in fixed proportions.

A plan is built in two passes. The second-stage table decides, for every
clip, whether it is impaired or kept clean and which post-processing
(noise suppression, packet-loss concealment) follows. Clips marked as
impaired then receive a first-stage impairment from the first-stage table.
Category sizes come from largest-remainder apportionment, so realized counts
are exact and reproducible; which clip lands in which category is a seeded
shuffle of the sorted clip ids.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from typing import Any, Mapping, Optional, Sequence

import numpy as np

from ..core import ValidationError
from ..io import PathLike, atomic_write
from ..ratings import largest_remainder

# Share of each first-stage impairment, in percent.
TENCENT_STAGE1_WEIGHTS: dict[str, float] = {
    "white_noise": 10.0,
    "background_noise": 60.0,
    "filter": 3.75,
    "clipping": 1.25,
    "codec": 5.0,
    "noise+codec": 5.0,
    "white+codec": 5.0,
    "filter+codec": 5.0,
    "clipping+background": 5.0,
}

# Second-stage shares in percent. They sum to 76.25 and are renormalized.
TENCENT_STAGE2_WEIGHTS: dict[str, float] = {
    "first_only": 60.0,
    "first_ns": 10.0,
    "first_ns_plc": 1.25,
    "clean": 3.75,
    "clean_plc": 1.25,
}

# (keeps first-stage impairment, second-stage chain)
STAGE2_ROWS: dict[str, tuple[bool, str]] = {
    "first_only": (True, "none"),
    "first_ns": (True, "noise_suppression"),
    "first_ns_plc": (True, "noise_suppression+plc"),
    "clean": (False, "none"),
    "clean_plc": (False, "plc"),
}

SECOND_STAGES = ("none", "noise_suppression", "noise_suppression+plc", "plc")

SNR_RANGE_DB = (0.0, 40.0)
CLIP_FRACTION_RANGE = (0.1, 0.5)
LOWPASS_CUTOFF_HZ = 3500.0
HIGHPASS_CUTOFF_HZ = 300.0
CODECS = ("amr", "opus")


def clip_seed(master_seed: int, clip_id: str) -> int:
    """64-bit seed that depends only on the master seed and the clip id."""
    digest = hashlib.sha256(f"{int(master_seed)}:{clip_id}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass(frozen=True)
class ConditionSpec:
    first_stage: str
    second_stage: str = "none"
    params: Mapping[str, Any] = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.second_stage not in SECOND_STAGES:
            raise ValidationError(f"unknown second stage {self.second_stage!r}")
        p = self.params
        if "snr_db" in p and not np.isfinite(p["snr_db"]):
            raise ValidationError("snr_db must be finite")
        if "clip_fraction" in p and not 0.0 < p["clip_fraction"] <= 1.0:
            raise ValidationError("clip_fraction must be in (0, 1]")
        object.__setattr__(self, "params", dict(p))

    @property
    def first_stage_ops(self) -> list[str]:
        return [] if self.first_stage == "clean" else self.first_stage.split("+")

    @property
    def tag(self) -> str:
        """Condition tag used in file names and manifests."""
        base = self.first_stage
        if "codec" in self.params:
            base = base.replace("codec", f"codec-{self.params['codec']}")
        if "filter" in self.params:
            base = base.replace("filter", self.params["filter"])
        return base if self.second_stage == "none" else f"{base}+{self.second_stage}"


@dataclass(frozen=True)
class ConditionPlan:
    assignments: tuple[tuple[str, ConditionSpec], ...]
    stage1_weights: Mapping[str, float]
    stage2_weights: Optional[Mapping[str, float]]
    master_seed: int
    raw_stage1_weights: Mapping[str, float] = field(default_factory=dict)
    raw_stage2_weights: Optional[Mapping[str, float]] = None

    def counts(self, key: str = "first_stage") -> dict[str, int]:
        out: dict[str, int] = {}
        for _, spec in self.assignments:
            k = getattr(spec, key)
            out[k] = out.get(k, 0) + 1
        return out

    def to_dict(self) -> dict[str, Any]:
        doc = asdict(self)
        doc["assignments"] = [
            {"clip_id": cid, **asdict(spec)} for cid, spec in self.assignments
        ]
        return doc

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "ConditionPlan":
        assignments = tuple(
            (a["clip_id"], ConditionSpec(a["first_stage"], a["second_stage"], a["params"], a["seed"]))
            for a in doc["assignments"]
        )
        return cls(
            assignments,
            doc["stage1_weights"],
            doc.get("stage2_weights"),
            doc["master_seed"],
            doc.get("raw_stage1_weights", {}),
            doc.get("raw_stage2_weights"),
        )

    def save(self, path: PathLike) -> None:
        with atomic_write(path, encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)

    @classmethod
    def load(cls, path: PathLike) -> "ConditionPlan":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def normalize_weights(weights: Mapping[str, float], known: Sequence[str]) -> dict[str, float]:
    unknown = sorted(set(weights) - set(known))
    if unknown:
        raise ValidationError(f"unknown condition(s) in weights: {', '.join(unknown)}")
    vals = {k: float(v) for k, v in weights.items()}
    bad = [k for k, v in vals.items() if not np.isfinite(v) or v < 0]
    if bad:
        raise ValidationError(f"weights must be finite and non-negative: {', '.join(bad)}")
    total = sum(vals.values())
    if total <= 0:
        raise ValidationError("at least one weight must be positive")
    return {k: v / total for k, v in vals.items()}


def _apportion(ids: Sequence[str], weights: Mapping[str, float], rng) -> dict[str, str]:
    names = list(weights)
    counts = largest_remainder(len(ids), [weights[k] for k in names])
    shuffled = [ids[i] for i in rng.permutation(len(ids))]
    out, pos = {}, 0
    for name, n in zip(names, counts):
        for cid in shuffled[pos:pos + n]:
            out[cid] = name
        pos += n
    return out


def draw_params(first_stage: str, seed: int) -> dict[str, Any]:
    """Concrete parameters for one clip, drawn from its own seed."""
    rng = np.random.default_rng(seed)
    ops = [] if first_stage == "clean" else first_stage.split("+")
    params: dict[str, Any] = {}
    if {"white", "white_noise", "noise", "background", "background_noise"} & set(ops):
        params["snr_db"] = float(rng.uniform(*SNR_RANGE_DB))
    if "filter" in ops:
        kind = "lowpass" if rng.random() < 0.5 else "highpass"
        params["filter"] = kind
        params["cutoff_hz"] = LOWPASS_CUTOFF_HZ if kind == "lowpass" else HIGHPASS_CUTOFF_HZ
    if "clipping" in ops:
        params["clip_fraction"] = float(rng.uniform(*CLIP_FRACTION_RANGE))
    if "codec" in ops:
        params["codec"] = CODECS[int(rng.integers(len(CODECS)))]
    return params


def sample_plan(
    clip_ids: Sequence[str],
    stage1_weights: Optional[Mapping[str, float]] = None,
    stage2_weights: Optional[Mapping[str, float]] = None,
    master_seed: int = 0,
) -> ConditionPlan:
    """Build a plan.

    With ``stage2_weights=None`` every clip gets a first-stage impairment
    and no post-processing, so the first-stage proportions apply to the
    whole list.
    """
    if not clip_ids:
        raise ValidationError("cannot plan an empty clip list")
    if len(set(clip_ids)) != len(clip_ids):
        raise ValidationError("clip ids must be unique")
    raw1 = dict(TENCENT_STAGE1_WEIGHTS if stage1_weights is None else stage1_weights)
    w1 = normalize_weights(raw1, list(TENCENT_STAGE1_WEIGHTS))
    w2 = normalize_weights(stage2_weights, list(STAGE2_ROWS)) if stage2_weights is not None else None

    ids = sorted(clip_ids)
    rng = np.random.default_rng(clip_seed(master_seed, "\x00plan"))
    if w2 is None:
        impaired, second = ids, dict.fromkeys(ids, "first_only")
    else:
        second = _apportion(ids, w2, rng)
        impaired = [cid for cid in ids if STAGE2_ROWS[second[cid]][0]]
    first = _apportion(impaired, w1, rng) if impaired else {}

    assignments = []
    for cid in clip_ids:
        seed = clip_seed(master_seed, cid)
        stage1 = first.get(cid, "clean")
        assignments.append((cid, ConditionSpec(
            first_stage=stage1,
            second_stage=STAGE2_ROWS[second[cid]][1],
            params=draw_params(stage1, seed),
            seed=seed,
        )))
    return ConditionPlan(
        tuple(assignments), w1, w2, int(master_seed), raw1,
        dict(stage2_weights) if stage2_weights is not None else None,
    )
