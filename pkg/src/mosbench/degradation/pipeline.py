"""Run a condition plan over a source corpus and write the degraded corpus."""
from __future__ import annotations

import csv
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from ..core import AdapterError, Clip, DataIOError, DatasetManifest, ManifestRow, MosbenchError
from ..io import PathLike, atomic_write, load_audio, save_audio, save_manifest
from . import dsp
from .adapters import DEFAULT_TIMEOUT, run_external_adapter
from .plan import ConditionPlan, ConditionSpec

log = logging.getLogger(__name__)

SKIPPED_REPORT = "skipped.csv"


@dataclass(frozen=True)
class Skipped:
    clip_id: str
    condition: str
    reason: str


@dataclass(frozen=True)
class PlanRun:
    manifest: DatasetManifest
    skipped: list[Skipped] = field(default_factory=list)


def required_adapters(spec: ConditionSpec) -> list[str]:
    names = []
    if "codec" in spec.first_stage_ops:
        names.append(spec.params["codec"])
    if spec.second_stage.startswith("noise_suppression"):
        names.append("ns")
    if spec.second_stage.endswith("plc"):
        names.append("plc")
    return names


def apply_condition(
    clip: Clip,
    spec: ConditionSpec,
    noises: Sequence[Clip] = (),
    adapters: Optional[Mapping[str, str]] = None,
    timeout: float = DEFAULT_TIMEOUT,
) -> Clip:
    """Run one clip through its first-stage chain, then its second stage."""
    adapters = adapters or {}
    rng = np.random.default_rng(spec.seed)
    # Fixed draw order keeps every stage's seed independent of which stages run.
    noise_seed, noise_pick, white_seed = (int(v) for v in rng.integers(0, 2**63, size=3))
    out = clip
    for op in spec.first_stage_ops:
        if op in ("white", "white_noise"):
            out = dsp.add_white_noise(out, spec.params["snr_db"], white_seed)
        elif op in ("noise", "background", "background_noise"):
            if not noises:
                raise MosbenchError("background noise requested but no noise clips configured")
            noise = noises[noise_pick % len(noises)]
            out = dsp.mix_background_noise(out, noise, spec.params["snr_db"], noise_seed)
        elif op == "filter":
            out = dsp.apply_filter(out, spec.params["filter"], spec.params["cutoff_hz"])
        elif op in ("highpass", "lowpass"):
            out = dsp.apply_filter(out, op, spec.params["cutoff_hz"])
        elif op == "clipping":
            out = dsp.clip_amplitude(out, spec.params["clip_fraction"])
        elif op == "codec":
            codec = spec.params["codec"]
            out = run_external_adapter(out, adapters[codec], timeout, name=codec)
        else:
            raise MosbenchError(f"unknown first-stage operation {op!r}")
    if spec.second_stage.startswith("noise_suppression"):
        out = run_external_adapter(out, adapters["ns"], timeout, name="ns")
    if spec.second_stage.endswith("plc"):
        out = run_external_adapter(out, adapters["plc"], timeout, name="plc")
    return out


def execute_plan(
    plan: ConditionPlan,
    source: DatasetManifest,
    output_dir: PathLike,
    noises: Sequence[Clip] = (),
    adapters: Optional[Mapping[str, str]] = None,
    timeout: float = DEFAULT_TIMEOUT,
    workers: int = 1,
    source_root: Optional[PathLike] = None,
    dataset: Optional[str] = None,
) -> PlanRun:
    """Degrade every planned clip and write ``{clip_id}__{condition}.wav`` files.

    Adapter failures skip the clip; skipped clips are logged and listed in
    ``skipped.csv`` next to the output manifest. Relative audio paths in
    ``source`` resolve against ``source_root``.
    """
    out_dir = Path(output_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataIOError(f"cannot create output directory {out_dir}: {exc}") from exc
    if not os.access(out_dir, os.W_OK):
        raise DataIOError(f"output directory {out_dir} is not writable")

    adapters = dict(adapters or {})
    missing = sorted({a for _, spec in plan.assignments for a in required_adapters(spec)} - set(adapters))
    if missing:
        raise MosbenchError(f"plan needs adapter(s) with no configured command: {', '.join(missing)}")

    rows_by_id = {r.clip_id: r for r in source.rows}
    unknown = [cid for cid, _ in plan.assignments if cid not in rows_by_id]
    if unknown:
        raise MosbenchError(f"plan references clips missing from the source manifest: {unknown[:10]}")
    root = Path(source_root) if source_root is not None else Path(".")
    name = dataset or source.dataset

    def work(item):
        cid, spec = item
        row = rows_by_id[cid]
        fname = f"{cid}__{spec.tag}.wav"
        try:
            clip = load_audio(root / row.audio_path, clip_id=cid, dataset=name)
            degraded = apply_condition(clip, spec, noises, adapters, timeout)
            save_audio(degraded, out_dir / fname)
        except AdapterError as exc:
            log.warning("skipping %s (%s): %s", cid, spec.tag, exc)
            if exc.diagnostics:
                log.debug("adapter diagnostics for %s:\n%s", cid, exc.diagnostics)
            return Skipped(cid, spec.tag, str(exc))
        except MosbenchError as exc:
            log.warning("skipping %s (%s): %s", cid, spec.tag, exc)
            return Skipped(cid, spec.tag, str(exc))
        return ManifestRow(cid, name, fname, None, spec.tag)

    items = list(plan.assignments)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, items))
    else:
        results = [work(it) for it in items]

    rows = tuple(r for r in results if isinstance(r, ManifestRow))
    skipped = [r for r in results if isinstance(r, Skipped)]
    manifest = DatasetManifest(name, rows)
    save_manifest(manifest, out_dir / "manifest.csv")
    with atomic_write(out_dir / SKIPPED_REPORT, newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["clip_id", "condition", "reason"])
        for s in skipped:
            w.writerow([s.clip_id, s.condition, s.reason])
    return PlanRun(manifest, skipped)
