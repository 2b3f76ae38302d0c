"""Command-line entry point: ``mosbench <subcommand> ...``.

Exit status is 0 on success, 1 on invalid input or usage, 2 on I/O or
external-tool failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from collections import defaultdict
from pathlib import Path
from typing import Optional, Sequence

from .core import AdapterError, DataIOError, MosbenchError, ValidationError
from .degradation import ConditionPlan, execute_plan, sample_plan, segment_speech
from .degradation.plan import TENCENT_STAGE2_WEIGHTS
from .harness import Leaderboard, evaluate_model, rank_models, render_report
from .io import (
    Config,
    atomic_write,
    load_audio,
    load_config,
    load_manifest,
    load_predictions,
    load_ratings,
    manifest_from_labels,
    save_audio,
    save_manifest,
)
from .metrics import MetricReport
from .ratings import aggregate_ratings, descriptive_stats, save_exclusions, save_stats, stratified_split

log = logging.getLogger("mosbench")

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _labels_by_dataset(paths: Sequence[str]):
    out = {}
    for p in paths:
        for name, part in load_manifest(p).datasets().items():
            if name in out:
                raise ValidationError(f"dataset {name!r} appears in more than one manifest")
            out[name] = part
    return out


def cmd_aggregate(args, cfg: Config) -> int:
    records = load_ratings(args.ratings)
    result = aggregate_ratings(records, args.min_votes or cfg.min_votes)
    dataset = args.dataset or Path(args.ratings).stem
    save_manifest(manifest_from_labels(dataset, result.labels), args.out)
    if args.exclusions:
        save_exclusions(result.excluded, args.exclusions)
    print(f"aggregate: {len(result.labels)} clips labelled, {len(result.excluded)} excluded, "
          f"{result.duplicate_votes} duplicate rows dropped -> {args.out}")
    return EXIT_OK


def cmd_stats(args, cfg: Config) -> int:
    groups = {name: m.labels() for name, m in _labels_by_dataset(args.manifest).items()}
    rows = descriptive_stats(groups)
    if args.out:
        save_stats(rows, args.out)
    print(" | ".join(rows[0].COLUMNS))
    for r in rows:
        print(" | ".join(r.as_row()))
    return EXIT_OK


def cmd_split(args, cfg: Config) -> int:
    manifest = load_manifest(args.manifest)
    train, held = stratified_split(manifest, args.fraction, args.bins or cfg.mos_bins, cfg.seed)
    save_manifest(train, args.train_out)
    save_manifest(held, args.eval_out)
    print(f"split: {len(train)} train / {len(held)} eval")
    return EXIT_OK


def _plan_for(manifest, cfg: Config, with_stage2: bool) -> ConditionPlan:
    stage2 = cfg.stage2_weights
    if stage2 is None and with_stage2:
        stage2 = TENCENT_STAGE2_WEIGHTS
    return sample_plan(manifest.clip_ids, cfg.stage1_weights, stage2, cfg.seed)


def cmd_plan(args, cfg: Config) -> int:
    plan = _plan_for(load_manifest(args.manifest), cfg, args.with_stage2)
    plan.save(args.out)
    counts = plan.counts()
    print("plan: " + ", ".join(f"{k}={v}" for k, v in sorted(counts.items())))
    return EXIT_OK


def cmd_degrade(args, cfg: Config) -> int:
    manifest = load_manifest(args.manifest)
    plan = ConditionPlan.load(args.plan) if args.plan else _plan_for(manifest, cfg, args.with_stage2)
    noise_paths = list(args.noise or [])
    noise_dir = args.noise_dir or cfg.paths.get("noise_dir")
    if noise_dir:
        noise_paths += sorted(str(p) for p in Path(noise_dir).glob("*.wav"))
    noises = [load_audio(p) for p in noise_paths]
    root = args.source_root or cfg.paths.get("source_root") or str(Path(args.manifest).parent)
    run = execute_plan(plan, manifest, args.out_dir, noises=noises, adapters=cfg.adapters,
                       timeout=cfg.adapter_timeout, workers=args.workers or cfg.workers,
                       source_root=root)
    print(f"degrade: {len(run.manifest)} clips written, {len(run.skipped)} skipped -> {args.out_dir}")
    return EXIT_OK


def cmd_segment(args, cfg: Config) -> int:
    audio = load_audio(args.input)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    segs = segment_speech(audio, args.seconds, args.min_activity)
    for seg in segs:
        save_audio(seg, out / f"{seg.clip_id}.wav")
    total = int(len(audio.samples) // round(args.seconds * audio.sample_rate))
    print(f"segment: kept {len(segs)} of {total} segments -> {out}")
    return EXIT_OK


def _assign_predictions(paths: Sequence[str], datasets: Sequence[str], model_flag: Optional[str]):
    """Map prediction files to (model, dataset); ``model__dataset.csv`` names both."""
    out: dict[str, dict] = defaultdict(dict)
    for p in paths:
        stem = Path(p).stem
        if "__" in stem:
            model, ds = stem.split("__", 1)
        elif len(datasets) == 1:
            model, ds = stem, datasets[0]
        else:
            raise ValidationError(
                f"{p}: cannot tell the dataset; name the file <model>__<dataset>.csv"
            )
        if model_flag:
            model = model_flag
        if ds in out[model]:
            raise ValidationError(f"two prediction files for model {model!r}, dataset {ds!r}")
        out[model][ds] = load_predictions(p, model)
    return out


def cmd_evaluate(args, cfg: Config) -> int:
    manifests = _labels_by_dataset(args.labels)
    labels = {name: m.labels() for name, m in manifests.items()}
    preds = _assign_predictions(args.preds, list(labels), args.model_id)
    reports = []
    for model, per_ds in preds.items():
        reps = evaluate_model(per_ds, labels, model, cfg.grid_points, cfg.rmse_ddof, cfg.workers)
        reports.extend(reps)
        for r in reps:
            print(f"{model} {r.dataset}: pcc={r.pcc:.3f} rmse={r.rmse:.3f} "
                  f"rmse_map={r.rmse_map:.3f} or={r.outlier_ratio:.3f} n={r.n}")
    if args.out:
        with atomic_write(args.out, encoding="utf-8") as fh:
            json.dump({"reports": [r.to_dict() for r in reports]}, fh, indent=2)
    return EXIT_OK


def _load_reports(paths: Sequence[str]):
    by_model: dict[str, list[MetricReport]] = defaultdict(list)
    for p in paths:
        try:
            with open(p, encoding="utf-8") as fh:
                doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{p}: invalid JSON: {exc}") from exc
        for r in doc["reports"]:
            rep = MetricReport.from_dict(r)
            by_model[rep.model_id].append(rep)
    return by_model


def cmd_rank(args, cfg: Config) -> int:
    board = rank_models(_load_reports(args.reports), weighted=args.weighted or cfg.weighted_mean)
    board.save_json(args.out)
    for row in board.rows:
        print(f"{row.rank:>3}  {row.model_id:<20} rmse_map={row.mean_rmse_map:.4f} "
              f"rmse={row.mean_rmse:.4f} pcc={row.mean_pcc:.4f} or={row.mean_or:.4f}")
    return EXIT_OK


def cmd_report(args, cfg: Config) -> int:
    board = Leaderboard.load_json(args.leaderboard)
    labels = {}
    if args.labels:
        labels = {name: m.labels() for name, m in _labels_by_dataset(args.labels).items()}
    stats = descriptive_stats(labels) if labels else []
    written = render_report(board, stats, args.out_dir, labels)
    print(f"report: wrote {len(written)} files -> {args.out_dir}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON configuration file")
    common.add_argument("--seed", type=int, help="master seed (overrides config)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="mosbench", description="Speech quality challenge toolkit.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("aggregate", parents=[common], help="votes CSV -> MOS manifest")
    p.add_argument("--ratings", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--dataset")
    p.add_argument("--min-votes", type=int)
    p.add_argument("--exclusions", help="CSV of clips dropped for too few votes")
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("stats", parents=[common], help="descriptive statistics per dataset")
    p.add_argument("--manifest", action="append", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("split", parents=[common], help="stratified train/eval split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--fraction", type=float, required=True)
    p.add_argument("--bins", type=int)
    p.add_argument("--train-out", required=True)
    p.add_argument("--eval-out", required=True)
    p.set_defaults(func=cmd_split)

    for name, func, help_ in (("plan", cmd_plan, "write a condition plan"),
                              ("degrade", cmd_degrade, "synthesize a degraded corpus")):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.add_argument("--manifest", required=True, help="source corpus manifest")
        p.add_argument("--with-stage2", action="store_true",
                       help="apply the default second-stage table when config has none")
        if name == "plan":
            p.add_argument("--out", required=True)
        else:
            p.add_argument("--plan", help="plan JSON; built from --seed when omitted")
            p.add_argument("--out-dir", required=True)
            p.add_argument("--noise", action="append", help="background noise WAV (repeatable)")
            p.add_argument("--noise-dir")
            p.add_argument("--source-root")
            p.add_argument("--workers", type=int)
        p.set_defaults(func=func)

    p = sub.add_parser("segment", parents=[common], help="cut a recording into active clips")
    p.add_argument("--input", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seconds", type=float, default=10.0)
    p.add_argument("--min-activity", type=float, default=0.5)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("evaluate", parents=[common], help="score prediction files")
    p.add_argument("--labels", action="append", required=True)
    p.add_argument("--preds", action="append", required=True)
    p.add_argument("--model-id")
    p.add_argument("--out", help="write metric reports JSON")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("rank", parents=[common], help="build the leaderboard")
    p.add_argument("--reports", action="append", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--weighted", action="store_true", help="weight dataset means by clip count")
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("report", parents=[common], help="write CSV/JSON/SVG report")
    p.add_argument("--leaderboard", required=True)
    p.add_argument("--labels", action="append")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        return args.func(args, cfg)
    except (DataIOError, AdapterError, OSError) as exc:
        print(f"mosbench: error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (MosbenchError, ValueError, KeyError, TypeError) as exc:
        print(f"mosbench: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    raise SystemExit(main())
