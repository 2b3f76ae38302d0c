"""Leaderboard tables and self-contained SVG charts."""
from __future__ import annotations

import csv
import re
from pathlib import Path
from typing import Mapping, Optional, Sequence
from xml.sax.saxutils import escape

import numpy as np

from ..core import DataIOError, MOSLabel
from ..io import PathLike, atomic_write
from ..ratings import DescriptiveStats, save_stats
from .evaluate import Leaderboard

HIST_BIN_WIDTH = 0.25
LEADERBOARD_COLUMNS = ("rank", "model_id", "mean_rmse_map", "mean_rmse", "mean_pcc", "mean_or")
METRICS = ("pcc", "rmse", "rmse_map", "outlier_ratio")
_PALETTE = ("#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860", "#da8bc3")


def mos_histogram(mos: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    """Counts over [1, 5] in 0.25-wide bins, left-closed; 5.0 falls in the last bin."""
    edges = np.linspace(1.0, 5.0, int(round(4.0 / HIST_BIN_WIDTH)) + 1)
    counts, _ = np.histogram(np.asarray(mos, dtype=np.float64), bins=edges)
    return counts, edges


def _safe(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", name)


def _svg(width: int, height: int, body: list[str], title: str) -> str:
    return "\n".join([
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f"<title>{escape(title)}</title>",
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="16" text-anchor="middle" font-size="13">{escape(title)}</text>',
        *body,
        "</svg>",
        "",
    ])


def histogram_svg(dataset: str, mos: Sequence[float]) -> str:
    counts, edges = mos_histogram(mos)
    W, H, left, bottom, top = 520, 300, 45, 40, 30
    plot_w, plot_h = W - left - 15, H - top - bottom
    peak = max(int(counts.max()), 1)
    bw = plot_w / len(counts)
    body = [
        f'<line x1="{left}" y1="{H - bottom}" x2="{W - 15}" y2="{H - bottom}" stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{H - bottom}" stroke="black"/>',
    ]
    for i, c in enumerate(counts):
        h = plot_h * c / peak
        x = left + i * bw
        body.append(
            f'<rect class="bin" data-lo="{edges[i]:.2f}" data-hi="{edges[i + 1]:.2f}" '
            f'data-count="{int(c)}" x="{x + 1:.1f}" y="{H - bottom - h:.1f}" '
            f'width="{bw - 2:.1f}" height="{h:.1f}" fill="{_PALETTE[0]}"/>'
        )
    for v in range(1, 6):
        x = left + (v - 1) / 4.0 * plot_w
        body.append(f'<text x="{x:.1f}" y="{H - bottom + 15}" text-anchor="middle">{v}</text>')
    body.append(f'<text x="{left - 5}" y="{top + 4}" text-anchor="end">{peak}</text>')
    body.append(f'<text x="{W / 2:.1f}" y="{H - 8}" text-anchor="middle">MOS</text>')
    return _svg(W, H, body, f"MOS distribution: {dataset} (n={len(mos)})")


def metrics_bar_svg(title: str, values: Mapping[str, Mapping[str, float]]) -> str:
    """Grouped bars: one group per metric, one bar per model."""
    models = list(values)
    W = max(520, 110 * len(METRICS) + 14 * len(models) * len(METRICS))
    H, left, bottom, top = 320, 45, 60, 30
    plot_w, plot_h = W - left - 15, H - top - bottom
    peak = max([abs(v) for m in models for v in values[m].values()] + [1e-12])
    group_w = plot_w / len(METRICS)
    bar_w = group_w * 0.8 / max(len(models), 1)
    zero_y = H - bottom
    body = [f'<line x1="{left}" y1="{zero_y}" x2="{W - 15}" y2="{zero_y}" stroke="black"/>']
    for g, metric in enumerate(METRICS):
        gx = left + g * group_w + group_w * 0.1
        for j, model in enumerate(models):
            v = float(values[model].get(metric, 0.0))
            h = plot_h * max(v, 0.0) / peak
            body.append(
                f'<rect class="bar" data-model="{escape(model)}" data-metric="{metric}" '
                f'data-value="{v:.6g}" x="{gx + j * bar_w:.1f}" y="{zero_y - h:.1f}" '
                f'width="{bar_w - 1:.1f}" height="{h:.1f}" fill="{_PALETTE[j % len(_PALETTE)]}"/>'
            )
        body.append(
            f'<text x="{gx + group_w * 0.4:.1f}" y="{zero_y + 15}" text-anchor="middle">{metric}</text>'
        )
    for j, model in enumerate(models):
        x = left + j * 120
        body.append(f'<rect x="{x}" y="{H - 25}" width="10" height="10" '
                    f'fill="{_PALETTE[j % len(_PALETTE)]}"/>')
        body.append(f'<text x="{x + 14}" y="{H - 16}">{escape(model)}</text>')
    return _svg(W, H, body, title)


def write_leaderboard_csv(board: Leaderboard, path: PathLike) -> None:
    with atomic_write(path, newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        per_ds = [f"{ds}:{m}" for ds in board.datasets for m in METRICS]
        w.writerow([*LEADERBOARD_COLUMNS, *per_ds])
        for row in board.rows:
            cells = [row.rank, row.model_id, f"{row.mean_rmse_map:.6f}", f"{row.mean_rmse:.6f}",
                     f"{row.mean_pcc:.6f}", f"{row.mean_or:.6f}"]
            for ds in board.datasets:
                rep = row.report_for(ds)
                cells += [f"{getattr(rep, m):.6f}" for m in METRICS]
            w.writerow(cells)


def _write_text(path: Path, text: str) -> None:
    with atomic_write(path, encoding="utf-8") as fh:
        fh.write(text)


def render_report(
    board: Leaderboard,
    stats: Sequence[DescriptiveStats],
    output_dir: PathLike,
    labels: Optional[Mapping[str, Sequence[MOSLabel]]] = None,
) -> list[Path]:
    """Write leaderboard CSV/JSON, stats CSV and per-dataset SVG charts. Returns written paths."""
    out = Path(output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataIOError(f"cannot create {out}: {exc}") from exc
    written = []

    p = out / "leaderboard.csv"
    write_leaderboard_csv(board, p)
    written.append(p)
    p = out / "leaderboard.json"
    board.save_json(p)
    written.append(p)
    if stats:
        p = out / "stats.csv"
        save_stats(stats, p)
        written.append(p)

    for ds in board.datasets:
        per_model = {r.model_id: {m: getattr(r.report_for(ds), m) for m in METRICS}
                     for r in board.rows}
        p = out / f"metrics_{_safe(ds)}.svg"
        _write_text(p, metrics_bar_svg(f"Results: {ds}", per_model))
        written.append(p)
    mean_vals = {r.model_id: {"pcc": r.mean_pcc, "rmse": r.mean_rmse, "rmse_map": r.mean_rmse_map,
                              "outlier_ratio": r.mean_or} for r in board.rows}
    p = out / "metrics_mean.svg"
    _write_text(p, metrics_bar_svg("Results: mean over datasets", mean_vals))
    written.append(p)

    for ds, labs in (labels or {}).items():
        p = out / f"mos_hist_{_safe(ds)}.svg"
        _write_text(p, histogram_svg(ds, [lab.mos for lab in labs]))
        written.append(p)
    return written
