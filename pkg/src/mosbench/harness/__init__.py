"""Evaluation across datasets and models, ranking, and report output."""
from .evaluate import (
    Leaderboard,
    LeaderboardRow,
    align,
    evaluate_dataset,
    evaluate_model,
    rank_models,
)
from .report import histogram_svg, metrics_bar_svg, mos_histogram, render_report

__all__ = [
    "Leaderboard",
    "LeaderboardRow",
    "align",
    "evaluate_dataset",
    "evaluate_model",
    "histogram_svg",
    "metrics_bar_svg",
    "mos_histogram",
    "rank_models",
    "render_report",
]
