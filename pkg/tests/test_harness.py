import csv
import json
import re

import numpy as np
import pytest

from mosbench.core import MOSLabel, PredictionSet, ValidationError
from mosbench.harness import Leaderboard, evaluate_dataset, evaluate_model, rank_models, render_report
from mosbench.harness.report import histogram_svg, mos_histogram
from mosbench.metrics import MetricReport
from mosbench.ratings import descriptive_stats


def labels(n=30, seed=0, prefix="c"):
    rng = np.random.default_rng(seed)
    return [MOSLabel(f"{prefix}{i:03d}", float(m), 0.2, 10) for i, m in enumerate(rng.uniform(1.2, 4.8, n))]


def scores(labs, fn):
    return PredictionSet("m", {lab.clip_id: float(fn(lab.mos)) for lab in labs})


def report(ds, model, rmse_map, rmse=0.5, pcc=0.9, n=10):
    return MetricReport(ds, model, pcc, rmse, rmse_map, 0.1, n)


def test_perfect_model():
    labs = labels()
    rep = evaluate_dataset(labs, scores(labs, lambda m: m), "d", "m")
    assert rep.pcc == pytest.approx(1.0)
    assert rep.rmse == 0.0
    assert rep.rmse_map == pytest.approx(0.0, abs=1e-9)
    assert rep.outlier_ratio == 0.0 and rep.n == 30


def test_affine_bias_is_removed_by_mapping():
    labs = labels()
    rep = evaluate_dataset(labs, scores(labs, lambda m: 2 * m - 3), "d", "m")
    assert rep.rmse > 0.5
    assert rep.rmse_map < 1e-6
    assert rep.outlier_ratio == 0.0
    assert rep.mapping["b"] == pytest.approx(0.5, abs=1e-6)


def test_missing_prediction_named():
    labs = labels(5)
    preds = {lab.clip_id: lab.mos for lab in labs[1:]}
    with pytest.raises(ValidationError, match="c000"):
        evaluate_dataset(labs, preds, "d", "m")
    preds = {**{lab.clip_id: lab.mos for lab in labs}, "stray": 3.0}
    with pytest.raises(ValidationError, match="stray"):
        evaluate_dataset(labs, preds, "d", "m")


def test_evaluate_model_over_datasets():
    sets = {"A": labels(20, 1, "a"), "B": labels(25, 2, "b")}
    preds = {ds: scores(labs, lambda m: m + 0.3) for ds, labs in sets.items()}
    reps = evaluate_model(preds, sets, "m")
    assert [r.dataset for r in reps] == ["A", "B"]
    assert reps == evaluate_model(preds, sets, "m", workers=2)
    with pytest.raises(ValidationError, match="B"):
        evaluate_model({"A": preds["A"]}, sets)


def test_rank_by_mean_rmse_map():
    board = rank_models({"x": [report("d", "x", 0.50)], "y": [report("d", "y", 0.30)]})
    assert [(r.rank, r.model_id) for r in board.rows] == [(1, "y"), (2, "x")]


def test_tie_broken_by_mean_rmse():
    board = rank_models({
        "a": [report("d1", "a", 0.2, rmse=0.6), report("d2", "a", 0.4, rmse=0.6)],
        "b": [report("d1", "b", 0.3, rmse=0.5), report("d2", "b", 0.3, rmse=0.5)],
    })
    assert board.rows[0].mean_rmse_map == pytest.approx(board.rows[1].mean_rmse_map)
    assert [r.model_id for r in board.rows] == ["b", "a"]


def test_single_model_and_order_independence():
    single = rank_models({"only": [report("d", "only", 0.4)]})
    assert single.rows[0].rank == 1
    reps = {m: [report("d1", m, v), report("d2", m, v / 2)] for m, v in [("p", 0.3), ("q", 0.1), ("r", 0.2)]}
    forward = rank_models(reps)
    backward = rank_models(dict(reversed(list(reps.items()))))
    assert forward == backward
    assert [r.model_id for r in forward.rows] == ["q", "r", "p"]


def test_inconsistent_coverage():
    with pytest.raises(ValidationError, match="different dataset"):
        rank_models({"a": [report("d1", "a", 0.2)], "b": [report("d2", "b", 0.2)]})
    with pytest.raises(ValidationError):
        rank_models({})


def test_weighted_mean():
    board = rank_models({"a": [report("d1", "a", 0.2, n=30), report("d2", "a", 0.6, n=10)]}, weighted=True)
    assert board.rows[0].mean_rmse_map == pytest.approx(0.3)
    assert board.weighting == "clip_count"


def test_leaderboard_json_round_trip(tmp_path):
    sets = {"A": labels(20, 1, "a")}
    reps = {m: evaluate_model({"A": scores(sets["A"], f)}, sets, m)
            for m, f in [("good", lambda v: v), ("bad", lambda v: 6 - v)]}
    board = rank_models(reps)
    board.save_json(tmp_path / "lb.json")
    assert Leaderboard.load_json(tmp_path / "lb.json") == board
    doc = json.loads((tmp_path / "lb.json").read_text())
    assert doc["schema_version"] == 1 and doc["rows"][0]["model_id"] == "good"


# --- report ---------------------------------------------------------------------


def test_histogram_single_bin():
    counts, edges = mos_histogram([3.0] * 12)
    assert counts.sum() == 12
    assert counts[np.searchsorted(edges, 3.0)] == 12
    svg = histogram_svg("d", [3.0] * 12)
    bins = re.findall(r'data-lo="([\d.]+)" data-hi="([\d.]+)" data-count="(\d+)"', svg)
    assert [b for b in bins if b[2] != "0"] == [("3.00", "3.25", "12")]
    assert mos_histogram([5.0])[0][-1] == 1


def test_render_report(tmp_path):
    sets = {"A": labels(15, 1, "a"), "B": labels(15, 2, "b")}
    reps = {m: evaluate_model({ds: scores(l, f) for ds, l in sets.items()}, sets, m)
            for m, f in [("m1", lambda v: v + 0.1), ("m2", lambda v: v ** 1.5)]}
    board = rank_models(reps)
    written = render_report(board, descriptive_stats(sets), tmp_path / "rep", sets)
    names = sorted(p.name for p in written)
    assert names == sorted(["leaderboard.csv", "leaderboard.json", "stats.csv", "metrics_A.svg",
                            "metrics_B.svg", "metrics_mean.svg", "mos_hist_A.svg", "mos_hist_B.svg"])
    with open(tmp_path / "rep" / "leaderboard.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["model_id"] for r in rows] == [r.model_id for r in board.rows]
    svg = (tmp_path / "rep" / "metrics_A.svg").read_text()
    assert svg.startswith("<svg") and "href" not in svg
    assert len(re.findall(r'class="bar"', svg)) == 2 * 4


def test_means_match_recomputation(rng):
    reps = {}
    for m in ("a", "b", "c"):
        reps[m] = [MetricReport(f"d{k}", m, *rng.uniform(0, 1, 4).tolist(), 10) for k in range(7)]
    for row in rank_models(reps).rows:
        per = reps[row.model_id]
        assert abs(row.mean_rmse_map - sum(r.rmse_map for r in per) / 7) <= 1e-12
        assert abs(row.mean_pcc - sum(r.pcc for r in per) / 7) <= 1e-12
    assert [r.rank for r in rank_models(reps).rows] == [1, 2, 3]
