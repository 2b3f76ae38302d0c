import hashlib
import json

import numpy as np
import pytest

from conftest import tone
from mosbench.cli import main
from mosbench.core import MOSLabel, PredictionSet, RatingRecord
from mosbench.io import load_manifest, manifest_from_labels, save_audio, save_manifest, save_predictions, save_ratings


@pytest.fixture
def corpus(tmp_path):
    rng = np.random.default_rng(4)
    labels = [MOSLabel(f"c{i:02d}", float(m), 0.2, 8) for i, m in enumerate(rng.uniform(1.5, 4.5, 20))]
    save_manifest(manifest_from_labels("dev", labels), tmp_path / "dev.csv")
    save_predictions(PredictionSet("perfect", {l.clip_id: l.mos for l in labels}), tmp_path / "perfect.csv")
    save_predictions(PredictionSet("noisy", {l.clip_id: l.mos + rng.normal(0, 0.5) for l in labels}),
                     tmp_path / "noisy.csv")
    return tmp_path


def test_evaluate_perfect(corpus, capsys):
    code = main(["evaluate", "--labels", str(corpus / "dev.csv"), "--preds", str(corpus / "perfect.csv"),
                 "--out", str(corpus / "r.json")])
    assert code == 0
    assert "pcc=1.000" in capsys.readouterr().out
    assert json.loads((corpus / "r.json").read_text())["reports"][0]["model_id"] == "perfect"


def test_evaluate_rank_report_chain(corpus, capsys):
    for m in ("perfect", "noisy"):
        assert main(["evaluate", "--labels", str(corpus / "dev.csv"), "--preds", str(corpus / f"{m}.csv"),
                     "--out", str(corpus / f"{m}.json")]) == 0
    assert main(["rank", "--reports", str(corpus / "noisy.json"), "--reports", str(corpus / "perfect.json"),
                 "--out", str(corpus / "lb.json")]) == 0
    board = json.loads((corpus / "lb.json").read_text())
    assert [r["model_id"] for r in board["rows"]] == ["perfect", "noisy"]
    assert main(["report", "--leaderboard", str(corpus / "lb.json"), "--labels", str(corpus / "dev.csv"),
                 "--out-dir", str(corpus / "rep")]) == 0
    assert (corpus / "rep" / "mos_hist_dev.svg").exists()


def test_aggregate_and_stats(tmp_path, capsys):
    recs = [RatingRecord("a", f"r{i}", v) for i, v in enumerate([3, 4, 5])] + [RatingRecord("b", "r0", 2.0)]
    save_ratings(recs, tmp_path / "votes.csv")
    assert main(["aggregate", "--ratings", str(tmp_path / "votes.csv"), "--out", str(tmp_path / "m.csv"),
                 "--min-votes", "2", "--exclusions", str(tmp_path / "x.csv")]) == 0
    assert load_manifest(tmp_path / "m.csv").clip_ids == ["a"]
    assert (tmp_path / "x.csv").read_text().splitlines()[1].startswith("b,")
    assert main(["stats", "--manifest", str(tmp_path / "m.csv")]) == 0
    assert "votes | 3 | " in capsys.readouterr().out


def test_split(corpus):
    assert main(["split", "--manifest", str(corpus / "dev.csv"), "--fraction", "0.75",
                 "--train-out", str(corpus / "t.csv"), "--eval-out", str(corpus / "e.csv")]) == 0
    assert len(load_manifest(corpus / "t.csv")) == 15


def test_negative_weight_in_config(corpus, capsys):
    (corpus / "cfg.json").write_text(json.dumps({"stage1_weights": {"white_noise": -1, "filter": 1}}))
    code = main(["plan", "--manifest", str(corpus / "dev.csv"), "--out", str(corpus / "p.json"),
                 "--config", str(corpus / "cfg.json")])
    assert code == 1
    assert "non-negative" in capsys.readouterr().err


def make_source(tmp_path):
    src = tmp_path / "src"
    src.mkdir()
    labels = []
    for i in range(6):
        save_audio(tone(250.0 + 50 * i, 0.25, 0.4, clip_id=f"u{i}"), src / f"u{i}.wav")
        labels.append(MOSLabel(f"u{i}", 4.5, 0.1, 5))
    rows = manifest_from_labels("src", labels)
    rows = type(rows)("src", tuple(r.__class__(r.clip_id, r.dataset, f"{r.clip_id}.wav", r.label)
                                   for r in rows.rows))
    save_manifest(rows, src / "manifest.csv")
    save_audio(tone(60.0, 0.5, 0.3, clip_id="hum"), tmp_path / "hum.wav")
    cfg = {"adapters": {"amr": "cp {in} {out}", "opus": "cp {in} {out}"}}
    (tmp_path / "cfg.json").write_text(json.dumps(cfg))
    return src


def tree_hash(d):
    h = hashlib.sha256()
    for p in sorted(d.iterdir()):
        h.update(p.name.encode() + p.read_bytes())
    return h.hexdigest()


def test_degrade_is_reproducible(tmp_path):
    src = make_source(tmp_path)
    for out in ("a", "b"):
        assert main(["degrade", "--manifest", str(src / "manifest.csv"), "--out-dir", str(tmp_path / out),
                     "--noise", str(tmp_path / "hum.wav"), "--config", str(tmp_path / "cfg.json"),
                     "--seed", "42"]) == 0
    assert tree_hash(tmp_path / "a") == tree_hash(tmp_path / "b")
    assert main(["degrade", "--manifest", str(src / "manifest.csv"), "--out-dir", str(tmp_path / "c"),
                 "--noise", str(tmp_path / "hum.wav"), "--config", str(tmp_path / "cfg.json"),
                 "--seed", "43"]) == 0
    assert tree_hash(tmp_path / "a") != tree_hash(tmp_path / "c")


def test_plan_then_degrade(tmp_path):
    src = make_source(tmp_path)
    assert main(["plan", "--manifest", str(src / "manifest.csv"), "--out", str(tmp_path / "p.json"),
                 "--seed", "3", "--config", str(tmp_path / "cfg.json")]) == 0
    assert main(["degrade", "--manifest", str(src / "manifest.csv"), "--plan", str(tmp_path / "p.json"),
                 "--out-dir", str(tmp_path / "o"), "--noise", str(tmp_path / "hum.wav"),
                 "--config", str(tmp_path / "cfg.json")]) == 0
    assert len(load_manifest(tmp_path / "o" / "manifest.csv")) == 6


def test_segment(tmp_path, capsys):
    save_audio(tone(seconds=25.0, clip_id="long"), tmp_path / "long.wav")
    assert main(["segment", "--input", str(tmp_path / "long.wav"), "--out-dir", str(tmp_path / "segs")]) == 0
    assert sorted(p.name for p in (tmp_path / "segs").iterdir()) == ["long_seg000.wav", "long_seg001.wav"]
    assert "kept 2 of 2" in capsys.readouterr().out


def test_unknown_flag_is_usage_error(capsys):
    assert main(["evaluate", "--bogus"]) == 1
    assert main([]) == 1
    assert "usage" in capsys.readouterr().err


def test_missing_file_is_io_error(tmp_path, capsys):
    assert main(["stats", "--manifest", str(tmp_path / "nope.csv")]) == 2
    assert "error" in capsys.readouterr().err


def test_help_exits_zero(capsys):
    assert main(["--help"]) == 0
