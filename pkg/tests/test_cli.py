import csv
import json
from pathlib import Path

import numpy as np
import pytest

from textline_mdl.cli import main, render_svg
from textline_mdl.classify import glyph_patch
from textline_mdl.core import blobs_from_json, models_from_json
from textline_mdl.imaging import save_pgm

GOLDEN = Path(__file__).parent / "data" / "golden6"


def run(*argv):
    return main([str(a) for a in argv])


def read(path):
    return json.loads(Path(path).read_text())


def test_fit_golden(tmp_path):
    assert run("fit", GOLDEN / "blobs.json", "--out", tmp_path) == 0
    for name in ("lines.json", "labeling.json"):
        assert (tmp_path / name).read_text() == (GOLDEN / "expected" / name).read_text()
    rep = read(tmp_path / "report.json")
    assert rep["config"]["line_cost"] == 20.0 and rep["n_lines"] == 1
    assert rep["inliers"] == {"2": [0, 1, 2, 3]}
    assert "wall_time_s" not in rep


def test_fit_empty(tmp_path):
    src = tmp_path / "empty.json"
    src.write_text("[]")
    assert run("fit", src, "--out", tmp_path / "o", "--svg", "--timing") == 0
    assert read(tmp_path / "o" / "lines.json") == []
    assert read(tmp_path / "o" / "labeling.json") == {}
    assert "wall_time_s" in read(tmp_path / "o" / "report.json")
    assert (tmp_path / "o" / "lines.svg").read_text().startswith("<svg")


def test_fit_permutation_invariant(tmp_path):
    blobs = read(GOLDEN / "blobs.json")
    perm = [blobs[k] for k in (3, 5, 0, 4, 2, 1)]
    src = tmp_path / "perm.json"
    src.write_text(json.dumps(perm))
    assert run("fit", src, "--out", tmp_path / "o") == 0
    assert (tmp_path / "o" / "lines.json").read_text() == (GOLDEN / "expected" / "lines.json").read_text()
    a = read(tmp_path / "o" / "labeling.json")
    b = read(GOLDEN / "expected" / "labeling.json")
    assert a == b


def test_fit_schema_error(tmp_path, capsys):
    src = tmp_path / "bad.json"
    src.write_text(json.dumps([{"id": 0, "box": [0, 0, 5, 5], "likelihoods": [0.5, 0.5]}]))
    assert run("fit", src, "--out", tmp_path / "o") == 2
    assert "likelihoods" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()
    src.write_text("{not json")
    assert run("fit", src, "--out", tmp_path / "o") == 2


def test_config_layers(tmp_path, monkeypatch):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"line_cost": 5.0, "outlier_cost": 6.0}))
    monkeypatch.setenv("TEXTLINE_MDL_CONFIG", str(cfg))
    assert run("fit", GOLDEN / "blobs.json", "--out", tmp_path / "a", "--set", "outlier_cost=7",
               "--max-iters", "2") == 0
    rep = read(tmp_path / "a" / "report.json")["config"]
    assert (rep["line_cost"], rep["outlier_cost"], rep["max_iterations"]) == (5.0, 7, 2)
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"line_cost": -3}))
    assert run("fit", GOLDEN / "blobs.json", "--out", tmp_path / "b", "--config", bad) == 2
    assert run("fit", GOLDEN / "blobs.json", "--out", tmp_path / "b", "--set", "nonsense=1") == 2
    assert not (tmp_path / "b").exists()


def test_synth_and_fit_deterministic(tmp_path):
    for d in ("s1", "s2"):
        assert run("synth", "--seed", 11, "--out", tmp_path / d, "--render") == 0
    for name in ("scene.json", "blobs.json", "report.json", "scene.pgm"):
        assert (tmp_path / "s1" / name).read_bytes() == (tmp_path / "s2" / name).read_bytes()
    for d in ("f1", "f2"):
        assert run("fit", tmp_path / "s1" / "blobs.json", "--seed", 3, "--out", tmp_path / d, "--svg") == 0
    for name in ("lines.json", "labeling.json", "report.json", "lines.svg"):
        assert (tmp_path / "f1" / name).read_bytes() == (tmp_path / "f2" / name).read_bytes()


def test_synth_errors(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"n_lines": 40, "image_size": [100, 60]}))
    assert run("synth", spec, "--out", tmp_path / "o") == 3
    spec.write_text(json.dumps({"n_lines": 0}))
    assert run("synth", spec, "--out", tmp_path / "o") == 2
    assert not (tmp_path / "o").exists()


def test_synth_options_roundtrip(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"n_lines": 2, "languages": ["Korean", "Digit"], "jitter_sigma": 0}))
    assert run("synth", spec, "--seed", 1, "--out", tmp_path / "o") == 0
    rep = read(tmp_path / "o" / "report.json")
    assert rep["spec"]["languages"] == ["Korean", "Digit"] and rep["n_lines"] == 2
    blobs = blobs_from_json(read(tmp_path / "o" / "blobs.json"))
    assert len(blobs) == rep["n_blobs"]


def test_detect_blank(tmp_path):
    img = tmp_path / "blank.pgm"
    img.write_bytes(save_pgm(np.full((40, 60), 180, dtype=np.uint8)))
    assert run("detect", img, "--out", tmp_path / "o", "--svg") == 0
    assert read(tmp_path / "o" / "lines.json") == []
    assert read(tmp_path / "o" / "labeling.json") == {}


def test_detect_errors(tmp_path):
    assert run("detect", tmp_path / "missing.pgm", "--out", tmp_path / "o") == 2
    bad = tmp_path / "bad.pgm"
    bad.write_bytes(b"P5\n4 4\n255\n\x00")
    assert run("detect", bad, "--out", tmp_path / "o") == 2
    good = tmp_path / "g.pgm"
    good.write_bytes(save_pgm(np.zeros((20, 20), dtype=np.uint8)))
    assert run("detect", good, "--out", tmp_path / "o", "--set", "detector.max_dim=4") == 2
    assert not (tmp_path / "o").exists()


def test_detect_end_to_end(tmp_path):
    assert run("synth", "--seed", 4, "--out", tmp_path / "s", "--render") == 0
    scene = read(tmp_path / "s" / "scene.json")
    # train on the rendered scene itself; solid boxes differ only in geometry
    manifest = tmp_path / "train.csv"
    with manifest.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["pgm_path", "left", "top", "right", "bottom", "category"])
        for b in scene["blobs"]:
            w.writerow(["s/scene.pgm", *[int(v) for v in b["box"]], scene["categories"][str(b["id"])]])
    assert run("train", manifest, "--rounds", 20, "--out", tmp_path / "clf.json") == 0
    assert run("detect", tmp_path / "s" / "scene.pgm", "--model", tmp_path / "clf.json",
               "--out", tmp_path / "d1", "--svg") == 0
    assert run("detect", tmp_path / "s" / "scene.pgm", "--model", tmp_path / "clf.json",
               "--out", tmp_path / "d2", "--svg") == 0
    for name in ("blobs.json", "lines.json", "labeling.json", "report.json", "lines.svg"):
        assert (tmp_path / "d1" / name).read_bytes() == (tmp_path / "d2" / name).read_bytes()
    lines = models_from_json(read(tmp_path / "d1" / "lines.json"))
    assert 2 <= len(lines) <= 8
    assert run("render", tmp_path / "d1", "--out", tmp_path / "r.svg") == 0
    svg = (tmp_path / "r.svg").read_text()
    assert svg.count("<line ") == (tmp_path / "d1" / "lines.svg").read_text().count("<line ")


def test_train_errors(tmp_path):
    img = glyph_patch(0, np.random.default_rng(0), 20)
    (tmp_path / "a.pgm").write_bytes(save_pgm(img))
    one = tmp_path / "one.csv"
    one.write_text("a.pgm,0,0,5,5,English\na.pgm,1,1,6,6,English\n")
    assert run("train", one, "--out", tmp_path / "m.json") == 2
    bad = tmp_path / "bad.csv"
    bad.write_text("a.pgm,0,0,5\n")
    assert run("train", bad, "--out", tmp_path / "m.json") == 2
    cat = tmp_path / "cat.csv"
    cat.write_text("a.pgm,0,0,5,5,Elvish\na.pgm,1,1,6,6,Korean\n")
    assert run("train", cat, "--out", tmp_path / "m.json") == 2
    assert not (tmp_path / "m.json").exists()


def test_train_single_pair_fit(tmp_path):
    rng = np.random.default_rng(1)
    (tmp_path / "a.pgm").write_bytes(save_pgm(glyph_patch(0, rng, 24)))
    (tmp_path / "b.pgm").write_bytes(save_pgm(glyph_patch(1, rng, 24)))
    man = tmp_path / "m.csv"
    man.write_text("a.pgm,0,0,10,24,English\nb.pgm,0,0,20,24,Korean\n")
    for out in ("m1.json", "m2.json"):
        assert run("train", man, "--seed", 2, "--out", tmp_path / out) == 0
    assert (tmp_path / "m1.json").read_bytes() == (tmp_path / "m2.json").read_bytes()
    assert read(tmp_path / "m1.json")["training"]["accuracy"] == 1.0


def make_eval_dirs(tmp_path, names):
    gt, det = tmp_path / "gt", tmp_path / "det"
    gt.mkdir()
    det.mkdir()
    for k, name in enumerate(names):
        assert run("synth", "--seed", k, "--out", tmp_path / "scenes" / name) == 0
        scene = read(tmp_path / "scenes" / name / "scene.json")
        (gt / f"{name}.json").write_text(json.dumps(scene))
        (det / name).mkdir()
    return gt, det, scene


def test_eval_identity_and_empty(tmp_path):
    gt, det, _ = make_eval_dirs(tmp_path, ["a", "b"])
    for name in ("a", "b"):
        scene = read(gt / f"{name}.json")
        (det / name / "lines.json").write_text(json.dumps(scene["gt_lines"]))
        (det / name / "labeling.json").write_text(json.dumps(scene["gt_labeling"]))
    assert run("eval", det, gt, "--out", tmp_path / "m") == 0
    metrics = read(tmp_path / "m" / "metrics.json")
    assert metrics["aggregate"]["f"] == 1.0 and metrics["aggregate"]["mean_f"] == 1.0
    rows = list(csv.DictReader((tmp_path / "m" / "metrics.csv").open()))
    assert [r["scene"] for r in rows] == ["a", "b"]
    for name in ("a", "b"):
        scene = read(gt / f"{name}.json")
        (det / name / "lines.json").write_text("[]")
        (det / name / "labeling.json").write_text(json.dumps({k: None for k in scene["gt_labeling"]}))
    assert run("eval", det, gt, "--out", tmp_path / "m2") == 0
    agg = read(tmp_path / "m2" / "metrics.json")["aggregate"]
    assert (agg["precision"], agg["recall"], agg["f"]) == (1.0, 0.0, 0.0)


def test_eval_arithmetic_fixture(tmp_path):
    gt, det, _ = make_eval_dirs(tmp_path, ["x"])
    scene = read(gt / "x.json")
    lines = scene["gt_lines"]
    lab = dict(scene["gt_labeling"])
    # drop one gt line entirely, and add a spurious line made of the outliers
    dropped = lines[0]["id"]
    lab = {k: (None if v == dropped else v) for k, v in lab.items()}
    outliers = [k for k, v in scene["gt_labeling"].items() if v is None]
    spurious = dict(lines[1], id=99)
    for k in outliers[:2]:
        lab[k] = 99
    (det / "x" / "lines.json").write_text(json.dumps(lines[1:] + [spurious]))
    (det / "x" / "labeling.json").write_text(json.dumps(lab))
    assert run("eval", det, gt, "--out", tmp_path / "m") == 0
    row = read(tmp_path / "m" / "metrics.json")["scenes"][0]
    n = len(lines)
    p, r = (n - 1) / n, (n - 1) / n
    assert (row["precision"], row["recall"]) == pytest.approx((p, r))
    assert row["f"] == pytest.approx(2 * p * r / (p + r))


def test_eval_missing_pair(tmp_path, capsys):
    gt, det, _ = make_eval_dirs(tmp_path, ["a"])
    (gt / "extra.json").write_text("{}")
    assert run("eval", det, gt, "--out", tmp_path / "m") == 2
    assert "extra" in capsys.readouterr().err
    assert run("eval", det, gt, "--out", tmp_path / "m", "--overlap-min", "0") == 2
    assert not (tmp_path / "m").exists()


def test_svg_palette_triplets():
    from textline_mdl.core import Language, Line, LineModel, TextCandidate

    blobs = [TextCandidate(i, (10 * i, 0, 10 * i + 8, 10)) for i in range(3)]
    pool = [LineModel(13, Language.KOREAN, Line(0, 0), Line(0, 10), 10)]
    svg = render_svg(blobs, pool, {0: 13, 1: 13, 2: None})
    assert svg.count("<line ") == 3
    assert svg.count('stroke="#3cb44b"') == 3  # id 13 -> palette slot 1
