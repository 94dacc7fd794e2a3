"""Command-line interface.

    textline-mdl detect IMAGE.pgm --out DIR [--model clf.json] [--svg]
    textline-mdl fit BLOBS.json --out DIR [--svg]
    textline-mdl synth [SPEC.json] --seed N --out DIR [--render]
    textline-mdl eval DETECTED_DIR GT_DIR --out DIR [--overlap-min X]
    textline-mdl train MANIFEST.csv --out clf.json [--rounds N --depth N]
    textline-mdl render RESULT_DIR --out FILE.svg

Exit codes: 0 ok, 2 input or configuration error, 3 runtime failure. All
inputs are parsed and all results computed before the first file is written.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import time
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import __version__
from .classify import (BoostModel, class_scores, extract_features, likelihoods_from_scores,
                       train_adaboost)
from .core import (CATEGORY_NAMES, EnergyParams, Line, LineModel, TextCandidate, blob_to_json,
                   blobs_from_json, category_index, dumps, labeling_from_json, labeling_to_json,
                   model_to_json, models_from_json)
from .energy import inlier_sets, total_energy
from .evalm import evaluate
from .imaging import DetectorParams, PGMError, detect_blobs, downscale, load_pgm, save_pgm
from .pearl import pearl
from .synth import PlacementError, SceneSpec, SyntheticScene, generate_scene, render_scene

CONFIG_ENV = "TEXTLINE_MDL_CONFIG"
PALETTE = ("#e6194b", "#3cb44b", "#4363d8", "#f58231", "#911eb4", "#42d4f4",
           "#f032e6", "#9a6324", "#800000", "#469990", "#000075", "#808000")


class InputError(Exception):
    """Bad input or configuration (exit 2)."""


# --------------------------------------------------------------------------
# configuration


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def load_config(args) -> Dict:
    """Built-in defaults < config file (--config or env) < --set < flags."""
    path = args.config or os.environ.get(CONFIG_ENV)
    cfg: Dict = {}
    if path:
        try:
            cfg = json.loads(Path(path).read_text())
        except OSError as exc:
            raise InputError(f"cannot read config {path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise InputError(f"config {path} is not valid JSON: {exc}") from None
        if not isinstance(cfg, dict):
            raise InputError("config must be a JSON object")
    for item in args.set or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise InputError(f"--set expects KEY=VALUE, got {item!r}")
        node = cfg
        *parents, leaf = key.split(".")
        for p in parents:
            node = node.setdefault(p, {})
        node[leaf] = _parse_value(value)
    if getattr(args, "seed", None) is not None:
        cfg["rng_seed"] = args.seed
    if getattr(args, "max_iters", None) is not None:
        cfg["max_iterations"] = args.max_iters
    return cfg


def energy_params(cfg: Dict) -> EnergyParams:
    keys = {k: v for k, v in cfg.items() if k not in ("detector", "scene")}
    try:
        return EnergyParams.from_dict(keys)
    except (TypeError, ValueError) as exc:
        raise InputError(f"invalid config: {exc}") from None


def detector_params(cfg: Dict) -> DetectorParams:
    try:
        return DetectorParams.from_dict(cfg.get("detector", {}))
    except (TypeError, ValueError) as exc:
        raise InputError(f"invalid detector config: {exc}") from None


# --------------------------------------------------------------------------
# helpers


def _read_json(path: str, what: str):
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise InputError(f"cannot read {what} {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{what} {path} is not valid JSON: {exc}") from None


def _read_pgm(path: str) -> np.ndarray:
    try:
        return load_pgm(Path(path).read_bytes())
    except OSError as exc:
        raise InputError(f"cannot read image {path}: {exc.strerror}") from None
    except PGMError as exc:
        raise InputError(f"{path}: {exc}") from None


def _write_all(out_dir: Path, files: Dict[str, object]) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, content in files.items():
        target = out_dir / name
        if isinstance(content, bytes):
            target.write_bytes(content)
        else:
            target.write_text(content)


def _fit(blobs: Sequence[TextCandidate], params: EnergyParams):
    t0 = time.perf_counter()
    pool, labeling, trace = pearl(blobs, params)
    wall = time.perf_counter() - t0
    energy = total_energy(blobs, labeling, pool, params)
    return pool, labeling, trace, energy, wall


def _report(command: str, cfg: Dict, blobs, pool, trace, energy, wall, timing: bool, **extra) -> str:
    labeling = extra.pop("labeling")
    support = inlier_sets(labeling)
    rep = {
        "command": command,
        "version": __version__,
        "config": cfg,
        "n_blobs": len(blobs),
        "n_lines": len(pool),
        "n_outliers": sum(1 for v in labeling.values() if v is None),
        "energy": energy,
        "trace": trace,
        "iterations": len(trace) // 2,
        "inliers": {str(m.id): sorted(support.get(m.id, [])) for m in pool},
    }
    rep.update(extra)
    if timing:
        rep["wall_time_s"] = wall
    return dumps(rep)


def render_svg(blobs: Sequence[TextCandidate], pool: Sequence[LineModel], labeling,
               size: Optional[Sequence[int]] = None) -> str:
    """Blob boxes plus one colored mean/base/center triplet per line, drawn
    over the horizontal extent of the line's inliers."""
    if size is None:
        right = max((b.right for b in blobs), default=0)
        bottom = max((b.bottom for b in blobs), default=0)
        size = (int(right) + 10, int(bottom) + 10)
    w, h = int(size[0]), int(size[1])
    color = {m.id: PALETTE[m.id % len(PALETTE)] for m in pool}
    out = io.StringIO()
    out.write(f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">\n')
    out.write(f'<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>\n')
    for b in blobs:
        stroke = color.get(labeling.get(b.id), "#999999")
        out.write(f'<rect x="{b.left:g}" y="{b.top:g}" width="{b.width:g}" height="{b.height:g}" '
                  f'fill="none" stroke="{stroke}" stroke-width="1"/>\n')
    support = inlier_sets(labeling)
    by_id = {b.id: b for b in blobs}
    for m in pool:
        members = [by_id[i] for i in support.get(m.id, []) if i in by_id]
        if not members:
            continue
        x0 = min(b.left for b in members)
        x1 = max(b.right for b in members)
        center = Line((m.mean_line.slope + m.base_line.slope) / 2,
                      (m.mean_line.intercept + m.base_line.intercept) / 2)
        out.write(f'<g stroke="{color[m.id]}" stroke-width="1.5"><title>line {m.id} {m.language.label}</title>\n')
        for line, dash in ((m.mean_line, ""), (m.base_line, ""), (center, ' stroke-dasharray="4 3"')):
            out.write(f'<line x1="{x0:g}" y1="{line(x0):.3f}" x2="{x1:g}" y2="{line(x1):.3f}"{dash}/>\n')
        out.write("</g>\n")
    out.write("</svg>\n")
    return out.getvalue()


# --------------------------------------------------------------------------
# commands


def cmd_fit(args) -> int:
    cfg = load_config(args)
    params = energy_params(cfg)
    try:
        blobs = blobs_from_json(_read_json(args.blobs, "blob file"), params.likelihood_floor)
    except (ValueError, KeyError, TypeError) as exc:
        raise InputError(f"{args.blobs}: {exc}") from None
    # canonical order makes the result independent of the file's blob order
    blobs.sort(key=lambda b: (b.box, b.likelihoods, b.id))
    pool, labeling, trace, energy, wall = _fit(blobs, params)
    labeling = {b: labeling[b] for b in sorted(labeling)}
    files = {
        "lines.json": dumps([model_to_json(m) for m in pool]),
        "labeling.json": dumps(labeling_to_json(labeling)),
        "report.json": _report("fit", params.to_dict(), blobs, pool, trace, energy, wall,
                               args.timing, labeling=labeling),
    }
    if args.svg:
        files["lines.svg"] = render_svg(blobs, pool, labeling)
    _write_all(Path(args.out), files)
    return 0


def _load_classifier(path: Optional[str]) -> Optional[BoostModel]:
    if not path:
        return None
    try:
        return BoostModel.from_json(_read_json(path, "classifier"))
    except (ValueError, KeyError, TypeError) as exc:
        raise InputError(f"{path}: invalid classifier: {exc}") from None


def cmd_detect(args) -> int:
    cfg = load_config(args)
    params = energy_params(cfg)
    det = detector_params(cfg)
    img = _read_pgm(args.image)
    clf = _load_classifier(args.model)
    cfg_out = {**params.to_dict(), "detector": det.to_dict()}

    boxes, merged, scale = detect_blobs(img, det)
    small = downscale(img, det.max_dim)
    blobs: List[TextCandidate] = []
    for i, box in enumerate(list(boxes) + list(merged)):
        if clf is not None:
            lik = likelihoods_from_scores(class_scores(clf, extract_features(small, box)), params.likelihood_floor)
        else:
            lik = (0.2,) * 5
        src = tuple(float(v) / scale for v in box)
        blobs.append(TextCandidate(i, src, lik))
    pool, labeling, trace, energy, wall = _fit(blobs, params)
    files = {
        "blobs.json": dumps([blob_to_json(b) for b in blobs]),
        "lines.json": dumps([model_to_json(m) for m in pool]),
        "labeling.json": dumps(labeling_to_json(labeling)),
        "report.json": _report("detect", cfg_out, blobs, pool, trace, energy, wall, args.timing,
                               labeling=labeling, n_components=len(boxes), n_merged=len(merged),
                               image_size=[int(img.shape[1]), int(img.shape[0])]),
    }
    if args.svg:
        files["lines.svg"] = render_svg(blobs, pool, labeling, (img.shape[1], img.shape[0]))
    _write_all(Path(args.out), files)
    return 0


def cmd_synth(args) -> int:
    raw = _read_json(args.spec, "scene spec") if args.spec else {}
    if not isinstance(raw, dict):
        raise InputError("scene spec must be a JSON object")
    try:
        spec = SceneSpec.from_dict(raw)
    except (TypeError, ValueError) as exc:
        raise InputError(f"invalid scene spec: {exc}") from None
    seed = 0 if args.seed is None else args.seed
    scene = generate_scene(spec, np.random.default_rng(seed))
    files = {
        "scene.json": dumps(scene.to_json()),
        "blobs.json": dumps([blob_to_json(b) for b in scene.blobs]),
        "report.json": dumps({"command": "synth", "version": __version__, "seed": seed,
                              "spec": spec.to_dict(), "n_blobs": len(scene.blobs),
                              "n_lines": len(scene.gt_lines)}),
    }
    if args.render:
        files["scene.pgm"] = save_pgm(render_scene(scene))
    _write_all(Path(args.out), files)
    return 0


def _load_detected(path: Path):
    try:
        models = models_from_json(_read_json(str(path / "lines.json"), "lines"))
        labeling = labeling_from_json(_read_json(str(path / "labeling.json"), "labeling"))
    except (ValueError, KeyError, TypeError) as exc:
        raise InputError(f"{path}: {exc}") from None
    return models, labeling


def cmd_eval(args) -> int:
    det_dir, gt_dir = Path(args.detected), Path(args.gt)
    if not det_dir.is_dir() or not gt_dir.is_dir():
        raise InputError("eval expects two directories")
    names = sorted(p.stem for p in gt_dir.glob("*.json"))
    detected = sorted(p.name for p in det_dir.iterdir() if p.is_dir())
    missing = sorted(set(names) ^ set(detected))
    if missing:
        raise InputError(f"unpaired scene(s): {', '.join(missing)}")
    if not names:
        raise InputError("no scenes to evaluate")
    rows = []
    totals = [0, 0, 0]
    for name in names:
        try:
            scene = SyntheticScene.from_json(_read_json(str(gt_dir / f"{name}.json"), "ground truth"))
        except (ValueError, KeyError, TypeError) as exc:
            raise InputError(f"{name}.json: {exc}") from None
        models, labeling = _load_detected(det_dir / name)
        m = evaluate((models, labeling), (scene.gt_lines, scene.gt_labeling), args.overlap_min)
        rows.append({"scene": name, **{k: v for k, v in m.to_json().items() if k != "matched"}})
        totals[0] += len(m.matched)
        totals[1] += m.n_detected
        totals[2] += m.n_gt
    k, nd, ng = totals
    p = k / nd if nd else 1.0
    r = k / ng if ng else 1.0
    agg = {"precision": p, "recall": r, "f": 2 * p * r / (p + r) if p + r else 0.0,
           "mean_f": float(np.mean([row["f"] for row in rows])), "n_scenes": len(rows),
           "matched": k, "n_detected": nd, "n_gt": ng}
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=["scene", "precision", "recall", "f", "n_detected", "n_gt"],
                            lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    _write_all(Path(args.out), {
        "metrics.json": dumps({"overlap_min": args.overlap_min, "scenes": rows, "aggregate": agg}),
        "metrics.csv": buf.getvalue(),
    })
    return 0


def read_manifest(path: str):
    """CSV rows ``pgm_path,left,top,right,bottom,category``; relative image
    paths resolve against the manifest's directory."""
    base = Path(path).parent
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read manifest {path}: {exc.strerror}") from None
    images: Dict[str, np.ndarray] = {}
    X, y = [], []
    for lineno, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not row or row[0].startswith("#"):
            continue
        if lineno == 1 and row[0].strip() == "pgm_path":
            continue
        if len(row) != 6:
            raise InputError(f"{path}:{lineno}: expected 6 fields")
        img_path = str(base / row[0].strip())
        if img_path not in images:
            images[img_path] = _read_pgm(img_path)
        try:
            box = tuple(float(v) for v in row[1:5])
            X.append(extract_features(images[img_path], box))
            y.append(category_index(row[5].strip()))
        except ValueError as exc:
            raise InputError(f"{path}:{lineno}: {exc}") from None
    if len(set(y)) < 2:
        raise InputError("training set needs at least 2 distinct categories")
    return np.array(X), np.array(y)


def cmd_train(args) -> int:
    if args.rounds < 1 or args.depth < 1:
        raise InputError("--rounds and --depth must be positive")
    X, y = read_manifest(args.manifest)
    seed = 0 if args.seed is None else args.seed
    model = train_adaboost(X, y, args.rounds, args.depth, seed)
    acc = float(np.mean(np.argmax(class_scores(model, X), axis=1) == y))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(dumps({**model.to_json(), "training": {
        "n_examples": int(len(y)), "rounds_used": len(model.rounds), "accuracy": acc,
        "categories": {CATEGORY_NAMES[c]: int(n) for c, n in zip(*np.unique(y, return_counts=True))}}}))
    return 0


def cmd_render(args) -> int:
    d = Path(args.result)
    models, labeling = _load_detected(d)
    try:
        blobs = blobs_from_json(_read_json(str(d / "blobs.json"), "blob file")) if (d / "blobs.json").exists() \
            else blobs_from_json(_read_json(args.blobs, "blob file")) if args.blobs else None
    except (ValueError, KeyError, TypeError) as exc:
        raise InputError(str(exc)) from None
    if blobs is None:
        raise InputError("no blobs.json in the result directory; pass --blobs")
    svg = render_svg(blobs, models, labeling)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(svg)
    return 0


# --------------------------------------------------------------------------


def _config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help=f"JSON config file (default: ${CONFIG_ENV})")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override one config value; dotted keys reach nested sections")
    p.add_argument("--seed", type=int)
    p.add_argument("--max-iters", type=int)
    p.add_argument("--timing", action="store_true", help="record wall time in the report")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="textline-mdl", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", help="detect and classify text lines in a P5 PGM image")
    p.add_argument("image")
    p.add_argument("--model", help="classifier JSON from 'train'; uniform likelihoods if omitted")
    p.add_argument("--out", required=True)
    p.add_argument("--svg", action="store_true")
    _config_flags(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("fit", help="fit text lines to a blob file")
    p.add_argument("blobs")
    p.add_argument("--out", required=True)
    p.add_argument("--svg", action="store_true")
    _config_flags(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("synth", help="generate a synthetic scene")
    p.add_argument("spec", nargs="?", help="scene spec JSON (defaults if omitted)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--render", action="store_true", help="also write scene.pgm")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("eval", help="score detections against ground-truth scenes")
    p.add_argument("detected", help="directory of <name>/ result directories")
    p.add_argument("gt", help="directory of <name>.json scenes")
    p.add_argument("--overlap-min", type=float, default=0.5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("train", help="train the blob classifier from a CSV manifest")
    p.add_argument("manifest")
    p.add_argument("--rounds", type=int, default=100)
    p.add_argument("--depth", type=int, default=2)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("render", help="draw a fit/detect result as SVG")
    p.add_argument("result", help="directory holding lines.json and labeling.json")
    p.add_argument("--blobs", help="blob file if the directory has none")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_render)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "overlap_min", None) is not None and not 0 < args.overlap_min <= 1:
        print("error: --overlap-min must lie in (0, 1]", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except PlacementError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # noqa: BLE001 - any other failure is a runtime error
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
