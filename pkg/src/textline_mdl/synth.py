"""Synthetic multilingual scenes with ground-truth lines.

Each text line is a row of character boxes whose top and bottom edges sit on
a mean/base line pair. Language profiles encode the typography differences
that make grouping hard: wide inter-character gaps and vertically stacked
sub-blobs for Korean, near-square characters for Chinese, ascenders and
descenders for English. Box coordinates are integers, as a detector would
report them.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .classify import oracle_likelihoods
from .core import (CATEGORY_NAMES, NONTEXT, Labeling, Language, Line, LineModel, TextCandidate,
                   blob_to_json, blobs_from_json, category_index, labeling_from_json,
                   labeling_to_json, model_to_json, models_from_json)

PLACEMENT_ATTEMPTS = 1000
MIN_GAP_PX = 3  # keeps rendered edge rings of neighbouring blobs apart


class PlacementError(RuntimeError):
    pass


@dataclass(frozen=True)
class TypographyProfile:
    language: Language
    width_frac: Tuple[float, float]  # char width as a fraction of line height
    gap_frac: Tuple[float, float]  # inter-char gap as a fraction of line height
    ascender_prob: float = 0.0
    descender_prob: float = 0.0
    extender_frac: float = 0.35
    stack_split: float = 0.0


PROFILES = {
    Language.ENGLISH: TypographyProfile(Language.ENGLISH, (0.45, 0.8), (0.12, 0.18),
                                        ascender_prob=0.3, descender_prob=0.2),
    Language.KOREAN: TypographyProfile(Language.KOREAN, (0.85, 1.0), (0.7, 0.9), stack_split=0.5),
    Language.CHINESE: TypographyProfile(Language.CHINESE, (0.9, 1.1), (0.25, 0.35)),
    Language.DIGIT: TypographyProfile(Language.DIGIT, (0.5, 0.65), (0.08, 0.14)),
}


@dataclass
class SceneSpec:
    n_lines: int = 4
    languages: Sequence[str] = ("English", "Korean", "Chinese", "Digit")
    jitter_sigma: float = 0.05
    outlier_frac: float = 0.15
    oracle_accuracy: float = 0.9
    image_size: Tuple[int, int] = (640, 480)
    kappa: float = 100.0
    stack_split: Optional[float] = None  # overrides the Korean profile value
    chars_per_line: Tuple[int, int] = (5, 8)
    line_height: Tuple[int, int] = (22, 38)
    max_slope: float = 0.0
    likelihood_floor: float = 1e-6

    def __post_init__(self):
        if self.n_lines < 1:
            raise ValueError("n_lines must be at least 1")
        if not self.languages:
            raise ValueError("languages must not be empty")
        self.languages = tuple(Language.parse(v).label for v in self.languages)
        for name in ("jitter_sigma", "outlier_frac"):
            if not 0 <= getattr(self, name) < 1:
                raise ValueError(f"{name} must lie in [0, 1)")
        if not 0.2 < self.oracle_accuracy <= 1:
            raise ValueError("oracle_accuracy must lie in (0.2, 1]")
        if self.stack_split is not None and not 0 <= self.stack_split <= 1:
            raise ValueError("stack_split must lie in [0, 1]")
        self.image_size = (int(self.image_size[0]), int(self.image_size[1]))
        self.chars_per_line = (int(self.chars_per_line[0]), int(self.chars_per_line[1]))
        self.line_height = (int(self.line_height[0]), int(self.line_height[1]))
        if self.chars_per_line[0] < 2 or self.chars_per_line[1] < self.chars_per_line[0]:
            raise ValueError("chars_per_line must be a range with minimum >= 2")
        if self.line_height[0] < 8 or self.line_height[1] < self.line_height[0]:
            raise ValueError("line_height must be a range with minimum >= 8")

    @classmethod
    def from_dict(cls, d: Mapping) -> "SceneSpec":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown scene spec field(s): {sorted(unknown)}")
        return cls(**dict(d))

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out


@dataclass
class SyntheticScene:
    blobs: List[TextCandidate]
    gt_lines: List[LineModel]
    gt_labeling: Labeling
    categories: Dict[int, int]  # true category index per blob
    image_size: Tuple[int, int]
    merged: List[int] = field(default_factory=list)  # ids of boxes that are unions of sub-blobs

    def to_json(self) -> dict:
        return {
            "image_size": list(self.image_size),
            "blobs": [blob_to_json(b) for b in self.blobs],
            "categories": {str(k): CATEGORY_NAMES[v] for k, v in self.categories.items()},
            "merged": list(self.merged),
            "gt_lines": [model_to_json(m) for m in self.gt_lines],
            "gt_labeling": labeling_to_json(self.gt_labeling),
        }

    @classmethod
    def from_json(cls, d: Mapping) -> "SyntheticScene":
        return cls(
            blobs=blobs_from_json(d["blobs"]),
            gt_lines=models_from_json(d["gt_lines"]),
            gt_labeling=labeling_from_json(d["gt_labeling"]),
            categories={int(k): category_index(v) for k, v in d.get("categories", {}).items()},
            image_size=tuple(d.get("image_size", (0, 0))),
            merged=list(d.get("merged", [])),
        )

    def primitive_blobs(self) -> List[TextCandidate]:
        """Blobs that are drawn when rendering (everything but merged boxes)."""
        merged = set(self.merged)
        return [b for b in self.blobs if b.id not in merged]


def _sample_line(rng, spec: SceneSpec, language: Language, profile: TypographyProfile):
    h = int(rng.integers(spec.line_height[0], spec.line_height[1] + 1))
    n_chars = int(rng.integers(spec.chars_per_line[0], spec.chars_per_line[1] + 1))
    widths = [max(3, int(round(h * rng.uniform(*profile.width_frac)))) for _ in range(n_chars)]
    gaps = [max(MIN_GAP_PX, int(round(h * rng.uniform(*profile.gap_frac)))) for _ in range(n_chars - 1)]
    slope = float(rng.uniform(-spec.max_slope, spec.max_slope)) if spec.max_slope > 0 else 0.0
    return h, widths, gaps, slope


def generate_scene(spec, rng: np.random.Generator) -> SyntheticScene:
    if not isinstance(spec, SceneSpec):
        spec = SceneSpec.from_dict(spec)
    width, height = spec.image_size
    languages = [Language.parse(spec.languages[i % len(spec.languages)]) for i in range(spec.n_lines)]

    # line layout: vertical bands that do not overlap, with a margin
    layouts = []
    bands: List[Tuple[float, float]] = []
    for lang in languages:
        profile = PROFILES[lang]
        for _ in range(PLACEMENT_ATTEMPTS):
            h, widths, gaps, slope = _sample_line(rng, spec, lang, profile)
            span = sum(widths) + sum(gaps)
            ext = int(math.ceil(profile.extender_frac * h)) if lang == Language.ENGLISH else 0
            rise = abs(slope) * span + 4 * spec.jitter_sigma * h
            if span + 8 > width:
                continue
            x0 = int(rng.integers(4, width - span - 4 + 1))
            lo_y, hi_y = 4 + ext + rise, height - 4 - h - ext - rise
            if hi_y < lo_y:
                continue
            y0 = int(rng.integers(int(math.ceil(lo_y)), int(hi_y) + 1))
            band = (y0 - ext - rise - 0.3 * h, y0 + h + ext + rise + 0.3 * h)
            if any(band[0] < b[1] and b[0] < band[1] for b in bands):
                continue
            bands.append(band)
            layouts.append((lang, h, widths, gaps, slope, x0, y0))
            break
        else:
            raise PlacementError("could not place all lines on the canvas")

    boxes: List[Tuple[int, int, int, int]] = []
    cats: List[int] = []
    gt: List[Optional[int]] = []
    merged_idx: List[int] = []
    gt_lines: List[LineModel] = []
    stack_split = spec.stack_split

    for line_id, (lang, h, widths, gaps, slope, x0, y0) in enumerate(layouts):
        profile = PROFILES[lang]
        x_mid = x0 + (sum(widths) + sum(gaps)) / 2
        mean = Line(slope, y0 - slope * x_mid)
        base = Line(slope, y0 + h - slope * x_mid)
        gt_lines.append(LineModel(line_id, lang, mean, base, x_mid))
        x = x0
        split_p = profile.stack_split if stack_split is None or lang != Language.KOREAN else stack_split
        for k, w in enumerate(widths):
            cx = x + w / 2
            top = mean(cx) + rng.normal(0, spec.jitter_sigma * h) if spec.jitter_sigma > 0 else mean(cx)
            bottom = base(cx) + rng.normal(0, spec.jitter_sigma * h) if spec.jitter_sigma > 0 else base(cx)
            if lang == Language.ENGLISH:
                if rng.random() < profile.ascender_prob:
                    top -= profile.extender_frac * h
                elif rng.random() < profile.descender_prob:
                    bottom += profile.extender_frac * h
            t, b = int(round(top)), int(round(bottom))
            if b - t < 4:
                b = t + 4
            box = (x, t, x + w, b)
            if lang == Language.KOREAN and split_p > 0 and b - t >= 11 and rng.random() < split_p:
                pieces = 3 if (b - t) >= 30 and rng.random() < 0.5 else 2
                gap = MIN_GAP_PX
                piece_h = (b - t - gap * (pieces - 1)) // pieces
                for q in range(pieces):
                    y_top = t + q * (piece_h + gap)
                    y_bot = b if q == pieces - 1 else y_top + piece_h
                    boxes.append((x, y_top, x + w, y_bot))
                    cats.append(NONTEXT)
                    gt.append(line_id)
                merged_idx.append(len(boxes))
            boxes.append(box)
            cats.append(int(lang))
            gt.append(line_id)
            x += w + (gaps[k] if k < len(gaps) else 0)

    n_text = len(boxes)
    n_out = int(round(spec.outlier_frac * n_text / (1 - spec.outlier_frac)))
    placed = 0
    attempts = 0
    while placed < n_out and attempts < PLACEMENT_ATTEMPTS * max(1, n_out):
        attempts += 1
        w = int(rng.integers(6, 31))
        hh = int(rng.integers(6, 31))
        l = int(rng.integers(3, width - w - 3))
        t = int(rng.integers(3, height - hh - 3))
        cand = (l, t, l + w, t + hh)
        m = MIN_GAP_PX
        if any(cand[0] < o[2] + m and o[0] < cand[2] + m and cand[1] < o[3] + m and o[1] < cand[3] + m
               for o in boxes):
            continue
        boxes.append(cand)
        cats.append(NONTEXT)
        gt.append(None)
        placed += 1
    if placed < n_out:
        raise PlacementError("could not place outlier blobs")

    blobs = []
    for i, (box, cat) in enumerate(zip(boxes, cats)):
        lik = oracle_likelihoods(cat, spec.oracle_accuracy, rng, spec.kappa, spec.likelihood_floor)
        blobs.append(TextCandidate(i, tuple(float(v) for v in box), lik))
    return SyntheticScene(
        blobs=blobs,
        gt_lines=gt_lines,
        gt_labeling={i: g for i, g in enumerate(gt)},
        categories={i: c for i, c in enumerate(cats)},
        image_size=(width, height),
        merged=merged_idx,
    )


def render_scene(scene: SyntheticScene, background: int = 200, ink: int = 40) -> np.ndarray:
    """Draw the primitive blobs as filled rectangles into a uint8 image."""
    width, height = scene.image_size
    img = np.full((height, width), background, dtype=np.uint8)
    for b in scene.primitive_blobs():
        l, t, r, bt = (int(round(v)) for v in b.box)
        img[max(t, 0):max(bt, 0), max(l, 0):max(r, 0)] = ink
    return img
