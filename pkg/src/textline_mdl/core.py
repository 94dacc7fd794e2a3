"""Shared domain types for text-line fitting.

Image coordinates are used throughout: x grows to the right, y grows downward,
so a base line sits numerically *below* (larger y than) its mean line.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields, replace
from enum import IntEnum
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np


class Language(IntEnum):
    ENGLISH = 0
    KOREAN = 1
    CHINESE = 2
    DIGIT = 3

    @property
    def label(self) -> str:
        return CATEGORY_NAMES[int(self)]

    @classmethod
    def parse(cls, name) -> "Language":
        if isinstance(name, Language):
            return name
        if isinstance(name, (int, np.integer)):
            return cls(int(name))
        key = str(name).strip().lower()
        for lang in cls:
            if CATEGORY_NAMES[int(lang)].lower() == key or lang.name.lower() == key:
                return lang
        raise ValueError(f"unknown language {name!r}")


# classifier category order; the four languages followed by non-text
CATEGORY_NAMES = ("English", "Korean", "Chinese", "Digit", "NonText")
NONTEXT = 4
N_CATEGORIES = 5

# the distinguished "no text line" label
OUTLIER = None

Labeling = Dict[int, Optional[int]]


def category_index(name) -> int:
    if isinstance(name, (int, np.integer)):
        idx = int(name)
        if not 0 <= idx < N_CATEGORIES:
            raise ValueError(f"category index out of range: {idx}")
        return idx
    key = str(name).strip().lower().replace("-", "").replace("_", "")
    for i, cname in enumerate(CATEGORY_NAMES):
        if cname.lower() == key:
            return i
    raise ValueError(f"unknown category {name!r}")


def normalize_likelihoods(raw, eps: float = 1e-6) -> Tuple[float, ...]:
    """Clamp every entry to at least ``eps`` and renormalize to sum one.

    Entries that fall under the floor are pinned to exactly ``eps``; the
    remaining mass ``1 - k*eps`` is shared among the others in proportion to
    their raw values. This is the fixed point of clamp-and-renormalize, so the
    floor still holds after the division and the map is idempotent.
    """
    v = np.asarray(raw, dtype=float)
    if v.shape != (N_CATEGORIES,):
        raise ValueError(f"expected {N_CATEGORIES} likelihoods, got shape {v.shape}")
    if not np.all(np.isfinite(v)) or np.any(v < 0):
        raise ValueError("likelihoods must be finite and non-negative")
    if not np.any(v > 0):
        raise ValueError("degenerate likelihood")
    if not 0 < eps <= 1.0 / N_CATEGORIES:
        raise ValueError("likelihood floor must lie in (0, 1/5]")
    pinned = np.zeros(N_CATEGORIES, dtype=bool)
    while True:
        free_mass = 1.0 - eps * pinned.sum()
        total = v[~pinned].sum()
        p = np.where(pinned, eps, v * free_mass / total if total > 0 else 0.0)
        low = (~pinned) & (p < eps)
        if not low.any():
            break
        pinned |= low
        if pinned.all():
            p = np.full(N_CATEGORIES, 1.0 / N_CATEGORIES)
            break
    return tuple(float(a) for a in p)


@dataclass(frozen=True)
class Point2D:
    x: float
    y: float


@dataclass(frozen=True)
class TextCandidate:
    """A detected blob: axis-aligned box plus per-category likelihoods."""

    id: int
    box: Tuple[float, float, float, float]  # left, top, right, bottom
    likelihoods: Tuple[float, ...] = (0.2, 0.2, 0.2, 0.2, 0.2)

    def __post_init__(self):
        l, t, r, b = self.box
        if not (r > l and b > t):
            raise ValueError(f"blob {self.id}: degenerate box {self.box}")
        if len(self.likelihoods) != N_CATEGORIES:
            raise ValueError(f"blob {self.id}: expected {N_CATEGORIES} likelihoods")

    @property
    def left(self) -> float:
        return self.box[0]

    @property
    def top(self) -> float:
        return self.box[1]

    @property
    def right(self) -> float:
        return self.box[2]

    @property
    def bottom(self) -> float:
        return self.box[3]

    @property
    def width(self) -> float:
        return self.box[2] - self.box[0]

    @property
    def height(self) -> float:
        return self.box[3] - self.box[1]

    @property
    def center(self) -> Point2D:
        return Point2D((self.box[0] + self.box[2]) / 2, (self.box[1] + self.box[3]) / 2)

    # corners: a top-left, b top-right, c bottom-left, d bottom-right
    @property
    def a(self) -> Point2D:
        return Point2D(self.box[0], self.box[1])

    @property
    def b(self) -> Point2D:
        return Point2D(self.box[2], self.box[1])

    @property
    def c(self) -> Point2D:
        return Point2D(self.box[0], self.box[3])

    @property
    def d(self) -> Point2D:
        return Point2D(self.box[2], self.box[3])

    def corners(self) -> Tuple[Point2D, Point2D, Point2D, Point2D]:
        return self.a, self.b, self.c, self.d


@dataclass(frozen=True)
class Line:
    """y(x) = slope * x + intercept."""

    slope: float
    intercept: float

    def __call__(self, x):
        return self.slope * x + self.intercept

    @classmethod
    def through(cls, p: Point2D, q: Point2D) -> "Line":
        if p.x == q.x:
            raise ValueError("vertical line")
        slope = (q.y - p.y) / (q.x - p.x)
        return cls(slope, p.y - slope * p.x)


@dataclass(frozen=True)
class LineModel:
    """One text-line hypothesis.

    ``x_ref`` is the abscissa at which the line height is measured; it is the
    midpoint of the horizontal span the model was created or last refit on.
    """

    id: int
    language: Language
    mean_line: Line
    base_line: Line
    x_ref: float = 0.0

    def height(self) -> float:
        return self.base_line(self.x_ref) - self.mean_line(self.x_ref)

    def is_valid(self, slope_max: float) -> bool:
        vals = (self.mean_line.slope, self.mean_line.intercept,
                self.base_line.slope, self.base_line.intercept, self.x_ref)
        if not all(math.isfinite(v) for v in vals):
            return False
        if abs(self.mean_line.slope) > slope_max or abs(self.base_line.slope) > slope_max:
            return False
        return self.height() > 0


def default_scales() -> Dict[Language, float]:
    return {Language.ENGLISH: 0.5, Language.KOREAN: 1.0, Language.CHINESE: 1.0, Language.DIGIT: 0.7}


@dataclass(frozen=True)
class EnergyParams:
    line_cost: float = 20.0
    language_cost: float = 10.0
    outlier_cost: float = 8.0
    K: Mapping[Language, float] = field(default_factory=default_scales)
    likelihood_floor: float = 1e-6
    geometric_mode: str = "squared"
    slope_max: float = 2.0
    z_min: float = 2.0
    rng_seed: int = 0
    max_iterations: int = 5
    convergence_tol: float = 1e-6
    extra_random: int = 0

    def __post_init__(self):
        K = {Language.parse(k): float(v) for k, v in dict(self.K).items()}
        for lang in Language:
            K.setdefault(lang, default_scales()[lang])
        object.__setattr__(self, "K", K)
        for name in ("line_cost", "language_cost", "outlier_cost"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be a finite non-negative number")
        if not 0 < self.likelihood_floor <= 0.1:
            raise ValueError("likelihood_floor must lie in (0, 0.1]")
        if any(not (v > 0 and math.isfinite(v)) for v in K.values()):
            raise ValueError("language scales K must be positive")
        if self.geometric_mode not in ("squared", "absolute"):
            raise ValueError("geometric_mode must be 'squared' or 'absolute'")
        if not self.slope_max > 0:
            raise ValueError("slope_max must be positive")
        if not self.z_min > 0:
            raise ValueError("z_min must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.convergence_tol < 0 or self.extra_random < 0:
            raise ValueError("convergence_tol and extra_random must be non-negative")

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "K":
                v = {lang.label: v[lang] for lang in Language}
            out[f.name] = v
        return out

    @classmethod
    def from_dict(cls, d: Mapping) -> "EnergyParams":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown energy parameter(s): {sorted(unknown)}")
        return cls(**dict(d))

    def with_(self, **kw) -> "EnergyParams":
        return replace(self, **kw)


# --------------------------------------------------------------------------
# JSON (de)serialization


def blob_to_json(b: TextCandidate) -> dict:
    return {"id": b.id, "box": list(b.box), "likelihoods": list(b.likelihoods)}


def blob_from_json(d: Mapping, eps: Optional[float] = None) -> TextCandidate:
    for key in ("id", "box", "likelihoods"):
        if key not in d:
            raise ValueError(f"blob is missing field '{key}'")
    if not isinstance(d["id"], int) or isinstance(d["id"], bool):
        raise ValueError("field 'id' must be an integer")
    box = d["box"]
    if not isinstance(box, (list, tuple)) or len(box) != 4:
        raise ValueError(f"blob {d['id']}: field 'box' must have 4 numbers")
    box = tuple(float(v) for v in box)
    if not all(math.isfinite(v) for v in box):
        raise ValueError(f"blob {d['id']}: field 'box' must be finite")
    lik = d["likelihoods"]
    if not isinstance(lik, (list, tuple)) or len(lik) != N_CATEGORIES:
        raise ValueError(f"blob {d['id']}: field 'likelihoods' must have {N_CATEGORIES} numbers")
    lik = tuple(float(v) for v in lik)
    if eps is not None:
        lik = normalize_likelihoods(lik, eps)
    try:
        return TextCandidate(d["id"], box, lik)
    except ValueError as exc:
        raise ValueError(f"field 'box': {exc}") from None


def blobs_from_json(data, eps: Optional[float] = None) -> List[TextCandidate]:
    if not isinstance(data, list):
        raise ValueError("blob file must hold a JSON array")
    blobs = [blob_from_json(d, eps) for d in data]
    ids = [b.id for b in blobs]
    if len(set(ids)) != len(ids):
        raise ValueError("field 'id': duplicate blob ids")
    return blobs


def model_to_json(m: LineModel) -> dict:
    return {
        "id": m.id,
        "language": m.language.label,
        "mean": [m.mean_line.slope, m.mean_line.intercept],
        "base": [m.base_line.slope, m.base_line.intercept],
        "x_ref": m.x_ref,
    }


def model_from_json(d: Mapping) -> LineModel:
    return LineModel(
        id=int(d["id"]),
        language=Language.parse(d["language"]),
        mean_line=Line(float(d["mean"][0]), float(d["mean"][1])),
        base_line=Line(float(d["base"][0]), float(d["base"][1])),
        x_ref=float(d.get("x_ref", 0.0)),
    )


def models_from_json(data) -> List[LineModel]:
    if not isinstance(data, list):
        raise ValueError("model file must hold a JSON array")
    models = [model_from_json(d) for d in data]
    if len({m.id for m in models}) != len(models):
        raise ValueError("duplicate model ids")
    return models


def labeling_to_json(lab: Mapping[int, Optional[int]]) -> dict:
    return {str(k): v for k, v in lab.items()}


def labeling_from_json(d: Mapping) -> Labeling:
    out: Labeling = {}
    for k, v in d.items():
        out[int(k)] = None if v is None else int(v)
    return out


def dumps(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


def all_outliers(blobs: Iterable[TextCandidate]) -> Labeling:
    return {b.id: OUTLIER for b in blobs}


def check_labeling(labeling: Mapping[int, Optional[int]], blobs: Sequence[TextCandidate],
                   pool: Sequence[LineModel]) -> None:
    ids = {b.id for b in blobs}
    if set(labeling) != ids:
        raise ValueError("labeling must be total over the blob set")
    model_ids = {m.id for m in pool}
    for k, v in labeling.items():
        if v is not None and v not in model_ids:
            raise ValueError(f"blob {k} assigned to unknown model {v}")
