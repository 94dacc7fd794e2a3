"""Re-estimation of line parameters and language for a fixed labeling."""
from __future__ import annotations

from dataclasses import replace
from typing import List, Mapping, Optional, Sequence

import numpy as np

from .core import EnergyParams, Language, Line, LineModel, Point2D, TextCandidate
from .energy import data_term, inlier_sets

MAX_SWEEPS = 50


def fit_line_ls(points: Sequence[Point2D], slope_max: Optional[float] = None) -> Line:
    """Least-squares y = slope*x + intercept; the slope is clamped to
    +-slope_max and the intercept refit under the clamp."""
    xs = np.array([p.x for p in points], dtype=float)
    ys = np.array([p.y for p in points], dtype=float)
    if len(xs) < 2 or np.ptp(xs) == 0:
        raise ValueError("degenerate abscissae")
    xm, ym = xs.mean(), ys.mean()
    dx = xs - xm
    slope = float(np.dot(dx, ys - ym) / np.dot(dx, dx))
    if slope_max is not None and abs(slope) > slope_max:
        slope = float(np.clip(slope, -slope_max, slope_max))
    return Line(slope, float(ym - slope * xm))


def _inlier_cost(inliers, model, params):
    return sum(data_term(b, model.id, {model.id: model}, params) for b in inliers)


def refit_models(pool: Sequence[LineModel], blobs: Sequence[TextCandidate],
                 labeling: Mapping[int, Optional[int]], params: EnergyParams) -> List[LineModel]:
    """Refit each used model to its inliers.

    For every model with at least two inliers the candidates are the current
    geometry and the least-squares geometry, each paired with each of the four
    languages. The candidate minimizing the inliers' data terms plus the
    language cost it implies is kept; the current model wins ties. Models are
    visited in pool order, each seeing the languages already chosen for the
    others, so the total energy can never increase. Sweeps repeat until no
    model changes, which makes the result a fixed point.
    """
    by_id = {b.id: b for b in blobs}
    support = inlier_sets(labeling)
    models = {m.id: m for m in pool}
    order = [m.id for m in pool]
    # a language switch in one model can make another model's switch pay off,
    # so sweep until nothing changes; every change strictly lowers the energy
    for _ in range(MAX_SWEEPS):
        changed = False
        for j in order:
            ids = support.get(j, [])
            if len(ids) < 2:
                continue
            best = _refit_one(models, j, [by_id[i] for i in ids], support, params)
            if best is not models[j]:
                models[j] = best
                changed = True
        if not changed:
            break
    return [models[j] for j in order]


def _refit_one(models, j, inliers, support, params) -> LineModel:
    current = models[j]
    geometries = [current]
    tops = [p for b in inliers for p in (b.a, b.b)]
    bottoms = [p for b in inliers for p in (b.c, b.d)]
    try:
        mean = fit_line_ls(tops, params.slope_max)
        base = fit_line_ls(bottoms, params.slope_max)
    except ValueError:
        pass
    else:
        x_ref = (min(b.left for b in inliers) + max(b.right for b in inliers)) / 2
        cand = replace(current, mean_line=mean, base_line=base, x_ref=x_ref)
        if cand.is_valid(params.slope_max):
            geometries.append(cand)

    other_langs = {models[k].language for k in support if k != j and k in models}

    def score(m):
        langs = other_langs | {m.language}
        return _inlier_cost(inliers, m, params) + params.language_cost * len(langs)

    best, best_score = current, score(current)
    for geom in geometries:
        for lang in Language:
            cand = replace(geom, language=lang)
            s = score(cand)
            if s < best_score - 1e-12 * max(1.0, abs(best_score)):
                best, best_score = cand, s
    return best
