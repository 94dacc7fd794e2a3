"""Data term, geometric error and the full hierarchical MDL energy."""
from __future__ import annotations

import math
from typing import Dict, Mapping, Optional, Sequence

import numpy as np

from .core import EnergyParams, Labeling, LineModel, TextCandidate

ModelPool = Sequence[LineModel]


def line_height_normalizer(model: LineModel, params: EnergyParams) -> float:
    return max(params.z_min, model.height())


def geometric_distance(blob: TextCandidate, model: LineModel, params: EnergyParams) -> float:
    """Language-scaled vertical distance of the blob corners to the model lines.

    Top corners are measured against the mean line, bottom corners against
    the base line. The sum is divided by the line height (squared in
    ``squared`` mode) so the value is dimensionless.
    """
    mean, base = model.mean_line, model.base_line
    dys = (
        blob.top - mean(blob.left),
        blob.top - mean(blob.right),
        blob.bottom - base(blob.left),
        blob.bottom - base(blob.right),
    )
    z = line_height_normalizer(model, params)
    scale = params.K[model.language]
    if params.geometric_mode == "squared":
        return scale * sum(dy * dy for dy in dys) / (z * z)
    return scale * sum(abs(dy) for dy in dys) / z


def classification_cost(blob: TextCandidate, model: LineModel) -> float:
    return -math.log(blob.likelihoods[int(model.language)])


def data_term(blob: TextCandidate, label: Optional[int], pool, params: EnergyParams) -> float:
    if label is None:
        return params.outlier_cost
    models = _lookup(pool)
    if label not in models:
        raise KeyError(f"unknown model id {label}")
    model = models[label]
    return classification_cost(blob, model) + geometric_distance(blob, model, params)


def _lookup(pool) -> Mapping[int, LineModel]:
    if isinstance(pool, Mapping):
        return pool
    return {m.id: m for m in pool}


def total_energy(blobs: Sequence[TextCandidate], labeling: Mapping[int, Optional[int]],
                 pool, params: EnergyParams) -> float:
    """Data terms plus one line cost per used model and one language cost per
    language with at least one used model."""
    models = _lookup(pool)
    energy = 0.0
    used = set()
    for blob in blobs:
        label = labeling[blob.id]
        if label is not None and label not in models:
            raise KeyError(f"unknown model id {label}")
        energy += data_term(blob, label, models, params)
        if label is not None:
            used.add(label)
    languages = {models[j].language for j in used}
    return energy + params.line_cost * len(used) + params.language_cost * len(languages)


def data_matrix(blobs: Sequence[TextCandidate], pool: ModelPool, params: EnergyParams) -> np.ndarray:
    """Vectorized data terms, shape (n_blobs, n_models); column order = pool order."""
    n, m = len(blobs), len(pool)
    if n == 0 or m == 0:
        return np.zeros((n, m))
    boxes = np.array([b.box for b in blobs], dtype=float)
    lik = np.array([b.likelihoods for b in blobs], dtype=float)
    L, T, R, B = (boxes[:, k:k + 1] for k in range(4))
    ms = np.array([p.mean_line.slope for p in pool])[None, :]
    mi = np.array([p.mean_line.intercept for p in pool])[None, :]
    bs = np.array([p.base_line.slope for p in pool])[None, :]
    bi = np.array([p.base_line.intercept for p in pool])[None, :]
    z = np.array([line_height_normalizer(p, params) for p in pool])[None, :]
    k = np.array([params.K[p.language] for p in pool])[None, :]
    lang = np.array([int(p.language) for p in pool])
    dys = (T - (ms * L + mi), T - (ms * R + mi), B - (bs * L + bi), B - (bs * R + bi))
    if params.geometric_mode == "squared":
        geo = k * sum(d * d for d in dys) / (z * z)
    else:
        geo = k * sum(np.abs(d) for d in dys) / z
    return -np.log(lik[:, lang]) + geo


def inlier_sets(labeling: Mapping[int, Optional[int]]) -> Dict[int, list]:
    out: Dict[int, list] = {}
    for blob_id, label in labeling.items():
        if label is not None:
            out.setdefault(label, []).append(blob_id)
    return out
