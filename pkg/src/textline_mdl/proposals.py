"""Initial model pool: line models seeded from Delaunay-neighboring blob pairs."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import Delaunay, QhullError

from .core import EnergyParams, Language, Line, LineModel, Point2D, TextCandidate


@dataclass(frozen=True)
class NeighborGraph:
    vertices: Tuple[int, ...]
    edges: Tuple[Tuple[int, int], ...]  # blob-id pairs, smaller id first


def _path_graph(ids, centers) -> List[Tuple[int, int]]:
    order = sorted(range(len(ids)), key=lambda k: (centers[k][0], centers[k][1], ids[k]))
    return [(ids[order[k]], ids[order[k + 1]]) for k in range(len(order) - 1)]


def delaunay_neighbors(blobs: Sequence[TextCandidate]) -> NeighborGraph:
    """Edges of the Delaunay triangulation of blob centers.

    Collinear centers fall back to a path in x order; blobs sharing a center
    with another blob are attached to the nearest triangulated vertex.
    """
    if len(blobs) < 2:
        raise ValueError("need at least two blobs")
    ids = [b.id for b in blobs]
    centers = np.array([[b.center.x, b.center.y] for b in blobs], dtype=float)
    edges = set()
    centered = centers - centers.mean(axis=0)
    if len(blobs) < 3 or np.linalg.matrix_rank(centered, tol=1e-9 * (1 + np.abs(centers).max())) < 2:
        pairs = _path_graph(ids, centers)
    else:
        try:
            tri = Delaunay(centers)
        except QhullError:
            pairs = _path_graph(ids, centers)
        else:
            pairs = []
            for simplex in tri.simplices:
                for u, v in ((0, 1), (1, 2), (0, 2)):
                    pairs.append((ids[simplex[u]], ids[simplex[v]]))
            used = np.unique(tri.simplices)
            for k in sorted(set(range(len(ids))) - set(used.tolist())):
                d = np.hypot(*(centers[used] - centers[k]).T)
                pairs.append((ids[k], ids[int(used[np.argmin(d)])]))
    for u, v in pairs:
        if u != v:
            edges.add((min(u, v), max(u, v)))
    return NeighborGraph(tuple(ids), tuple(sorted(edges)))


def pair_language(b1: TextCandidate, b2: TextCandidate) -> Language:
    scores = [b1.likelihoods[int(v)] * b2.likelihoods[int(v)] for v in Language]
    return Language(int(np.argmax(scores)))  # argmax keeps the first on ties


def model_from_pair(b1: TextCandidate, b2: TextCandidate, params: EnergyParams,
                    model_id: int = 0) -> Optional[LineModel]:
    """Mean line through the top-edge midpoints, base line through the
    bottom-edge midpoints. Returns None for vertical or too steep pairs."""
    if b1.id == b2.id:
        raise ValueError("pair needs two distinct blobs")
    x1, x2 = b1.center.x, b2.center.x
    if x1 == x2:
        return None
    mean = Line.through(Point2D(x1, b1.top), Point2D(x2, b2.top))
    base = Line.through(Point2D(x1, b1.bottom), Point2D(x2, b2.bottom))
    x_ref = (min(b1.left, b2.left) + max(b1.right, b2.right)) / 2
    model = LineModel(model_id, pair_language(b1, b2), mean, base, x_ref)
    if not model.is_valid(params.slope_max):
        return None
    return model


def _near_duplicate(m: LineModel, other: LineModel, tol: float = 1e-6) -> bool:
    if m.language != other.language:
        return False
    d_mean = math.hypot(m.mean_line.slope - other.mean_line.slope,
                        m.mean_line.intercept - other.mean_line.intercept)
    d_base = math.hypot(m.base_line.slope - other.base_line.slope,
                        m.base_line.intercept - other.base_line.intercept)
    return d_mean < tol and d_base < tol


def sample_initial_pool(blobs: Sequence[TextCandidate], params: EnergyParams,
                        rng: Optional[np.random.Generator] = None) -> List[LineModel]:
    """One model per Delaunay edge plus ``params.extra_random`` random pairs,
    with near-identical models removed. Ids are 0..len-1 in pool order."""
    if len(blobs) < 2:
        return []
    if rng is None:
        rng = np.random.default_rng(params.rng_seed)
    by_id = {b.id: b for b in blobs}
    pairs = list(delaunay_neighbors(blobs).edges)
    for _ in range(params.extra_random):
        i, j = rng.choice(len(blobs), size=2, replace=False)
        pairs.append((blobs[int(i)].id, blobs[int(j)].id))

    pool: List[LineModel] = []
    for u, v in pairs:
        m = model_from_pair(by_id[u], by_id[v], params, len(pool))
        if m is None or any(_near_duplicate(m, p) for p in pool):
            continue
        pool.append(m)
    return pool
