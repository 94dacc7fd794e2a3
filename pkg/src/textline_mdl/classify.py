"""Blob features and a multi-category boosted tree classifier.

Feature layout (51 values):
    [0:16]   intensity histogram, 16 equal bins over 0..255, sums to 1
    [16:48]  gradient-orientation histogram, 2x2 cells x 8 unsigned
             orientations, L1-normalized over all 32 (zero for flat patches)
    [48:51]  box width, box height, width / height

The booster is SAMME with depth-limited trees grown on weighted Gini impurity.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .core import N_CATEGORIES, NONTEXT, normalize_likelihoods

PATCH = 24
N_INTENSITY = 16
N_ORIENT = 8
N_FEATURES = N_INTENSITY + 4 * N_ORIENT + 3
ERR_FLOOR = 1e-10
SPLIT_TOL = 1e-12


def resample_nearest(patch: np.ndarray, size: int = PATCH) -> np.ndarray:
    h, w = patch.shape
    rows = np.minimum((np.arange(size) + 0.5) * h / size, h - 1).astype(int)
    cols = np.minimum((np.arange(size) + 0.5) * w / size, w - 1).astype(int)
    return patch[np.ix_(rows, cols)]


def intensity_histogram(patch: np.ndarray) -> np.ndarray:
    bins = np.clip(patch.astype(int) // (256 // N_INTENSITY), 0, N_INTENSITY - 1)
    hist = np.bincount(bins.ravel(), minlength=N_INTENSITY).astype(float)
    return hist / hist.sum()


def orientation_histogram(patch: np.ndarray) -> np.ndarray:
    """Magnitude-weighted unsigned orientation histogram on a 2x2 cell grid.

    Gradients are central differences with replicated borders; orientation
    bins are 180/8 degrees wide starting at 0 (horizontal gradient).
    """
    f = np.pad(patch.astype(float), 1, mode="edge")
    gx = (f[1:-1, 2:] - f[1:-1, :-2]) / 2
    gy = (f[2:, 1:-1] - f[:-2, 1:-1]) / 2
    mag = np.hypot(gx, gy)
    theta = np.mod(np.arctan2(gy, gx), np.pi)
    bins = np.minimum((theta / (np.pi / N_ORIENT)).astype(int), N_ORIENT - 1)
    h, w = patch.shape
    out = np.zeros((2, 2, N_ORIENT))
    for ci in range(2):
        for cj in range(2):
            rs = slice(ci * h // 2, (ci + 1) * h // 2)
            cs = slice(cj * w // 2, (cj + 1) * w // 2)
            out[ci, cj] = np.bincount(bins[rs, cs].ravel(), weights=mag[rs, cs].ravel(), minlength=N_ORIENT)
    out = out.ravel()
    total = out.sum()
    return out / total if total > 0 else out


def extract_features(img: np.ndarray, box) -> np.ndarray:
    l, t, r, b = (int(round(v)) for v in box)
    h, w = img.shape
    if l < 0 or t < 0 or r > w or b > h or r <= l or b <= t or (r - l) * (b - t) < 4:
        raise ValueError(f"degenerate box {tuple(box)}")
    patch = resample_nearest(np.asarray(img)[t:b, l:r])
    bw, bh = float(r - l), float(b - t)
    return np.concatenate([intensity_histogram(patch), orientation_histogram(patch), [bw, bh, bw / bh]])


# --------------------------------------------------------------------------
# weighted decision trees


def _gini_gain_split(x: np.ndarray, y: np.ndarray, w: np.ndarray):
    """Best threshold on one feature. Returns (impurity, threshold) or None."""
    order = np.argsort(x, kind="stable")
    xs, ys, ws = x[order], y[order], w[order]
    onehot = np.zeros((len(xs), N_CATEGORIES))
    onehot[np.arange(len(xs)), ys] = ws
    left = np.cumsum(onehot, axis=0)[:-1]
    total = onehot.sum(axis=0)
    right = total - left
    valid = xs[1:] > xs[:-1]
    if not valid.any():
        return None
    wl, wr = left.sum(axis=1), right.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        gl = wl - np.where(wl > 0, (left ** 2).sum(axis=1) / wl, 0.0)
        gr = wr - np.where(wr > 0, (right ** 2).sum(axis=1) / wr, 0.0)
    imp = np.where(valid, gl + gr, np.inf)
    best = imp.min()
    k = int(np.flatnonzero(imp <= best + SPLIT_TOL * max(1.0, abs(best)))[0])
    return float(imp[k]), float((xs[k] + xs[k + 1]) / 2)


def _leaf(y, w) -> dict:
    mass = np.bincount(y, weights=w, minlength=N_CATEGORIES)
    return {"leaf": int(np.argmax(mass))}


def fit_tree(X: np.ndarray, y: np.ndarray, w: np.ndarray, depth_max: int,
             features: Optional[Sequence[int]] = None) -> dict:
    """Greedy weighted-Gini tree. Ties between splits go to the lower feature
    index, so duplicated data (same normalized weights) yields the same tree."""
    if depth_max == 0 or len(np.unique(y)) == 1:
        return _leaf(y, w)
    mass = np.bincount(y, weights=w, minlength=N_CATEGORIES)
    parent = mass.sum() - (mass ** 2).sum() / mass.sum()
    best = None
    for f in (range(X.shape[1]) if features is None else features):
        res = _gini_gain_split(X[:, f], y, w)
        if res is None:
            continue
        if best is None or res[0] < best[0] - SPLIT_TOL * max(1.0, abs(best[0])):
            best = (res[0], f, res[1])
    if best is None or best[0] >= parent - SPLIT_TOL:
        return _leaf(y, w)
    _, f, thr = best
    go_left = X[:, f] <= thr
    return {
        "feature": int(f),
        "threshold": thr,
        "left": fit_tree(X[go_left], y[go_left], w[go_left], depth_max - 1, features),
        "right": fit_tree(X[~go_left], y[~go_left], w[~go_left], depth_max - 1, features),
    }


def predict_tree(tree: dict, X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(X)
    out = np.empty(len(X), dtype=int)
    for i, x in enumerate(X):
        node = tree
        while "leaf" not in node:
            node = node["left"] if x[node["feature"]] <= node["threshold"] else node["right"]
        out[i] = node["leaf"]
    return out


def _check_tree(node: dict, depth: int = 0) -> int:
    if "leaf" in node:
        if not 0 <= int(node["leaf"]) < N_CATEGORIES:
            raise ValueError("tree leaf category out of range")
        return depth
    if not 0 <= int(node["feature"]) < N_FEATURES or not math.isfinite(node["threshold"]):
        raise ValueError("invalid tree split")
    return max(_check_tree(node["left"], depth + 1), _check_tree(node["right"], depth + 1))


# --------------------------------------------------------------------------
# boosting


@dataclass
class BoostModel:
    rounds: List[Tuple[dict, float]] = field(default_factory=list)
    n_categories: int = N_CATEGORIES

    def __add__(self, other: "BoostModel") -> "BoostModel":
        return BoostModel(self.rounds + other.rounds, self.n_categories)

    def to_json(self) -> dict:
        return {"n_categories": self.n_categories,
                "rounds": [{"alpha": a, "tree": t} for t, a in self.rounds]}

    @classmethod
    def from_json(cls, d) -> "BoostModel":
        if int(d.get("n_categories", N_CATEGORIES)) != N_CATEGORIES:
            raise ValueError("classifier must have 5 categories")
        rounds = []
        for r in d["rounds"]:
            alpha = float(r["alpha"])
            if not math.isfinite(alpha):
                raise ValueError("non-finite round weight")
            _check_tree(r["tree"])
            rounds.append((r["tree"], alpha))
        return cls(rounds)


def train_adaboost(X, y, rounds: int = 100, depth_max: int = 2, rng_seed: int = 0,
                   max_features: Optional[int] = None) -> BoostModel:
    """SAMME. ``max_features`` draws a random feature subset per round from a
    generator seeded with ``rng_seed``; by default every feature is searched
    and training is fully deterministic."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    if rounds < 1:
        raise ValueError("rounds must be at least 1")
    if len(X) == 0 or X.ndim != 2 or len(y) != len(X):
        raise ValueError("training set must be a non-empty (n, d) array with n labels")
    if np.any((y < 0) | (y >= N_CATEGORIES)):
        raise ValueError("category out of range")
    rng = np.random.default_rng(rng_seed)
    K = N_CATEGORIES
    w = np.full(len(X), 1.0 / len(X))
    model = BoostModel()
    for _ in range(rounds):
        feats = None
        if max_features is not None and max_features < X.shape[1]:
            feats = sorted(rng.choice(X.shape[1], size=max_features, replace=False).tolist())
        tree = fit_tree(X, y, w, depth_max, feats)
        miss = predict_tree(tree, X) != y
        err = float(w[miss].sum() / w.sum())
        if err >= 1 - 1 / K:
            break
        err = max(err, ERR_FLOOR)
        alpha = math.log((1 - err) / err) + math.log(K - 1)
        model.rounds.append((tree, alpha))
        if not miss.any():
            break
        w = w * np.exp(alpha * miss)
        w /= w.sum()
    return model


def class_scores(model: BoostModel, f) -> np.ndarray:
    X = np.atleast_2d(np.asarray(f, dtype=float))
    scores = np.zeros((len(X), N_CATEGORIES))
    for tree, alpha in model.rounds:
        scores[np.arange(len(X)), predict_tree(tree, X)] += alpha
    return scores[0] if np.ndim(f) == 1 else scores


def predict(model: BoostModel, X) -> np.ndarray:
    return np.argmax(class_scores(model, np.atleast_2d(X)), axis=1)


def likelihoods_from_scores(scores, eps: float = 1e-6) -> Tuple[float, ...]:
    s = np.asarray(scores, dtype=float)
    if not np.all(np.isfinite(s)):
        raise ValueError("scores must be finite")
    e = np.exp(s - s.max())
    return normalize_likelihoods(e / e.sum(), eps)


def oracle_likelihoods(true_category: int, accuracy: float, rng: np.random.Generator,
                       kappa: float = math.inf, eps: float = 1e-6) -> Tuple[float, ...]:
    """Mass ``accuracy`` on the true category, the rest spread evenly, then
    optionally Dirichlet-jittered with concentration ``kappa``."""
    if not 0.2 < accuracy <= 1:
        raise ValueError("accuracy must lie in (0.2, 1]")
    p = np.full(N_CATEGORIES, (1 - accuracy) / (N_CATEGORIES - 1))
    p[true_category] = accuracy
    if math.isfinite(kappa):
        p = rng.dirichlet(np.maximum(kappa * p, 1e-3))
        if not np.any(p > 0):
            p[true_category] = 1.0
    return normalize_likelihoods(p, eps)


# --------------------------------------------------------------------------
# training data


def glyph_patch(category: int, rng: np.random.Generator, height: int = 24) -> np.ndarray:
    """A stylized character image per category, for separable fixtures.

    English: narrow with vertical strokes; Korean: square, stacked horizontal
    bars; Chinese: square grid; Digit: narrow ring; NonText: speckle.
    """
    h = height
    bg, ink = 210 + int(rng.integers(0, 30)), 20 + int(rng.integers(0, 40))
    if category == 0:
        w = max(6, int(h * rng.uniform(0.45, 0.7)))
    elif category in (1, 2):
        w = max(6, int(h * rng.uniform(0.9, 1.1)))
    elif category == 3:
        w = max(6, int(h * rng.uniform(0.5, 0.65)))
    else:
        w = max(6, int(h * rng.uniform(0.3, 2.0)))
    img = np.full((h, w), bg, dtype=np.uint8)
    s = max(2, h // 8)
    if category == 0:
        for c in (w // 4, 3 * w // 4 - s):
            img[h // 6:, c:c + s] = ink
    elif category == 1:
        for r in (h // 6, h // 2, 5 * h // 6 - s):
            img[r:r + s, w // 8:w - w // 8] = ink
    elif category == 2:
        for r in (h // 4, h // 2, 3 * h // 4):
            img[r:r + s, :] = ink
        img[:, w // 2 - s // 2:w // 2 + s - s // 2] = ink
    elif category == 3:
        img[1:1 + s, 1:w - 1] = ink
        img[h - 1 - s:h - 1, 1:w - 1] = ink
        img[1:h - 1, 1:1 + s] = ink
        img[1:h - 1, w - 1 - s:w - 1] = ink
    else:
        mask = rng.random((h, w)) < 0.5
        img[mask] = ink
    return img


def separable_training_set(rng: np.random.Generator, n_per_class: int = 20,
                           heights: Tuple[int, int] = (18, 40)):
    X, y = [], []
    for cat in range(N_CATEGORIES):
        for _ in range(n_per_class):
            patch = glyph_patch(cat, rng, int(rng.integers(heights[0], heights[1] + 1)))
            X.append(extract_features(patch, (0, 0, patch.shape[1], patch.shape[0])))
            y.append(cat)
    return np.array(X), np.array(y)


def scene_training_set(scene, img: np.ndarray, rng: np.random.Generator, mine_negatives: bool = True):
    """Features for every drawn blob of a synthetic scene with its true
    category. With ``mine_negatives``, unions of horizontally adjacent blobs
    on the same line are added as NonText (under-segmentation examples)."""
    X, y = [], []
    by_line: Dict[int, list] = {}
    for b in scene.blobs:
        X.append(extract_features(img, b.box))
        y.append(scene.categories[b.id])
        g = scene.gt_labeling.get(b.id)
        if g is not None and b.id not in scene.merged and scene.categories[b.id] != NONTEXT:
            by_line.setdefault(g, []).append(b)
    if mine_negatives:
        for blobs in by_line.values():
            blobs.sort(key=lambda b: b.left)
            for p, q in zip(blobs, blobs[1:]):
                if rng.random() < 0.5:
                    box = (min(p.left, q.left), min(p.top, q.top), max(p.right, q.right), max(p.bottom, q.bottom))
                    X.append(extract_features(img, box))
                    y.append(NONTEXT)
    return np.array(X), np.array(y)
