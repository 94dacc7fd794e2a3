"""Line-level precision / recall / F against ground truth.

A detected line and a ground-truth line match when their inlier blob sets
overlap (intersection over union) by at least ``overlap_min`` and their
languages agree. Matching is greedy and one-to-one.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Mapping, Optional, Sequence, Tuple

from .core import LineModel
from .energy import inlier_sets


@dataclass(frozen=True)
class Metrics:
    precision: float
    recall: float
    f: float
    matched: List[Tuple[int, int]] = field(default_factory=list)  # (detected id, gt id)
    n_detected: int = 0
    n_gt: int = 0

    def to_json(self) -> dict:
        return {"precision": self.precision, "recall": self.recall, "f": self.f,
                "n_detected": self.n_detected, "n_gt": self.n_gt,
                "matched": [list(p) for p in self.matched]}


def _line_sets(models: Sequence[LineModel], labeling: Mapping[int, Optional[int]]):
    support = inlier_sets(labeling)
    return {m.id: (m.language, frozenset(support[m.id])) for m in models if m.id in support}


def match_lines(detected, gt, overlap_min: float = 0.5) -> List[Tuple[int, int]]:
    """``detected`` and ``gt`` are (models, labeling) pairs over the same blobs."""
    det = _line_sets(*detected)
    ref = _line_sets(*gt)
    cands = []
    for d, (dlang, dset) in det.items():
        for g, (glang, gset) in ref.items():
            if dlang != glang:
                continue
            iou = len(dset & gset) / len(dset | gset)
            if iou >= overlap_min and iou > 0:
                cands.append((-iou, g, d))
    cands.sort()
    used_d, used_g, pairs = set(), set(), []
    for _, g, d in cands:
        if d in used_d or g in used_g:
            continue
        used_d.add(d)
        used_g.add(g)
        pairs.append((d, g))
    return pairs


def precision_recall_f(matching, n_detected: int, n_gt: int) -> Metrics:
    k = len(matching)
    if k > min(n_detected, n_gt):
        raise ValueError("more matches than lines")
    precision = k / n_detected if n_detected else 1.0
    recall = k / n_gt if n_gt else 1.0
    f = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return Metrics(precision, recall, f, list(matching), n_detected, n_gt)


def evaluate(detected, gt, overlap_min: float = 0.5) -> Metrics:
    pairs = match_lines(detected, gt, overlap_min)
    return precision_recall_f(pairs, len(_line_sets(*detected)), len(_line_sets(*gt)))
