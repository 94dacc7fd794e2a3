"""Edge-based blob detection on grayscale images.

Images are 2-D numpy arrays indexed [row, col]; boxes are (left, top, right,
bottom) with exclusive right/bottom, in pixels.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, fields
from typing import List, Mapping, Sequence, Tuple

import numpy as np
from scipy import ndimage

Box = Tuple[int, int, int, int]


class PGMError(ValueError):
    pass


def _tokens(data: bytes, count: int):
    """Read ``count`` whitespace-separated header tokens, skipping comments."""
    pos = 0
    out = []
    n = len(data)
    while len(out) < count:
        while pos < n and data[pos:pos + 1].isspace():
            pos += 1
        if pos < n and data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise PGMError("malformed header")
        out.append(data[start:pos])
    return out, pos


def load_pgm(data: bytes) -> np.ndarray:
    """Decode a binary (P5) portable graymap with maxval <= 255."""
    if isinstance(data, str):
        raise TypeError("load_pgm expects bytes")
    toks, pos = _tokens(data, 4)
    if toks[0] != b"P5":
        raise PGMError("not a binary P5 graymap")
    try:
        width, height, maxval = (int(t) for t in toks[1:])
    except ValueError:
        raise PGMError("malformed header") from None
    if width <= 0 or height <= 0 or not 0 < maxval <= 255:
        raise PGMError("malformed header")
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise PGMError("malformed header")
    pos += 1
    payload = data[pos:pos + width * height]
    if len(payload) < width * height:
        raise PGMError("truncated payload")
    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width).copy()


def save_pgm(img: np.ndarray) -> bytes:
    img = np.asarray(img)
    if img.ndim != 2:
        raise ValueError("expected a 2-D image")
    h, w = img.shape
    return b"P5\n%d %d\n255\n" % (w, h) + np.clip(img, 0, 255).astype(np.uint8).tobytes()


def downscale(img: np.ndarray, max_dim: int = 1024) -> np.ndarray:
    """Box-filter downscale so the longer side is at most ``max_dim``.

    Each output pixel averages the source pixels its footprint covers,
    weighted by fractional overlap.
    """
    if max_dim < 1:
        raise ValueError("max_dim must be positive")
    h, w = img.shape
    if max(h, w) <= max_dim:
        return img.copy()
    scale = max_dim / max(h, w)
    nh, nw = max(1, int(round(h * scale))), max(1, int(round(w * scale)))
    nh, nw = min(nh, max_dim), min(nw, max_dim)
    rows = _resample_matrix(h, nh)
    cols = _resample_matrix(w, nw)
    out = rows @ img.astype(float) @ cols.T
    return np.clip(np.round(out), 0, 255).astype(np.uint8)


def _resample_matrix(n: int, m: int) -> np.ndarray:
    """(m, n) matrix averaging source cells over each target footprint."""
    M = np.zeros((m, n))
    step = n / m
    for i in range(m):
        lo, hi = i * step, (i + 1) * step
        for j in range(int(np.floor(lo)), min(n, int(np.ceil(hi)))):
            M[i, j] = min(hi, j + 1) - max(lo, j)
        M[i] /= M[i].sum()
    return M


SOBEL_X = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]])
SOBEL_Y = SOBEL_X.T


def sobel_edge_map(img: np.ndarray) -> np.ndarray:
    """min(255, |Gx| + |Gy|) with 3x3 Sobel kernels; border pixels are 0."""
    h, w = img.shape
    if h < 3 or w < 3:
        raise ValueError("image smaller than the Sobel kernel")
    f = img.astype(np.int32)
    gx = np.zeros((h - 2, w - 2), dtype=np.int32)
    gy = np.zeros_like(gx)
    for dy in range(3):
        for dx in range(3):
            win = f[dy:dy + h - 2, dx:dx + w - 2]
            gx += SOBEL_X[dy, dx] * win
            gy += SOBEL_Y[dy, dx] * win
    out = np.zeros((h, w), dtype=np.uint8)
    out[1:-1, 1:-1] = np.minimum(255, np.abs(gx) + np.abs(gy))
    return out


def binarize(edge_map: np.ndarray, threshold: int = 96) -> np.ndarray:
    return np.asarray(edge_map) >= threshold


def connected_components(binary: np.ndarray, min_area: int = 12, max_area_frac: float = 0.25) -> List[Box]:
    """Tight bounding boxes of 8-connected components, in scanline order of
    each component's first pixel. Area is the component's pixel count."""
    binary = np.asarray(binary, dtype=bool)
    if binary.size == 0:
        return []
    labels, n = ndimage.label(binary, structure=np.ones((3, 3), dtype=int))
    if n == 0:
        return []
    areas = np.bincount(labels.ravel(), minlength=n + 1)
    max_area = max_area_frac * binary.size
    boxes = []
    # ndimage numbers labels in raster order of first pixel
    for k, sl in enumerate(ndimage.find_objects(labels), start=1):
        if sl is None or not min_area <= areas[k] <= max_area:
            continue
        boxes.append((sl[1].start, sl[0].start, sl[1].stop, sl[0].stop))
    return boxes


def box_gap(p: Sequence[float], q: Sequence[float]) -> float:
    gx = max(0.0, q[0] - p[2], p[0] - q[2])
    gy = max(0.0, q[1] - p[3], p[1] - q[3])
    return max(gx, gy)


def _union(boxes) -> Box:
    return (min(b[0] for b in boxes), min(b[1] for b in boxes),
            max(b[2] for b in boxes), max(b[3] for b in boxes))


def _area(b) -> float:
    return (b[2] - b[0]) * (b[3] - b[1])


def _close(p, q, gap_frac) -> bool:
    side = max(p[2] - p[0], p[3] - p[1], q[2] - q[0], q[3] - q[1])
    return box_gap(p, q) <= gap_frac * side


def _merge_ok(members, cover_min, aspect_lo, aspect_hi) -> bool:
    u = _union(members)
    cover = sum(_area(b) for b in members) / _area(u)
    aspect = (u[2] - u[0]) / (u[3] - u[1])
    return cover >= cover_min and aspect_lo <= aspect <= aspect_hi


def propose_merged_blobs(boxes: Sequence[Box], gap_frac: float = 0.2, cover_min: float = 0.45,
                         aspect_lo: float = 0.7, aspect_hi: float = 1.4) -> List[Box]:
    """Union boxes of close pairs and triples that cover their union well and
    are roughly square.

    A triple qualifies when its closeness links connect all three boxes, so a
    stack of three pieces merges even though its outer pieces are far apart.
    Pairs come first, then triples, each in index order; duplicate unions and
    unions equal to an input box are dropped.
    """
    n = len(boxes)
    near = [set() for _ in range(n)]
    for i, j in itertools.combinations(range(n), 2):
        if _close(boxes[i], boxes[j], gap_frac):
            near[i].add(j)
            near[j].add(i)
    seen = set(tuple(b) for b in boxes)
    out: List[Box] = []

    def emit(members):
        u = _union(members)
        if u not in seen and _merge_ok(members, cover_min, aspect_lo, aspect_hi):
            seen.add(u)
            out.append(u)

    for i in range(n):
        for j in sorted(k for k in near[i] if k > i):
            emit([boxes[i], boxes[j]])
    for i, j, k in itertools.combinations(range(n), 3):
        links = (j in near[i]) + (k in near[i]) + (k in near[j])
        if links >= 2:
            emit([boxes[i], boxes[j], boxes[k]])
    return out


@dataclass(frozen=True)
class DetectorParams:
    max_dim: int = 1024
    threshold: int = 96
    min_area: int = 12
    max_area_frac: float = 0.25
    gap_frac: float = 0.2
    cover_min: float = 0.45
    aspect_lo: float = 0.7
    aspect_hi: float = 1.4
    edge_margin: int = 1
    propose_merges: bool = True

    def __post_init__(self):
        if self.max_dim < 16:
            raise ValueError("max_dim must be at least 16")
        if self.min_area < 0 or not 0 < self.max_area_frac <= 1:
            raise ValueError("invalid component area limits")
        if self.aspect_lo > self.aspect_hi or self.edge_margin < 0:
            raise ValueError("invalid merge parameters")

    @classmethod
    def from_dict(cls, d: Mapping) -> "DetectorParams":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown detector parameter(s): {sorted(unknown)}")
        return cls(**dict(d))

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def shrink_box(box: Box, margin: int) -> Box:
    """Undo the one-pixel spread of a 3x3 edge response around a region."""
    l, t, r, b = box
    if r - l > 2 * margin and b - t > 2 * margin:
        return (l + margin, t + margin, r - margin, b - margin)
    return box


def detect_blobs(img: np.ndarray, params: DetectorParams = DetectorParams()):
    """Full detector: downscale, Sobel edge map, threshold, components.

    Returns (component boxes, merged proposal boxes, scale) with boxes in the
    downscaled frame; multiply by ``1 / scale`` for source coordinates.
    """
    small = downscale(img, params.max_dim)
    scale = small.shape[1] / img.shape[1]
    if min(small.shape) < 3:
        return [], [], scale
    edges = sobel_edge_map(small)
    boxes = connected_components(binarize(edges, params.threshold), params.min_area, params.max_area_frac)
    boxes = [shrink_box(b, params.edge_margin) for b in boxes]
    merged = propose_merged_blobs(boxes, params.gap_frac, params.cover_min,
                                  params.aspect_lo, params.aspect_hi) if params.propose_merges else []
    return boxes, merged, scale
