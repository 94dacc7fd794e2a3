"""Random instance generators and brute-force oracles shared by the tests.

The oracles deliberately avoid the package's own evaluators so that they can
catch errors in them.
"""
from __future__ import annotations

import itertools
import math

import numpy as np

from textline_mdl.core import Language, Line, LineModel, TextCandidate, normalize_likelihoods


def random_blob(rng, blob_id, span=100.0):
    l = float(rng.uniform(0, span))
    t = float(rng.uniform(0, span))
    w = float(rng.uniform(3, 20))
    h = float(rng.uniform(3, 25))
    lik = normalize_likelihoods(rng.random(5) + 1e-3, 1e-6)
    return TextCandidate(blob_id, (l, t, l + w, t + h), lik)


def random_model(rng, model_id, span=100.0):
    slope = float(rng.uniform(-0.3, 0.3))
    top = float(rng.uniform(0, span))
    height = float(rng.uniform(4, 30))
    base_slope = slope + float(rng.uniform(-0.05, 0.05))
    x_ref = float(rng.uniform(0, span))
    mean = Line(slope, top - slope * x_ref)
    base = Line(base_slope, top + height - base_slope * x_ref)
    return LineModel(model_id, Language(int(rng.integers(0, 4))), mean, base, x_ref)


def random_labeling(rng, blobs, pool, p_outlier=0.3):
    out = {}
    for b in blobs:
        if not pool or rng.random() < p_outlier:
            out[b.id] = None
        else:
            out[b.id] = pool[int(rng.integers(0, len(pool)))].id
    return out


def random_instance(rng, n_max=10, m_max=4):
    n = int(rng.integers(1, n_max + 1))
    m = int(rng.integers(1, m_max + 1))
    blobs = [random_blob(rng, 100 + i) for i in range(n)]
    pool = [random_model(rng, 7 * j + 3) for j in range(m)]
    return blobs, pool, random_labeling(rng, blobs, pool), random_labeling(rng, blobs, pool)


def reference_energy(blobs, labeling, pool, params):
    """Straight-line evaluation of the hierarchical energy."""
    models = {m.id: m for m in pool}
    e = 0.0
    active = set()
    for b in blobs:
        j = labeling[b.id]
        if j is None:
            e += params.outlier_cost
            continue
        m = models[j]
        active.add(j)
        l, t, r, bt = b.box
        corners = [(l, t, m.mean_line), (r, t, m.mean_line), (l, bt, m.base_line), (r, bt, m.base_line)]
        z = max(params.z_min, (m.base_line.slope * m.x_ref + m.base_line.intercept)
                - (m.mean_line.slope * m.x_ref + m.mean_line.intercept))
        k = params.K[m.language]
        if params.geometric_mode == "squared":
            geo = k / z ** 2 * sum((y - (line.slope * x + line.intercept)) ** 2 for x, y, line in corners)
        else:
            geo = k / z * sum(abs(y - (line.slope * x + line.intercept)) for x, y, line in corners)
        e += -math.log(b.likelihoods[int(m.language)]) + geo
    langs = {models[j].language for j in active}
    return e + params.line_cost * len(active) + params.language_cost * len(langs)


def exhaustive_minimum(blobs, pool, params):
    labels = [None] + [m.id for m in pool]
    best = math.inf
    for combo in itertools.product(labels, repeat=len(blobs)):
        lab = {b.id: c for b, c in zip(blobs, combo)}
        best = min(best, reference_energy(blobs, lab, pool, params))
    return best


def brute_force_min_cut(net):
    """Minimum over all source/sink partitions of the crossing capacity."""
    inner = [v for v in range(net.n_nodes) if v not in (net.source, net.sink)]
    best = math.inf
    best_side = None
    for bits in itertools.product((0, 1), repeat=len(inner)):
        side = {net.source} | {v for v, b in zip(inner, bits) if b}
        cap = net.cut_capacity(side)
        if cap < best:
            best, best_side = cap, side
    return best, best_side


def random_network(rng, n_inner_max=8, p_arc=0.4, p_inf=0.05):
    from textline_mdl.maxflow import INFINITE, FlowNetwork

    n = int(rng.integers(0, n_inner_max + 1))
    net = FlowNetwork(n + 2)
    nodes = list(range(n + 2))
    for u in nodes:
        for v in nodes:
            if u == v or v == net.source or u == net.sink:
                continue
            if rng.random() < p_arc:
                cap = INFINITE if rng.random() < p_inf else float(np.round(rng.uniform(0, 10), 3))
                net.add_arc(u, v, cap)
    return net


def box_iou(p, q):
    ix = max(0.0, min(p[2], q[2]) - max(p[0], q[0]))
    iy = max(0.0, min(p[3], q[3]) - max(p[1], q[1]))
    inter = ix * iy
    union = (p[2] - p[0]) * (p[3] - p[1]) + (q[2] - q[0]) * (q[3] - q[1]) - inter
    return inter / union if union > 0 else 0.0
