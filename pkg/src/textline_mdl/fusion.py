"""Fusion moves: binary crossover energies over two labelings and their exact
minimization by graph cuts.

Encoding convention: a blob node on the source side of the cut means x_i = 1,
i.e. the blob takes its label from the proposal ``l1``.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .core import EnergyParams, Labeling, LineModel, TextCandidate, all_outliers
from .energy import data_matrix, data_term
from .maxflow import INFINITE, FlowNetwork, max_flow

# guard against exponential blow-up when many cost terms conflict
MAX_CONDITIONED_TERMS = 16


@dataclass(frozen=True)
class CostTerm:
    """A cost that is avoided only when every ``must_be_one`` blob takes 1 and
    every ``must_be_zero`` blob takes 0."""

    cost: float
    must_be_one: FrozenSet[int]
    must_be_zero: FrozenSet[int]
    kind: str = "line"
    key: object = None

    @property
    def avoidable(self) -> bool:
        return self.must_be_one.isdisjoint(self.must_be_zero)


@dataclass
class BinaryFusionProblem:
    blob_ids: List[int]
    d0: np.ndarray
    d1: np.ndarray
    terms: List[CostTerm] = field(default_factory=list)
    offset: float = 0.0

    def __post_init__(self):
        self.index = {b: i for i, b in enumerate(self.blob_ids)}
        if len(self.index) != len(self.blob_ids):
            raise ValueError("duplicate blob ids")
        for term in self.terms:
            if not (term.must_be_one | term.must_be_zero) <= self.index.keys():
                raise ValueError("cost term references unknown blob")

    def to_json(self) -> dict:
        return {
            "blob_ids": list(self.blob_ids),
            "d0": [float(v) for v in self.d0],
            "d1": [float(v) for v in self.d1],
            "offset": self.offset,
            "terms": [
                {"kind": t.kind, "key": t.key, "cost": t.cost,
                 "must_be_one": sorted(t.must_be_one), "must_be_zero": sorted(t.must_be_zero)}
                for t in self.terms
            ],
        }


def apply_crossover(l0: Mapping[int, Optional[int]], l1: Mapping[int, Optional[int]], x,
                    blob_ids: Optional[Sequence[int]] = None) -> Labeling:
    ids = list(l0) if blob_ids is None else list(blob_ids)
    if len(ids) != len(x) or set(l0) != set(l1) or set(ids) != set(l0):
        raise ValueError("inconsistent sizes")
    return {b: (l1[b] if xi else l0[b]) for b, xi in zip(ids, x)}


def _supports(labeling, blob_ids, models):
    by_model: Dict[int, set] = {}
    by_lang: Dict[object, set] = {}
    for b in blob_ids:
        j = labeling[b]
        if j is None:
            continue
        by_model.setdefault(j, set()).add(b)
        by_lang.setdefault(models[j].language, set()).add(b)
    return by_model, by_lang


def build_fusion_problem(l0, l1, blobs: Sequence[TextCandidate], pool: Sequence[LineModel],
                         params: EnergyParams, data: Optional[np.ndarray] = None) -> BinaryFusionProblem:
    """Binary energy of ``apply_crossover(l0, l1, x)`` as unaries plus cost terms.

    ``data`` is an optional precomputed ``data_matrix(blobs, pool, params)``.
    """
    blob_ids = [b.id for b in blobs]
    if set(l0) != set(blob_ids) or set(l1) != set(blob_ids):
        raise ValueError("mismatched blob sets")
    models = {m.id: m for m in pool}
    if data is not None:
        col = {m.id: k for k, m in enumerate(pool)}

        def unary(i, label):
            return params.outlier_cost if label is None else float(data[i, col[label]])
    else:
        def unary(i, label):
            return data_term(blobs[i], label, models, params)

    d0 = np.array([unary(i, l0[b]) for i, b in enumerate(blob_ids)], dtype=float)
    d1 = np.array([unary(i, l1[b]) for i, b in enumerate(blob_ids)], dtype=float)

    m0, v0 = _supports(l0, blob_ids, models)
    m1, v1 = _supports(l1, blob_ids, models)
    terms = []
    for j in sorted(set(m0) | set(m1)):
        terms.append(CostTerm(params.line_cost, frozenset(m0.get(j, ())), frozenset(m1.get(j, ())),
                              "line", j))
    for v in sorted(set(v0) | set(v1)):
        terms.append(CostTerm(params.language_cost, frozenset(v0.get(v, ())), frozenset(v1.get(v, ())),
                              "language", v.label))
    return BinaryFusionProblem(blob_ids, d0, d1, terms)


def binary_energy(problem: BinaryFusionProblem, x) -> float:
    x = np.asarray(x, dtype=int)
    if x.shape != (len(problem.blob_ids),):
        raise ValueError("bit vector has wrong length")
    e = float(np.sum(problem.d0 + (problem.d1 - problem.d0) * x)) + problem.offset
    idx = problem.index
    for t in problem.terms:
        on = all(x[idx[p]] == 1 for p in t.must_be_one) and all(x[idx[q]] == 0 for q in t.must_be_zero)
        if not on:
            e += t.cost
    return e


class _ParityUnion:
    """Union-find with parity bits: parity(u) ^ parity(v) records whether two
    variables are flipped relative to each other."""

    def __init__(self, n):
        self.parent = list(range(n))
        self.par = [0] * n

    def copy(self):
        c = _ParityUnion(0)
        c.parent = list(self.parent)
        c.par = list(self.par)
        return c

    def find(self, u):
        p = 0
        root = u
        while self.parent[root] != root:
            p ^= self.par[root]
            root = self.parent[root]
        # path compression
        q, acc = u, p
        while self.parent[q] != q:
            nxt, bit = self.parent[q], self.par[q]
            self.parent[q] = root
            self.par[q] = acc
            acc ^= bit
            q = nxt
        return root, p

    def union(self, u, v, rel) -> bool:
        ru, pu = self.find(u)
        rv, pv = self.find(v)
        if ru == rv:
            return (pu ^ pv) == rel
        self.parent[ru] = rv
        self.par[ru] = pu ^ pv ^ rel
        return True


def _term_consistent(uf: _ParityUnion, ones, zeros) -> bool:
    members = [(p, 0) for p in ones] + [(q, 1) for q in zeros]
    anchor, anchor_side = members[0]
    for u, side in members[1:]:
        if not uf.union(anchor, u, side ^ anchor_side):
            return False
    return True


def solve_fusion(problem: BinaryFusionProblem) -> np.ndarray:
    """Globally optimal bit vector for ``binary_energy``.

    A cost term with a non-empty ``must_be_one`` and a non-empty
    ``must_be_zero`` is not submodular as it stands. Such terms are made
    submodular by flipping variables (x -> 1 - x) where a consistent flip
    exists; terms that still conflict are handled exactly by enumerating
    whether each one is paid or avoided.
    """
    n = len(problem.blob_ids)
    x_best = np.zeros(n, dtype=np.int8)
    if n == 0:
        return x_best

    included, conditioned, flip = _split_terms(problem)
    if len(conditioned) > MAX_CONDITIONED_TERMS:
        raise RuntimeError(f"{len(conditioned)} conflicting cost terms; fusion too large")

    best_e = None
    for choice in itertools.product((False, True), repeat=len(conditioned)):
        fixed: Dict[int, int] = {}
        ok = True
        for avoid, (cost, ones, zeros) in zip(choice, conditioned):
            if not avoid:
                continue
            for p in ones:
                if fixed.setdefault(p, 1) != 1:
                    ok = False
            for q in zeros:
                if fixed.setdefault(q, 0) != 0:
                    ok = False
        if not ok:
            continue
        x = _cut(problem, included, flip, fixed)
        e = binary_energy(problem, x)
        if best_e is None or e < best_e:
            best_e, x_best = e, x
    return x_best


def _network(problem: BinaryFusionProblem, terms, flip, fixed):
    # in flipped space y = x ^ flip; source side <=> y = 1
    cost_y0 = np.where(flip == 1, problem.d1, problem.d0)
    cost_y1 = np.where(flip == 1, problem.d0, problem.d1)

    relevant = set(np.flatnonzero(problem.d0 != problem.d1).tolist()) | set(fixed)
    for _, ones, zeros in terms:
        relevant.update(ones)
        relevant.update(zeros)

    net = FlowNetwork(2)
    s, t = net.source, net.sink
    node = {}
    for i in sorted(relevant):
        node[i] = net.add_node()
        lo = min(cost_y0[i], cost_y1[i])
        if cost_y0[i] - lo > 0:
            net.add_arc(s, node[i], cost_y0[i] - lo)
        if cost_y1[i] - lo > 0:
            net.add_arc(node[i], t, cost_y1[i] - lo)
    for i, xv in fixed.items():
        if xv ^ flip[i]:
            net.add_arc(s, node[i], INFINITE)
        else:
            net.add_arc(node[i], t, INFINITE)
    for cost, ones, zeros in terms:
        members = ones + zeros
        want_y = (1 ^ flip[ones[0]]) if ones else int(flip[zeros[0]])
        aux = net.add_node()
        if want_y == 1:
            # avoided iff every member has y = 1
            net.add_arc(s, aux, cost)
            for i in members:
                net.add_arc(aux, node[i], INFINITE)
        else:
            # avoided iff every member has y = 0
            net.add_arc(aux, t, cost)
            for i in members:
                net.add_arc(node[i], aux, INFINITE)
    return net, node


def _cut(problem: BinaryFusionProblem, terms, flip, fixed) -> np.ndarray:
    net, node = _network(problem, terms, flip, fixed)
    _, source_side = max_flow(net)
    x = np.zeros(len(problem.blob_ids), dtype=np.int8)
    for i, v in node.items():
        x[i] = (1 if v in source_side else 0) ^ flip[i]
    return x


def _split_terms(problem: BinaryFusionProblem):
    """Avoidable terms as index lists, split into a flip-consistent set and the rest."""
    n = len(problem.blob_ids)
    idx = problem.index
    avoidable = []
    for t in problem.terms:
        if t.avoidable and t.cost > 0 and (t.must_be_one or t.must_be_zero):
            avoidable.append((t.cost, sorted(idx[p] for p in t.must_be_one),
                              sorted(idx[q] for q in t.must_be_zero)))
    uf = _ParityUnion(n)
    included, conditioned = [], []
    # single-polarity terms never conflict with each other, so place them first
    for term in sorted(avoidable, key=lambda t: bool(t[1]) and bool(t[2])):
        trial = uf.copy()
        if _term_consistent(trial, term[1], term[2]):
            uf = trial
            included.append(term)
        else:
            conditioned.append(term)
    flip = np.array([uf.find(i)[1] for i in range(n)], dtype=np.int8)
    return included, conditioned, flip


def fusion_network(problem: BinaryFusionProblem) -> FlowNetwork:
    """Network for the unconditioned case, for debug dumps."""
    included, _, flip = _split_terms(problem)
    return _network(problem, included, flip, {})[0]


def dump_fusion(problem: BinaryFusionProblem, stem: str) -> None:
    with open(stem + ".json", "w") as fh:
        json.dump(problem.to_json(), fh, indent=2)
    with open(stem + ".dimacs", "w") as fh:
        fh.write(fusion_network(problem).to_dimacs())


def make_labeling(model: LineModel, blobs: Sequence[TextCandidate], params: EnergyParams,
                  column: Optional[np.ndarray] = None) -> Labeling:
    """Each blob goes to ``model`` if that beats the outlier cost, else OUTLIER (ties to OUTLIER)."""
    if column is None:
        column = data_matrix(blobs, [model], params)[:, 0]
    return {b.id: (model.id if column[k] < params.outlier_cost else None) for k, b in enumerate(blobs)}


def assign_models(pool: Sequence[LineModel], blobs: Sequence[TextCandidate], params: EnergyParams,
                  init: Optional[Mapping[int, Optional[int]]] = None, debug_dir: Optional[str] = None) -> Labeling:
    """Sequentially fuse single-model proposals into one labeling.

    Without ``init`` the sweep starts from the first model's labeling; with
    ``init`` every pool model is fused into the given labeling, so the result
    never has higher energy than ``init``.
    """
    if not pool:
        return dict(init) if init is not None else all_outliers(blobs)
    data = data_matrix(blobs, pool, params)
    if init is None:
        current = make_labeling(pool[0], blobs, params, data[:, 0])
        start = 1
    else:
        current = {b.id: init[b.id] for b in blobs}
        start = 0
    blob_ids = [b.id for b in blobs]
    for k in range(start, len(pool)):
        proposal = make_labeling(pool[k], blobs, params, data[:, k])
        if proposal == current:
            continue
        problem = build_fusion_problem(current, proposal, blobs, pool, params, data)
        x = solve_fusion(problem)
        if debug_dir is not None:
            import os
            dump_fusion(problem, os.path.join(debug_dir, f"fusion_{k:04d}"))
        current = apply_crossover(current, proposal, x, blob_ids)
    return current
