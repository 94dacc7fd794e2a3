"""Exact s-t max-flow / min-cut.

The solver follows Boykov and Kolmogorov: two search trees grow from the
terminals, an augmenting path is pushed whenever they touch, and nodes cut off
by saturated arcs are re-adopted or freed. Arcs are stored in pairs, so arc
``a ^ 1`` is the reverse of arc ``a``.
"""
from __future__ import annotations

import math
from collections import deque
from typing import List, Set, Tuple

INFINITE = math.inf
EPS = 1e-12

_FREE, _S, _T = 0, 1, 2


class UnboundedCut(ValueError):
    pass


class FlowNetwork:
    def __init__(self, n_nodes: int = 2, source: int = 0, sink: int = 1):
        if source == sink:
            raise ValueError("source and sink must differ")
        self.source = source
        self.sink = sink
        self.head: List[int] = []
        self.cap: List[float] = []
        self.adj: List[List[int]] = [[] for _ in range(n_nodes)]

    @property
    def n_nodes(self) -> int:
        return len(self.adj)

    def add_node(self) -> int:
        self.adj.append([])
        return len(self.adj) - 1

    def add_arc(self, u: int, v: int, capacity: float) -> int:
        if not capacity >= 0:
            raise ValueError("capacity must be non-negative")
        if u == v:
            raise ValueError("self-loop")
        a = len(self.head)
        self.head += [v, u]
        self.cap += [float(capacity), 0.0]
        self.adj[u].append(a)
        self.adj[v].append(a + 1)
        return a

    def arcs(self):
        for a in range(0, len(self.head), 2):
            yield self.head[a + 1], self.head[a], self.cap[a]

    def cut_capacity(self, source_side) -> float:
        total = 0.0
        for u, v, c in self.arcs():
            if u in source_side and v not in source_side:
                total += c
        return total

    def to_dimacs(self) -> str:
        finite = sum(c for _, _, c in self.arcs() if c != INFINITE)
        big = finite + 1.0
        lines = [f"p max {self.n_nodes} {len(self.head) // 2}",
                 f"n {self.source + 1} s", f"n {self.sink + 1} t"]
        for u, v, c in self.arcs():
            lines.append(f"a {u + 1} {v + 1} {big if c == INFINITE else c!r}")
        return "\n".join(lines) + "\n"


def max_flow(net: FlowNetwork) -> Tuple[float, Set[int]]:
    """Return the max-flow value and the nodes reachable from s in the residual graph."""
    s, t = net.source, net.sink
    n = net.n_nodes
    head, adj = net.head, net.adj
    r = list(net.cap)

    tree = [_FREE] * n
    parent = [-1] * n  # S tree: arc parent->v; T tree: arc v->parent
    tree[s], tree[t] = _S, _T
    active = deque([s, t])
    orphans: deque = deque()
    flow = 0.0

    def origin_ok(q: int, root: int) -> bool:
        while parent[q] != -1:
            a = parent[q]
            q = head[a ^ 1] if tree[q] == _S else head[a]
        return q == root

    while active:
        p = active.popleft()
        tp = tree[p]
        if tp == _FREE:
            continue
        bridge = -1
        for a in adj[p]:
            q = head[a]
            if tp == _S:
                if r[a] <= EPS:
                    continue
            elif r[a ^ 1] <= EPS:
                continue
            tq = tree[q]
            if tq == _FREE:
                tree[q] = tp
                parent[q] = a if tp == _S else a ^ 1
                active.append(q)
            elif tq != tp:
                bridge = a if tp == _S else a ^ 1
                break
        if bridge < 0:
            continue

        # collect the augmenting path s ... u -> v ... t
        path = [bridge]
        u = head[bridge ^ 1]
        while parent[u] != -1:
            path.append(parent[u])
            u = head[parent[u] ^ 1]
        v = head[bridge]
        while parent[v] != -1:
            path.append(parent[v])
            v = head[parent[v]]
        f = min(r[a] for a in path)
        if f == INFINITE:
            raise UnboundedCut("unbounded cut")
        flow += f
        for a in path:
            r[a] -= f
            r[a ^ 1] += f
        for a in path[1:]:
            if r[a] <= EPS:
                tail, hd = head[a ^ 1], head[a]
                # the child end of the saturated tree arc loses its parent
                child = hd if tree[hd] == _S else tail
                parent[child] = -1
                orphans.append(child)

        while orphans:
            o = orphans.popleft()
            to = tree[o]
            root = s if to == _S else t
            found = False
            for a in adj[o]:
                q = head[a]
                if tree[q] != to:
                    continue
                cand = a ^ 1 if to == _S else a
                if r[cand] > EPS and origin_ok(q, root):
                    parent[o] = cand
                    found = True
                    break
            if found:
                continue
            for a in adj[o]:
                q = head[a]
                if tree[q] != to:
                    continue
                if (to == _S and r[a ^ 1] > EPS) or (to == _T and r[a] > EPS):
                    active.append(q)
                if parent[q] == (a if to == _S else a ^ 1):
                    parent[q] = -1
                    orphans.append(q)
            tree[o] = _FREE
        if tree[p] != _FREE:
            active.appendleft(p)

    seen = {s}
    queue = deque([s])
    while queue:
        u = queue.popleft()
        for a in adj[u]:
            if r[a] > EPS and head[a] not in seen:
                seen.add(head[a])
                queue.append(head[a])
    return flow, seen
