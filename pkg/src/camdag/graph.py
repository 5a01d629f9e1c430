"""DAGs, orderings, reachability and the SHD/SID structure metrics.

Nodes are identified by their position ``0..p-1``; labels are carried
along as metadata only.
"""
from __future__ import annotations

import heapq
import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import CycleError, DimensionMismatch

Edge = tuple[int, int]


def _topological_sort(p: int, edges: Iterable[Edge]) -> list[int] | None:
    """Kahn's algorithm, smallest ready index first. ``None`` on a cycle."""
    children: list[list[int]] = [[] for _ in range(p)]
    indeg = [0] * p
    for k, j in edges:
        children[k].append(j)
        indeg[j] += 1
    ready = [v for v in range(p) if indeg[v] == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        v = heapq.heappop(ready)
        order.append(v)
        for c in children[v]:
            indeg[c] -= 1
            if indeg[c] == 0:
                heapq.heappush(ready, c)
    return order if len(order) == p else None


@dataclass(frozen=True)
class Dag:
    """Immutable directed acyclic graph over ``p`` positional nodes.

    ``edges`` holds ordered pairs ``(k, j)`` meaning ``k -> j``.
    """

    p: int
    edges: frozenset = field(default_factory=frozenset)
    node_labels: tuple | None = None

    def __post_init__(self):
        edges = frozenset((int(k), int(j)) for k, j in self.edges)
        object.__setattr__(self, "edges", edges)
        if self.p < 0:
            raise ValueError("p must be non-negative")
        for k, j in edges:
            if not (0 <= k < self.p and 0 <= j < self.p):
                raise ValueError(f"edge {k}->{j} out of range for p={self.p}")
            if k == j:
                raise ValueError(f"self-loop at node {k}")
        if self.node_labels is not None:
            labels = tuple(str(s) for s in self.node_labels)
            if len(labels) != self.p:
                raise DimensionMismatch("node_labels must have length p")
            object.__setattr__(self, "node_labels", labels)
        if _topological_sort(self.p, edges) is None:
            raise CycleError("edge set contains a directed cycle")

    # -- construction helpers -------------------------------------------

    @classmethod
    def empty(cls, p: int, node_labels=None) -> "Dag":
        return cls(p, frozenset(), node_labels)

    @classmethod
    def from_adjacency(cls, adj, node_labels=None) -> "Dag":
        adj = np.asarray(adj)
        ks, js = np.nonzero(adj)
        return cls(adj.shape[0], frozenset(zip(ks.tolist(), js.tolist())), node_labels)

    def add_edge(self, k: int, j: int) -> "Dag":
        return Dag(self.p, self.edges | {(k, j)}, self.node_labels)

    def with_edges(self, edges: Iterable[Edge]) -> "Dag":
        return Dag(self.p, frozenset(edges), self.node_labels)

    # -- queries --------------------------------------------------------

    def parents(self, j: int) -> list[int]:
        return sorted(k for k, jj in self.edges if jj == j)

    def children(self, k: int) -> list[int]:
        return sorted(j for kk, j in self.edges if kk == k)

    def parent_sets(self) -> list[list[int]]:
        pa: list[list[int]] = [[] for _ in range(self.p)]
        for k, j in sorted(self.edges):
            pa[j].append(k)
        return pa

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.p, self.p), dtype=bool)
        for k, j in self.edges:
            a[k, j] = True
        return a

    def topological_order(self) -> list[int]:
        """Lowest-index-first topological order."""
        return _topological_sort(self.p, self.edges)

    def sorted_edges(self) -> list[Edge]:
        return sorted(self.edges)

    def __len__(self):
        return len(self.edges)


@dataclass(frozen=True)
class Ordering:
    """A permutation; position ``i`` holds node ``perm[i]``."""

    perm: tuple

    def __post_init__(self):
        perm = tuple(int(v) for v in self.perm)
        if sorted(perm) != list(range(len(perm))):
            raise ValueError(f"{perm} is not a permutation of 0..{len(perm) - 1}")
        object.__setattr__(self, "perm", perm)

    def __len__(self):
        return len(self.perm)

    def __iter__(self):
        return iter(self.perm)

    def position(self) -> list[int]:
        pos = [0] * len(self.perm)
        for i, v in enumerate(self.perm):
            pos[v] = i
        return pos


def _as_ordering(ord_) -> Ordering:
    return ord_ if isinstance(ord_, Ordering) else Ordering(tuple(ord_))


def topological_orders_contains(dag: Dag, ord_: Ordering | Sequence[int]) -> bool:
    """True iff every edge of ``dag`` points forward in ``ord_``."""
    ord_ = _as_ordering(ord_)
    if len(ord_) != dag.p:
        raise DimensionMismatch(f"ordering has length {len(ord_)}, dag has p={dag.p}")
    pos = ord_.position()
    return all(pos[k] < pos[j] for k, j in dag.edges)


def full_dag_of_order(ord_: Ordering | Sequence[int]) -> Dag:
    perm = _as_ordering(ord_).perm
    edges = {(perm[a], perm[b]) for a in range(len(perm)) for b in range(a + 1, len(perm))}
    return Dag(len(perm), frozenset(edges))


def descendants(dag: Dag, node: int) -> set[int]:
    """Nodes reachable from ``node`` by a directed path of length >= 1."""
    if not 0 <= node < dag.p:
        raise IndexError(f"node {node} out of range for p={dag.p}")
    children = [[] for _ in range(dag.p)]
    for k, j in dag.edges:
        children[k].append(j)
    seen: set[int] = set()
    stack = list(children[node])
    while stack:
        v = stack.pop()
        if v not in seen:
            seen.add(v)
            stack.extend(children[v])
    return seen


def ancestors(dag: Dag, node: int) -> set[int]:
    """Nodes with a directed path of length >= 1 into ``node``."""
    parents = [[] for _ in range(dag.p)]
    for k, j in dag.edges:
        parents[j].append(k)
    seen: set[int] = set()
    stack = list(parents[node])
    while stack:
        v = stack.pop()
        if v not in seen:
            seen.add(v)
            stack.extend(parents[v])
    return seen


def reachability(dag: Dag) -> np.ndarray:
    """Boolean matrix ``R`` with ``R[a, b]`` iff there is a path a ~> b (length >= 1)."""
    p = dag.p
    r = np.zeros((p, p), dtype=bool)
    order = dag.topological_order()
    adj = dag.adjacency()
    for v in reversed(order):
        for c in np.flatnonzero(adj[v]):
            r[v, c] = True
            r[v] |= r[c]
    return r


class EdgeCandidateMask:
    """Tracks which edges may still be added without creating a cycle.

    ``allowed[k, j]`` is True iff ``k -> j`` is still admissible.  The mask
    is mutable and meant to live on a single search thread.
    """

    def __init__(self, p: int, restrict=None):
        self.p = p
        self.allowed = np.ones((p, p), dtype=bool)
        if restrict is not None:
            self.allowed &= np.asarray(restrict, dtype=bool)
        np.fill_diagonal(self.allowed, False)
        # path[a, b]: a ~> b in the current graph, reflexive
        self._path = np.eye(p, dtype=bool)

    def add_edge(self, k: int, j: int) -> None:
        if not self.allowed[k, j]:
            raise CycleError(f"edge {k}->{j} is not admissible")
        srcs = self._path[:, k]  # ancestors of k, including k
        dsts = self._path[j, :]  # descendants of j, including j
        self._path |= np.outer(srcs, dsts)
        # b -> a closes a cycle whenever a ~> b
        self.allowed &= ~self._path.T
        self.allowed[k, j] = False
        np.fill_diagonal(self.allowed, False)

    def disable(self, k: int, j: int) -> None:
        self.allowed[k, j] = False

    def any(self) -> bool:
        return bool(self.allowed.any())


# -- metrics ------------------------------------------------------------


def _check_same_p(g: Dag, h: Dag) -> None:
    if g.p != h.p:
        raise DimensionMismatch(f"graphs have p={g.p} and p={h.p}")


def shd(g: Dag, h: Dag) -> int:
    """Structural Hamming distance; a reversed edge counts once."""
    _check_same_p(g, h)
    a = g.adjacency().astype(np.int8)
    b = h.adjacency().astype(np.int8)
    # encode each unordered pair as a[k,j] - a[j,k] in {-1, 0, 1}
    da = np.triu(a - a.T, 1)
    db = np.triu(b - b.T, 1)
    return int(np.count_nonzero(da != db))


def d_separated(dag: Dag, x: Iterable[int], y: Iterable[int], z: Iterable[int]) -> bool:
    """Test whether ``x`` and ``y`` are d-separated given ``z``.

    Reachability ("Bayes-ball") search over (node, direction) states.
    """
    x, y, z = set(x), set(y), set(z)
    if x & y:
        return False
    pa = [[] for _ in range(dag.p)]
    ch = [[] for _ in range(dag.p)]
    for k, j in dag.edges:
        pa[j].append(k)
        ch[k].append(j)

    # ancestors of z (inclusive) decide whether a collider is open
    anc_z = set(z)
    stack = list(z)
    while stack:
        v = stack.pop()
        for u in pa[v]:
            if u not in anc_z:
                anc_z.add(u)
                stack.append(u)

    # direction "up": arrived from a child; "down": arrived from a parent
    visited = set()
    frontier = [(v, "up") for v in x]
    while frontier:
        v, d = frontier.pop()
        if (v, d) in visited:
            continue
        visited.add((v, d))
        if v not in z and v in y:
            return False
        if d == "up" and v not in z:
            frontier.extend((u, "up") for u in pa[v])
            frontier.extend((c, "down") for c in ch[v])
        elif d == "down":
            if v not in z:
                frontier.extend((c, "down") for c in ch[v])
            if v in anc_z:
                frontier.extend((u, "up") for u in pa[v])
    return True


def is_valid_adjustment(g: Dag, i: int, j: int, adj_set: Iterable[int], *, _desc=None) -> bool:
    """Generalized adjustment criterion for the effect of ``i`` on ``j`` in ``g``.

    ``adj_set`` is valid iff it avoids the forbidden set (descendants of every
    non-``i`` node on a proper causal path from ``i`` to ``j``) and
    d-separates ``i`` and ``j`` in the proper back-door graph, where the first
    edge of each proper causal path is removed.
    """
    zset = set(adj_set)
    if i in zset or j in zset:
        return False
    desc = _desc if _desc is not None else reachability(g)
    # nodes w != i on a causal path i ~> w ~>* j
    on_path = [w for w in range(g.p) if w != i and desc[i, w] and (w == j or desc[w, j])]
    forbidden = set()
    for w in on_path:
        forbidden.add(w)
        forbidden.update(np.flatnonzero(desc[w]).tolist())
    if zset & forbidden:
        return False
    on_path_set = set(on_path)
    pbd_edges = {(k, c) for k, c in g.edges if not (k == i and c in on_path_set)}
    pbd = Dag(g.p, frozenset(pbd_edges))
    return d_separated(pbd, {i}, {j}, zset)


def sid(true_g: Dag, est_h: Dag) -> int:
    """Structural intervention distance between a true and an estimated DAG.

    Counts ordered pairs ``(i, j)`` for which adjusting for the estimated
    parents of ``i`` gives the wrong interventional distribution of ``j``
    under ``do(i)`` in the true graph.
    """
    _check_same_p(true_g, est_h)
    desc = reachability(true_g)
    est_pa = est_h.parent_sets()
    true_pa = true_g.parent_sets()
    wrong = 0
    for i in range(true_g.p):
        z = est_pa[i]
        same_parents = set(z) == set(true_pa[i])
        for j in range(true_g.p):
            if j == i or same_parents:
                continue
            if j in z:
                # the estimate implies no effect of i on j
                wrong += bool(desc[i, j])
            elif not is_valid_adjustment(true_g, i, j, z, _desc=desc):
                wrong += 1
    return wrong


# -- serialization --------------------------------------------------------


def to_edge_list(dag: Dag) -> str:
    return "".join(f"{k} {j}\n" for k, j in dag.sorted_edges())


def from_edge_list(text: str, p: int | None = None) -> Dag:
    """Parse ``k j`` lines.  ``p`` defaults to one more than the largest index."""
    edges = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"line {lineno}: expected 'k j', got {line!r}")
        edges.append((int(parts[0]), int(parts[1])))
    if p is None:
        p = 1 + max((max(e) for e in edges), default=-1)
    return Dag(p, frozenset(edges))


def to_json(dag: Dag) -> str:
    doc = {"p": dag.p, "edges": [list(e) for e in dag.sorted_edges()]}
    if dag.node_labels is not None:
        doc["node_labels"] = list(dag.node_labels)
    return json.dumps(doc, sort_keys=True)


def from_json(text: str) -> Dag:
    doc = json.loads(text)
    return Dag(int(doc["p"]), frozenset(tuple(e) for e in doc["edges"]), doc.get("node_labels"))


def read_dag(path) -> Dag:
    """Read a DAG from a ``.json`` file or an edge-list text file."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    if str(path).endswith(".json") or text.lstrip().startswith("{"):
        return from_json(text)
    return from_edge_list(text)
