"""Undirected weighted graphs, incidence matrices and Laplacians.

Vertices are 1-based in the public API (matching the scenario file format);
all matrices are indexed 0-based as usual for numpy.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "Graph",
    "EdgeOrdering",
    "TreeSplit",
    "GraphError",
    "SelfLoopError",
    "DuplicateEdgeError",
    "NonPositiveWeightError",
    "VertexIndexError",
    "OrderingMismatchError",
    "DisconnectedGraphError",
    "build_graph",
    "cycle_graph",
    "circulant_graph",
    "is_connected",
    "connected_components",
    "edge_ordering",
    "incidence_matrix",
    "weight_matrix",
    "spanning_tree_split",
    "laplacian",
]


class GraphError(ValueError):
    """Base class for graph validation failures."""


class SelfLoopError(GraphError):
    pass


class DuplicateEdgeError(GraphError):
    pass


class NonPositiveWeightError(GraphError):
    pass


class VertexIndexError(GraphError):
    pass


class OrderingMismatchError(GraphError):
    pass


class DisconnectedGraphError(GraphError):
    pass


@dataclass(frozen=True)
class Graph:
    """Validated undirected graph.

    ``edges`` holds ``(i, j, w)`` triples with ``1 <= i < j <= n`` sorted
    lexicographically. Build instances with :func:`build_graph`.
    """

    n: int
    edges: tuple[tuple[int, int, float], ...]

    @property
    def m(self) -> int:
        return len(self.edges)

    def neighbors(self) -> dict[int, dict[int, float]]:
        """Map each vertex to ``{neighbor: weight}``."""
        nbrs: dict[int, dict[int, float]] = {v: {} for v in range(1, self.n + 1)}
        for i, j, w in self.edges:
            nbrs[i][j] = w
            nbrs[j][i] = w
        return nbrs

    def max_degree(self) -> int:
        return max((len(v) for v in self.neighbors().values()), default=0)

    def to_dict(self) -> dict:
        return {"n": self.n, "edges": [[i, j, w] for i, j, w in self.edges]}


def build_graph(n: int, edges: Iterable[Sequence[float]]) -> Graph:
    """Validate ``edges`` and return a :class:`Graph`.

    Each edge is ``(i, j)`` or ``(i, j, w)``; a missing weight means 1.
    Orientation of the input pair is irrelevant.
    """
    if int(n) != n or n < 1:
        raise GraphError(f"vertex count must be a positive integer, got {n!r}")
    n = int(n)
    seen: dict[tuple[int, int], int] = {}
    out = []
    for k, e in enumerate(edges):
        if len(e) == 2:
            i, j = e
            w = 1.0
        elif len(e) == 3:
            i, j, w = e
        else:
            raise GraphError(f"edge {k}: expected (i, j) or (i, j, w), got {e!r}")
        if int(i) != i or int(j) != j:
            raise VertexIndexError(f"edge {k}: vertex indices must be integers, got {e!r}")
        i, j, w = int(i), int(j), float(w)
        for v in (i, j):
            if not 1 <= v <= n:
                raise VertexIndexError(f"edge {k}: vertex {v} outside [1, {n}]")
        if i == j:
            raise SelfLoopError(f"edge {k}: self-loop at vertex {i}")
        if not (w > 0 and np.isfinite(w)):
            raise NonPositiveWeightError(f"edge {k}: weight must be positive and finite, got {w}")
        key = (min(i, j), max(i, j))
        if key in seen:
            raise DuplicateEdgeError(f"edge {k}: duplicates edge {seen[key]} {key}")
        seen[key] = k
        out.append((key[0], key[1], w))
    out.sort()
    return Graph(n, tuple(out))


def cycle_graph(n: int, weight: float = 1.0) -> Graph:
    return build_graph(n, [(i, i % n + 1, weight) for i in range(1, n + 1)])


def circulant_graph(n: int, offsets: Sequence[int], weight: float = 1.0) -> Graph:
    """Circulant graph C_n(offsets): vertex i joined to i +/- k for each offset."""
    pairs = set()
    for k in offsets:
        for i in range(n):
            j = (i + k) % n
            if i != j:
                pairs.add((min(i, j) + 1, max(i, j) + 1))
    return build_graph(n, [(i, j, weight) for i, j in sorted(pairs)])


def connected_components(g: Graph) -> list[list[int]]:
    nbrs = g.neighbors()
    unseen = set(range(1, g.n + 1))
    comps = []
    for root in range(1, g.n + 1):
        if root not in unseen:
            continue
        unseen.discard(root)
        comp, queue = [root], deque([root])
        while queue:
            v = queue.popleft()
            for u in sorted(nbrs[v]):
                if u in unseen:
                    unseen.discard(u)
                    comp.append(u)
                    queue.append(u)
        comps.append(comp)
    return comps


def is_connected(g: Graph) -> bool:
    return len(connected_components(g)) == 1


@dataclass(frozen=True)
class EdgeOrdering:
    """Oriented edge labelling ``(tail, head, w)`` with spanning-forest edges first.

    For a connected graph the first ``tree_count = n - 1`` edges form a BFS
    spanning tree rooted at vertex 1.
    """

    edges: tuple[tuple[int, int, float], ...]
    tree_count: int

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for _, _, w in self.edges], dtype=float)


def edge_ordering(g: Graph) -> EdgeOrdering:
    nbrs = g.neighbors()
    tree: list[tuple[int, int, float]] = []
    visited: set[int] = set()
    for root in range(1, g.n + 1):
        if root in visited:
            continue
        visited.add(root)
        queue = deque([root])
        while queue:
            v = queue.popleft()
            for u in sorted(nbrs[v]):
                if u not in visited:
                    visited.add(u)
                    queue.append(u)
                    tree.append((min(u, v), max(u, v), nbrs[v][u]))
    in_tree = {(i, j) for i, j, _ in tree}
    rest = [e for e in g.edges if (e[0], e[1]) not in in_tree]
    return EdgeOrdering(tuple(tree + rest), len(tree))


def _check_ordering(g: Graph, order: EdgeOrdering) -> None:
    if sorted((min(i, j), max(i, j), w) for i, j, w in order.edges) != list(g.edges):
        raise OrderingMismatchError("edge ordering does not list exactly the edges of the graph")


def incidence_matrix(g: Graph, order: EdgeOrdering | None = None) -> np.ndarray:
    """m x n incidence matrix: -1 at the tail, +1 at the head of each edge."""
    if order is None:
        order = edge_ordering(g)
    else:
        _check_ordering(g, order)
    H = np.zeros((len(order.edges), g.n))
    for k, (i, j, _) in enumerate(order.edges):
        H[k, i - 1] = -1.0
        H[k, j - 1] = 1.0
    return H


def weight_matrix(g: Graph, order: EdgeOrdering | None = None) -> np.ndarray:
    if order is None:
        order = edge_ordering(g)
    else:
        _check_ordering(g, order)
    return np.diag(order.weights)


@dataclass(frozen=True)
class TreeSplit:
    ordering: EdgeOrdering
    H_tree: np.ndarray
    H_cycle: np.ndarray
    T: np.ndarray

    @property
    def R(self) -> np.ndarray:
        n1 = self.H_tree.shape[0]
        return np.vstack([np.eye(n1), self.T])


def spanning_tree_split(g: Graph) -> TreeSplit:
    """Split H = [H_T; H_C] = [I; T] H_T for a BFS spanning tree."""
    if not is_connected(g):
        raise DisconnectedGraphError("spanning-tree split needs a connected graph")
    order = edge_ordering(g)
    H = incidence_matrix(g, order)
    k = order.tree_count
    HT, HC = H[:k], H[k:]
    # T = H_C H_T^T (H_T H_T^T)^{-1}; the Gram matrix is SPD for a tree
    T = np.linalg.solve(HT @ HT.T, HT @ HC.T).T if HC.size else np.zeros((0, k))
    return TreeSplit(order, HT, HC, T)


def laplacian(g: Graph) -> np.ndarray:
    """Weighted graph Laplacian assembled edge by edge."""
    L = np.zeros((g.n, g.n))
    for i, j, w in g.edges:
        a, b = i - 1, j - 1
        L[a, a] += w
        L[b, b] += w
        L[a, b] -= w
        L[b, a] -= w
    return L
