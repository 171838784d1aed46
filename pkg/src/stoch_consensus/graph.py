"""Directed information-flow graphs between agents.

Edges are ordered pairs ``(sender, receiver)`` with 1-based node labels: the
edge ``(u, v)`` means agent ``v`` measures agent ``u``'s state, so ``u`` is a
neighbor of ``v``.  Matrices returned here are indexed 0-based in the usual
numpy way (node ``k`` is row/column ``k - 1``).
"""

from __future__ import annotations

from collections import Counter, deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np


class GraphError(ValueError):
    """Raised for malformed graphs or inconsistent graph collections."""


Edge = tuple[int, int]


@dataclass(frozen=True)
class Digraph:
    """Unweighted digraph over nodes ``1..n_nodes``."""

    n_nodes: int
    edges: frozenset[Edge] = field(default_factory=frozenset)

    def __post_init__(self):
        if int(self.n_nodes) != self.n_nodes or self.n_nodes < 1:
            raise GraphError(f"n_nodes must be a positive integer, got {self.n_nodes!r}")
        edges = frozenset((int(u), int(v)) for u, v in self.edges)
        for u, v in edges:
            if u == v:
                raise GraphError(f"self-loop ({u},{v}) is not allowed")
            if not (1 <= u <= self.n_nodes and 1 <= v <= self.n_nodes):
                raise GraphError(f"edge ({u},{v}) references a node outside 1..{self.n_nodes}")
        object.__setattr__(self, "edges", edges)

    @classmethod
    def from_edges(cls, n_nodes: int, edges: Iterable[Sequence[int]]) -> "Digraph":
        pairs = [tuple(e) for e in edges]
        for e in pairs:
            if len(e) != 2:
                raise GraphError(f"edge {list(e)!r} must have exactly two endpoints")
        if len(set(pairs)) != len(pairs):
            raise GraphError("duplicate edges in edge list")
        return cls(n_nodes, frozenset(pairs))

    @classmethod
    def undirected(cls, n_nodes: int, pairs: Iterable[Sequence[int]]) -> "Digraph":
        """Both orientations of every listed pair."""
        edges = set()
        for u, v in pairs:
            edges.add((u, v))
            edges.add((v, u))
        return cls(n_nodes, frozenset(edges))

    @classmethod
    def from_literal(cls, obj: Mapping) -> "Digraph":
        """Parse ``{"n": 4, "edges": [[3, 1], ...]}``."""
        return cls.from_edges(obj["n"], obj["edges"])

    def to_literal(self) -> dict:
        return {"n": self.n_nodes, "edges": [list(e) for e in self.sorted_edges()]}

    def sorted_edges(self) -> list[Edge]:
        """Edges in a canonical order (by receiver, then sender)."""
        return sorted(self.edges, key=lambda e: (e[1], e[0]))

    def neighbors(self, node: int) -> list[int]:
        """Senders whose state ``node`` receives."""
        return sorted(u for u, v in self.edges if v == node)

    def in_degrees(self) -> np.ndarray:
        deg = np.zeros(self.n_nodes, dtype=np.int64)
        for _, v in self.edges:
            deg[v - 1] += 1
        return deg

    def out_degrees(self) -> np.ndarray:
        deg = np.zeros(self.n_nodes, dtype=np.int64)
        for u, _ in self.edges:
            deg[u - 1] += 1
        return deg


@dataclass(frozen=True)
class NoiseProfile:
    """Per-edge multiplicative noise intensities; non-edges read as 0."""

    sigma: Mapping[Edge, float]

    def __post_init__(self):
        clean = {}
        for (u, v), s in dict(self.sigma).items():
            s = float(s)
            if not np.isfinite(s) or s < 0:
                raise GraphError(f"noise intensity for edge ({u},{v}) must be finite and >= 0, got {s}")
            clean[(int(u), int(v))] = s
        object.__setattr__(self, "sigma", clean)

    @classmethod
    def uniform(cls, graphs: Iterable[Digraph], value: float) -> "NoiseProfile":
        edges = set()
        for g in graphs:
            edges |= g.edges
        return cls({e: value for e in edges})

    def __call__(self, u: int, v: int) -> float:
        return self.sigma.get((u, v), 0.0)

    def max_sigma(self) -> float:
        return max(self.sigma.values(), default=0.0)

    def is_zero(self) -> bool:
        return self.max_sigma() == 0.0

    def scaled(self, factor: float) -> "NoiseProfile":
        return NoiseProfile({e: factor * s for e, s in self.sigma.items()})


@dataclass(frozen=True)
class GraphPartition:
    active_nodes: frozenset[int]
    isolated_nodes: frozenset[int]


def laplacian(g: Digraph) -> np.ndarray:
    """In-degree Laplacian: ``L[i, i]`` counts senders to ``i``, ``L[i, j] = -1`` for each edge ``j -> i``."""
    L = np.zeros((g.n_nodes, g.n_nodes))
    for u, v in g.edges:
        L[v - 1, u - 1] -= 1.0
        L[v - 1, v - 1] += 1.0
    return L


def _reachable_from(g: Digraph, root: int, succ: Mapping[int, list[int]]) -> set[int]:
    seen = {root}
    queue = deque([root])
    while queue:
        u = queue.popleft()
        for v in succ.get(u, ()):
            if v not in seen:
                seen.add(v)
                queue.append(v)
    return seen


def spanning_tree_roots(g: Digraph) -> list[int]:
    """All nodes from which every other node is reachable along edge direction."""
    succ: dict[int, list[int]] = {}
    for u, v in g.edges:
        succ.setdefault(u, []).append(v)
    return [r for r in range(1, g.n_nodes + 1) if len(_reachable_from(g, r, succ)) == g.n_nodes]


def has_spanning_tree(g: Digraph) -> bool:
    return bool(spanning_tree_roots(g))


def is_balanced(g: Digraph) -> bool:
    """In-degree equals out-degree at every node."""
    return bool(np.array_equal(g.in_degrees(), g.out_degrees()))


def union(gs: Sequence[Digraph]) -> Digraph:
    if not gs:
        raise GraphError("union of an empty graph collection is undefined")
    n = gs[0].n_nodes
    edges: set[Edge] = set()
    for g in gs:
        if g.n_nodes != n:
            raise GraphError(f"inconsistent scenario: graphs have {n} and {g.n_nodes} nodes")
        edges |= g.edges
    return Digraph(n, frozenset(edges))


def partition_active(g: Digraph) -> GraphPartition:
    touched = {u for e in g.edges for u in e}
    isolated = frozenset(range(1, g.n_nodes + 1)) - touched
    return GraphPartition(frozenset(touched), isolated)


def disagreement_form(g: Digraph) -> np.ndarray:
    """Matrix ``H`` with ``x @ H @ x == 0.5 * sum over edges (j -> i) of (x_j - x_i)**2``."""
    H = np.zeros((g.n_nodes, g.n_nodes))
    for u, v in g.edges:
        i, j = u - 1, v - 1
        H[i, i] += 0.5
        H[j, j] += 0.5
        H[i, j] -= 0.5
        H[j, i] -= 0.5
    return H


def edge_multiplicity(gs: Sequence[Digraph]) -> int:
    """Largest number of graphs in ``gs`` sharing a single edge."""
    if not gs:
        raise GraphError("edge multiplicity of an empty collection is undefined")
    counts = Counter(e for g in gs for e in g.edges)
    if not counts:
        raise GraphError("edge multiplicity is undefined: the union has no edges")
    return max(counts.values())
