"""Undirected communication graphs and the constants the gain bounds need."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import Disconnected, InvalidSize, NodeOutOfRange

# Six agents on a ring with two chords; stands in for the unpublished
# six-node example topology (override with an explicit edge list).
DEFAULT_SIX_NODE_EDGES = ((0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0), (0, 3), (1, 4))


@dataclass(frozen=True)
class GraphConstants:
    n_nodes: int
    n_edges: int
    algebraic_connectivity: float


@dataclass(frozen=True)
class Network:
    """Connected undirected simple graph on nodes ``0..n_nodes-1``.

    Edges are stored once each as ``(i, j)`` with ``i < j``.
    """

    n_nodes: int
    edges: tuple[tuple[int, int], ...] = field(default=())

    def __post_init__(self):
        if self.n_nodes < 1:
            raise InvalidSize("a network needs at least one node")
        seen = set()
        for e in self.edges:
            i, j = int(e[0]), int(e[1])
            if i == j:
                raise InvalidSize(f"self-loop at node {i}")
            for k in (i, j):
                if not 0 <= k < self.n_nodes:
                    raise NodeOutOfRange(f"edge ({i}, {j}) references node {k}")
            key = (min(i, j), max(i, j))
            if key in seen:
                raise InvalidSize(f"duplicate edge {key}")
            seen.add(key)
        object.__setattr__(self, "edges", tuple(sorted(seen)))
        if not self.is_connected():
            raise Disconnected("communication graph must be connected")

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def neighbors(self, i: int) -> set[int]:
        if not 0 <= i < self.n_nodes:
            raise NodeOutOfRange(f"node {i} not in 0..{self.n_nodes - 1}")
        return self._adjacency[i]

    @cached_property
    def _adjacency(self) -> tuple[frozenset[int], ...]:
        adj = [set() for _ in range(self.n_nodes)]
        for i, j in self.edges:
            adj[i].add(j)
            adj[j].add(i)
        return tuple(frozenset(a) for a in adj)

    def is_connected(self) -> bool:
        adj = self._adjacency
        seen = {0}
        queue = deque([0])
        while queue:
            for j in adj[queue.popleft()]:
                if j not in seen:
                    seen.add(j)
                    queue.append(j)
        return len(seen) == self.n_nodes

    @cached_property
    def edge_index(self) -> tuple[np.ndarray, np.ndarray]:
        """Endpoint arrays ``(tails, heads)`` with ``tails[e] < heads[e]``."""
        if not self.edges:
            return np.zeros(0, dtype=int), np.zeros(0, dtype=int)
        arr = np.asarray(self.edges, dtype=int)
        return arr[:, 0].copy(), arr[:, 1].copy()

    @cached_property
    def incidence(self) -> np.ndarray:
        """``N x E`` matrix with ``+1`` at the tail and ``-1`` at the head of each edge."""
        tails, heads = self.edge_index
        B = np.zeros((self.n_nodes, self.n_edges))
        cols = np.arange(self.n_edges)
        B[tails, cols] = 1.0
        B[heads, cols] = -1.0
        return B

    def laplacian(self) -> np.ndarray:
        B = self.incidence
        return B @ B.T

    def constants(self) -> GraphConstants:
        return GraphConstants(self.n_nodes, self.n_edges, algebraic_connectivity(self))

    def to_dict(self) -> dict:
        return {"n_nodes": self.n_nodes, "edges": [list(e) for e in self.edges]}


def algebraic_connectivity(g: Network) -> float:
    """Second-smallest eigenvalue of the Laplacian ``D - A``."""
    if g.n_nodes < 2:
        raise InvalidSize("algebraic connectivity needs at least two nodes")
    ev = np.linalg.eigvalsh(g.laplacian())
    lam = float(ev[1])
    if lam <= 1e-12:
        raise Disconnected("Laplacian has a repeated zero eigenvalue")
    return lam


def make_cycle(n: int) -> Network:
    if n < 3:
        # a 2-cycle would duplicate its only edge
        if n == 2:
            return make_path(2)
        raise InvalidSize("cycle needs N >= 2")
    return Network(n, tuple((i, (i + 1) % n) for i in range(n)))


def make_path(n: int) -> Network:
    if n < 2:
        raise InvalidSize("path needs N >= 2")
    return Network(n, tuple((i, i + 1) for i in range(n - 1)))


def make_complete(n: int) -> Network:
    if n < 2:
        raise InvalidSize("complete graph needs N >= 2")
    return Network(n, tuple((i, j) for i in range(n) for j in range(i + 1, n)))


def make_from_edges(n: int, edges) -> Network:
    if n < 2:
        raise InvalidSize("graph needs N >= 2")
    return Network(n, tuple((int(a), int(b)) for a, b in edges))


def default_six_node() -> Network:
    return Network(6, DEFAULT_SIX_NODE_EDGES)
