"""Communication graphs and their Laplacians."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import GraphError

TOPOLOGIES = ("ring", "complete", "star", "path")


@dataclass(frozen=True)
class CommGraph:
    """Undirected, connected communication graph.

    Attributes
    ----------
    n : int
        Number of nodes (agents), indexed ``0 .. n-1``.
    edges : frozenset of tuple
        Unordered pairs stored as ``(min, max)``.
    name : str
        Label used in reports (``"ring"``, ``"edges"``, ...).
    """

    n: int
    edges: frozenset
    name: str = "edges"
    laplacian: np.ndarray = field(init=False, repr=False, compare=False)
    kappa: float = field(init=False, compare=False)

    def __post_init__(self):
        L = np.zeros((self.n, self.n), dtype=np.int64)
        for i, j in self.edges:
            L[i, j] -= 1
            L[j, i] -= 1
            L[i, i] += 1
            L[j, j] += 1
        L = L.astype(float)
        L.setflags(write=False)
        object.__setattr__(self, "laplacian", L)
        object.__setattr__(self, "kappa", float(np.linalg.eigvalsh(L)[-1]))

    @property
    def neighbors(self) -> tuple[tuple[int, ...], ...]:
        nbrs = [[] for _ in range(self.n)]
        for i, j in sorted(self.edges):
            nbrs[i].append(j)
            nbrs[j].append(i)
        return tuple(tuple(sorted(v)) for v in nbrs)

    @property
    def degrees(self) -> np.ndarray:
        return np.diag(self.laplacian).copy()

    @property
    def algebraic_connectivity(self) -> float:
        return float(np.linalg.eigvalsh(self.laplacian)[1]) if self.n > 1 else 0.0

    def is_connected(self) -> bool:
        """Breadth-first reachability from node 0."""
        if self.n == 0:
            return False
        seen = {0}
        queue = deque([0])
        nbrs = self.neighbors
        while queue:
            for j in nbrs[queue.popleft()]:
                if j not in seen:
                    seen.add(j)
                    queue.append(j)
        return len(seen) == self.n

    def to_dict(self) -> dict:
        if self.name in TOPOLOGIES:
            return {"kind": self.name, "n": self.n}
        return {"kind": "edges", "n": self.n, "edges": [list(e) for e in sorted(self.edges)]}


def from_edges(n: int, edges: Iterable, name: str = "edges") -> CommGraph:
    """Build a graph from an edge list, rejecting loops, bad indices and disconnection."""
    if n < 2:
        raise GraphError(f"need at least 2 nodes, got {n}")
    canon = set()
    for e in edges:
        i, j = (int(v) for v in e)
        if i == j:
            raise GraphError(f"self-loop at node {i}")
        if not (0 <= i < n and 0 <= j < n):
            raise GraphError(f"edge ({i}, {j}) out of range for {n} nodes")
        canon.add((min(i, j), max(i, j)))
    g = CommGraph(n, frozenset(canon), name)
    if not g.is_connected():
        raise GraphError(f"graph {name!r} on {n} nodes is disconnected")
    return g


def make_topology(kind: str, n: int, edges: Iterable | None = None) -> CommGraph:
    """Named topology on ``n`` nodes; ``kind="edges"`` takes an explicit edge list."""
    if n < 2:
        raise GraphError(f"need at least 2 nodes, got {n}")
    if kind == "ring":
        # ring on 2 nodes degenerates to the single edge
        e = {(i, (i + 1) % n) for i in range(n)} if n > 2 else {(0, 1)}
    elif kind == "complete":
        e = {(i, j) for i in range(n) for j in range(i + 1, n)}
    elif kind == "star":
        e = {(0, j) for j in range(1, n)}
    elif kind == "path":
        e = {(i, i + 1) for i in range(n - 1)}
    elif kind == "edges":
        if edges is None:
            raise GraphError("edge-list topology needs 'edges'")
        return from_edges(n, edges)
    else:
        raise GraphError(f"unknown topology {kind!r}")
    return from_edges(n, e, name=kind)


def kron_laplacian(g: CommGraph, blocksize: int) -> np.ndarray:
    """``L (x) I_blocksize``."""
    if blocksize < 1:
        raise ValueError("blocksize must be >= 1")
    return np.kron(g.laplacian, np.eye(blocksize))
