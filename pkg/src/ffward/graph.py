"""Undirected communication graphs."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class DisconnectedGraphError(ValueError):
    pass


@dataclass(frozen=True)
class CommGraph:
    num_nodes: int
    edges: frozenset  # of (u, v) with u < v

    def __post_init__(self):
        norm = set()
        for u, v in self.edges:
            u, v = int(u), int(v)
            if u == v:
                raise ValueError(f"self-loop at node {u}")
            if not (0 <= u < self.num_nodes and 0 <= v < self.num_nodes):
                raise ValueError(f"edge ({u}, {v}) outside 0..{self.num_nodes - 1}")
            norm.add((min(u, v), max(u, v)))
        object.__setattr__(self, "edges", frozenset(norm))
        if self.num_nodes < 2:
            raise ValueError("need at least two nodes")
        if any(np.isinf(self.eccentricities())):
            raise DisconnectedGraphError("communication graph is not connected")

    def neighbors(self, i: int) -> list[int]:
        return sorted([v for u, v in self.edges if u == i] + [u for u, v in self.edges if v == i])

    def closed_neighborhood(self, i: int) -> list[int]:
        return sorted(self.neighbors(i) + [i])

    def eccentricities(self) -> np.ndarray:
        adj = [[] for _ in range(self.num_nodes)]
        for u, v in self.edges:
            adj[u].append(v)
            adj[v].append(u)
        ecc = np.zeros(self.num_nodes)
        for s in range(self.num_nodes):
            dist = {s: 0}
            queue = deque([s])
            while queue:
                x = queue.popleft()
                for y in adj[x]:
                    if y not in dist:
                        dist[y] = dist[x] + 1
                        queue.append(y)
            ecc[s] = max(dist.values()) if len(dist) == self.num_nodes else np.inf
        return ecc

    @property
    def diameter(self) -> int:
        return int(self.eccentricities().max())

    @classmethod
    def from_edges(cls, num_nodes: int, edges) -> "CommGraph":
        return cls(num_nodes, frozenset(tuple(e) for e in edges))

    @classmethod
    def complete(cls, n: int) -> "CommGraph":
        return cls.from_edges(n, [(i, j) for i in range(n) for j in range(i + 1, n)])

    @classmethod
    def path(cls, n: int) -> "CommGraph":
        return cls.from_edges(n, [(i, i + 1) for i in range(n - 1)])

    @classmethod
    def ring(cls, n: int) -> "CommGraph":
        if n < 3:
            return cls.path(n)
        return cls.from_edges(n, [(i, (i + 1) % n) for i in range(n)])

    @classmethod
    def named(cls, name: str, n: int) -> "CommGraph":
        builders = {"complete": cls.complete, "path": cls.path, "ring": cls.ring}
        if name not in builders:
            raise ValueError(f"unknown graph {name!r}; expected one of {sorted(builders)}")
        return builders[name](n)

    def to_edgelist(self) -> str:
        return "".join(f"{u} {v}\n" for u, v in sorted(self.edges))


def read_edgelist(path, num_nodes: int | None = None) -> CommGraph:
    """Parse lines ``"u v"``; blank lines and ``#`` comments are ignored."""
    edges = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"{path}:{lineno}: expected 'u v', got {line!r}")
        edges.append((int(parts[0]), int(parts[1])))
    n = num_nodes if num_nodes is not None else 1 + max(max(e) for e in edges)
    return CommGraph.from_edges(n, edges)
