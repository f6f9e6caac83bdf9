"""Undirected simple graphs and the random / geographic generators.

Graphs are immutable value objects with a fixed node order ``0..n-1`` and a
canonical edge list of pairs ``(u, v)`` with ``u < v``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import networkx as nx
import numpy as np

from .errors import ParameterError

EARTH_RADIUS_KM = 6371.0


@dataclass(frozen=True)
class Graph:
    """Undirected, unweighted simple graph.

    Build with :meth:`Graph.from_edges`; the constructor expects already
    canonical data and only validates it.
    """

    n: int
    edges: tuple[tuple[int, int], ...]
    adjacency: tuple[tuple[int, ...], ...] = field(repr=False)
    edge_index: dict = field(repr=False, compare=False, hash=False)

    def __post_init__(self):
        if self.n < 1:
            raise ParameterError(f"graph needs at least one node, got n={self.n}")
        seen = set()
        for u, v in self.edges:
            if not (0 <= u < v < self.n):
                raise ParameterError(f"edge ({u}, {v}) is not canonical for n={self.n}")
            if (u, v) in seen:
                raise ParameterError(f"duplicate edge ({u}, {v})")
            seen.add((u, v))
        if len(self.adjacency) != self.n:
            raise ParameterError("adjacency length does not match n")

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[Sequence[int]]) -> "Graph":
        """Canonicalize ``edges`` (orientation, order, duplicates) into a Graph.

        Self-loops are rejected; repeated edges collapse to one.
        """
        canon = set()
        for e in edges:
            u, v = int(e[0]), int(e[1])
            if u == v:
                raise ParameterError(f"self-loop at node {u}")
            if not (0 <= u < n and 0 <= v < n):
                raise ParameterError(f"edge ({u}, {v}) out of range for n={n}")
            canon.add((min(u, v), max(u, v)))
        ordered = tuple(sorted(canon))
        nbrs: list[list[int]] = [[] for _ in range(n)]
        for u, v in ordered:
            nbrs[u].append(v)
            nbrs[v].append(u)
        adjacency = tuple(tuple(sorted(a)) for a in nbrs)
        index = {e: i for i, e in enumerate(ordered)}
        return cls(n=n, edges=ordered, adjacency=adjacency, edge_index=index)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def degrees(self) -> np.ndarray:
        return np.array([len(a) for a in self.adjacency], dtype=int)

    @property
    def max_degree(self) -> int:
        return int(self.degrees.max()) if self.n else 0

    def neighbors(self, v: int) -> tuple[int, ...]:
        return self.adjacency[v]

    def has_edge(self, u: int, v: int) -> bool:
        return (min(u, v), max(u, v)) in self.edge_index

    def edge_id(self, u: int, v: int) -> int:
        """Position of edge {u, v} in the canonical edge list."""
        try:
            return self.edge_index[(min(u, v), max(u, v))]
        except KeyError:
            raise ParameterError(f"({u}, {v}) is not an edge") from None

    def edge_array(self) -> np.ndarray:
        return np.asarray(self.edges, dtype=int).reshape(-1, 2)

    def is_connected(self) -> bool:
        if self.n == 0:
            return True
        seen = {0}
        stack = [0]
        while stack:
            v = stack.pop()
            for u in self.adjacency[v]:
                if u not in seen:
                    seen.add(u)
                    stack.append(u)
        return len(seen) == self.n

    def laplacian(self) -> np.ndarray:
        """Combinatorial graph Laplacian ``D - A`` as an integer matrix."""
        L = np.zeros((self.n, self.n), dtype=np.int64)
        for u, v in self.edges:
            L[u, v] -= 1
            L[v, u] -= 1
            L[u, u] += 1
            L[v, v] += 1
        return L

    def default_orientation(self) -> "Orientation":
        return Orientation(self, tuple(self.edges))

    def to_networkx(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(range(self.n))
        g.add_edges_from(self.edges)
        return g

    def to_dict(self) -> dict:
        return {"n": self.n, "edges": [list(e) for e in self.edges]}

    @classmethod
    def from_dict(cls, data: dict) -> "Graph":
        return cls.from_edges(int(data["n"]), data["edges"])


@dataclass(frozen=True)
class Orientation:
    """A (source, target) choice for every edge, aligned with ``graph.edges``."""

    graph: Graph
    arcs: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if len(self.arcs) != self.graph.n_edges:
            raise ParameterError("orientation must assign every edge exactly once")
        for (s, t), (u, v) in zip(self.arcs, self.graph.edges):
            if {s, t} != {u, v}:
                raise ParameterError(f"arc ({s}, {t}) does not match edge ({u}, {v})")

    def flipped(self, edge_ids: Iterable[int]) -> "Orientation":
        flip = set(edge_ids)
        arcs = tuple((t, s) if i in flip else (s, t) for i, (s, t) in enumerate(self.arcs))
        return Orientation(self.graph, arcs)


def _from_nx(g: nx.Graph) -> Graph:
    return Graph.from_edges(g.number_of_nodes(), g.edges())


def barabasi_albert(n: int, m: int, seed: int = 0) -> Graph:
    """Preferential-attachment graph grown from an ``m``-node clique.

    Each of the ``n - m`` new nodes attaches to ``m`` distinct existing nodes
    with probability proportional to degree, so the edge count is always
    ``m(m-1)/2 + (n-m)m``.
    """
    if not (1 <= m < n):
        raise ParameterError(f"barabasi_albert requires 1 <= m < n, got n={n}, m={m}")
    g = nx.barabasi_albert_graph(n, m, seed=int(seed), initial_graph=nx.complete_graph(m))
    return _from_nx(g)


def watts_strogatz(n: int, k: int, p: float, seed: int = 0, max_tries: int = 1000) -> Graph:
    """Small-world ring lattice with per-edge rewiring probability ``p``.

    Disconnected draws are regenerated with ``seed + 1, seed + 2, ...``.
    """
    if k % 2 != 0 or not (0 < k < n):
        raise ParameterError(f"watts_strogatz requires even 0 < k < n, got n={n}, k={k}")
    if not (0.0 <= p <= 1.0):
        raise ParameterError(f"rewiring probability must lie in [0, 1], got {p}")
    for attempt in range(max_tries):
        g = nx.watts_strogatz_graph(n, k, p, seed=int(seed) + attempt)
        if nx.is_connected(g):
            return _from_nx(g)
    raise ParameterError(f"no connected Watts-Strogatz draw within {max_tries} seeds")


def haversine_km(lat1, lon1, lat2, lon2):
    """Great-circle distance on a sphere of radius 6371 km (degrees in)."""
    phi1, phi2 = np.radians(lat1), np.radians(lat2)
    dphi = phi2 - phi1
    dlmb = np.radians(np.asarray(lon2) - np.asarray(lon1))
    a = np.sin(dphi / 2) ** 2 + np.cos(phi1) * np.cos(phi2) * np.sin(dlmb / 2) ** 2
    return 2 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))


def geo_graph(coords: Sequence[Sequence[float]], radius_km: float) -> Graph:
    """Connect every pair of (lat, lon) points within ``radius_km``."""
    pts = np.asarray(coords, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
        raise ParameterError("geo_graph needs at least 2 (latitude, longitude) pairs")
    if not radius_km > 0:
        raise ParameterError(f"radius must be positive, got {radius_km}")
    lat, lon = pts[:, 0], pts[:, 1]
    dist = haversine_km(lat[:, None], lon[:, None], lat[None, :], lon[None, :])
    iu, ju = np.triu_indices(len(pts), k=1)
    mask = dist[iu, ju] <= radius_km
    return Graph.from_edges(len(pts), zip(iu[mask], ju[mask]))
