"""Periodic hypercubic lattices and small generic graphs.

Sites are integers ``0..N-1``. On a torus the coordinate of site ``i`` is
row-major with axis 0 fastest, i.e. ``i = x0 + L*x1 + L**2*x2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


class LatticeError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected simple graph with sorted, deduplicated edges ``(i, j)``, ``i < j``."""

    n_sites: int
    edges: np.ndarray
    neighbors: tuple = field(repr=False)

    @classmethod
    def from_edges(cls, n_sites: int, edges: Iterable[Sequence[int]]) -> "Graph":
        if n_sites < 1:
            raise LatticeError(f"graph needs at least one site, got {n_sites}")
        pairs = set()
        for i, j in edges:
            i, j = int(i), int(j)
            if i == j:
                continue
            if not (0 <= i < n_sites and 0 <= j < n_sites):
                raise LatticeError(f"edge ({i}, {j}) out of range for {n_sites} sites")
            pairs.add((min(i, j), max(i, j)))
        arr = np.array(sorted(pairs), dtype=np.int64).reshape(-1, 2)
        nbrs = [[] for _ in range(n_sites)]
        for i, j in arr:
            nbrs[i].append(int(j))
            nbrs[j].append(int(i))
        return cls(n_sites, arr, tuple(tuple(sorted(n)) for n in nbrs))

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def degree(self, i: int) -> int:
        return len(self.neighbors[i])

    def laplacian(self, weights=None) -> np.ndarray:
        """Dense weighted graph Laplacian (row sums zero)."""
        w = np.ones(self.n_edges) if weights is None else np.asarray(weights, float)
        lap = np.zeros((self.n_sites, self.n_sites))
        i, j = self.edges[:, 0], self.edges[:, 1]
        np.add.at(lap, (i, j), -w)
        np.add.at(lap, (j, i), -w)
        np.add.at(lap, (i, i), w)
        np.add.at(lap, (j, j), w)
        return lap

    def is_connected(self, sites=None) -> bool:
        return len(connected_components(self, sites)) <= 1


def connected_components(graph: Graph, sites=None) -> list[list[int]]:
    """NN-connected components of the induced subgraph on ``sites`` (all sites if None)."""
    members = set(range(graph.n_sites)) if sites is None else {int(s) for s in sites}
    seen: set[int] = set()
    comps = []
    for start in sorted(members):
        if start in seen:
            continue
        comp, stack = [], [start]
        seen.add(start)
        while stack:
            v = stack.pop()
            comp.append(v)
            for w in graph.neighbors[v]:
                if w in members and w not in seen:
                    seen.add(w)
                    stack.append(w)
        comps.append(sorted(comp))
    return comps


@dataclass(frozen=True, eq=False)
class Torus(Graph):
    """Periodic ``d``-dimensional cube of side ``L`` with unit NN couplings."""

    d: int = 1
    L: int = 1
    coords: np.ndarray = field(default=None, repr=False)

    def site(self, coord: Sequence[int]) -> int:
        c = np.mod(np.asarray(coord, dtype=np.int64), self.L)
        if c.shape != (self.d,):
            raise LatticeError(f"expected {self.d} coordinates, got {tuple(coord)}")
        return int(np.dot(c, self.L ** np.arange(self.d)))

    def coord(self, i: int) -> np.ndarray:
        return self.coords[i].copy()

    def shift(self, i: int, offset: Sequence[int]) -> int:
        return self.site(self.coords[i] + np.asarray(offset))

    def wrapped_offset(self, x: int, y: int) -> np.ndarray:
        """Per-axis displacement y - x folded into ``(-L/2, L/2]``."""
        delta = np.mod(self.coords[y] - self.coords[x], self.L)
        return np.where(delta > self.L // 2, delta - self.L, delta)

    def distance(self, x: int, y: int) -> int:
        return torus_distance(self, x, y)

    def euclidean_distance(self, x: int, y: int) -> float:
        return float(np.linalg.norm(self.wrapped_offset(x, y)))

    def distances_from(self, x: int, metric: str = "l1") -> np.ndarray:
        """Vector of torus distances from ``x`` to every site."""
        delta = np.abs(self.coords - self.coords[x])
        delta = np.minimum(delta, self.L - delta)
        if metric == "l1":
            return delta.sum(axis=1)
        if metric == "euclidean":
            return np.sqrt((delta.astype(float) ** 2).sum(axis=1))
        raise LatticeError(f"unknown metric {metric!r}")

    def fourier_eigenvalues(self) -> np.ndarray:
        """Eigenvalues of -Laplacian, ``sum_a 2(1 - cos(2 pi k_a / L))``, in site order."""
        lam1 = 2.0 - 2.0 * np.cos(2.0 * np.pi * np.arange(self.L) / self.L)
        if self.L == 2:
            # the two antiparallel bonds are merged into one edge
            lam1 = lam1 / 2.0
        return lam1[self.coords].sum(axis=1)


def build_torus(d: int, L: int) -> Torus:
    """Periodic lattice with ``L**d`` sites.

    ``L = 1`` is accepted and gives an isolated single site. For ``L = 2`` the
    forward and backward bond along an axis join the same pair and are kept once.
    """
    if d not in (1, 2, 3):
        raise LatticeError(f"dimension must be 1, 2 or 3, got {d}")
    if L < 1:
        raise LatticeError(f"side length must be >= 1, got {L}")
    n = L**d
    idx = np.arange(n)
    coords = np.stack([(idx // L**a) % L for a in range(d)], axis=1)
    edges = []
    if L > 1:
        for a in range(d):
            fwd = coords.copy()
            fwd[:, a] = (fwd[:, a] + 1) % L
            nb = fwd @ (L ** np.arange(d))
            edges.extend(zip(idx.tolist(), nb.tolist()))
    g = Graph.from_edges(n, edges)
    return Torus(n, g.edges, g.neighbors, d=d, L=L, coords=coords)


def torus_distance(torus: Torus, x: int, y: int) -> int:
    """L1 metric with per-axis wraparound."""
    delta = np.abs(torus.coords[x] - torus.coords[y])
    return int(np.minimum(delta, torus.L - delta).sum())


def euclidean_torus_distance(torus: Torus, x: int, y: int) -> float:
    return torus.euclidean_distance(x, y)


def path_graph(n: int) -> Graph:
    return Graph.from_edges(n, [(i, i + 1) for i in range(n - 1)])


def star_graph(n_leaves: int) -> Graph:
    """Center ``0`` joined to leaves ``1..n_leaves``."""
    return Graph.from_edges(n_leaves + 1, [(0, k) for k in range(1, n_leaves + 1)])


def cycle_graph(n: int) -> Graph:
    return Graph.from_edges(n, [(i, (i + 1) % n) for i in range(n)])
