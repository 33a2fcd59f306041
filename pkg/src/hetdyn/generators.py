"""Seeded graph families and weight schemes used by the example models."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .graph_core import StochasticMatrix, format_real, strongly_connected_components

Family = Literal[
    "erdos_renyi_directed",
    "erdos_renyi",
    "k_regular",
    "lattice2d_radius",
    "small_world_rewired",
    "complete",
    "hub_spoke",
]

MAX_RESAMPLE = 1000


class GraphSpecError(ValueError):
    pass


@dataclass(frozen=True)
class GraphSpec:
    family: Family
    n: int
    params: dict = field(default_factory=dict)
    seed: int = 0


@dataclass(frozen=True, eq=False)
class Graph:
    """Boolean digraph without self-loops; ``adjacency[i, j]`` is the arc i -> j."""

    adjacency: np.ndarray
    undirected: np.ndarray
    resamples: int = 0
    metadata: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    def degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1)

    def edge_list(self) -> list[tuple[int, int]]:
        return [(int(i), int(j)) for i, j in zip(*np.nonzero(self.adjacency))]

    def to_csv(self, weights=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["src", "dst", "weight"])
        wts = None if weights is None else np.asarray(weights)
        for i, j in self.edge_list():
            w.writerow([i, j, format_real(1.0 if wts is None else wts[i, j])])
        return buf.getvalue()


def _undirected(adj: np.ndarray) -> Graph:
    return Graph(adjacency=adj, undirected=adj.copy())


def is_connected(adj: np.ndarray) -> bool:
    labels = strongly_connected_components(adj | adj.T)
    return labels.max() == 0 if labels.size else True


def is_strongly_connected(adj: np.ndarray) -> bool:
    labels = strongly_connected_components(adj)
    return labels.max() == 0 if labels.size else True


def complete(n: int) -> np.ndarray:
    return ~np.eye(n, dtype=bool)


def hub_spoke(n: int) -> np.ndarray:
    adj = np.zeros((n, n), dtype=bool)
    adj[0, 1:] = adj[1:, 0] = True
    return adj


def erdos_renyi(n: int, p: float, rng: np.random.Generator, directed: bool) -> np.ndarray:
    draw = rng.random((n, n)) < p
    np.fill_diagonal(draw, False)
    if directed:
        return draw
    upper = np.triu(draw, 1)
    return upper | upper.T


def k_regular(n: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """Random simple k-regular graph by the pairing model with rejection."""
    if k >= n or (n * k) % 2:
        raise GraphSpecError(f"no simple {k}-regular graph on {n} nodes")
    for _ in range(MAX_RESAMPLE * 10):
        stubs = rng.permutation(np.repeat(np.arange(n), k))
        u, v = stubs[0::2], stubs[1::2]
        if np.any(u == v):
            continue
        adj = np.zeros((n, n), dtype=bool)
        adj[u, v] = True
        adj[v, u] = True
        if adj.sum() == n * k:
            return adj
    raise GraphSpecError(f"pairing model failed for n={n}, k={k}")


def lattice2d(n: int, radius: int, torus: bool = False, metric: str = "chebyshev") -> np.ndarray:
    side = int(round(np.sqrt(n)))
    if side * side != n:
        raise GraphSpecError(f"lattice needs a square node count, got {n}")
    rows, cols = np.divmod(np.arange(n), side)
    dr = np.abs(rows[:, None] - rows[None, :])
    dc = np.abs(cols[:, None] - cols[None, :])
    if torus:
        dr = np.minimum(dr, side - dr)
        dc = np.minimum(dc, side - dc)
    if metric == "chebyshev":
        dist = np.maximum(dr, dc)
    elif metric == "manhattan":
        dist = dr + dc
    else:
        raise GraphSpecError(f"unknown lattice metric {metric!r}")
    adj = dist <= radius
    np.fill_diagonal(adj, False)
    return adj


def rewire(adj: np.ndarray, p: float, rng: np.random.Generator) -> np.ndarray:
    """Watts-Strogatz style: move the far endpoint of each edge with probability p."""
    out = adj.copy()
    for u, v in zip(*np.nonzero(np.triu(adj, 1))):
        if rng.random() >= p:
            continue
        free = np.flatnonzero(~out[u])
        free = free[free != u]
        if free.size == 0:
            continue
        w = free[rng.integers(free.size)]
        out[u, v] = out[v, u] = False
        out[u, w] = out[w, u] = True
    return out


def generate(spec: GraphSpec) -> Graph:
    rng = np.random.default_rng(spec.seed)
    n, prm = spec.n, spec.params
    fam = spec.family
    if n < 1:
        raise GraphSpecError("n must be positive")
    if fam == "complete":
        return _undirected(complete(n))
    if fam == "hub_spoke":
        return _undirected(hub_spoke(n))
    if fam == "lattice2d_radius":
        adj = lattice2d(n, prm.get("radius", 2), prm.get("torus", False), prm.get("metric", "chebyshev"))
        g = _undirected(adj)
        g.metadata.update(metric=prm.get("metric", "chebyshev"), torus=prm.get("torus", False))
        return g

    for attempt in range(MAX_RESAMPLE):
        if fam == "erdos_renyi_directed":
            adj = erdos_renyi(n, prm["p"], rng, directed=True)
            ok = is_strongly_connected(adj) if prm.get("strongly_connected", True) else True
            undirected = adj | adj.T
        elif fam == "erdos_renyi":
            adj = erdos_renyi(n, prm["p"], rng, directed=False)
            ok = is_connected(adj) if prm.get("connected", True) else True
            undirected = adj
        elif fam == "k_regular":
            adj = k_regular(n, prm["k"], rng)
            ok = is_connected(adj) if prm.get("connected", True) else True
            undirected = adj
        elif fam == "small_world_rewired":
            base = lattice2d(n, prm.get("radius", 2), prm.get("torus", False), prm.get("metric", "chebyshev"))
            adj = rewire(base, prm["p"], rng)
            ok = is_connected(adj)
            undirected = adj
        else:
            raise GraphSpecError(f"unknown graph family {fam!r}")
        if ok:
            meta = {}
            if fam == "small_world_rewired":
                meta = {"metric": prm.get("metric", "chebyshev"), "torus": prm.get("torus", False)}
            return Graph(adjacency=adj, undirected=undirected, resamples=attempt, metadata=meta)
    raise GraphSpecError(f"{fam} with {prm} stayed disconnected after {MAX_RESAMPLE} draws")


def row_normalize_weights(graph, scheme: str = "uniform", c: float = 1.0) -> StochasticMatrix:
    """``a_ij = 1/k_i`` (uniform) or ``c/k_i`` (scaled) over out-neighbours."""
    adj = graph.adjacency if isinstance(graph, Graph) else np.asarray(graph, dtype=bool)
    deg = adj.sum(axis=1)
    if np.any(deg == 0):
        raise GraphSpecError(f"node {int(np.flatnonzero(deg == 0)[0])} has no neighbours")
    if scheme == "uniform":
        return StochasticMatrix(adj / deg[:, None], "row_stochastic")
    if scheme == "scaled":
        if not 0 < c <= 1:
            raise GraphSpecError("scale must lie in (0, 1]")
        return StochasticMatrix(c * adj / deg[:, None], "substochastic")
    raise GraphSpecError(f"unknown weight scheme {scheme!r}")


def transitivity(graph) -> float:
    """Global transitivity 3 x triangles / connected triples of the undirected support."""
    adj = graph.undirected if isinstance(graph, Graph) else np.asarray(graph, dtype=bool)
    n = adj.shape[0]
    if n < 3:
        raise ValueError("transitivity needs at least three nodes")
    a = adj.astype(float)
    closed = np.trace(a @ a @ a)
    deg = a.sum(axis=1)
    triples = float((deg * (deg - 1)).sum())
    return float(closed / triples) if triples else 0.0

