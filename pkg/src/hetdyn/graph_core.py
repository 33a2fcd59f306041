"""Dense stochastic matrices, SCC structure and infinite-graph estimation.

Edges follow the update convention: ``A[i, j] > 0`` means node ``i`` listens
to node ``j``, so the edge runs ``i -> j`` and walks travel along it.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from typing import Literal

import numpy as np

ROW_SUM_TOL = 1e-12

MatrixKind = Literal["row_stochastic", "substochastic", "nonnegative"]


class DimensionError(ValueError):
    pass


class TopologyError(RuntimeError):
    """Raised when a topology report does not match the matrix it is applied to."""


@dataclass(frozen=True, eq=False)
class StochasticMatrix:
    """Immutable dense nonnegative matrix with an optional row-sum contract.

    ``kind`` selects the contract: ``row_stochastic`` rows sum to one,
    ``substochastic`` rows sum to at most one, ``nonnegative`` only checks
    signs. Entries are copied and frozen on construction; rows are never
    renormalised behind the caller's back (use :meth:`normalized`).
    """

    entries: np.ndarray
    kind: MatrixKind = "row_stochastic"

    def __post_init__(self):
        arr = np.array(self.entries, dtype=float, copy=True)
        if arr.ndim != 2:
            raise DimensionError(f"expected a 2-D matrix, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("matrix has non-finite entries")
        if np.any(arr < 0):
            i, j = np.argwhere(arr < 0)[0]
            raise ValueError(f"negative entry at ({i}, {j}): {arr[i, j]!r}")
        sums = arr.sum(axis=1)
        if self.kind == "row_stochastic":
            bad = np.flatnonzero(np.abs(sums - 1.0) > ROW_SUM_TOL)
            if bad.size:
                raise ValueError(f"row {bad[0]} sums to {sums[bad[0]]!r}, not 1")
        elif self.kind == "substochastic":
            bad = np.flatnonzero(sums > 1.0 + ROW_SUM_TOL)
            if bad.size:
                raise ValueError(f"row {bad[0]} sums to {sums[bad[0]]!r} > 1")
        elif self.kind != "nonnegative":
            raise ValueError(f"unknown matrix kind {self.kind!r}")
        arr.setflags(write=False)
        object.__setattr__(self, "entries", arr)

    @classmethod
    def normalized(cls, weights) -> "StochasticMatrix":
        """Row-normalise nonnegative ``weights``; zero rows are rejected."""
        w = np.asarray(weights, dtype=float)
        sums = w.sum(axis=1)
        if np.any(sums <= 0):
            raise ValueError(f"row {int(np.flatnonzero(sums <= 0)[0])} has no weight")
        return cls(w / sums[:, None], "row_stochastic")

    @property
    def n_rows(self) -> int:
        return self.entries.shape[0]

    @property
    def n_cols(self) -> int:
        return self.entries.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)

    def to_envelope(self, d: int | None = None) -> dict:
        return {
            "n": self.n_rows,
            "d": self.n_cols if d is None else d,
            "entries": self.entries.tolist(),
            "row_stochastic": self.kind == "row_stochastic",
        }

    @classmethod
    def from_envelope(cls, env: dict) -> "StochasticMatrix":
        entries = np.asarray(env["entries"], dtype=float)
        if entries.shape[0] != env["n"]:
            raise DimensionError(f"envelope says n={env['n']} but has {entries.shape[0]} rows")
        kind = "row_stochastic" if env.get("row_stochastic", False) else "nonnegative"
        return cls(entries, kind)


def as_array(m) -> np.ndarray:
    if isinstance(m, StochasticMatrix):
        return m.entries
    return np.asarray(m, dtype=float)


# ---------------------------------------------------------------- exchange


def format_real(v: float) -> str:
    return format(float(v), ".17g")


def matrix_to_csv(m) -> str:
    arr = as_array(m)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for row in arr:
        writer.writerow([format_real(v) for v in row])
    return buf.getvalue()


def matrix_from_csv(text: str) -> np.ndarray:
    rows = [r for r in csv.reader(io.StringIO(text)) if r]
    arr = np.array([[float(v) for v in r] for r in rows], dtype=float)
    if len({len(r) for r in rows}) > 1:
        raise DimensionError("ragged CSV matrix")
    return arr


def matrix_to_json(m, d: int | None = None) -> str:
    if not isinstance(m, StochasticMatrix):
        m = StochasticMatrix(m, "nonnegative")
    return json.dumps(m.to_envelope(d))


def matrix_from_json(text: str) -> StochasticMatrix:
    return StochasticMatrix.from_envelope(json.loads(text))


# ---------------------------------------------------------------- topology


@dataclass(frozen=True)
class TopologyReport:
    """Strong-component structure of a digraph (or of an estimated G-infinity).

    ``scc_ids[i]`` labels node ``i``; labels are ordered by the smallest node
    they contain. ``longest_exit_distance`` is the largest hop count from a
    quasi-connected node to the nearest sink-component node.
    ``realization_period`` is ``None`` unless estimated from a sequence.
    """

    scc_ids: np.ndarray
    sink_sccs: tuple[int, ...]
    quasi_connected: tuple[int, ...]
    delta: float
    g_inf_edges: tuple[tuple[int, int], ...]
    longest_exit_distance: int
    realization_period: int | None = None
    estimated: bool = False
    horizon: int | None = None

    @property
    def n_nodes(self) -> int:
        return len(self.scc_ids)

    @property
    def n_components(self) -> int:
        return int(self.scc_ids.max()) + 1 if len(self.scc_ids) else 0

    def members(self, label: int) -> list[int]:
        return [int(i) for i in np.flatnonzero(self.scc_ids == label)]

    @property
    def sink_nodes(self) -> list[int]:
        return sorted(i for c in self.sink_sccs for i in self.members(c))

    def support(self) -> np.ndarray:
        adj = np.zeros((self.n_nodes, self.n_nodes), dtype=bool)
        for i, j in self.g_inf_edges:
            adj[i, j] = True
        return adj

    def to_dict(self) -> dict:
        return {
            "scc_ids": [int(c) for c in self.scc_ids],
            "sink_sccs": list(self.sink_sccs),
            "quasi_connected": list(self.quasi_connected),
            "delta": float(self.delta),
            "g_inf_edges": [list(e) for e in self.g_inf_edges],
            "longest_exit_distance": self.longest_exit_distance,
            "realization_period": self.realization_period,
            "estimated": self.estimated,
            "horizon": self.horizon,
        }


def strongly_connected_components(adj: np.ndarray) -> np.ndarray:
    """Iterative Tarjan over a boolean adjacency matrix.

    Returns per-node labels, relabelled so that components are numbered by
    their smallest member.
    """
    n = adj.shape[0]
    succ = [np.flatnonzero(adj[v]).tolist() for v in range(n)]
    index = [-1] * n
    low = [0] * n
    on_stack = [False] * n
    stack: list[int] = []
    raw = [-1] * n
    counter = 0
    n_comp = 0

    for root in range(n):
        if index[root] != -1:
            continue
        work = [(root, 0)]
        while work:
            v, k = work[-1]
            if k == 0:
                index[v] = low[v] = counter
                counter += 1
                stack.append(v)
                on_stack[v] = True
            nbrs = succ[v]
            while k < len(nbrs):
                w = nbrs[k]
                k += 1
                if index[w] == -1:
                    work[-1] = (v, k)
                    work.append((w, 0))
                    break
                if on_stack[w]:
                    low[v] = min(low[v], index[w])
            else:
                work.pop()
                if low[v] == index[v]:
                    while True:
                        w = stack.pop()
                        on_stack[w] = False
                        raw[w] = n_comp
                        if w == v:
                            break
                    n_comp += 1
                if work:
                    u = work[-1][0]
                    low[u] = min(low[u], low[v])
                continue

    raw_arr = np.asarray(raw)
    first_member = {}
    for v in range(n):
        first_member.setdefault(raw_arr[v], v)
    order = sorted(first_member, key=first_member.get)
    relabel = {old: new for new, old in enumerate(order)}
    return np.array([relabel[c] for c in raw_arr], dtype=int)


def _sink_components(adj: np.ndarray, labels: np.ndarray) -> tuple[int, ...]:
    n_comp = int(labels.max()) + 1 if labels.size else 0
    leaves = np.zeros(n_comp, dtype=bool)
    src, dst = np.nonzero(adj)
    cross = labels[src] != labels[dst]
    leaves[labels[src[cross]]] = True
    return tuple(int(c) for c in range(n_comp) if not leaves[c])


def _exit_distance(adj: np.ndarray, sinks: np.ndarray) -> int:
    """Longest shortest-path hop count from any node to the sink set."""
    n = adj.shape[0]
    dist = np.full(n, -1)
    dist[sinks] = 0
    frontier = list(np.flatnonzero(sinks))
    pred = [np.flatnonzero(adj[:, j]) for j in range(n)]
    while frontier:
        nxt = []
        for j in frontier:
            for i in pred[j]:
                if dist[i] < 0:
                    dist[i] = dist[j] + 1
                    nxt.append(i)
        frontier = nxt
    return int(dist.max()) if n else 0


def _report_from_support(
    adj: np.ndarray, delta: float, **extra
) -> TopologyReport:
    labels = strongly_connected_components(adj)
    sinks = _sink_components(adj, labels)
    in_sink = np.isin(labels, sinks)
    quasi = tuple(int(i) for i in np.flatnonzero(~in_sink))
    edges = tuple((int(i), int(j)) for i, j in zip(*np.nonzero(adj)))
    return TopologyReport(
        scc_ids=labels,
        sink_sccs=sinks,
        quasi_connected=quasi,
        delta=delta,
        g_inf_edges=edges,
        longest_exit_distance=_exit_distance(adj, in_sink),
        **extra,
    )


def scc_decompose(graph) -> TopologyReport:
    """SCC / sink-SCC / quasi-connected partition of the digraph of ``graph``."""
    arr = as_array(graph)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise DimensionError(f"need a square matrix, got shape {arr.shape}")
    adj = arr > 0
    pos = arr[adj]
    delta = float(pos.min()) if pos.size else 0.0
    return _report_from_support(adj, delta)


def _matrix_sequence(source, horizon: int | None, x0=None) -> list[np.ndarray]:
    if hasattr(source, "realize"):
        if horizon is None:
            raise ValueError("a horizon is needed to realise a schedule")
        mats = [a for a, _b in source.realize(horizon, x0=x0)]
    else:
        mats = [as_array(m) for m in source]
        if horizon is not None:
            mats = mats[:horizon]
    if not mats:
        raise ValueError("empty schedule: no matrices to analyse")
    return mats


def estimate_infinite_graph(
    source,
    horizon: int,
    edge_mass_threshold: float = 1e-3,
    x0=None,
) -> TopologyReport:
    """Finite-horizon proxy for the graph of edges with divergent total weight.

    ``source`` is an update schedule (anything with ``realize``) or a sequence
    of matrices. An edge is kept when its mean weight over the trailing half of
    the horizon is at least ``edge_mass_threshold``. ``delta`` is the smallest
    positive entry seen in that window and ``realization_period`` the longest
    gap between consecutive appearances of any kept edge.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if edge_mass_threshold <= 0:
        raise ValueError("edge_mass_threshold must be positive")
    mats = _matrix_sequence(source, horizon, x0)
    start = len(mats) // 2
    window = np.stack(mats[start:])
    mass = window.sum(axis=0)
    adj = mass >= edge_mass_threshold * window.shape[0]

    pos = window[window > 0]
    delta = float(pos.min()) if pos.size else 0.0

    period = 0
    length = window.shape[0]
    present = window > 0
    for i, j in zip(*np.nonzero(adj)):
        hits = np.flatnonzero(present[:, i, j])
        gaps = np.diff(np.concatenate(([-1], hits, [length])))
        period = max(period, int(gaps.max()))
    return _report_from_support(
        adj, delta, realization_period=period, estimated=True, horizon=len(mats)
    )


@dataclass(frozen=True)
class RegularityReport:
    delta: float
    self_loop_ok: bool
    symmetric_ok: bool

    def to_dict(self) -> dict:
        return {
            "delta": self.delta,
            "self_loop_ok": self.self_loop_ok,
            "symmetric_ok": self.symmetric_ok,
        }


def check_regularity(source, window: tuple[int, int] | int, x0=None) -> RegularityReport:
    """Largest delta meeting the weight and self-loop assumptions over a window.

    ``window`` is ``(t_start, t_stop)`` (half open) or a step count.
    """
    t_start, t_stop = (0, window) if isinstance(window, int) else window
    if t_stop <= t_start:
        raise ValueError("window must be non-empty")
    mats = _matrix_sequence(source, t_stop, x0)[t_start:t_stop]
    if not mats:
        raise ValueError("window lies beyond the realised schedule")
    stack = np.stack(mats)
    pos = stack[stack > 0]
    min_pos = float(pos.min()) if pos.size else 0.0
    min_diag = float(np.diagonal(stack, axis1=1, axis2=2).min())
    support = stack > 0
    symmetric = bool(np.all(support == support.transpose(0, 2, 1)))
    return RegularityReport(
        delta=min(min_pos, min_diag),
        self_loop_ok=min_diag > 0,
        symmetric_ok=symmetric,
    )


# ---------------------------------------------------------------- blocks


@dataclass(frozen=True)
class BlockForm:
    """``A`` permuted to ``[[Q, R], [0, S]]`` with quasi-connected nodes first."""

    q: np.ndarray
    r: np.ndarray
    s: np.ndarray
    order: np.ndarray
    n_quasi: int

    def permuted(self) -> np.ndarray:
        m, p = self.q.shape[0], self.s.shape[0]
        out = np.zeros((m + p, m + p))
        out[:m, :m] = self.q
        out[:m, m:] = self.r
        out[m:, m:] = self.s
        return out

    def assemble(self) -> np.ndarray:
        """Undo the permutation, returning the matrix in the original node order."""
        perm = self.permuted()
        inv = np.argsort(self.order)
        return perm[np.ix_(inv, inv)]


def node_order(topo: TopologyReport) -> np.ndarray:
    quasi = list(topo.quasi_connected)
    sink = [i for c in topo.sink_sccs for i in topo.members(c)]
    return np.array(quasi + sink, dtype=int)


def block_permutation(matrix, topo: TopologyReport) -> BlockForm:
    arr = as_array(matrix)
    if arr.shape != (topo.n_nodes, topo.n_nodes):
        raise DimensionError(
            f"matrix shape {arr.shape} does not match topology on {topo.n_nodes} nodes"
        )
    order = node_order(topo)
    perm = arr[np.ix_(order, order)]
    m = len(topo.quasi_connected)
    lower_left = perm[m:, :m]
    if np.any(lower_left != 0):
        i, j = np.argwhere(lower_left != 0)[0]
        raise TopologyError(
            f"sink node {order[m + i]} has weight on quasi-connected node {order[j]}; "
            "topology report is stale"
        )
    return BlockForm(
        q=perm[:m, :m].copy(),
        r=perm[:m, m:].copy(),
        s=perm[m:, m:].copy(),
        order=order,
        n_quasi=m,
    )


def gamma_coefficient(matrix) -> float:
    """Largest column-wise spread between rows; zero iff all rows agree."""
    arr = as_array(matrix)
    if arr.size == 0:
        return 0.0
    return float((arr.max(axis=0) - arr.min(axis=0)).max())
