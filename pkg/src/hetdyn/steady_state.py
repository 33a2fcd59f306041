"""Closed-form steady states via the fundamental matrix, and a random-walk oracle.

The fundamental matrix is ``F = (I - (I - L) A)^-1``. Read as an absorbing
chain, ``F[i, j]`` is the expected number of visits to ``j`` by a walk started
at ``i`` before it is absorbed by a ghost node, and ``F L W`` holds the
absorption probabilities.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .augmentation import AugmentedSystem
from .graph_core import as_array, scc_decompose

RESIDUAL_TOL = 1e-8


class NoAbsorbingStructureError(np.linalg.LinAlgError):
    """No leak out of some closed class: ``I - (I - L) A`` is singular."""


class QuasiConnectivityError(np.linalg.LinAlgError):
    pass


def _transient(a, lam) -> np.ndarray:
    a = as_array(a)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError(f"A must be square, got {a.shape}")
    lam = np.broadcast_to(np.asarray(lam, dtype=float), (n,))
    return (1.0 - lam)[:, None] * a


def _check_leaks(t: np.ndarray) -> None:
    topo = scc_decompose(t)
    sums = t.sum(axis=1)
    for c in topo.sink_sccs:
        members = topo.members(c)
        if np.all(np.abs(sums[members] - 1.0) <= 1e-12):
            raise NoAbsorbingStructureError(
                f"nodes {members} form a closed class with no private-signal weight; "
                "a strongly connected interaction graph needs some lambda > 0 "
                "for the steady state to be determined by signals"
            )


def fundamental_matrix(a, lam) -> np.ndarray:
    """``(I - (I - L) A)^-1`` by LU solve, with a residual check.

    ``a`` may also be substochastic (``lam = 0``), as in best-reply games where
    the interaction matrix itself leaks.
    """
    t = _transient(a, lam)
    _check_leaks(t)
    n = t.shape[0]
    m = np.eye(n) - t
    f = np.linalg.solve(m, np.eye(n))
    res = fundamental_residual(f, a, lam)
    if res >= RESIDUAL_TOL:
        raise NoAbsorbingStructureError(f"fundamental matrix residual {res:.3g} too large")
    return f


def fundamental_residual(f, a, lam) -> float:
    t = _transient(a, lam)
    return float(np.abs(f @ (np.eye(t.shape[0]) - t) - np.eye(t.shape[0])).max())


def steady_state(a, lam, b) -> np.ndarray:
    b = np.asarray(b, dtype=float)
    if b.ndim == 1:
        b = b[:, None]
    f = fundamental_matrix(a, lam)
    lam = np.broadcast_to(np.asarray(lam, dtype=float), (f.shape[0],))
    return f @ (lam[:, None] * b)


def _reach_ghosts(sys: AugmentedSystem) -> None:
    t = sys.transient
    absorbing = sys.lam > 0
    reached = absorbing.copy()
    while True:
        grow = reached | ((t > 0) & reached[None, :]).any(axis=1)
        if np.array_equal(grow, reached):
            break
        reached = grow
    if not reached.all():
        lost = np.flatnonzero(~reached).tolist()
        raise NoAbsorbingStructureError(
            f"nodes {lost} cannot reach any ghost node; without private-signal weight "
            "on their closed class the steady state is set by x(0), not by signals"
        )


def absorption_probabilities(sys: AugmentedSystem) -> np.ndarray:
    """``F L W``: row ``i`` is where a walk from ``i`` gets absorbed."""
    _reach_ghosts(sys)
    f = fundamental_matrix(sys.transient, 0.0)
    return f @ sys.exit_block


@dataclass(frozen=True, eq=False)
class AbsorptionReport:
    fundamental: np.ndarray
    absorb_probs: np.ndarray
    x_star: np.ndarray
    expected_returns: np.ndarray
    residual: float

    def to_dict(self) -> dict:
        return {
            "fundamental": self.fundamental.tolist(),
            "absorb_probs": self.absorb_probs.tolist(),
            "x_star": self.x_star.tolist(),
            "expected_returns": self.expected_returns.tolist(),
            "fundamental_residual": self.residual,
        }


def absorption_report(sys: AugmentedSystem) -> AbsorptionReport:
    _reach_ghosts(sys)
    f = fundamental_matrix(sys.transient, 0.0)
    probs = f @ sys.exit_block
    return AbsorptionReport(
        fundamental=f,
        absorb_probs=probs,
        x_star=probs @ sys.c_block,
        expected_returns=np.diag(f) - 1.0,
        residual=fundamental_residual(f, sys.transient, 0.0),
    )


# ---------------------------------------------------------------- random walks


@dataclass(frozen=True, eq=False)
class WalkResult:
    start: int
    n_walks: int
    absorb_counts: np.ndarray  # per ghost
    visit_counts: np.ndarray  # total visits per original node, t = 0 included
    visit_sq: np.ndarray  # sum over walks of squared per-walk visits
    return_count: int
    capped: int

    @property
    def absorb_freq(self) -> np.ndarray:
        return self.absorb_counts / self.n_walks

    @property
    def mean_visits(self) -> np.ndarray:
        return self.visit_counts / self.n_walks

    @property
    def visit_sem(self) -> np.ndarray:
        n = self.n_walks
        mean = self.mean_visits
        var = np.maximum(self.visit_sq / n - mean**2, 0.0) * n / max(n - 1, 1)
        return np.sqrt(var / n)

    def to_dict(self) -> dict:
        return {
            "start": self.start,
            "n_walks": self.n_walks,
            "absorb_counts": self.absorb_counts.tolist(),
            "visit_counts": self.visit_counts.tolist(),
            "return_count": self.return_count,
            "capped": self.capped,
        }


def _sample_rows(cum: np.ndarray, rows: np.ndarray, u: np.ndarray) -> np.ndarray:
    c = cum[rows]
    idx = (u[:, None] >= c).sum(axis=1)
    return np.minimum(idx, c.shape[1] - 1)


def simulate_walks(
    sys: AugmentedSystem,
    start: int,
    n_walks: int,
    seed: int = 0,
    step_cap: int = 1_000_000,
    batch_size: int = 20_000,
) -> WalkResult:
    """Monte Carlo walks on the augmented chain from ``start``.

    At node ``i`` a walk is absorbed with probability ``lambda_i`` and then
    picks a ghost from the ``W`` row; otherwise it moves along the ``A`` row.
    Batch ``k`` draws from ``default_rng([seed, k])``. Walks that hit
    ``step_cap`` are stopped and counted in ``capped``.
    """
    if n_walks < 1:
        raise ValueError("n_walks must be >= 1")
    _reach_ghosts(sys)
    n = sys.n
    lam = sys.lam
    a = np.zeros_like(sys.transient)
    live = lam < 1
    a[live] = sys.transient[live] / (1.0 - lam[live, None])
    cum_a = np.cumsum(a, axis=1)
    w = np.zeros_like(sys.w_block)
    pos = lam > 0
    w[pos] = sys.exit_block[pos] / lam[pos, None]
    cum_w = np.cumsum(w, axis=1)

    absorb = np.zeros(2 * sys.d, dtype=np.int64)
    visits = np.zeros(n, dtype=np.int64)
    visit_sq = np.zeros(n, dtype=np.float64)
    capped = 0
    for k, lo in enumerate(range(0, n_walks, batch_size)):
        size = min(batch_size, n_walks - lo)
        rng = np.random.default_rng([seed, k])
        where = np.full(size, start, dtype=np.int64)
        alive = np.arange(size)
        counts = np.zeros((size, n), dtype=np.int32)
        counts[:, start] = 1
        steps = 0
        while alive.size:
            if steps >= step_cap:
                capped += alive.size
                break
            cur = where[alive]
            u = rng.random(alive.size)
            exits = u < lam[cur]
            if exits.any():
                ghost = _sample_rows(cum_w, cur[exits], rng.random(int(exits.sum())))
                np.add.at(absorb, ghost, 1)
            stay = ~exits
            movers = alive[stay]
            nxt = _sample_rows(cum_a, cur[stay], rng.random(movers.size))
            where[movers] = nxt
            counts[movers, nxt] += 1
            alive = movers
            steps += 1
        visits += counts.sum(axis=0)
        visit_sq += (counts.astype(np.float64) ** 2).sum(axis=0)
    return WalkResult(
        start=start,
        n_walks=n_walks,
        absorb_counts=absorb,
        visit_counts=visits,
        visit_sq=visit_sq,
        return_count=int(visits[start] - n_walks),
        capped=capped,
    )


# ---------------------------------------------------------------- contact tracing


@dataclass(frozen=True)
class ContactTrace:
    node: int
    t: int
    original: np.ndarray  # weight on each agent's own initial signal
    ghosts: np.ndarray

    def to_dict(self) -> dict:
        return {
            "node": self.node,
            "t": self.t,
            "original": self.original.tolist(),
            "ghosts": self.ghosts.tolist(),
        }


def contact_trace(sys: AugmentedSystem, node: int, t: int) -> ContactTrace:
    """Origin distribution of a signal drawn at ``node`` after ``t`` steps back.

    This is row ``node`` of the ``t``-th power of the augmented matrix.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    a = sys.a_tilde.entries
    v = np.zeros(a.shape[0])
    v[node] = 1.0
    for _ in range(t):
        v = v @ a
    return ContactTrace(node=node, t=t, original=v[: sys.n].copy(), ghosts=v[sys.n :].copy())


def quasi_connected_steady_state(q, r, s_limit, x_sc_t0) -> np.ndarray:
    """Stack ``[M x_sc; S x_sc]`` with ``M = (I - Q)^-1 R S``."""
    q = np.asarray(q, dtype=float)
    r = np.asarray(r, dtype=float)
    s_limit = np.asarray(s_limit, dtype=float)
    x_sc = np.asarray(x_sc_t0, dtype=float)
    if x_sc.ndim == 1:
        x_sc = x_sc[:, None]
    m = q.shape[0]
    lhs = np.eye(m) - q
    if m and np.linalg.cond(lhs) > 1e12:
        raise QuasiConnectivityError("I - Q is singular: some quasi-connected node never exits")
    mix = np.linalg.solve(lhs, r @ s_limit) if m else np.zeros((0, s_limit.shape[0]))
    return np.vstack([mix @ x_sc, s_limit @ x_sc])
