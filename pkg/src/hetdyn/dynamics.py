"""Trajectories of the affine update ``x <- (I - L) A(t) x + L b(t)``."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Any, Callable, Literal

import numpy as np
from scipy.sparse.csgraph import connected_components
from scipy.spatial.distance import pdist, squareform

from .augmentation import as_bounds, augment
from .graph_core import (
    ROW_SUM_TOL,
    TopologyReport,
    as_array,
    estimate_infinite_graph,
    format_real,
    gamma_coefficient,
    node_order,
)

ScheduleKind = Literal["stationary", "scripted", "feedback"]
Norm = Literal["euclidean", "chebyshev", "cityblock"]

CONSENSUS = "consensus"
FRAGMENTED = "fragmented"
HETEROGENEOUS = "heterogeneous"
NON_CONVERGENT = "non-convergent"


class ScheduleError(RuntimeError):
    def __init__(self, step: int, message: str):
        super().__init__(f"step {step}: {message}")
        self.step = step


def as_state(x, n: int | None = None) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or (n is not None and arr.shape[0] != n):
        raise ValueError(f"expected an ({n}, d) state matrix, got shape {arr.shape}")
    return arr


def _source_fn(src) -> Callable:
    if callable(src):
        return src
    if isinstance(src, (list, tuple)):
        seq = [np.asarray(as_array(m), dtype=float) for m in src]
        if not seq:
            raise ValueError("empty matrix sequence")
        return lambda t, x, rng: seq[min(t, len(seq) - 1)]
    const = np.asarray(as_array(src), dtype=float)
    return lambda t, x, rng: const


@dataclass(frozen=True, eq=False)
class UpdateSchedule:
    """Source of ``(A(t), b(t))`` pairs plus the fixed signal weights.

    ``a_source`` and ``b_source`` are each a constant array, a list indexed by
    step (the last entry is held), or a callable ``f(t, x, rng)``. Schedules
    that read ``x`` are ``feedback`` schedules and need an initial state when
    realised outside :func:`run`; ``x0`` is that default.
    """

    kind: ScheduleKind
    lam: np.ndarray
    bounds: np.ndarray
    a_source: Any
    b_source: Any
    x0: np.ndarray | None = None
    seed: int | None = None
    name: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=float)
        if lam.ndim != 1:
            raise ValueError("lambda must be a vector")
        if np.any(lam < 0) or np.any(lam >= 1):
            raise ValueError("every lambda must lie in [0, 1)")
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "bounds", as_bounds(self.bounds))
        if self.x0 is not None:
            object.__setattr__(self, "x0", as_state(self.x0, lam.shape[0]))
        object.__setattr__(self, "_a_fn", _source_fn(self.a_source))
        object.__setattr__(self, "_b_fn", _source_fn(self.b_source))

    @classmethod
    def stationary(cls, a, lam, b, bounds, x0=None, name="stationary", **kw):
        a = as_array(a)
        b = as_state(b, a.shape[0])
        lam = np.broadcast_to(np.asarray(lam, dtype=float), (a.shape[0],))
        return cls("stationary", lam, bounds, a, b, x0=x0, name=name, **kw)

    @property
    def n(self) -> int:
        return self.lam.shape[0]

    @property
    def d(self) -> int:
        return self.bounds.shape[0]

    @property
    def has_signals(self) -> bool:
        return bool(np.any(self.lam > 0))

    def diameter(self, norm: Norm = "euclidean") -> float:
        width = self.bounds[:, 1] - self.bounds[:, 0]
        if norm == "chebyshev":
            return float(width.max())
        if norm == "cityblock":
            return float(width.sum())
        return float(np.sqrt((width**2).sum()))

    def rng(self, seed: int | None = None) -> np.random.Generator:
        return np.random.default_rng(self.seed if seed is None else seed)

    def emit(self, t: int, x: np.ndarray, rng: np.random.Generator):
        a = np.asarray(self._a_fn(t, x, rng), dtype=float)
        b = as_state(self._b_fn(t, x, rng), self.n)
        return a, b

    def validate(self, t: int, a: np.ndarray, b: np.ndarray) -> None:
        if a.shape != (self.n, self.n):
            raise ScheduleError(t, f"A(t) has shape {a.shape}, expected {(self.n, self.n)}")
        if np.any(a < 0):
            raise ScheduleError(t, "A(t) has a negative entry")
        sums = a.sum(axis=1)
        bad = np.flatnonzero(np.abs(sums - 1.0) > ROW_SUM_TOL)
        if bad.size:
            raise ScheduleError(t, f"row {bad[0]} of A(t) sums to {sums[bad[0]]!r}")
        if b.shape[1] != self.d:
            raise ScheduleError(t, f"b(t) has {b.shape[1]} dims, bounds have {self.d}")
        lo, hi = self.bounds[:, 0], self.bounds[:, 1]
        if np.any(b < lo - 1e-12) or np.any(b > hi + 1e-12):
            raise ScheduleError(t, "b(t) leaves the declared bounds")

    def initial_state(self, x0=None) -> np.ndarray:
        if x0 is not None:
            return as_state(x0, self.n)
        if self.x0 is not None:
            return self.x0
        if self.kind == "feedback":
            raise ValueError(f"feedback schedule {self.name!r} needs an initial state")
        return np.zeros((self.n, self.d))

    def realize(self, steps: int, x0=None, seed: int | None = None):
        """Drive the dynamics for ``steps`` steps and return the emitted pairs."""
        x = self.initial_state(x0)
        rng = self.rng(seed)
        out = []
        for t in range(steps):
            a, b = self.emit(t, x, rng)
            self.validate(t, a, b)
            out.append((a, b))
            x = step_affine(a, self.lam, b, x)
        return out


def step_affine(a, lam, b, x) -> np.ndarray:
    a = as_array(a)
    x = as_state(x)
    b = as_state(b)
    n = x.shape[0]
    if a.shape != (n, n) or b.shape != x.shape:
        raise ValueError(
            f"dimension mismatch: A {a.shape}, b {b.shape}, x {x.shape}"
        )
    lam = np.broadcast_to(np.asarray(lam, dtype=float), (n,))
    return (1.0 - lam)[:, None] * (a @ x) + lam[:, None] * b


# ---------------------------------------------------------------- outcomes


def heterogeneity(x, metric: Norm = "euclidean") -> float:
    """Smallest distance between two agents' states."""
    x = as_state(x)
    if x.shape[0] < 2:
        raise ValueError("heterogeneity needs at least two agents")
    return float(pdist(x, metric=metric).min())


@dataclass(frozen=True)
class Classification:
    heterogeneity: float
    outcome_class: str
    cluster_count: int


def clusters(x, eps_h: float, metric: Norm = "euclidean") -> np.ndarray:
    """Single-linkage cluster labels joining agents closer than ``eps_h``."""
    x = as_state(x)
    if x.shape[0] == 1:
        return np.zeros(1, dtype=int)
    close = squareform(pdist(x, metric=metric) < eps_h)
    _, labels = connected_components(close, directed=False)
    return labels


def classify_outcome(x_star, eps_h: float, metric: Norm = "euclidean") -> Classification:
    x = as_state(x_star)
    if x.shape[0] < 2:
        return Classification(0.0, CONSENSUS, 1)
    h = heterogeneity(x, metric)
    count = int(clusters(x, eps_h, metric).max()) + 1
    if count == 1:
        label = CONSENSUS
    elif h > eps_h:
        label = HETEROGENEOUS
    else:
        label = FRAGMENTED
    return Classification(h, label, count)


@dataclass(frozen=True)
class ConvergenceCfg:
    tol_step: float = 1e-9
    window: int = 50
    eps_h: float | None = None  # None: 1e-4 x state-space diameter
    norm: Norm = "euclidean"
    stride: int = 1

    def resolve_eps(self, schedule: UpdateSchedule) -> float:
        if self.eps_h is not None:
            return self.eps_h
        return 1e-4 * schedule.diameter(self.norm)


@dataclass(frozen=True, eq=False)
class OutcomeReport:
    converged: bool
    t_stop: int
    x_star: np.ndarray | None
    heterogeneity: float
    outcome_class: str
    cluster_count: int
    eps_h: float

    def to_dict(self) -> dict:
        return {
            "converged": self.converged,
            "t_stop": self.t_stop,
            "x_star": None if self.x_star is None else self.x_star.tolist(),
            "heterogeneity": self.heterogeneity,
            "outcome_class": self.outcome_class,
            "cluster_count": self.cluster_count,
            "eps_h": self.eps_h,
        }


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (len(times), N, d)
    matrices: list | None = None

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "agent_id", "dim", "value"])
        for t, state in zip(self.times, self.states):
            for i, row in enumerate(state):
                for l, v in enumerate(row):
                    w.writerow([int(t), i, l, format_real(v)])
        return buf.getvalue()


def run(
    schedule: UpdateSchedule,
    x0=None,
    max_steps: int = 10_000,
    conv: ConvergenceCfg | None = None,
    seed: int | None = None,
    record_matrices: bool = False,
) -> tuple[Trajectory, OutcomeReport]:
    """Iterate the schedule until the windowed step test passes or steps run out.

    Converged means ``max |x(t+1) - x(t)| < tol_step`` held for ``window``
    consecutive steps.
    """
    if max_steps < 1:
        raise ValueError("max_steps must be >= 1")
    conv = conv or ConvergenceCfg()
    x = schedule.initial_state(x0).copy()
    rng = schedule.rng(seed)
    lam = schedule.lam

    times, states, mats = [0], [x.copy()], []
    quiet = 0
    converged = False
    t = 0
    while t < max_steps:
        a, b = schedule.emit(t, x, rng)
        schedule.validate(t, a, b)
        if record_matrices:
            mats.append((a, b))
        x_new = (1.0 - lam)[:, None] * (a @ x) + lam[:, None] * b
        step = float(np.abs(x_new - x).max())
        x = x_new
        t += 1
        if t % conv.stride == 0:
            times.append(t)
            states.append(x.copy())
        quiet = quiet + 1 if step < conv.tol_step else 0
        if quiet >= conv.window:
            converged = True
            break
    if times[-1] != t:
        times.append(t)
        states.append(x.copy())

    eps = conv.resolve_eps(schedule)
    cls = classify_outcome(x, eps, conv.norm)
    report = OutcomeReport(
        converged=converged,
        t_stop=t,
        x_star=x.copy() if converged else None,
        heterogeneity=cls.heterogeneity,
        outcome_class=cls.outcome_class if converged else NON_CONVERGENT,
        cluster_count=cls.cluster_count,
        eps_h=eps,
    )
    traj = Trajectory(np.asarray(times), np.stack(states), mats if record_matrices else None)
    return traj, report


# ---------------------------------------------------------------- diagnostics


def generic_matrices(source, horizon: int, x0=None) -> list[np.ndarray]:
    """Realised update matrices in generic linear form.

    Schedules with signal weight are lifted to the ghost-node form so that the
    signals appear as edges; plain matrix sequences pass through.
    """
    if not isinstance(source, UpdateSchedule):
        return [as_array(m) for m in list(source)[:horizon]]
    pairs = source.realize(horizon, x0=x0)
    if not source.has_signals:
        return [a for a, _ in pairs]
    return [
        augment(a, source.lam, b, source.bounds).a_tilde.entries for a, b in pairs
    ]


@dataclass(frozen=True, eq=False)
class ProductDiagnostics:
    times: np.ndarray
    gamma_of_product: dict  # sink component label -> series
    q_block_infnorm: np.ndarray  # empty when there are no quasi-connected nodes
    topology: TopologyReport

    def to_dict(self) -> dict:
        return {
            "times": self.times.tolist(),
            "gamma_of_product": {str(k): v.tolist() for k, v in self.gamma_of_product.items()},
            "q_block_infnorm": self.q_block_infnorm.tolist(),
        }


def product_diagnostics(
    source,
    topo: TopologyReport | None = None,
    horizon: int = 200,
    x0=None,
    t0: int = 0,
) -> ProductDiagnostics:
    """Track ``gamma`` of each sink block and ``||Q||_inf`` of the running product.

    Entry ``k`` of each series refers to the product ``A(t0 + k) ... A(t0)``.
    """
    mats = generic_matrices(source, horizon, x0)
    if topo is None:
        topo = estimate_infinite_graph(mats, horizon)
    order = node_order(topo)
    m = len(topo.quasi_connected)
    comps = {c: topo.members(c) for c in topo.sink_sccs}
    n = mats[0].shape[0]
    prod = np.eye(n)
    times, q_norm = [], []
    gam = {c: [] for c in comps}
    for t in range(t0, len(mats)):
        prod = mats[t] @ prod
        times.append(t)
        if m:
            q = prod[np.ix_(order[:m], order[:m])]
            q_norm.append(float(np.abs(q).sum(axis=1).max()))
        for c, members in comps.items():
            gam[c].append(gamma_coefficient(prod[np.ix_(members, members)]))
    return ProductDiagnostics(
        times=np.asarray(times),
        gamma_of_product={c: np.asarray(v) for c, v in gam.items()},
        q_block_infnorm=np.asarray(q_norm),
        topology=topo,
    )


@dataclass(frozen=True, eq=False)
class Theorem2Report:
    """Finite-data check of the two convergence conditions for quasi-connected nodes.

    ``cond1`` is the Cauchy test on the ``Q`` and ``R`` blocks over the
    trailing window; ``cond2_residual`` is only ever a residual series.
    ``a_converges`` / ``b_converges`` are filled for signal schedules, and
    ``heterogeneity_admissible`` is False when exactly one of them settles.
    """

    cond1: bool
    q_converges: bool
    r_converges: bool
    cond2_residual: np.ndarray
    window_start: int
    a_converges: bool | None = None
    b_converges: bool | None = None

    @property
    def heterogeneity_admissible(self) -> bool | None:
        if self.a_converges is None or self.b_converges is None:
            return None
        return self.a_converges == self.b_converges

    def to_dict(self) -> dict:
        return {
            "cond1": self.cond1,
            "q_converges": self.q_converges,
            "r_converges": self.r_converges,
            "a_converges": self.a_converges,
            "b_converges": self.b_converges,
            "heterogeneity_admissible": self.heterogeneity_admissible,
            "window_start": self.window_start,
            "cond2_residual": self.cond2_residual.tolist(),
        }


def _settles(series: list[np.ndarray], tol: float) -> bool:
    if not series:
        return True
    stack = np.stack(series)
    return bool((stack.max(axis=0) - stack.min(axis=0)).max() < tol)


def check_theorem2_conditions(
    source,
    topo: TopologyReport | None = None,
    horizon: int = 1000,
    tol: float = 1e-8,
    x0=None,
) -> Theorem2Report:
    pairs = None
    if isinstance(source, UpdateSchedule):
        pairs = source.realize(horizon, x0=x0)
        if source.has_signals:
            mats = [augment(a, source.lam, b, source.bounds).a_tilde.entries for a, b in pairs]
        else:
            mats = [a for a, _ in pairs]
    else:
        mats = [as_array(m) for m in list(source)[:horizon]]
    if topo is None:
        topo = estimate_infinite_graph(mats, len(mats))
    order = node_order(topo)
    m = len(topo.quasi_connected)
    start = len(mats) // 2
    qc, sc = order[:m], order[m:]

    qs = [a[np.ix_(qc, qc)] for a in mats[start:]]
    rs = [a[np.ix_(qc, sc)] for a in mats[start:]]
    q_ok = _settles(qs, tol)
    r_ok = _settles(rs, tol)

    prod = np.eye(mats[0].shape[0])
    for a in mats[start:]:
        prod = a @ prod
    s_lim = prod[np.ix_(sc, sc)]
    m_est = prod[np.ix_(qc, sc)]
    eye = np.eye(m)
    residual = np.array(
        [np.abs(r @ s_lim - (eye - q) @ m_est).sum(axis=1).max() if m else 0.0 for q, r in zip(qs, rs)]
    )

    a_ok = b_ok = None
    if pairs is not None and source.has_signals:
        a_ok = _settles([a for a, _ in pairs[start:]], tol)
        b_ok = _settles([b for _, b in pairs[start:]], tol)
    return Theorem2Report(
        cond1=q_ok and r_ok,
        q_converges=q_ok,
        r_converges=r_ok,
        cond2_residual=residual,
        window_start=start,
        a_converges=a_ok,
        b_converges=b_ok,
    )
