"""Example models as update schedules: contrarian agents, swarms, recommender
feedback, linear-quadratic best replies, and Hegselmann-Krause bounded
confidence. Every factory is seed-deterministic.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dynamics
from .dynamics import ConvergenceCfg, UpdateSchedule, run
from .generators import Graph, GraphSpec, generate, row_normalize_weights, transitivity
from .graph_core import as_array
from .steady_state import fundamental_matrix


def _adjacency(graph) -> np.ndarray:
    return graph.adjacency if isinstance(graph, Graph) else np.asarray(graph, dtype=bool)


# ---------------------------------------------------------------- contrarian


@dataclass(frozen=True, eq=False)
class ContrarianConfig:
    base_graph: np.ndarray
    gamma: float = 0.1
    activation_fraction: float = 0.3
    norm: str = "euclidean"
    seed: int = 0
    bounds: tuple = ((-1.0, 1.0), (-1.0, 1.0))
    x0: np.ndarray | None = None

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")
        if not 0 < self.activation_fraction <= 1:
            raise ValueError("activation_fraction must lie in (0, 1]")


def _distances(x: np.ndarray, i: int, nbrs: np.ndarray, norm: str) -> np.ndarray:
    diff = x[nbrs] - x[i]
    if norm == "chebyshev":
        return np.abs(diff).max(axis=1)
    if norm == "cityblock":
        return np.abs(diff).sum(axis=1)
    return np.sqrt((diff**2).sum(axis=1))


def contrarian_schedule(cfg: ContrarianConfig) -> UpdateSchedule:
    """Activated agents move a ``1 - gamma`` step toward a neighbour drawn
    with probability proportional to its distance."""
    adj = _adjacency(cfg.base_graph)
    n = adj.shape[0]
    nbr_lists = [np.flatnonzero(adj[i]) for i in range(n)]
    if any(len(nb) == 0 for nb in nbr_lists):
        raise ValueError("every agent needs at least one neighbour")
    bounds = np.asarray(cfg.bounds, dtype=float)
    x0 = cfg.x0
    if x0 is None:
        init = np.random.default_rng([cfg.seed, 1])
        x0 = init.uniform(bounds[:, 0], bounds[:, 1], size=(n, bounds.shape[0]))

    def a_fn(t, x, rng):
        a = np.eye(n)
        active = np.flatnonzero(rng.random(n) < cfg.activation_fraction)
        for i in active:
            nbrs = nbr_lists[i]
            dist = _distances(x, i, nbrs, cfg.norm)
            total = dist.sum()
            if total > 0:
                j = nbrs[rng.choice(len(nbrs), p=dist / total)]
            else:
                j = nbrs[rng.integers(len(nbrs))]
            a[i, i] = cfg.gamma
            a[i, j] = 1.0 - cfg.gamma
        return a

    return UpdateSchedule(
        kind="feedback",
        lam=np.zeros(n),
        bounds=bounds,
        a_source=a_fn,
        b_source=lambda t, x, rng: x,
        x0=x0,
        seed=cfg.seed,
        name="contrarian",
    )


def contrarian_preset(n: int = 10, p: float = 0.3, gamma: float = 0.1, seed: int = 0, **kw) -> UpdateSchedule:
    g = generate(GraphSpec("erdos_renyi_directed", n, {"p": p}, seed))
    return contrarian_schedule(ContrarianConfig(base_graph=g.adjacency, gamma=gamma, seed=seed, **kw))


# ---------------------------------------------------------------- swarm


@dataclass(frozen=True, eq=False)
class SwarmConfig:
    n: int = 20
    k: int = 3
    landmarks: np.ndarray | None = None
    n_landmarks: int = 5
    gamma: float = 0.3
    mode: str = "synchronous"
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("synchronous", "asynchronous"):
            raise ValueError(f"unknown swarm mode {self.mode!r}")
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")
        if self.landmarks is not None and len(self.landmarks) == 0:
            raise ValueError("need at least one landmark")


def nearest_landmark(x: np.ndarray, landmarks: np.ndarray) -> np.ndarray:
    """Closest landmark per agent; argmin breaks ties toward the lower index."""
    d2 = ((x[:, None, :] - landmarks[None, :, :]) ** 2).sum(axis=2)
    return landmarks[d2.argmin(axis=1)]


def swarm_setup(cfg: SwarmConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Neighbour graph, landmarks and start positions shared by both modes."""
    g = generate(GraphSpec("k_regular", cfg.n, {"k": cfg.k}, cfg.seed))
    init = np.random.default_rng([cfg.seed, 1])
    if cfg.landmarks is None:
        landmarks = init.uniform(-1, 1, size=(cfg.n_landmarks, 2))
    else:
        landmarks = np.asarray(cfg.landmarks, dtype=float).reshape(-1, 2)
    x0 = init.uniform(-1, 1, size=(cfg.n, 2))
    return g.adjacency, landmarks, x0


def swarm_schedule(cfg: SwarmConfig) -> UpdateSchedule:
    """``x_i <- gamma l_i + (1-gamma)/2 x_i + (1-gamma)/2 mean(neighbours)``.

    Asynchronous mode replaces the neighbour set with a uniformly drawn
    non-empty subset at every step.
    """
    adj, landmarks, x0 = swarm_setup(cfg)
    n = cfg.n
    nbr_lists = [np.flatnonzero(adj[i]) for i in range(n)]
    base = 0.5 * np.eye(n) + 0.5 * adj / adj.sum(axis=1, keepdims=True)

    if cfg.mode == "synchronous":
        a_src = base
    else:
        def a_src(t, x, rng):
            a = 0.5 * np.eye(n)
            for i, nbrs in enumerate(nbr_lists):
                while True:
                    pick = nbrs[rng.random(len(nbrs)) < 0.5]
                    if pick.size:
                        break
                a[i, pick] += 0.5 / pick.size
            return a

    return UpdateSchedule(
        kind="feedback",
        lam=np.full(n, cfg.gamma),
        bounds=((-1.0, 1.0), (-1.0, 1.0)),
        a_source=a_src,
        b_source=lambda t, x, rng: nearest_landmark(x, landmarks),
        x0=x0,
        seed=cfg.seed,
        name=f"swarm-{cfg.mode}",
        meta={"landmarks": landmarks.tolist()},
    )


# ---------------------------------------------------------------- recommender


@dataclass(frozen=True, eq=False)
class RecommenderConfig:
    graph: np.ndarray
    alpha: float = 0.4
    p0: float = 0.55
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if not 0 <= self.p0 <= 1:
            raise ValueError("p0 must lie in [0, 1]")


def sign(x: np.ndarray) -> np.ndarray:
    """Sign with ``sign(0) = +1``."""
    return np.where(x >= 0, 1.0, -1.0)


def recommender_x0(n: int, p0: float, seed: int) -> np.ndarray:
    """Exactly ``round(p0 n)`` positive agents, magnitudes uniform in (0, 1]."""
    rng = np.random.default_rng([seed, 1])
    n_pos = int(round(p0 * n))
    signs = -np.ones(n)
    signs[rng.permutation(n)[:n_pos]] = 1.0
    mag = 1.0 - rng.random(n)
    return (signs * mag)[:, None]


def recommender_schedule(cfg: RecommenderConfig) -> UpdateSchedule:
    a = as_array(cfg.graph)
    if a.dtype == bool or np.array_equal(a, a.astype(bool)):
        a = row_normalize_weights(a.astype(bool), "uniform").entries
    n = a.shape[0]
    return UpdateSchedule(
        kind="feedback",
        lam=np.full(n, cfg.alpha),
        bounds=((-1.0, 1.0),),
        a_source=a,
        b_source=lambda t, x, rng: sign(x),
        x0=recommender_x0(n, cfg.p0, cfg.seed),
        seed=cfg.seed,
        name="recommender",
    )


def frozen_sign_steady_state(schedule: UpdateSchedule) -> np.ndarray:
    """``alpha (I - (1 - alpha) A)^-1 sign(x(0))``: the limit when no sign flips."""
    a = schedule.a_source
    f = fundamental_matrix(a, schedule.lam)
    return f @ (schedule.lam[:, None] * sign(schedule.x0))


def recommender_graph(n: int, mean_degree: float, seed: int) -> np.ndarray:
    g = generate(GraphSpec("erdos_renyi", n, {"p": mean_degree / (n - 1)}, seed))
    return g.adjacency


def curtain_cell(
    adj: np.ndarray,
    alpha: float,
    p0: float,
    trials: int,
    seed: int,
    max_steps: int = 5000,
    conv: ConvergenceCfg | None = None,
) -> dict:
    conv = conv or ConvergenceCfg()
    means, classes = [], []
    non_conv = cascades = 0
    for trial in range(trials):
        sch = recommender_schedule(RecommenderConfig(adj, alpha, p0, seed=seed + trial))
        traj, rep = run(sch, max_steps=max_steps, conv=conv)
        means.append(float(traj.final.mean()))
        classes.append(rep.outcome_class)
        non_conv += not rep.converged
        cascades += bool(np.all(sign(traj.final) == sign(traj.final[0])))
    counts = {c: classes.count(c) for c in sorted(set(classes))}
    modal = max(sorted(counts), key=counts.get)
    return {
        "alpha": alpha,
        "p0": p0,
        "trials": trials,
        "seed": seed,
        "mean_x_star": float(np.mean(means)),
        "outcome_class": modal,
        "n_consensus": counts.get(dynamics.CONSENSUS, 0),
        "n_fragmented": counts.get(dynamics.FRAGMENTED, 0),
        "n_heterogeneous": counts.get(dynamics.HETEROGENEOUS, 0),
        "n_nonconvergent": non_conv,
        "cascade_fraction": cascades / trials,
    }


def curtain_sweep(graph, alpha_grid, p0_grid, trials: int, seed: int, **kw) -> list[dict]:
    """One row per ``(alpha, p0)`` cell with mean steady state and modal outcome."""
    if len(alpha_grid) == 0 or len(p0_grid) == 0:
        raise ValueError("sweep grids must be non-empty")
    adj = _adjacency(graph)
    return [
        curtain_cell(adj, float(a), float(p), trials, seed, **kw)
        for a in alpha_grid
        for p in p0_grid
    ]


# ---------------------------------------------------------------- LQ games


@dataclass(frozen=True, eq=False)
class LQGameConfig:
    interaction: np.ndarray
    rewards: np.ndarray
    effort_cap: float | None = None

    def __post_init__(self):
        a = np.asarray(self.interaction, dtype=float)
        sums = a.sum(axis=1)
        if np.any(a < 0):
            raise ValueError("interaction effects must be nonnegative")
        if np.any(sums >= 1):
            i = int(np.flatnonzero(sums >= 1)[0])
            raise ValueError(
                f"row {i} of the interaction matrix sums to {sums[i]:.6g} >= 1; "
                "best replies need a row-substochastic matrix for a Nash equilibrium to exist"
            )


def lq_best_reply_schedule(cfg: LQGameConfig) -> UpdateSchedule:
    """Write ``x <- A x + r`` in affine form: ``lambda = 1 - rowsum(A)``,
    social matrix ``A / rowsum`` and signal ``r / lambda``."""
    a = np.asarray(cfg.interaction, dtype=float)
    r = np.asarray(cfg.rewards, dtype=float).reshape(-1)
    sums = a.sum(axis=1)
    if np.any(sums == 0):
        raise ValueError(f"agent {int(np.flatnonzero(sums == 0)[0])} has no interaction effects")
    lam = 1.0 - sums
    social = a / sums[:, None]
    b = r / lam
    lo = min(0.0, float(b.min()))
    hi = max(0.0, float(b.max()))
    if cfg.effort_cap is not None:
        if hi > cfg.effort_cap:
            raise ValueError(f"effort cap {cfg.effort_cap} is below the implied signal {hi:.6g}")
        hi = cfg.effort_cap
    if hi == lo:
        hi = lo + 1.0
    return UpdateSchedule.stationary(social, lam, b[:, None], ((lo, hi),), name="lq-game")


def lq_nash_equilibrium(cfg: LQGameConfig) -> np.ndarray:
    a = np.asarray(cfg.interaction, dtype=float)
    return np.linalg.solve(np.eye(a.shape[0]) - a, np.asarray(cfg.rewards, dtype=float))


def best_reply_iterates(cfg: LQGameConfig, x0, steps: int) -> np.ndarray:
    a = np.asarray(cfg.interaction, dtype=float)
    r = np.asarray(cfg.rewards, dtype=float)
    x = np.asarray(x0, dtype=float).copy()
    out = [x.copy()]
    for _ in range(steps):
        x = a @ x + r
        out.append(x.copy())
    return np.stack(out)


def random_lq_game(n: int, seed: int, density: float = 0.5, max_row: float = 0.9) -> LQGameConfig:
    rng = np.random.default_rng(seed)
    mask = rng.random((n, n)) < density
    np.fill_diagonal(mask, False)
    for i in range(n):
        if not mask[i].any():
            mask[i, (i + 1) % n] = True
    w = rng.random((n, n)) * mask
    rows = rng.uniform(0.2, max_row, size=n)
    a = w / w.sum(axis=1, keepdims=True) * rows[:, None]
    return LQGameConfig(interaction=a, rewards=rng.uniform(0.5, 1.5, size=n))


# ---------------------------------------------------------------- transitivity


def transitivity_level(
    p: float,
    level: int,
    n: int = 100,
    lattice_radius: int = 2,
    iters_per_p: int = 20,
    weight_scale: float = 0.95,
    seed: int = 0,
    torus: bool = False,
    metric: str = "chebyshev",
) -> dict:
    """One row of the rewiring sweep. Graph seeds derive from ``(seed, level, it)``."""
    if not 0 < weight_scale < 1:
        raise ValueError("weight_scale must lie in (0, 1)")
    trans, returns, resampled = [], [], 0
    for it in range(iters_per_p):
        spec = GraphSpec(
            "small_world_rewired",
            n,
            {"p": float(p), "radius": lattice_radius, "torus": torus, "metric": metric},
            seed=int(np.random.SeedSequence([seed, level, it]).generate_state(1)[0]),
        )
        g = generate(spec)
        resampled += g.resamples
        a = row_normalize_weights(g, "scaled", weight_scale)
        f = fundamental_matrix(a, 0.0)
        trans.append(transitivity(g))
        returns.append(float((np.diag(f) - 1.0).mean()))
    return {
        "p": float(p),
        "mean_transitivity": float(np.mean(trans)),
        "mean_expected_returns": float(np.mean(returns)),
        "resampled": resampled,
        "metric": metric,
        "torus": torus,
        "clustering": "global_transitivity",
    }


def transitivity_experiment(
    n: int = 100,
    lattice_radius: int = 2,
    p_grid=None,
    iters_per_p: int = 20,
    weight_scale: float = 0.95,
    seed: int = 0,
    torus: bool = False,
    metric: str = "chebyshev",
) -> list[dict]:
    """Mean transitivity and mean expected returns ``F_ii - 1`` per rewiring level."""
    if p_grid is None:
        p_grid = np.linspace(0.2, 0.0, 20)
    return [
        transitivity_level(p, k, n, lattice_radius, iters_per_p, weight_scale, seed, torus, metric)
        for k, p in enumerate(p_grid)
    ]


# ---------------------------------------------------------------- random systems


def random_signal_system(
    n: int,
    d: int = 1,
    seed: int = 0,
    lam_range: tuple[float, float] = (0.05, 0.9),
    density: float = 0.5,
):
    """Random stationary private-signal system ``(A, lambda, b, bounds)``.

    ``A`` has self-loops and a Hamiltonian cycle in its support, so it is
    strongly connected and aperiodic; signals are uniform in ``[-1, 1]^d``.
    """
    rng = np.random.default_rng(seed)
    mask = rng.random((n, n)) < density
    perm = rng.permutation(n)
    mask[perm, np.roll(perm, -1)] = True
    np.fill_diagonal(mask, True)
    w = rng.uniform(0.1, 1.0, (n, n)) * mask
    a = w / w.sum(axis=1, keepdims=True)
    lam = rng.uniform(lam_range[0], lam_range[1], n)
    bounds = np.tile([-1.0, 1.0], (d, 1))
    b = rng.uniform(-1, 1, (n, d))
    return a, lam, b, bounds


# ---------------------------------------------------------------- bounded confidence


def bounded_confidence_schedule(
    epsilon: float, n: int, seed: int = 0, bounds=(0.0, 1.0), x0=None
) -> UpdateSchedule:
    """1-D Hegselmann-Krause: average everyone within ``epsilon`` (self included)."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    lo, hi = bounds
    if x0 is None:
        x0 = np.random.default_rng([seed, 1]).uniform(lo, hi, size=(n, 1))

    def a_fn(t, x, rng):
        close = np.abs(x[:, 0][:, None] - x[:, 0][None, :]) <= epsilon
        return close / close.sum(axis=1, keepdims=True)

    return UpdateSchedule(
        kind="feedback",
        lam=np.zeros(n),
        bounds=(bounds,),
        a_source=a_fn,
        b_source=lambda t, x, rng: x,
        x0=x0,
        seed=seed,
        name="bounded-confidence",
    )
