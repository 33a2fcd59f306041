"""``hetdyn`` command line: simulate, steady-state, sweep, walk, topology.

Every command reads one experiment config, writes deterministic CSV/JSON
artifacts into the output directory, and keeps wall-clock data in a separate
``metadata.json``. Exit status: 0 ok, 1 runtime or model error, 2 config error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .augmentation import augment
from .config import STATIONARY_PRESETS, ConfigError, ExperimentConfig, load_config, load_preset, parse_config
from .dynamics import ConvergenceCfg, ScheduleError, UpdateSchedule, check_theorem2_conditions, generic_matrices, run
from .graph_core import estimate_infinite_graph, format_real, matrix_to_csv
from .generators import GraphSpec, generate
from .models import (
    ContrarianConfig,
    LQGameConfig,
    RecommenderConfig,
    SwarmConfig,
    bounded_confidence_schedule,
    contrarian_schedule,
    curtain_cell,
    lq_best_reply_schedule,
    random_lq_game,
    random_signal_system,
    recommender_graph,
    recommender_schedule,
    swarm_schedule,
    transitivity_level,
)
from .steady_state import absorption_report, contact_trace, simulate_walks

OUT_DIR_ENV = "HETDYN_OUT_DIR"


class RuntimeFailure(Exception):
    pass


# ---------------------------------------------------------------- output helpers


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _write(out: Path, name: str, text: str) -> None:
    tmp = out / f".{name}.tmp"
    tmp.write_text(text)
    os.replace(tmp, out / name)


def _rows_csv(header: list[str], rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(row.get(h, "")) for h in header])
    return buf.getvalue()


def _cell(v) -> str:
    if isinstance(v, bool) or v is None:
        return "" if v is None else str(v).lower()
    if isinstance(v, (float, np.floating)):
        return format_real(v)
    return str(v)


# ---------------------------------------------------------------- model building


def build_schedule(cfg: ExperimentConfig) -> UpdateSchedule:
    m = cfg.model
    if m is None:
        raise ConfigError("this command needs a model section", "model")
    seed = cfg.seed
    if m.preset == "contrarian":
        g = generate(GraphSpec("erdos_renyi_directed", m.n, {"p": m.p}, seed))
        return contrarian_schedule(
            ContrarianConfig(
                g.adjacency,
                gamma=m.gamma,
                activation_fraction=m.activation_fraction,
                norm=m.norm,
                seed=seed,
            )
        )
    if m.preset == "swarm":
        landmarks = None if m.landmarks is None else np.asarray(m.landmarks, dtype=float)
        return swarm_schedule(
            SwarmConfig(m.n, m.k, landmarks, m.n_landmarks, m.gamma, m.mode, seed)
        )
    if m.preset == "recommender":
        adj = recommender_graph(m.n, m.mean_degree, seed)
        return recommender_schedule(RecommenderConfig(adj, m.alpha, m.p0, seed))
    if m.preset == "bounded_confidence":
        return bounded_confidence_schedule(m.epsilon, m.n, seed, tuple(m.bounds))
    a, lam, b, bounds, x0 = stationary_system(cfg)
    if x0 is None:
        bounds = np.asarray(bounds, dtype=float)
        x0 = np.random.default_rng([seed, 1]).uniform(bounds[:, 0], bounds[:, 1], size=(a.shape[0], bounds.shape[0]))
    return UpdateSchedule.stationary(a, lam, b, bounds, x0=x0, name=m.preset, seed=seed)


def stationary_system(cfg: ExperimentConfig):
    """``(A, lambda, b, bounds, x0)`` for presets with fixed A and b."""
    m = cfg.model
    if m is None or m.preset not in STATIONARY_PRESETS:
        found = "none" if m is None else m.preset
        raise ConfigError(
            f"needs a stationary model ({', '.join(STATIONARY_PRESETS)}), got {found}",
            "model.preset",
        )
    if m.preset == "linear":
        a = np.asarray(m.a, dtype=float)
        lam = np.broadcast_to(np.asarray(m.lam, dtype=float), (a.shape[0],)).copy()
        x0 = None if m.x0 is None else np.asarray(m.x0, dtype=float)
        return a, lam, np.asarray(m.b, dtype=float), np.asarray(m.bounds, dtype=float), x0
    if m.preset == "random_signal":
        a, lam, b, bounds = random_signal_system(m.n, m.d, cfg.seed, tuple(m.lam_range), m.density)
        return a, lam, b, bounds, None
    if m.interaction is None:
        game = random_lq_game(m.n, cfg.seed)
    else:
        try:
            game = LQGameConfig(np.asarray(m.interaction, dtype=float), np.asarray(m.rewards, dtype=float), m.effort_cap)
        except ValueError as exc:
            raise ConfigError(str(exc), "model.interaction") from exc
    sch = lq_best_reply_schedule(game)
    return sch.a_source, sch.lam, sch.b_source, sch.bounds, None


def _conv(cfg: ExperimentConfig) -> ConvergenceCfg:
    r = cfg.run
    return ConvergenceCfg(tol_step=r.tol_step, window=r.window, eps_h=r.eps_h, norm=r.norm, stride=r.stride)


# ---------------------------------------------------------------- commands


def _topology_payload(cfg: ExperimentConfig, schedule: UpdateSchedule) -> dict:
    an = cfg.analysis
    mats = generic_matrices(schedule, an.horizon)
    topo = estimate_infinite_graph(mats, an.horizon, an.edge_mass_threshold)
    payload = {"topology": topo.to_dict(), "augmented": bool(schedule.has_signals)}
    payload["theorem2"] = check_theorem2_conditions(schedule, topo, an.horizon).to_dict()
    return payload


def cmd_simulate(cfg: ExperimentConfig, out: Path) -> list[str]:
    schedule = build_schedule(cfg)
    traj, report = run(schedule, max_steps=cfg.run.max_steps, conv=_conv(cfg))
    _write(out, "trajectory.csv", traj.to_csv())
    rep = report.to_dict()
    rep["model"] = schedule.name
    _write(out, "outcome.json", _dumps(rep))
    written = ["trajectory.csv", "outcome.json"]
    if cfg.analysis.topology or cfg.analysis.theorem2:
        _write(out, "topology.json", _dumps(_topology_payload(cfg, schedule)))
        written.append("topology.json")
    if cfg.analysis.absorption or cfg.analysis.contact_trace:
        written += _absorption_outputs(cfg, out)
    return written


def _augmented(cfg: ExperimentConfig):
    a, lam, b, bounds, _ = stationary_system(cfg)
    return augment(a, lam, b, bounds)


def _absorption_outputs(cfg: ExperimentConfig, out: Path) -> list[str]:
    sys_ = _augmented(cfg)
    rep = absorption_report(sys_)
    payload = rep.to_dict()
    payload["lambda"] = sys_.lam.tolist()
    if cfg.model.preset == "lq_game":
        payload["nash_equilibrium"] = rep.x_star[:, 0].tolist()
        payload["marginal_effect_of_reward"] = np.diag(rep.fundamental).tolist()
    _write(out, "absorption.json", _dumps(payload))
    _write(out, "fundamental.csv", matrix_to_csv(rep.fundamental))
    _write(out, "absorb_probs.csv", matrix_to_csv(rep.absorb_probs))
    written = ["absorption.json", "fundamental.csv", "absorb_probs.csv"]
    if cfg.model.preset == "lq_game":
        rows = [
            {"agent": i, "x_star": float(rep.x_star[i, 0]), "F_ii": float(rep.fundamental[i, i])}
            for i in range(sys_.n)
        ]
        _write(out, "lq_table.csv", _rows_csv(["agent", "x_star", "F_ii"], rows))
        written.append("lq_table.csv")
    if cfg.analysis.contact_trace:
        traces = [contact_trace(sys_, tg.node, tg.t).to_dict() for tg in cfg.analysis.contact_trace]
        _write(out, "contact_trace.json", _dumps(traces))
        written.append("contact_trace.json")
    return written


def cmd_steady_state(cfg: ExperimentConfig, out: Path) -> list[str]:
    return _absorption_outputs(cfg, out)


def cmd_topology(cfg: ExperimentConfig, out: Path) -> list[str]:
    schedule = build_schedule(cfg)
    _write(out, "topology.json", _dumps(_topology_payload(cfg, schedule)))
    return ["topology.json"]


def cmd_walk(cfg: ExperimentConfig, out: Path) -> list[str]:
    sys_ = _augmented(cfg)
    if np.any(sys_.lam <= 0):
        raise ConfigError("walk comparisons need lambda > 0 on every node", "model.lam")
    rep = absorption_report(sys_)
    wc = cfg.walk
    starts = range(sys_.n) if wc.starts is None else wc.starts
    nodes, ok = [], True
    for s in starts:
        if not 0 <= s < sys_.n:
            raise ConfigError(f"start node {s} outside 0..{sys_.n - 1}", "walk.starts")
        walk_seed = int(np.random.SeedSequence([cfg.seed, s]).generate_state(1)[0])
        res = simulate_walks(sys_, s, wc.n_walks, walk_seed, wc.step_cap, wc.batch_size)
        p = rep.absorb_probs[s]
        sd = np.sqrt(p * (1 - p) / wc.n_walks)
        err = np.abs(res.absorb_freq - p)
        absorb_ok = bool(np.all(np.where(sd > 0, err <= 3 * sd, err <= 1e-12)))
        f_row = rep.fundamental[s]
        sem = res.visit_sem
        verr = np.abs(res.mean_visits - f_row)
        visits_ok = bool(np.all(np.where(sem > 0, verr <= 5 * sem, verr <= 1e-12)))
        within = absorb_ok and visits_ok and res.capped == 0
        ok &= within
        nodes.append(
            {
                "start": s,
                "absorb_freq": res.absorb_freq.tolist(),
                "absorb_analytic": p.tolist(),
                "absorb_max_abs_err": float(err.max()),
                "mean_visits": res.mean_visits.tolist(),
                "visits_analytic": f_row.tolist(),
                "visits_max_abs_err": float(verr.max()),
                "mean_returns": res.return_count / wc.n_walks,
                "expected_returns": float(rep.expected_returns[s]),
                "capped": res.capped,
                "verdict": "within CI" if within else "outside CI",
            }
        )
    payload = {
        "n_walks": wc.n_walks,
        "step_cap": wc.step_cap,
        "capped_total": int(sum(n["capped"] for n in nodes)),
        "verdict": "within CI" if ok else "outside CI",
        "nodes": nodes,
    }
    if cfg.analysis.contact_trace:
        payload["contact_trace"] = [
            contact_trace(sys_, tg.node, tg.t).to_dict() for tg in cfg.analysis.contact_trace
        ]
    _write(out, "walk.json", _dumps(payload))
    return ["walk.json"]


# ---------------------------------------------------------------- sweeps

CURTAIN_COLUMNS = [
    "cell", "seed", "alpha", "p0", "trials", "mean_x_star", "outcome_class", "n_consensus",
    "n_fragmented", "n_heterogeneous", "n_nonconvergent", "cascade_fraction", "error",
]
TRANSITIVITY_COLUMNS = [
    "cell", "seed", "p", "mean_transitivity", "mean_expected_returns", "resampled",
    "metric", "torus", "clustering", "error",
]


def _sweep_cells(cfg: ExperimentConfig) -> list[dict]:
    sw = cfg.sweep
    if sw.kind == "curtain":
        return [{"alpha": a, "p0": p} for a in sw.alpha_grid for p in sw.p0_grid]
    return [{"p": p, "level": k} for k, p in enumerate(sw.p_grid)]


def _run_cell(sweep: dict, seed: int, params: dict, adj) -> dict:
    """Worker body: never raises, failures land in the ``error`` column."""
    try:
        if sweep["kind"] == "curtain":
            row = curtain_cell(
                adj, params["alpha"], params["p0"], sweep["trials"], seed, max_steps=sweep["max_steps"]
            )
        else:
            row = transitivity_level(
                params["p"],
                params["level"],
                sweep["n"],
                sweep["lattice_radius"],
                sweep["iters_per_p"],
                sweep["weight_scale"],
                seed,
                sweep["torus"],
                sweep["metric"],
            )
        row["error"] = ""
    except Exception as exc:  # noqa: BLE001 - recorded per cell
        row = dict(params, error=f"{type(exc).__name__}: {exc}")
    row["seed"] = seed
    return row


def cmd_sweep(cfg: ExperimentConfig, out: Path) -> list[str]:
    if cfg.sweep is None:
        raise ConfigError("sweep command needs a sweep section", "sweep")
    sweep = cfg.sweep.model_dump(mode="json")
    cells = _sweep_cells(cfg)
    adj = None
    if sweep["kind"] == "curtain":
        adj = recommender_graph(sweep["n"], sweep["mean_degree"], cfg.seed)
    cell_dir = out / "cells"
    cell_dir.mkdir(exist_ok=True)

    rows: dict[int, dict] = {}
    todo = []
    for idx, params in enumerate(cells):
        path = cell_dir / f"cell_{idx:05d}.json"
        key = {"sweep": sweep, "seed": cfg.seed, "params": params}
        if path.exists():
            try:
                saved = json.loads(path.read_text())
                if saved.get("key") == key and not saved["row"].get("error"):
                    rows[idx] = saved["row"]
                    continue
            except (json.JSONDecodeError, KeyError):
                pass
        todo.append((idx, params, key, path))

    def finish(idx, key, path, row):
        row["cell"] = idx
        rows[idx] = row
        _write(cell_dir, path.name, _dumps({"key": key, "row": row}))

    if cfg.workers > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            futs = [(t, pool.submit(_run_cell, sweep, cfg.seed, t[1], adj)) for t in todo]
            for (idx, _params, key, path), fut in futs:
                finish(idx, key, path, fut.result())
    else:
        for idx, params, key, path in todo:
            finish(idx, key, path, _run_cell(sweep, cfg.seed, params, adj))

    ordered = [rows[i] for i in range(len(cells))]
    cols = CURTAIN_COLUMNS if sweep["kind"] == "curtain" else TRANSITIVITY_COLUMNS
    _write(out, "sweep.csv", _rows_csv(cols, ordered))
    failed = sum(1 for r in ordered if r.get("error"))
    if failed == len(ordered):
        raise RuntimeFailure(f"all {failed} sweep cells failed; first error: {ordered[0]['error']}")
    return ["sweep.csv"]


COMMANDS = {
    "simulate": cmd_simulate,
    "steady-state": cmd_steady_state,
    "sweep": cmd_sweep,
    "walk": cmd_walk,
    "topology": cmd_topology,
}


# ---------------------------------------------------------------- entry point


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hetdyn", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"hetdyn {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        src = sp.add_mutually_exclusive_group(required=True)
        src.add_argument("--config", help="experiment config file (JSON)")
        src.add_argument("--preset", help="name of a bundled preset")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--out-dir", help=f"output directory (overrides ${OUT_DIR_ENV} and the config)")
        sp.add_argument("--workers", type=int, help="worker processes for sweeps")
        sp.add_argument("--stride", type=int, help="trajectory recording stride")
    return p


def _resolve(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else load_preset(args.preset)
    data = cfg.model_dump(mode="json")
    if args.seed is not None:
        data["seed"] = args.seed
    if args.workers is not None:
        data["workers"] = args.workers
    if args.stride is not None:
        data["run"]["stride"] = args.stride
    if args.out_dir:
        data["out_dir"] = args.out_dir
    elif os.environ.get(OUT_DIR_ENV):
        data["out_dir"] = os.environ[OUT_DIR_ENV]
    return parse_config(data)


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    started = time.time()
    try:
        cfg = _resolve(args)
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        written = COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ScheduleError as exc:
        print(f"runtime error at {exc}", file=sys.stderr)
        return 1
    except (RuntimeFailure, np.linalg.LinAlgError, ValueError, RuntimeError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 1

    # the output location is an invocation detail, kept with the timestamps
    effective = cfg.model_dump(mode="json", exclude={"out_dir"})
    _write(out, "effective_config.json", _dumps(effective))
    meta = {
        "command": args.command,
        "finished_utc": datetime.now(timezone.utc).isoformat(),
        "elapsed_s": round(time.time() - started, 3),
        "hetdyn": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "out_dir": str(out),
        "outputs": written + ["effective_config.json"],
    }
    _write(out, "metadata.json", _dumps(meta))
    print(f"{args.command}: wrote {', '.join(written)} to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
