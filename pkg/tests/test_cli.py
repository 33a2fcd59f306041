import csv
import json

import pytest

from hetdyn.cli import main
from hetdyn.config import ConfigError, load_preset, parse_config, preset_names

TWO_NODE = {
    "preset": "linear",
    "a": [[0.0, 1.0], [1.0, 0.0]],
    "lam": 0.5,
    "b": [[1.0], [-1.0]],
    "bounds": [[-1.0, 1.0]],
}


def _cfg(tmp_path, data, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


def _read(path):
    return json.loads(path.read_text())


def test_all_presets_validate():
    names = preset_names()
    assert {"contrarian", "swarm_sync", "swarm_async", "recommender", "lq_game", "two_node"} <= set(names)
    for name in names:
        load_preset(name)


def test_unknown_key_reports_path(tmp_path, capsys):
    path = _cfg(tmp_path, {"model": {"preset": "swarm", "gamma": 0.3, "colour": "red"}})
    assert main(["simulate", "--config", path]) == 2
    assert "model.swarm.colour" in capsys.readouterr().err


def test_bad_value_reports_path():
    with pytest.raises(ConfigError) as err:
        parse_config({"run": {"max_steps": 0}})
    assert err.value.path == "run.max_steps"


def test_missing_file_and_bad_json(tmp_path):
    assert main(["simulate", "--config", str(tmp_path / "absent.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["simulate", "--config", str(bad)]) == 2


def test_simulate_swarm_preset(tmp_path):
    assert main(["simulate", "--preset", "swarm_sync", "--out-dir", str(tmp_path)]) == 0
    assert _read(tmp_path / "outcome.json")["outcome_class"] == "heterogeneous"


def test_simulate_contrarian_preset(tmp_path):
    assert main(["simulate", "--preset", "contrarian", "--out-dir", str(tmp_path)]) == 0
    assert _read(tmp_path / "outcome.json")["outcome_class"] == "consensus"


def test_outputs_are_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert main(["simulate", "--preset", "bounded_confidence", "--seed", "3", "--out-dir", str(out)]) == 0
    for name in ("trajectory.csv", "outcome.json", "effective_config.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    assert "finished_utc" in _read(a / "metadata.json")


def test_seed_flag_changes_run(tmp_path):
    main(["simulate", "--preset", "bounded_confidence", "--seed", "1", "--out-dir", str(tmp_path / "a")])
    main(["simulate", "--preset", "bounded_confidence", "--seed", "2", "--out-dir", str(tmp_path / "b")])
    assert (tmp_path / "a/trajectory.csv").read_bytes() != (tmp_path / "b/trajectory.csv").read_bytes()
    assert _read(tmp_path / "b/effective_config.json")["seed"] == 2


def test_effective_config_round_trips(tmp_path):
    first = tmp_path / "first"
    main(["simulate", "--preset", "two_node", "--stride", "5", "--out-dir", str(first)])
    eff = first / "effective_config.json"
    assert _read(eff)["run"]["stride"] == 5
    second = tmp_path / "second"
    assert main(["simulate", "--config", str(eff), "--out-dir", str(second)]) == 0
    assert (first / "trajectory.csv").read_bytes() == (second / "trajectory.csv").read_bytes()


def test_env_out_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("HETDYN_OUT_DIR", str(tmp_path / "env"))
    assert main(["simulate", "--preset", "two_node"]) == 0
    assert (tmp_path / "env/outcome.json").exists()
    assert main(["simulate", "--preset", "two_node", "--out-dir", str(tmp_path / "flag")]) == 0
    assert (tmp_path / "flag/outcome.json").exists()


def test_trajectory_stride(tmp_path):
    main(["simulate", "--preset", "two_node", "--stride", "4", "--out-dir", str(tmp_path)])
    rows = list(csv.DictReader((tmp_path / "trajectory.csv").open()))
    ts = sorted({int(r["t"]) for r in rows})
    assert ts[:3] == [0, 4, 8]


def test_steady_state_two_node(tmp_path):
    assert main(["steady-state", "--preset", "two_node", "--out-dir", str(tmp_path)]) == 0
    rep = _read(tmp_path / "absorption.json")
    assert [r[0] for r in rep["x_star"]] == pytest.approx([1 / 3, -1 / 3], abs=1e-12)
    assert rep["absorb_probs"][0] == pytest.approx([2 / 3, 1 / 3], abs=1e-12)
    assert rep["absorb_probs"][1] == pytest.approx([1 / 3, 2 / 3], abs=1e-12)
    assert rep["fundamental_residual"] < 1e-8
    traces = _read(tmp_path / "contact_trace.json")
    assert traces[0]["original"] == [1.0, 0.0]


def test_steady_state_lq_table(tmp_path):
    assert main(["steady-state", "--preset", "lq_game", "--out-dir", str(tmp_path)]) == 0
    rows = list(csv.DictReader((tmp_path / "lq_table.csv").open()))
    assert [float(r["x_star"]) for r in rows] == pytest.approx([2.0, 2.0])
    assert [float(r["F_ii"]) for r in rows] == pytest.approx([4 / 3, 4 / 3])


def test_steady_state_without_signals(tmp_path, capsys):
    model = dict(TWO_NODE, lam=0.0)
    path = _cfg(tmp_path, {"model": model, "out_dir": str(tmp_path / "o")})
    assert main(["steady-state", "--config", path]) == 1
    assert "private-signal" in capsys.readouterr().err


def test_steady_state_needs_stationary_model(tmp_path):
    assert main(["steady-state", "--preset", "swarm_sync", "--out-dir", str(tmp_path)]) == 2


def test_runtime_error_exit_code(tmp_path, capsys):
    model = dict(TWO_NODE, b=[[3.0], [0.0]])
    path = _cfg(tmp_path, {"model": model, "out_dir": str(tmp_path / "o")})
    assert main(["simulate", "--config", path]) == 1
    assert "step 0" in capsys.readouterr().err


def test_walk_two_node(tmp_path):
    path = _cfg(
        tmp_path,
        {
            "model": TWO_NODE,
            "walk": {"n_walks": 20000},
            "analysis": {"contact_trace": [{"node": 1, "t": 0}]},
            "out_dir": str(tmp_path / "o"),
        },
    )
    assert main(["walk", "--config", path]) == 0
    rep = _read(tmp_path / "o/walk.json")
    assert rep["verdict"] == "within CI"
    assert rep["contact_trace"][0]["original"] == [0.0, 1.0]


def test_walk_step_cap_counted(tmp_path):
    model = dict(TWO_NODE, lam=0.001)
    path = _cfg(tmp_path, {"model": model, "walk": {"n_walks": 200, "step_cap": 10}, "out_dir": str(tmp_path / "o")})
    assert main(["walk", "--config", path]) == 0
    assert _read(tmp_path / "o/walk.json")["capped_total"] > 0


def test_topology_command(tmp_path):
    assert main(["topology", "--preset", "two_node", "--out-dir", str(tmp_path)]) == 0
    rep = _read(tmp_path / "topology.json")
    assert rep["topology"]["quasi_connected"] == [0, 1]
    assert rep["theorem2"]["cond1"] is True


def _curtain(tmp_path, **kw):
    sweep = {"kind": "curtain", "n": 30, "mean_degree": 6, "alpha_grid": [0.4, 0.6], "p0_grid": [0.3, 0.7],
             "trials": 2, "max_steps": 2000}
    sweep.update(kw)
    return _cfg(tmp_path, {"sweep": sweep, "out_dir": str(tmp_path / "o")})


def test_curtain_sweep_rows_and_resume(tmp_path):
    path = _curtain(tmp_path)
    assert main(["sweep", "--config", path]) == 0
    first = (tmp_path / "o/sweep.csv").read_bytes()
    rows = list(csv.DictReader((tmp_path / "o/sweep.csv").open()))
    assert len(rows) == 4
    assert [(float(r["alpha"]), float(r["p0"])) for r in rows] == [(0.4, 0.3), (0.4, 0.7), (0.6, 0.3), (0.6, 0.7)]
    cells = sorted((tmp_path / "o/cells").glob("cell_*.json"))
    assert len(cells) == 4
    # a removed cell is recomputed, the rest are reused
    cells[1].unlink()
    stamp = cells[0].stat().st_mtime_ns
    assert main(["sweep", "--config", path]) == 0
    assert cells[0].stat().st_mtime_ns == stamp
    assert (tmp_path / "o/sweep.csv").read_bytes() == first


def test_sweep_workers_match_serial(tmp_path):
    path = _curtain(tmp_path)
    main(["sweep", "--config", path, "--out-dir", str(tmp_path / "serial")])
    main(["sweep", "--config", path, "--workers", "2", "--out-dir", str(tmp_path / "pool")])
    assert (tmp_path / "serial/sweep.csv").read_bytes() == (tmp_path / "pool/sweep.csv").read_bytes()


def test_sweep_partial_failure(tmp_path):
    path = _curtain(tmp_path, alpha_grid=[0.6], p0_grid=[0.5, 1.5])
    assert main(["sweep", "--config", path]) == 0
    rows = list(csv.DictReader((tmp_path / "o/sweep.csv").open()))
    assert rows[0]["error"] == "" and "p0" in rows[1]["error"]


def test_sweep_all_cells_fail(tmp_path):
    sweep = {"kind": "transitivity", "n": 10, "p_grid": [0.1, 0.0], "iters_per_p": 1}
    path = _cfg(tmp_path, {"sweep": sweep, "out_dir": str(tmp_path / "o")})
    assert main(["sweep", "--config", path]) == 1


def test_empty_grid_is_config_error(tmp_path):
    assert main(["sweep", "--config", _curtain(tmp_path, alpha_grid=[])]) == 2


def test_transitivity_sweep_small(tmp_path):
    sweep = {"kind": "transitivity", "n": 36, "p_grid": [0.2, 0.1, 0.0], "iters_per_p": 2}
    path = _cfg(tmp_path, {"sweep": sweep, "out_dir": str(tmp_path / "o")})
    assert main(["sweep", "--config", path]) == 0
    rows = list(csv.DictReader((tmp_path / "o/sweep.csv").open()))
    assert len(rows) == 3 and rows[0]["metric"] == "chebyshev" and rows[0]["clustering"] == "global_transitivity"
