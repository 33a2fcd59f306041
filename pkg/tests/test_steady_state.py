import numpy as np
import pytest

from hetdyn.augmentation import augment
from hetdyn.dynamics import ConvergenceCfg, UpdateSchedule, run
from hetdyn.graph_core import block_permutation, scc_decompose
from hetdyn.steady_state import (
    NoAbsorbingStructureError,
    QuasiConnectivityError,
    absorption_probabilities,
    absorption_report,
    contact_trace,
    fundamental_matrix,
    quasi_connected_steady_state,
    simulate_walks,
    steady_state,
)

from .oracles import geometric_series_inverse, power_iterate, random_stochastic

SWAP = np.array([[0.0, 1.0], [1.0, 0.0]])


def test_two_node_fundamental():
    np.testing.assert_allclose(fundamental_matrix(SWAP, 0.5), [[4 / 3, 2 / 3], [2 / 3, 4 / 3]], atol=1e-12)


def test_scalar_fundamental():
    assert fundamental_matrix([[1.0]], 0.25)[0, 0] == pytest.approx(4.0)


def test_strong_signal_limit():
    f = fundamental_matrix(random_stochastic(np.random.default_rng(0), 4), 0.999)
    np.testing.assert_allclose(f, np.eye(4), atol=2e-3)


def test_matches_geometric_series():
    rng = np.random.default_rng(1)
    a = random_stochastic(rng, 6)
    lam = rng.uniform(0.1, 0.8, 6)
    np.testing.assert_allclose(
        fundamental_matrix(a, lam), geometric_series_inverse((1 - lam)[:, None] * a), atol=1e-10
    )


def test_closed_class_without_signal():
    a = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.0, 0.5, 0.5]])
    with pytest.raises(NoAbsorbingStructureError, match="closed class"):
        fundamental_matrix(a, [0.3, 0.0, 0.0])
    # a signal anywhere in the sink class is enough
    fundamental_matrix(a, [0.0, 0.0, 0.1])


def test_two_node_steady_state():
    np.testing.assert_allclose(steady_state(SWAP, 0.5, [1.0, -1.0]), [[1 / 3], [-1 / 3]], atol=1e-12)


def test_uniform_signals_give_consensus():
    rng = np.random.default_rng(2)
    a = random_stochastic(rng, 7)
    x = steady_state(a, rng.uniform(0.05, 0.9, 7), np.full(7, 0.37))
    np.testing.assert_allclose(x, 0.37, atol=1e-12)


def test_two_node_absorption():
    sys = augment(SWAP, 0.5, [[1.0], [-1.0]], (-1, 1))
    np.testing.assert_allclose(absorption_probabilities(sys), [[2 / 3, 1 / 3], [1 / 3, 2 / 3]], atol=1e-12)


def test_single_node_absorbs_on_upper_ghost():
    sys = augment([[1.0]], 0.9, [[1.0]], (-1, 1))
    np.testing.assert_allclose(absorption_probabilities(sys), [[1.0, 0.0]], atol=1e-12)


def test_unreachable_ghosts():
    a = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.0, 0.5, 0.5]])
    sys = augment(a, [0.3, 0.0, 0.0], np.zeros((3, 1)), (-1, 1))
    with pytest.raises(NoAbsorbingStructureError):
        absorption_probabilities(sys)


def test_report_invariants():
    rng = np.random.default_rng(3)
    a = random_stochastic(rng, 8)
    lam = rng.uniform(0.05, 0.9, 8)
    b = rng.uniform(-1, 1, (8, 2))
    rep = absorption_report(augment(a, lam, b, [(-1, 1), (-1, 1)]))
    np.testing.assert_allclose(rep.absorb_probs.sum(axis=1), 1.0, atol=1e-8)
    assert np.all(np.diag(rep.fundamental) >= 1.0)
    assert rep.residual < 1e-8
    np.testing.assert_allclose(rep.x_star, steady_state(a, lam, b), atol=1e-12)
    np.testing.assert_allclose(rep.expected_returns, np.diag(rep.fundamental) - 1)


def test_ergodic_in_initial_state():
    rng = np.random.default_rng(4)
    a = random_stochastic(rng, 6)
    b = rng.uniform(-1, 1, (6, 1))
    conv = ConvergenceCfg(tol_step=1e-12)
    outs = []
    for x0 in (np.full((6, 1), -1.0), np.full((6, 1), 1.0)):
        _, rep = run(UpdateSchedule.stationary(a, 0.2, b, (-1, 1), x0=x0), max_steps=100_000, conv=conv)
        outs.append(rep.x_star)
    np.testing.assert_allclose(outs[0], outs[1], atol=1e-10)


def test_walks_immediate_absorption():
    sys = augment(random_stochastic(np.random.default_rng(5), 3), 0.999, np.zeros((3, 1)), (-1, 1))
    res = simulate_walks(sys, start=1, n_walks=2000, seed=1)
    assert res.absorb_counts.sum() == 2000
    assert res.mean_visits[1] == pytest.approx(1.0, abs=0.01)
    assert res.mean_visits[[0, 2]].max() < 0.01


def test_walks_two_node_frequencies():
    sys = augment(SWAP, 0.5, [[1.0], [-1.0]], (-1, 1))
    res = simulate_walks(sys, start=0, n_walks=40_000, seed=2)
    sd = np.sqrt(2 / 9 / 40_000)
    assert abs(res.absorb_freq[0] - 2 / 3) < 3 * sd
    assert res.capped == 0


def test_walk_returns_on_complete_graph():
    k5 = (np.ones((5, 5)) - np.eye(5)) / 4
    sys = augment(k5, 0.2, np.zeros((5, 1)), (-1, 1))
    f = fundamental_matrix(k5, 0.2)
    res = simulate_walks(sys, start=0, n_walks=50_000, seed=3)
    mean_returns = res.return_count / res.n_walks
    assert abs(mean_returns - (f[0, 0] - 1)) < 3 * res.visit_sem[0]


def test_walks_are_seed_deterministic():
    sys = augment(SWAP, 0.5, [[1.0], [-1.0]], (-1, 1))
    a = simulate_walks(sys, 0, 5000, seed=9, batch_size=1000)
    b = simulate_walks(sys, 0, 5000, seed=9, batch_size=1000)
    np.testing.assert_array_equal(a.visit_counts, b.visit_counts)
    np.testing.assert_array_equal(a.absorb_counts, b.absorb_counts)


def test_walk_step_cap_is_reported():
    sys = augment(SWAP, 0.01, [[1.0], [-1.0]], (-1, 1))
    res = simulate_walks(sys, 0, 1000, seed=0, step_cap=5)
    assert res.capped > 0
    assert res.absorb_counts.sum() + res.capped == 1000


def test_contact_trace_limits():
    rng = np.random.default_rng(6)
    a = random_stochastic(rng, 5)
    sys = augment(a, rng.uniform(0.1, 0.6, 5), rng.uniform(-1, 1, (5, 1)), (-1, 1))
    start = contact_trace(sys, 4, 0)
    np.testing.assert_array_equal(start.original, np.eye(5)[4])
    assert start.ghosts.sum() == 0
    late = contact_trace(sys, 4, 400)
    np.testing.assert_allclose(late.ghosts, absorption_probabilities(sys)[4], atol=1e-6)
    mid = contact_trace(sys, 4, 7)
    assert mid.original.sum() + mid.ghosts.sum() == pytest.approx(1.0)


def test_contact_trace_symmetric_system():
    k4 = (np.ones((4, 4)) - np.eye(4)) / 3
    sys = augment(k4, 0.3, np.zeros((4, 1)), (-1, 1))
    np.testing.assert_allclose(contact_trace(sys, 0, 500).ghosts, [0.5, 0.5], atol=1e-9)


def test_contact_trace_negative_time():
    sys = augment(SWAP, 0.5, [[1.0], [-1.0]], (-1, 1))
    with pytest.raises(ValueError):
        contact_trace(sys, 0, -1)


def test_block_steady_state_reproduces_closed_form():
    rng = np.random.default_rng(7)
    a = random_stochastic(rng, 6)
    lam = rng.uniform(0.05, 0.9, 6)
    b = rng.uniform(-1, 1, (6, 1))
    sys = augment(a, lam, b, (-1, 1))
    blocks = block_permutation(sys.a_tilde, scc_decompose(sys.a_tilde))
    out = quasi_connected_steady_state(blocks.q, blocks.r, blocks.s, sys.c_block)
    np.testing.assert_allclose(out[:6], steady_state(a, lam, b), atol=1e-12)
    np.testing.assert_allclose(out[6:], sys.c_block)


def test_block_steady_state_one_hop():
    r = np.array([[0.3, 0.7], [1.0, 0.0]])
    out = quasi_connected_steady_state(np.zeros((2, 2)), r, np.eye(2), [[1.0], [5.0]])
    np.testing.assert_allclose(out[:2], r @ [[1.0], [5.0]])


def test_block_steady_state_matches_power_iteration():
    q = np.array([[0.2, 0.3], [0.1, 0.4]])
    r = np.array([[0.5, 0.0, 0.0], [0.0, 0.25, 0.25]])
    s = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])
    full = np.block([[q, r], [np.zeros((3, 2)), s]])
    x0 = np.array([[0.0], [0.0], [1.0], [-2.0], [4.0]])
    s_lim = np.linalg.matrix_power(s, 200)
    out = quasi_connected_steady_state(q, r, s_lim, x0[2:])
    np.testing.assert_allclose(out, power_iterate(full, x0), atol=1e-8)


def test_block_steady_state_singular():
    with pytest.raises(QuasiConnectivityError):
        quasi_connected_steady_state(np.eye(1), np.zeros((1, 1)), np.eye(1), [[1.0]])
