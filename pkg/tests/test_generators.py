import numpy as np
import pytest

from hetdyn.generators import (
    GraphSpec,
    GraphSpecError,
    generate,
    is_strongly_connected,
    lattice2d,
    row_normalize_weights,
    transitivity,
)

from .oracles import triangle_count_bruteforce


def test_complete_graph_transitivity():
    assert transitivity(generate(GraphSpec("complete", 5))) == 1.0
    assert transitivity(np.ones((4, 4), dtype=bool) & ~np.eye(4, dtype=bool)) == 1.0


def test_path_transitivity():
    p4 = np.zeros((4, 4), dtype=bool)
    for i in range(3):
        p4[i, i + 1] = p4[i + 1, i] = True
    assert transitivity(p4) == 0.0


def test_transitivity_needs_three_nodes():
    with pytest.raises(ValueError):
        transitivity(np.zeros((2, 2), dtype=bool))


def test_lattice_transitivity_matches_enumeration():
    g = generate(GraphSpec("lattice2d_radius", 100, {"radius": 2}))
    tri, triples = triangle_count_bruteforce(g.undirected)
    assert transitivity(g) == pytest.approx(3 * tri / triples, rel=1e-12)


def test_k_regular_degrees():
    for seed in range(10):
        g = generate(GraphSpec("k_regular", 20, {"k": 3}, seed))
        assert np.all(g.degrees() == 3)
        assert np.array_equal(g.adjacency, g.adjacency.T)
        assert not g.adjacency.diagonal().any()


def test_k_regular_impossible():
    with pytest.raises(GraphSpecError):
        generate(GraphSpec("k_regular", 5, {"k": 3}))


def test_unrewired_small_world_is_lattice():
    g = generate(GraphSpec("small_world_rewired", 49, {"p": 0.0, "radius": 2}, 4))
    np.testing.assert_array_equal(g.adjacency, lattice2d(49, 2))
    assert g.metadata == {"metric": "chebyshev", "torus": False}


def test_lattice_neighbourhoods():
    cheb = lattice2d(25, 2)
    manh = lattice2d(25, 2, metric="manhattan")
    centre = 12
    assert cheb[centre].sum() == 24
    assert manh[centre].sum() == 12
    assert lattice2d(25, 1, torus=True).sum(axis=1).tolist() == [8] * 25
    with pytest.raises(GraphSpecError):
        lattice2d(10, 1)


def test_full_rewiring_lowers_transitivity():
    base = transitivity(lattice2d(100, 2))
    edges = lattice2d(100, 2).sum()
    for seed in range(20):
        g = generate(GraphSpec("small_world_rewired", 100, {"p": 1.0, "radius": 2}, seed))
        assert g.adjacency.sum() == edges
        assert transitivity(g) < base


def test_same_seed_same_edges():
    for fam, prm in [
        ("erdos_renyi_directed", {"p": 0.3}),
        ("erdos_renyi", {"p": 0.2}),
        ("k_regular", {"k": 4}),
        ("small_world_rewired", {"p": 0.1, "radius": 1}),
    ]:
        a = generate(GraphSpec(fam, 16, prm, 42))
        b = generate(GraphSpec(fam, 16, prm, 42))
        assert a.edge_list() == b.edge_list()
        assert a.to_csv() == b.to_csv()


def test_directed_er_is_strongly_connected():
    for seed in range(10):
        g = generate(GraphSpec("erdos_renyi_directed", 10, {"p": 0.3}, seed))
        assert is_strongly_connected(g.adjacency)


def test_hopeless_connectivity_raises():
    with pytest.raises(GraphSpecError, match="disconnected"):
        generate(GraphSpec("erdos_renyi", 30, {"p": 0.0}))


def test_uniform_weights_two_cycle():
    np.testing.assert_array_equal(row_normalize_weights(np.array([[0, 1], [1, 0]], bool)).entries, [[0, 1], [1, 0]])


def test_scaled_weights_triangle():
    w = row_normalize_weights(generate(GraphSpec("complete", 3)), "scaled", 0.95).entries
    np.testing.assert_allclose(w[~np.eye(3, dtype=bool)], 0.475)
    np.testing.assert_allclose(w.sum(axis=1), 0.95)


def test_star_centre_row():
    w = row_normalize_weights(generate(GraphSpec("hub_spoke", 5))).entries
    np.testing.assert_array_equal(w[0], [0, 0.25, 0.25, 0.25, 0.25])


def test_isolated_node_named():
    adj = np.zeros((3, 3), dtype=bool)
    adj[0, 1] = adj[1, 0] = True
    with pytest.raises(GraphSpecError, match="node 2"):
        row_normalize_weights(adj)


def test_edge_list_csv():
    g = generate(GraphSpec("complete", 3))
    assert g.to_csv().splitlines()[:2] == ["src,dst,weight", "0,1,1"]
