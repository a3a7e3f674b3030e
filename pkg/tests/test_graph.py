import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dgmbb.graph import (
    Graph,
    GraphError,
    MixingOperator,
    WeightMatrix,
    complete_graph,
    generate_erdos_renyi,
    metropolis_weights,
    path_graph,
    spectral_gap,
    validate_weights,
)


def test_two_nodes_full_probability_gives_single_edge():
    assert generate_erdos_renyi(2, 1.0, 0).edges == ((0, 1),)


def test_erdos_renyi_frozen_fixture():
    # pairs visited as (0,1),(0,2),...,(3,4); default_rng(7).random(10) < 0.5
    # is true at positions 3, 4, 6, 9
    g = generate_erdos_renyi(5, 0.5, 7)
    assert g.edges == ((0, 4), (1, 2), (1, 4), (3, 4))
    rng = np.random.default_rng(7)
    keep = rng.random(10) < 0.5
    pairs = [(i, j) for i in range(5) for j in range(i + 1, 5)]
    assert tuple(p for p, k in zip(pairs, keep) if k) == g.edges


def test_erdos_renyi_default_size_is_connected_with_expected_degree():
    g = generate_erdos_renyi(200, 0.1, 0)
    assert g.is_connected()
    assert abs(g.degrees.mean() - 19.9) < 2.0


def test_erdos_renyi_resamples_disconnected_draws():
    # with r_c tiny the first draw is almost surely disconnected
    with pytest.raises(GraphError):
        generate_erdos_renyi(30, 0.01, 0, max_resamples=3)


@pytest.mark.parametrize("n, r_c", [(0, 0.5), (3, 0.0), (3, 1.5)])
def test_erdos_renyi_rejects_bad_arguments(n, r_c):
    with pytest.raises(ValueError):
        generate_erdos_renyi(n, r_c, 0)


@given(st.integers(2, 25), st.floats(0.2, 1.0), st.integers(0, 10_000))
def test_erdos_renyi_deterministic_and_connected(n, r_c, seed):
    a = generate_erdos_renyi(n, r_c, seed)
    b = generate_erdos_renyi(n, r_c, seed)
    assert a.edges == b.edges
    assert a.is_connected()
    for i, j in a.edges:
        assert i < j


def test_graph_rejects_self_loops_and_duplicates():
    with pytest.raises(GraphError):
        Graph(3, ((1, 1),))
    with pytest.raises(GraphError):
        Graph(3, ((0, 1), (1, 0)))
    with pytest.raises(GraphError):
        Graph(3, ((0, 3),))


def test_metropolis_path_graph(path3):
    _, wm = path3
    expected = np.array([[2, 1, 0], [1, 1, 1], [0, 1, 2]]) / 3.0
    np.testing.assert_allclose(wm.W, expected, atol=1e-15)
    assert abs(wm.delta - 2.0 / 3.0) < 1e-12


def test_metropolis_single_agent():
    wm = metropolis_weights(Graph(1, ()))
    assert wm.W.tolist() == [[1.0]]
    assert wm.delta == 0.0


def test_metropolis_complete3_has_zero_gap():
    wm = metropolis_weights(complete_graph(3))
    np.testing.assert_allclose(wm.W, np.full((3, 3), 1 / 3), atol=1e-15)
    assert wm.delta < 1e-12


def test_metropolis_needs_connected_graph():
    with pytest.raises(GraphError):
        metropolis_weights(Graph(3, ((0, 1),)))


def test_path_gap_matches_eigen_oracle(path3):
    _, wm = path3
    eig = np.sort(np.linalg.eigvals(wm.W).real)
    np.testing.assert_allclose(eig, [0.0, 2 / 3, 1.0], atol=1e-12)


@given(st.integers(2, 30), st.floats(0.15, 1.0), st.integers(0, 1000))
def test_metropolis_invariants(n, r_c, seed):
    g = generate_erdos_renyi(n, r_c, seed)
    wm = metropolis_weights(g)
    W = wm.W
    assert np.array_equal(W, W.T)
    assert np.max(np.abs(W.sum(axis=1) - 1)) <= 1e-12
    assert 0.0 <= wm.delta < 1.0
    allowed = np.eye(n, dtype=bool)
    for i, j in g.edges:
        allowed[i, j] = allowed[j, i] = True
    assert not np.any(W[~allowed])
    rep = validate_weights(W, graph=g)
    assert rep.ok


def test_validate_flags_scaled_row(path3):
    _, wm = path3
    W = wm.W.copy()
    W[1] *= 1.01
    rep = validate_weights(W)
    assert not rep.row_stochastic
    assert not rep.ok


def test_validate_flags_identity_gap():
    rep = validate_weights(np.eye(3), graph=path_graph(3))
    assert rep.row_stochastic and rep.symmetric
    assert abs(rep.delta - 1.0) < 1e-12
    assert not rep.delta_ok
    assert not rep.ok


def test_spectral_gap_rejects_identity():
    with pytest.raises(GraphError):
        spectral_gap(np.eye(3))


def test_json_round_trip(path3):
    g, wm = path3
    g2 = Graph.from_dict(json.loads(json.dumps(g.to_dict())))
    assert g2 == g
    wm2 = WeightMatrix.from_dict(json.loads(json.dumps(wm.to_dict())))
    assert np.array_equal(wm2.W, wm.W)
    assert wm2.delta == wm.delta


def test_mixing_operator_csr_matches_dense():
    wm = metropolis_weights(generate_erdos_renyi(12, 0.4, 3))
    op = MixingOperator(wm.W)
    dense = np.zeros_like(wm.W)
    for i in range(op.n):
        for k in range(op.indptr[i], op.indptr[i + 1]):
            dense[i, op.indices[k]] = op.data[k]
    assert np.array_equal(dense, wm.W)
