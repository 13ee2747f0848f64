"""Graph construction, mixing matrices, and spectral constant estimation.

Frozen expected values below were derived by hand from the definitions
(circulant eigenvalues for ring/exponential, direct norm evaluations) before
being compared against the implementation.
"""
from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from privpush.topology import (
    GRAPH_KINDS,
    TopologyError,
    build_graph,
    build_mixing,
    estimate_constants,
    graph_from_edges,
    is_strongly_connected,
    load_edge_list,
)


def test_ring_structure():
    g = build_graph("ring", 3)
    assert g.out_neighbors == ((1,), (2,), (0,))
    assert g.in_neighbors == ((2,), (0,), (1,))
    assert g.num_true_edges == 3
    assert g.in_including_self(1) == (0, 1)


def test_single_node_graphs_have_no_true_edges():
    for kind in GRAPH_KINDS:
        g = build_graph(kind, 1)
        assert g.num_true_edges == 0
        assert g.in_including_self(0) == (0,)


def test_complete_structure():
    g = build_graph("complete", 4)
    assert g.num_true_edges == 12
    for i in range(4):
        assert g.out_neighbors[i] == tuple(j for j in range(4) if j != i)


def test_exponential_offsets_node0_n4():
    # Offsets 1 and 2 (4 is not < 4), so node 0 pushes to 1 and 2.
    g = build_graph("exponential", 4)
    assert g.out_neighbors[0] == (1, 2)
    assert g.out_neighbors[3] == (0, 1)


def test_exponential_n10_has_four_out_edges_per_node():
    g = build_graph("exponential", 10)
    for i in range(10):
        assert g.out_neighbors[i] == tuple(sorted((i + o) % 10 for o in (1, 2, 4, 8)))
    assert g.num_true_edges == 40


def test_exponential_n2_is_a_two_cycle():
    g = build_graph("exponential", 2)
    assert g.out_neighbors == ((1,), (0,))


def test_bad_graph_requests_rejected():
    with pytest.raises(TopologyError):
        build_graph("ring", 0)
    with pytest.raises(TopologyError):
        build_graph("torus", 4)


def test_custom_graph_dedup_and_self_drop():
    g = graph_from_edges([(0, 1), (0, 1), (1, 1), (1, 0)], n=2)
    assert g.out_neighbors == ((1,), (0,))
    assert g.kind == "custom"


def test_custom_graph_rejects_out_of_range_edge():
    with pytest.raises(TopologyError):
        graph_from_edges([(0, 5)], n=2)


def test_custom_graph_rejects_weak_connectivity():
    # 0 -> 1 with no path back.
    with pytest.raises(TopologyError):
        graph_from_edges([(0, 1)], n=2)


def test_strong_connectivity_checks():
    assert is_strongly_connected(build_graph("ring", 7))
    assert is_strongly_connected(build_graph("exponential", 8))
    one_way = build_graph("ring", 2)
    broken = type(one_way)(
        n=2, out_neighbors=((1,), ()), in_neighbors=((), (0,)), kind="custom"
    )
    assert not is_strongly_connected(broken)


def test_edge_list_loader(tmp_path):
    path = tmp_path / "graph.txt"
    path.write_text("# j i pairs\n0 1\n1 2  # forward\n2 0\n\n")
    g = load_edge_list(str(path))
    assert g.n == 3
    assert g.out_neighbors == ((1,), (2,), (0,))
    bad = tmp_path / "bad.txt"
    bad.write_text("0 1 2\n")
    with pytest.raises(TopologyError):
        load_edge_list(str(bad))


def test_mixing_weights_ring3():
    mix = build_mixing(build_graph("ring", 3))
    expected = np.array([[0.5, 0.0, 0.5], [0.5, 0.5, 0.0], [0.0, 0.5, 0.5]])
    assert np.array_equal(mix.A, expected)


def test_mixing_weights_complete4_uniform():
    mix = build_mixing(build_graph("complete", 4))
    assert np.array_equal(mix.A, np.full((4, 4), 0.25))


def test_mixing_single_node_is_identity():
    mix = build_mixing(build_graph("ring", 1))
    assert np.array_equal(mix.A, np.array([[1.0]]))


@pytest.mark.parametrize("kind", GRAPH_KINDS)
@pytest.mark.parametrize("n", [1, 2, 3, 5, 8])
def test_columns_sum_to_one(kind, n):
    mix = build_mixing(build_graph(kind, n))
    np.testing.assert_allclose(mix.A.sum(axis=0), np.ones(n), rtol=0, atol=1e-12)
    assert np.all(mix.A >= 0.0)
    assert np.all(np.diag(mix.A) > 0.0)


def test_constants_ring3():
    # ||A^k - phi 1^T||_2 = 0.5^k exactly for the 3-ring: second eigenvalue
    # magnitude |(1 + e^{2 pi i/3})/2| = 0.5.
    consts = estimate_constants(build_mixing(build_graph("ring", 3)))
    assert abs(consts.lam - 0.5) < 1e-9
    assert 0.999 <= consts.C <= 1.001
    assert abs(consts.beta - 1.0) < 1e-12
    # gamma = max_k |mu_k - 1| = sqrt(3)/2 for this circulant.
    assert abs(consts.gamma - math.sqrt(3.0) / 2.0) < 1e-9
    np.testing.assert_allclose(consts.phi, np.full(3, 1.0 / 3.0), rtol=0, atol=1e-12)


def test_constants_exponential10():
    consts = estimate_constants(build_mixing(build_graph("exponential", 10)))
    assert abs(consts.lam - 0.6) < 1e-6
    assert abs(consts.gamma - 1.1862603405239331) < 1e-9
    assert abs(consts.beta - 1.0) < 1e-12
    np.testing.assert_allclose(consts.phi, np.full(10, 0.1), rtol=0, atol=1e-12)
    assert 0.9 <= consts.C <= 1.5


def test_constants_complete_graph_rank_one():
    # A is exactly phi 1^T from k=1 on, so residuals hit the floor at once
    # and lam degenerates to machine epsilon.
    consts = estimate_constants(build_mixing(build_graph("complete", 4)))
    assert consts.lam <= 1e-12
    assert consts.fit_ks == ()
    assert 0.9 <= consts.C <= 1.1
    assert abs(consts.beta - 1.0) < 1e-12


def test_constants_single_node():
    consts = estimate_constants(build_mixing(build_graph("complete", 1)))
    assert consts.C == 0.0
    assert consts.gamma == 0.0
    assert consts.beta == 1.0


def test_gamma_matches_direct_spectral_norm():
    for kind, n in (("ring", 5), ("exponential", 8), ("complete", 4)):
        mix = build_mixing(build_graph(kind, n))
        direct = np.linalg.norm(mix.A - np.eye(n), 2)
        consts = estimate_constants(mix)
        assert abs(consts.gamma - direct) < 1e-8


def test_residual_bound_and_decay_rate():
    for kind, n in (("ring", 3), ("ring", 5), ("exponential", 8), ("exponential", 10)):
        consts = estimate_constants(build_mixing(build_graph(kind, n)))
        r = consts.residuals
        for k in (0, *consts.fit_ks):
            assert r[k] <= consts.C * consts.lam**k * (1.0 + 1e-9)
        pairs = [
            (k, k + 1) for k in consts.fit_ks if k + 1 in consts.fit_ks and k >= 2
        ]
        assert pairs
        for k, k1 in pairs:
            assert r[k1] <= r[k] * (consts.lam + 0.05)


def test_stationary_vector_is_fixed_point():
    for kind, n in (("ring", 4), ("exponential", 10), ("complete", 5)):
        mix = build_mixing(build_graph(kind, n))
        consts = estimate_constants(mix)
        assert np.linalg.norm(mix.A @ consts.phi - consts.phi) <= 1e-10
        assert abs(consts.phi.sum() - 1.0) <= 1e-12
        assert np.all(consts.phi > 0.0)


def test_nonuniform_stationary_vector():
    # Star-like digraph: hub 0 talks to both leaves, leaves only back to hub.
    mix = build_mixing(graph_from_edges([(0, 1), (0, 2), (1, 0), (2, 0)]))
    consts = estimate_constants(mix)
    assert np.linalg.norm(mix.A @ consts.phi - consts.phi) <= 1e-10
    assert consts.phi.std() > 1e-3
    assert 0.0 < consts.beta < 1.0


def test_slow_mixing_raises():
    # cos(pi/50)^200 is nowhere near the 1e-6 decay demanded of the horizon.
    mix = build_mixing(build_graph("ring", 50))
    with pytest.raises(TopologyError, match="horizon"):
        estimate_constants(mix, horizon=200)


def test_short_horizon_rejected():
    with pytest.raises(TopologyError):
        estimate_constants(build_mixing(build_graph("ring", 3)), horizon=1)


@st.composite
def connected_digraphs(draw):
    n = draw(st.integers(min_value=2, max_value=6))
    ring = [(i, (i + 1) % n) for i in range(n)]
    extra = draw(
        st.lists(
            st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)),
            max_size=8,
        )
    )
    return graph_from_edges(ring + [e for e in extra if e[0] != e[1]], n=n)


@given(connected_digraphs())
def test_random_graph_invariants(graph):
    mix = build_mixing(graph)
    np.testing.assert_allclose(mix.A.sum(axis=0), np.ones(graph.n), rtol=0, atol=1e-12)
    consts = estimate_constants(mix, horizon=500)
    assert 0.0 < consts.lam < 1.0
    assert consts.beta > 0.0
    assert np.linalg.norm(mix.A @ consts.phi - consts.phi) <= 1e-10
    for k in (0, *consts.fit_ks):
        assert consts.residuals[k] <= consts.C * consts.lam**k * (1.0 + 1e-9)
