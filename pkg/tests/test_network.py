import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_network
from dcfeas.errors import (
    DisconnectedGraph,
    InvalidEdge,
    NetworkError,
    NoLoadsOrNoSources,
    NonpositiveConductance,
    NotKirchhoff,
)
from dcfeas.matanalysis import MTag, classify_m
from dcfeas.network import (
    Edge,
    Network,
    build_kirchhoff,
    check_partition,
    kron_reduce,
    network_to_dict,
    parse_network,
    read_network,
)

TRIANGLE = [(0, 1, 1.0), (0, 2, 1.0), (1, 2, 1.0)]
seeds = st.integers(0, 2**32 - 1)


def test_single_edge_blocks():
    part = build_kirchhoff(Network(1, 1, [(0, 1, 1.0)], [1.0]))
    np.testing.assert_array_equal(part.Y_LL, [[1.0]])
    np.testing.assert_array_equal(part.Y_LS, [[-1.0]])


def test_triangle_blocks():
    part = build_kirchhoff(Network(2, 1, TRIANGLE, [1.0]))
    np.testing.assert_array_equal(part.Y_LL, [[2.0, -1.0], [-1.0, 2.0]])
    np.testing.assert_array_equal(part.Y_LS, [[-1.0], [-1.0]])
    np.testing.assert_array_equal(part.Y_SL, [[-1.0, -1.0]])
    np.testing.assert_array_equal(part.Y_SS, [[2.0]])


def test_blocks_are_read_only():
    part = build_kirchhoff(Network(2, 1, TRIANGLE, [1.0]))
    with pytest.raises(ValueError):
        part.Y_LL[0, 0] = 5.0


@pytest.mark.parametrize("g", [0.0, -1.0, float("nan")])
def test_nonpositive_conductance(g):
    with pytest.raises(NonpositiveConductance):
        build_kirchhoff(Network(2, 1, [(0, 1, g), (0, 2, 1.0), (1, 2, 1.0)], [1.0]))


def test_disconnected():
    with pytest.raises(DisconnectedGraph):
        build_kirchhoff(Network(2, 1, [(0, 2, 1.0)], [1.0]))


def test_no_sources_or_loads():
    with pytest.raises(NoLoadsOrNoSources):
        build_kirchhoff(Network(2, 0, [(0, 1, 1.0)], []))
    with pytest.raises(NoLoadsOrNoSources):
        build_kirchhoff(Network(0, 2, [(0, 1, 1.0)], [1.0, 1.0]))


@pytest.mark.parametrize("edge", [(0, 0, 1.0), (0, 5, 1.0), (-1, 1, 1.0)])
def test_invalid_edges(edge):
    with pytest.raises(InvalidEdge):
        build_kirchhoff(Network(2, 1, TRIANGLE + [edge], [1.0]))


def test_loads_joined_only_through_sources_rejected():
    # both loads hang off the source directly: Y_LL is diagonal, hence reducible
    with pytest.raises(NotKirchhoff, match="Y_LL_irreducible"):
        build_kirchhoff(Network(2, 1, [(0, 2, 1.0), (1, 2, 1.0)], [1.0]))


def test_kron_reduce_examples():
    Y = np.array([[2.0, -1.0], [-1.0, 2.0]])
    np.testing.assert_allclose(kron_reduce(Y, [0]), [[1.5]], rtol=0, atol=1e-15)
    np.testing.assert_allclose(kron_reduce(Y, [1]), [[1.5]], rtol=0, atol=1e-15)
    full = kron_reduce(Y, [0, 1])
    np.testing.assert_array_equal(full, Y)
    full[0, 0] = 9.0  # a copy, not a view
    assert Y[0, 0] == 2.0


def test_kron_reduce_rejects_bad_alpha():
    Y = np.array([[2.0, -1.0], [-1.0, 2.0]])
    with pytest.raises(ValueError):
        kron_reduce(Y, [])
    with pytest.raises(ValueError):
        kron_reduce(Y, [2])


@settings(max_examples=60, deadline=None)
@given(seeds, st.integers(1, 4))
def test_random_partitions_pass_invariants(seed, n):
    part = build_kirchhoff(random_network(np.random.default_rng(seed), n))
    assert all(ok for _, ok, _ in check_partition(part))
    Y = part.Y
    assert np.max(np.abs(Y.sum(axis=1))) <= 1e-12 * np.max(np.diag(Y))
    rows = part.Y_LL.sum(axis=1)
    assert np.all(rows >= -1e-12) and np.any(rows > 0)


@settings(max_examples=60, deadline=None)
@given(seeds, st.integers(2, 4), st.data())
def test_kron_reduce_is_nonsingular_m(seed, n, data):
    part = build_kirchhoff(random_network(np.random.default_rng(seed), n))
    alpha = data.draw(st.sets(st.integers(0, n - 1), min_size=1))
    R = kron_reduce(part.Y_LL, sorted(alpha))
    assert np.max(np.abs(R - R.T)) <= 1e-12 * np.max(np.abs(R))
    assert classify_m(R).tag is MTag.NONSINGULAR_M


def test_parse_edge_form_round_trip(tmp_path):
    net = Network(2, 1, TRIANGLE, [1.0])
    path = tmp_path / "net.json"
    path.write_text(json.dumps(network_to_dict(net)))
    part, V_S = read_network(path)
    np.testing.assert_array_equal(part.Y_LL, [[2.0, -1.0], [-1.0, 2.0]])
    np.testing.assert_array_equal(V_S, [1.0])


def test_parse_direct_form():
    part, V_S = parse_network({"Y_LL": [[2, -1], [-1, 2]], "Y_LS": [[-1], [-1]], "V_S": [1]})
    np.testing.assert_array_equal(part.Y_SS, [[2.0]])
    np.testing.assert_array_equal(part.Y_SL, [[-1.0, -1.0]])
    assert all(ok for _, ok, _ in check_partition(part))


def test_parse_direct_form_rejects_asymmetry():
    with pytest.raises(NotKirchhoff):
        parse_network({"Y_LL": [[2, -1], [-0.9, 2]], "Y_LS": [[-1], [-1]], "V_S": [1]})


def test_parse_direct_form_symmetrizes_rounding():
    part, _ = parse_network({"Y_LL": [[2, -1], [-1 - 1e-14, 2]], "Y_LS": [[-1], [-1 + 1e-14]], "V_S": [1]})
    np.testing.assert_array_equal(part.Y_LL, part.Y_LL.T)


def test_read_network_reports_json_position(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"loads": 2,\n "sources": }')
    with pytest.raises(NetworkError, match="line 2 column"):
        read_network(path)


def test_missing_key():
    with pytest.raises(NetworkError, match="missing key"):
        parse_network({"loads": 1, "sources": 1, "edges": []})


def test_edge_coercion():
    net = Network(1, 1, [(0, 1, 2)], [1.0])
    assert net.edges == (Edge(0, 1, 2.0),)
