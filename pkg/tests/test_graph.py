import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from securegsr.errors import GenerationError, InvalidInputError
from securegsr.graph import (
    Graph,
    closed_neighborhood,
    erdos_renyi,
    is_connected,
    laplacian,
    read_edge_list,
    sample_er_weights,
    write_edge_list,
)


def edge_sum(g, x):
    return sum(w * (x[i] - x[j]) ** 2 for i, j, w in g.edges())


def test_laplacian_two_nodes():
    g = Graph([[0.0, 1.0], [1.0, 0.0]])
    np.testing.assert_array_equal(laplacian(g), [[1, -1], [-1, 1]])


def test_laplacian_edgeless():
    np.testing.assert_array_equal(laplacian(Graph(np.zeros((3, 3)))), np.zeros((3, 3)))


def test_laplacian_path(path3):
    np.testing.assert_array_equal(laplacian(path3), [[1, -1, 0], [-1, 2, -1], [0, -1, 1]])


@pytest.mark.parametrize(
    "w",
    [
        [[0.0, 1.0], [2.0, 0.0]],
        [[1.0, 1.0], [1.0, 0.0]],
        [[0.0, -1.0], [-1.0, 0.0]],
        [[0.0, np.inf], [np.inf, 0.0]],
        np.zeros((2, 3)),
    ],
)
def test_graph_validation(w):
    with pytest.raises(InvalidInputError):
        Graph(w)


def test_graph_weights_read_only():
    g = Graph([[0.0, 1.0], [1.0, 0.0]])
    with pytest.raises(ValueError):
        g.weights[0, 1] = 3.0


def test_er_complete():
    g = erdos_renyi(4, 1.0, 0.5, 1.0, np.random.default_rng(0))
    assert g.edge_count == 6
    off = g.weights[~np.eye(4, dtype=bool)]
    assert np.all((off >= 0.5) & (off <= 1.0))


def test_er_deterministic():
    a = erdos_renyi(20, 0.3, 0.5, 1.0, np.random.default_rng(77))
    b = erdos_renyi(20, 0.3, 0.5, 1.0, np.random.default_rng(77))
    np.testing.assert_array_equal(a.weights, b.weights)


def test_er_mean_edge_count_before_filter():
    rng = np.random.default_rng(2024)
    counts = np.array([np.count_nonzero(np.triu(sample_er_weights(20, 0.3, 0.5, 1.0, rng), 1)) for _ in range(1000)])
    pairs = 20 * 19 // 2
    expected = 0.3 * pairs
    se = math.sqrt(pairs * 0.3 * 0.7 / 1000)
    assert abs(counts.mean() - expected) < 3 * se


def test_er_connected_and_laplacian_invariants():
    rng = np.random.default_rng(3)
    for _ in range(20):
        g = erdos_renyi(20, 0.3, 0.5, 1.0, rng)
        assert is_connected(g)
        lap = laplacian(g)
        np.testing.assert_allclose(lap.sum(axis=1), 0.0, atol=1e-12)
        assert np.linalg.eigvalsh(lap)[0] > -1e-10


def test_er_attempt_cap():
    with pytest.raises(GenerationError, match="n=30"):
        erdos_renyi(30, 0.0001, 0.5, 1.0, np.random.default_rng(0), max_attempts=5)


@pytest.mark.parametrize("args", [(0, 0.3, 0.5, 1.0), (5, 1.5, 0.5, 1.0), (5, 0.3, 1.0, 0.5), (5, 0.3, -1.0, 1.0)])
def test_er_bad_args(args):
    with pytest.raises(InvalidInputError):
        erdos_renyi(*args, np.random.default_rng(0))


def test_is_connected_cases(path3):
    assert is_connected(Graph([[0.0, 1.0], [1.0, 0.0]]))
    assert not is_connected(Graph(np.zeros((2, 2))))
    assert is_connected(path3)


def test_closed_neighborhood(path3):
    assert sorted(closed_neighborhood(path3, 1)) == [0, 1, 2]
    assert sorted(closed_neighborhood(path3, 0)) == [0, 1]
    assert list(closed_neighborhood(Graph(np.zeros((3, 3))), 2)) == [2]
    with pytest.raises(InvalidInputError):
        closed_neighborhood(path3, 3)
    with pytest.raises(InvalidInputError):
        closed_neighborhood(path3, -1)


@st.composite
def graph_and_signal(draw):
    n = draw(st.integers(2, 12))
    upper = draw(arrays(float, (n, n), elements=st.floats(0, 3)))
    keep = draw(arrays(bool, (n, n)))
    w = np.triu(np.where(keep, upper, 0.0), 1)
    x = draw(arrays(float, n, elements=st.floats(-10, 10)))
    return Graph(w + w.T), x


@settings(max_examples=100, deadline=None)
@given(graph_and_signal())
def test_edge_sum_identity(gx):
    g, x = gx
    q = float(x @ laplacian(g) @ x)
    assert abs(q - edge_sum(g, x)) < 1e-10 * max(1.0, abs(q))


def test_edge_list_round_trip(tmp_path):
    g = erdos_renyi(12, 0.4, 0.5, 1.0, np.random.default_rng(8))
    path = tmp_path / "g.txt"
    write_edge_list(g, path)
    h = read_edge_list(path)
    np.testing.assert_array_equal(g.weights, h.weights)


def test_edge_list_malformed(tmp_path):
    path = tmp_path / "g.txt"
    path.write_text("0 1\n")
    with pytest.raises(InvalidInputError):
        read_edge_list(path)
