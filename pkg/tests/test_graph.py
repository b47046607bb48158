from collections import deque

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fairegm.errors import CapacityError, InvalidArgumentError
from fairegm.graph import (Graph, largest_component, normalize_adjacency, one_hot, sample_negative_edges,
                           sensitive_distribution, train_test_split)
from fairegm.linalg import make_rng
from fairegm.synthetic import random_graph


def graph(n, edges, k=2, labels=None):
    labels = np.arange(n) % k if labels is None else labels
    return Graph(n, np.array(edges, dtype=np.int64).reshape(-1, 2), np.ones((n, 2)), one_hot(labels, k))


def test_invariants_enforced():
    with pytest.raises(InvalidArgumentError):
        graph(2, [(0, 2)])
    with pytest.raises(InvalidArgumentError):
        graph(2, [(1, 0)])
    with pytest.raises(InvalidArgumentError):
        graph(3, [(0, 1), (0, 1)])
    with pytest.raises(InvalidArgumentError):
        Graph(2, np.zeros((0, 2)), np.array([[np.nan], [0]]), one_hot([0, 1]))
    with pytest.raises(InvalidArgumentError):
        Graph(2, np.zeros((0, 2)), np.zeros((2, 1)), np.array([[1, 1], [0, 1]]))


def test_normalize_examples():
    assert np.array_equal(normalize_adjacency(graph(1, [], k=1)).to_dense(), [[1.0]])
    assert np.allclose(normalize_adjacency(graph(2, [(0, 1)])).to_dense(), 0.5)
    a = normalize_adjacency(graph(3, [(0, 1), (1, 2)])).to_dense()
    r6 = 1 / np.sqrt(6)
    assert np.allclose(a, [[0.5, r6, 0], [r6, 1 / 3, r6], [0, r6, 0.5]], atol=1e-15)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_normalize_symmetric_and_matches_nodewise(seed):
    rng = make_rng(seed)
    g = random_graph(int(rng.integers(1, 15)), 2, 2, rng, p=0.3)
    a = normalize_adjacency(g).to_dense()
    assert np.array_equal(a, a.T)
    nz = a[a != 0]
    assert np.all((nz > 0) & (nz <= 1))
    deg = 1 + g.degrees()
    nbrs = {v: {v} for v in range(g.n)}
    for u, v in g.edges:
        nbrs[u].add(v)
        nbrs[v].add(u)
    rows = [sum(1 / np.sqrt(deg[u] * deg[v]) for v in nbrs[u]) for u in range(g.n)]
    assert np.allclose(a.sum(axis=1), rows, atol=1e-12, rtol=0)


def test_sensitive_distribution_examples():
    assert np.array_equal(sensitive_distribution(graph(4, [], labels=[0, 0, 1, 1])), [0.5, 0.5])
    d = sensitive_distribution(graph(3, [], k=3, labels=[0, 0, 0]))
    assert np.array_equal(d, [1.0, 0.0, 0.0])


def test_split_zero_fraction_keeps_largest_component():
    g = graph(6, [(0, 1), (1, 2), (3, 4)])
    split = train_test_split(g, 0.0, make_rng(0))
    assert split.train.n == 3 and split.train.num_edges == 2 and len(split.test_pos) == 0
    assert split.train.node_ids == (0, 1, 2)


def test_split_triangle():
    g = graph(3, [(0, 1), (1, 2), (0, 2)])
    for seed in range(10):
        split = train_test_split(g, 1 / 3, make_rng(seed))
        assert len(split.test_pos) == 1 and split.train.num_edges == 2 and split.train.n == 3


def test_split_bridge_drops_test_edges_outside_component():
    # triangles {0,1,2} and {3,4,5} joined by bridge (2,3); two edges go to test
    edges = [(0, 1), (1, 2), (0, 2), (2, 3), (3, 4), (4, 5), (3, 5)]
    g = graph(6, edges)
    bridge_cases = 0
    for seed in range(100):
        split = train_test_split(g, 2 / 7, make_rng(seed))
        if split.train.n > 3:
            continue  # bridge stayed in train
        bridge_cases += 1
        # equal halves: the triangle holding the smaller node index wins
        assert set(split.train_nodes) == {0, 1, 2}
        assert len(split.test_pos) <= 1
        assert all(set(split.train_nodes[e]) <= {0, 1, 2} for e in split.test_pos)
    assert bridge_cases > 0


def test_largest_component_tie_break():
    assert list(largest_component(4, np.array([[2, 3], [0, 1]]))) == [0, 1]


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.0, 0.9))
def test_split_properties(seed, frac):
    rng = make_rng(seed)
    g = random_graph(int(rng.integers(2, 25)), 3, 2, rng, p=0.25)
    if g.num_edges == 0:
        with pytest.raises(InvalidArgumentError):
            train_test_split(g, frac, rng)
        return
    split = train_test_split(g, frac, rng)
    train = split.train
    # connected (BFS)
    adj = {v: [] for v in range(train.n)}
    for u, v in train.edges:
        adj[u].append(v)
        adj[v].append(u)
    seen, queue = {0}, deque([0])
    while queue:
        for w in adj[queue.popleft()]:
            if w not in seen:
                seen.add(w)
                queue.append(w)
    assert len(seen) == train.n
    assert not ({tuple(e) for e in split.test_pos} & {tuple(e) for e in train.edges})
    assert np.all(split.test_pos < train.n)
    nodes = split.train_nodes
    assert len(set(nodes.tolist())) == train.n
    assert np.array_equal(train.features, g.features[nodes])
    assert np.array_equal(train.sensitive, g.sensitive[nodes])


def test_split_rejects_bad_fraction():
    with pytest.raises(InvalidArgumentError):
        train_test_split(graph(2, [(0, 1)]), 1.0, make_rng(0))


def test_negative_sampling_examples():
    complete = graph(4, [(i, j) for i in range(4) for j in range(i + 1, 4)])
    with pytest.raises(CapacityError):
        sample_negative_edges(complete, 1, make_rng(0))
    path = graph(3, [(0, 1), (1, 2)])
    assert sample_negative_edges(path, 1, make_rng(0)).tolist() == [[0, 2]]


def test_negative_sampling_never_returns_edges():
    rng = make_rng(5)
    g = random_graph(30, 2, 2, rng, p=0.2)
    edges = {tuple(e) for e in g.edges}
    exclude = np.array([[0, 1], [2, 3]])
    for _ in range(1000):
        pairs = sample_negative_edges(g, 3, rng, exclude=exclude)
        assert len({tuple(p) for p in pairs}) == 3
        for u, v in pairs:
            assert u < v and (u, v) not in edges and (u, v) not in {(0, 1), (2, 3)}


def test_negative_sampling_dense_regime_is_exhaustive():
    g = graph(5, [(0, 1)])
    pairs = sample_negative_edges(g, 9, make_rng(1))
    assert len({tuple(p) for p in pairs}) == 9
