"""Attributed undirected graphs, normalization and the link-prediction split."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import CapacityError, InvalidArgumentError
from .linalg import Rng, SparseMatrix


def canonical_edges(pairs, n: int | None = None) -> np.ndarray:
    """Sort each pair to (u < v), drop self-pairs and duplicates."""
    arr = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if n is not None and arr.size and (arr.min() < 0 or arr.max() >= n):
        raise InvalidArgumentError("edge endpoint out of range")
    arr = np.sort(arr, axis=1)
    arr = arr[arr[:, 0] != arr[:, 1]]
    if arr.size == 0:
        return np.zeros((0, 2), dtype=np.int64)
    return np.unique(arr, axis=0)


def one_hot(labels, k: int | None = None) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    k = int(labels.max()) + 1 if k is None else k
    out = np.zeros((labels.size, k))
    out[np.arange(labels.size), labels] = 1.0
    return out


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected attributed graph.

    ``edges`` holds each undirected edge once as ``(u, v)`` with ``u < v``.
    ``sensitive`` is the one-hot ``n x k`` group matrix. ``node_ids`` keeps the
    original identifiers when the graph was loaded from disk or re-indexed.
    """

    n: int
    edges: np.ndarray
    features: np.ndarray
    sensitive: np.ndarray
    node_ids: tuple | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        features = np.asarray(self.features, dtype=np.float64)
        sensitive = np.asarray(self.sensitive, dtype=np.float64)
        if self.n < 1:
            raise InvalidArgumentError("graph needs at least one node")
        if edges.size:
            if edges.min() < 0 or edges.max() >= self.n:
                raise InvalidArgumentError("edge endpoint out of range")
            if np.any(edges[:, 0] >= edges[:, 1]):
                raise InvalidArgumentError("edges must be stored as (u, v) with u < v")
            if len(np.unique(edges, axis=0)) != len(edges):
                raise InvalidArgumentError("duplicate edges")
        if features.ndim != 2 or features.shape[0] != self.n:
            raise InvalidArgumentError(f"features must be {self.n} x m, got {features.shape}")
        if not np.all(np.isfinite(features)):
            raise InvalidArgumentError("features contain NaN or Inf")
        if sensitive.ndim != 2 or sensitive.shape[0] != self.n:
            raise InvalidArgumentError(f"sensitive must be {self.n} x k, got {sensitive.shape}")
        if not np.all((sensitive == 0) | (sensitive == 1)) or not np.all(sensitive.sum(axis=1) == 1):
            raise InvalidArgumentError("sensitive rows must be one-hot")
        if self.node_ids is not None and len(self.node_ids) != self.n:
            raise InvalidArgumentError("node_ids length must equal n")
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "sensitive", sensitive)

    @property
    def num_edges(self) -> int:
        return int(len(self.edges))

    @property
    def k(self) -> int:
        return int(self.sensitive.shape[1])

    @property
    def m(self) -> int:
        return int(self.features.shape[1])

    @property
    def groups(self) -> np.ndarray:
        """Group index per node (argmax of the one-hot rows)."""
        return np.argmax(self.sensitive, axis=1)

    def adjacency(self) -> sp.csr_matrix:
        """Symmetric loop-free 0/1 adjacency as CSR."""
        u, v = self.edges[:, 0], self.edges[:, 1]
        rows = np.concatenate([u, v])
        cols = np.concatenate([v, u])
        return sp.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(self.n, self.n))

    def degrees(self) -> np.ndarray:
        return np.bincount(self.edges.ravel(), minlength=self.n)

    def subgraph(self, nodes) -> tuple["Graph", np.ndarray]:
        """Induced subgraph on ``nodes`` (re-indexed in the given order).

        Returns the subgraph and an ``n``-long map old index -> new index
        (``-1`` for dropped nodes).
        """
        nodes = np.asarray(nodes, dtype=np.int64)
        mapping = np.full(self.n, -1, dtype=np.int64)
        mapping[nodes] = np.arange(nodes.size)
        keep = (mapping[self.edges[:, 0]] >= 0) & (mapping[self.edges[:, 1]] >= 0)
        edges = canonical_edges(mapping[self.edges[keep]])
        ids = tuple(self.node_ids[i] for i in nodes) if self.node_ids is not None else tuple(int(i) for i in nodes)
        sub = Graph(
            n=int(nodes.size),
            edges=edges,
            features=self.features[nodes],
            sensitive=self.sensitive[nodes],
            node_ids=ids,
            meta=dict(self.meta),
        )
        return sub, mapping


def normalize_adjacency(g: Graph) -> SparseMatrix:
    """D^-1/2 (A + I) D^-1/2 with d_v = 1 + deg(v)."""
    d_hat = 1.0 + g.degrees()
    u, v = g.edges[:, 0], g.edges[:, 1]
    loops = np.arange(g.n)
    rows = np.concatenate([u, v, loops])
    cols = np.concatenate([v, u, loops])
    vals = 1.0 / np.sqrt(d_hat[rows] * d_hat[cols])
    return SparseMatrix((g.n, g.n), rows, cols, vals)


def sensitive_distribution(g: Graph) -> np.ndarray:
    return g.sensitive.sum(axis=0) / g.n


@dataclass(frozen=True, eq=False)
class SplitResult:
    train: Graph
    test_pos: np.ndarray
    node_map: np.ndarray  # original index -> train index, -1 when dropped

    @property
    def train_nodes(self) -> np.ndarray:
        """Original indices of the train nodes, in train order."""
        return np.flatnonzero(self.node_map >= 0)[np.argsort(self.node_map[self.node_map >= 0])]


def largest_component(n: int, edges: np.ndarray) -> np.ndarray:
    """Sorted node indices of the largest connected component.

    Ties in size go to the component holding the smallest node index.
    """
    rows = np.concatenate([edges[:, 0], edges[:, 1]])
    cols = np.concatenate([edges[:, 1], edges[:, 0]])
    adj = sp.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(n, n))
    _, labels = connected_components(adj, directed=False)
    sizes = np.bincount(labels)
    first_node = np.full(sizes.size, n, dtype=np.int64)
    np.minimum.at(first_node, labels, np.arange(n))
    best = min(range(sizes.size), key=lambda c: (-sizes[c], first_node[c]))
    return np.flatnonzero(labels == best)


def train_test_split(g: Graph, test_fraction: float, rng: Rng) -> SplitResult:
    """Hold out ``ceil(test_fraction * |E|)`` edges, train on the largest component of the rest."""
    if not 0.0 <= test_fraction < 1.0:
        raise InvalidArgumentError(f"test_fraction must lie in [0, 1), got {test_fraction}")
    if g.num_edges == 0:
        raise InvalidArgumentError("cannot split a graph without edges")
    n_edges = g.num_edges
    n_test = math.ceil(test_fraction * n_edges)
    # partial Fisher-Yates: the first n_test slots become the test sample
    order = np.arange(n_edges)
    for i in range(n_test):
        j = int(rng.integers(i, n_edges))
        order[i], order[j] = order[j], order[i]
    test_edges = g.edges[np.sort(order[:n_test])]
    rest = g.edges[np.sort(order[n_test:])]

    nodes = largest_component(g.n, rest)
    sub_graph = Graph(g.n, rest, g.features, g.sensitive, g.node_ids, g.meta)
    train, mapping = sub_graph.subgraph(nodes)
    if test_edges.size:
        mapped = mapping[test_edges]
        mapped = mapped[(mapped >= 0).all(axis=1)]
        test_pos = canonical_edges(mapped)
    else:
        test_pos = np.zeros((0, 2), dtype=np.int64)
    return SplitResult(train=train, test_pos=test_pos, node_map=mapping)


def _pair_keys(pairs, n: int) -> np.ndarray:
    arr = np.sort(np.asarray(pairs, dtype=np.int64).reshape(-1, 2), axis=1)
    return arr[:, 0] * n + arr[:, 1]


def sample_negative_edges(g: Graph, count: int, rng: Rng, exclude=None) -> np.ndarray:
    """Uniform sample, without replacement, of unordered non-adjacent pairs.

    Pairs listed in ``exclude`` are never returned.
    """
    n = g.n
    if count < 0:
        raise InvalidArgumentError("count must be non-negative")
    taken = set(_pair_keys(g.edges, n).tolist())
    if exclude is not None and len(exclude):
        ex = np.sort(np.asarray(exclude, dtype=np.int64).reshape(-1, 2), axis=1)
        ex = ex[ex[:, 0] != ex[:, 1]]
        taken.update(_pair_keys(ex, n).tolist())
    available = n * (n - 1) // 2 - len(taken)
    if count > available:
        raise CapacityError(f"requested {count} non-edges but only {available} are available")
    if count == 0:
        return np.zeros((0, 2), dtype=np.int64)

    if count * 4 > available:
        # dense regime: enumerate every free pair and draw without replacement
        iu, iv = np.triu_indices(n, k=1)
        keys = iu * n + iv
        free = ~np.isin(keys, np.fromiter(taken, dtype=np.int64, count=len(taken)))
        cand = np.stack([iu[free], iv[free]], axis=1)
        pick = rng.choice(len(cand), size=count, replace=False)
        return cand[np.sort(pick)]

    chosen: list[tuple[int, int]] = []
    while len(chosen) < count:
        batch = rng.integers(0, n, size=(2 * (count - len(chosen)) + 16, 2))
        for u, v in batch.tolist():
            if u == v:
                continue
            if u > v:
                u, v = v, u
            key = u * n + v
            if key in taken:
                continue
            taken.add(key)
            chosen.append((u, v))
            if len(chosen) == count:
                break
    return np.asarray(chosen, dtype=np.int64)
