"""Small random attributed graphs for tests, demos and scaling runs."""
from __future__ import annotations

import numpy as np

from .errors import InvalidArgumentError
from .graph import Graph, canonical_edges, one_hot
from .linalg import Rng


def random_graph(n: int, m: int, k: int, rng: Rng, p: float = 0.3) -> Graph:
    """Erdos-Renyi edges, Gaussian features, uniform random groups (every group used when n >= k)."""
    if n < 1 or k < 1:
        raise InvalidArgumentError("n and k must be >= 1")
    iu, iv = np.triu_indices(n, k=1)
    keep = rng.random(iu.size) < p
    labels = rng.permutation(np.arange(n) % k)
    return Graph(n, np.stack([iu[keep], iv[keep]], axis=1), rng.normal(size=(n, m)), one_hot(labels, k))


def group_sbm(sizes, p_in: float, p_out: float, m: int, rng: Rng, signal: float = 0.3,
              density: float = 0.02) -> Graph:
    """Stochastic block model where blocks are the sensitive groups.

    Features are sparse binary "words"; each group owns a slice of the
    vocabulary that its nodes use ``signal`` more often, so both the edges
    and the features leak the group.
    """
    sizes = [int(s) for s in sizes]
    n, k = sum(sizes), len(sizes)
    labels = np.repeat(np.arange(k), sizes)
    probs = np.where(labels[:, None] == labels[None, :], p_in, p_out)
    iu, iv = np.triu_indices(n, k=1)
    keep = rng.random(iu.size) < probs[iu, iv]
    word_group = np.arange(m) % k
    rate = np.full((n, m), density)
    rate[labels[:, None] == word_group[None, :]] += signal * density * k
    features = (rng.random((n, m)) < np.clip(rate, 0.0, 1.0)).astype(np.float64)
    return Graph(n, canonical_edges(np.stack([iu[keep], iv[keep]], axis=1)), features, one_hot(labels, k))


def fixed_edge_count(n: int, num_edges: int, m: int, k: int, rng: Rng) -> Graph:
    """Exactly ``num_edges`` distinct uniform random edges on ``n`` nodes."""
    total = n * (n - 1) // 2
    if num_edges > total:
        raise InvalidArgumentError(f"{num_edges} edges do not fit on {n} nodes")
    picked = set()
    while len(picked) < num_edges:
        pairs = rng.integers(0, n, size=(2 * (num_edges - len(picked)), 2))
        for u, v in pairs.tolist():
            if u != v:
                picked.add((min(u, v), max(u, v)))
                if len(picked) == num_edges:
                    break
    edges = np.array(sorted(picked), dtype=np.int64)
    return Graph(n, edges, rng.normal(size=(n, m)), one_hot(rng.integers(0, k, size=n), k))
