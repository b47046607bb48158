"""Utility (reconstruction) and fairness (link divergence) objectives.

Each loss accepts either a plain embedding array, returning a float, or a
recorded :class:`~fairegm.autodiff.Var`, returning a scalar node that can be
differentiated.
"""
from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .errors import InvalidArgumentError
from .graph import Graph
from .linalg import sigmoid


def pos_weight(g: Graph) -> float:
    """(n^2 - 2|E|) / (2|E|): weight that balances positive and negative entries."""
    if g.num_edges == 0:
        raise InvalidArgumentError("pos_weight is undefined for an edgeless graph")
    return (g.n * g.n - 2 * g.num_edges) / (2 * g.num_edges)


def _evaluate(builder, phi):
    if isinstance(phi, ad.Var):
        return builder(phi)
    tape = ad.Tape()
    return float(builder(tape.const(phi)).value)


def reconstruction_loss(phi, g: Graph, pw: float | None = None, block_rows=None):
    """Weighted binary cross-entropy between A and sigmoid(phi phi^T), averaged over n^2 entries.

    A is the loop-free adjacency; positive entries carry weight ``pw``.
    """
    pw = pos_weight(g) if pw is None else pw
    adj = g.adjacency()
    return _evaluate(lambda v: ad.weighted_bce_mean(v, adj, pw, block_rows), phi)


def link_divergence(phi, g: Graph, reduction: str = "sum", block_rows=None):
    """Sum (or mean) over nodes of KL(P_S || f(v))."""
    return _evaluate(lambda v: ad.kl_normalized_rows(v, g.groups, g.k, reduction, block_rows), phi)


def augmented_loss(phi, g: Graph, lam: float, pw: float | None = None, block_rows=None):
    """L_R + lam * L_D in a single objective."""
    if lam < 0:
        raise InvalidArgumentError(f"lambda must be >= 0, got {lam}")

    def build(v):
        lr = reconstruction_loss(v, g, pw, block_rows)
        if lam == 0:
            return lr
        return ad.add(lr, ad.scale(link_divergence(v, g, "sum", block_rows), lam))

    return _evaluate(build, phi)


def group_similarity(phi, g: Graph, v: int) -> np.ndarray:
    """Normalized sigmoid-similarity mass that node ``v`` places on each group."""
    phi = np.asarray(phi, dtype=np.float64)
    if g.n < 2:
        raise InvalidArgumentError("group_similarity needs at least two nodes")
    if not 0 <= v < g.n:
        raise InvalidArgumentError(f"node {v} out of range")
    s = sigmoid(phi @ phi[v])
    s[v] = 0.0
    raw = (s @ g.sensitive) / (g.n - 1)
    return raw / raw.sum()


def kl_divergence(p, q) -> float:
    """KL(p || q) in nats; terms with p = 0 contribute nothing."""
    p, q = np.asarray(p, dtype=np.float64), np.asarray(q, dtype=np.float64)
    mask = p > 0
    return float((p[mask] * (np.log(p[mask]) - np.log(np.maximum(q[mask], ad.PROB_CLAMP)))).sum())
