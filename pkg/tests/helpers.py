"""Shared oracles for the test suite: finite differences and brute-force references."""
from __future__ import annotations

import numpy as np

from fairegm import autodiff as ad
from fairegm.linalg import make_rng
from fairegm.losses import link_divergence, pos_weight, reconstruction_loss
from fairegm.model import GraphInputs, Variant, init_params, record_forward
from fairegm.synthetic import random_graph


def central_difference(fn, x, h=1e-4):
    """Gradient of scalar ``fn`` at array ``x`` by central differences."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        old = x[idx]
        x[idx] = old + h
        up = fn(x)
        x[idx] = old - h
        down = fn(x)
        x[idx] = old
        grad[idx] = (up - down) / (2 * h)
    return grad


def relative_error(a, b):
    a, b = np.asarray(a), np.asarray(b)
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / scale)


def loss_fn(kind, g, inputs, params):
    """Return ``f(tensors) -> float`` for the named loss."""
    pw = pos_weight(g)

    def f(tensors):
        tape = ad.Tape()
        phi, _ = record_forward(tape, params.with_tensors(tensors), inputs)
        if kind == "recon":
            return float(ad.weighted_bce_mean(phi, g.adjacency(), pw).value)
        if kind == "divergence":
            return float(ad.kl_normalized_rows(phi, g.groups, g.k).value)
        lam = params.variant.lam if params.variant.lam is not None else 1.0
        lr = ad.weighted_bce_mean(phi, g.adjacency(), pw)
        return float(ad.add(lr, ad.scale(ad.kl_normalized_rows(phi, g.groups, g.k), lam)).value)

    return f


def tape_grads(kind, g, inputs, params):
    tape = ad.Tape()
    phi, _ = record_forward(tape, params, inputs)
    pw = pos_weight(g)
    if kind == "recon":
        out = ad.weighted_bce_mean(phi, g.adjacency(), pw)
    elif kind == "divergence":
        out = ad.kl_normalized_rows(phi, g.groups, g.k)
    else:
        lam = params.variant.lam if params.variant.lam is not None else 1.0
        out = ad.add(ad.weighted_bce_mean(phi, g.adjacency(), pw),
                     ad.scale(ad.kl_normalized_rows(phi, g.groups, g.k), lam))
    return tape.backward(out)


def first_layer_margin(params, inputs):
    """Smallest |pre-activation| of the relu layer (distance to the kink)."""
    tape = ad.Tape()
    record_forward(tape, params, inputs)
    # the relu input is the node right before the first relu node
    for node in tape._nodes:
        if node.op == "relu":
            return float(np.abs(tape._nodes[node.inputs[0]].value).min())
    return np.inf


def gradient_instance(variant: str, seed: int, n_max=20, m_max=8, hidden=3, dim=2, margin=1e-2):
    """A random (graph, inputs, params) whose relu inputs stay clear of the kink."""
    rng = make_rng(seed)
    while True:
        n = int(rng.integers(4, n_max + 1))
        m = int(rng.integers(2, m_max + 1))
        k = int(rng.integers(2, 4))
        g = random_graph(n, m, k, rng, p=0.35)
        if g.num_edges == 0:
            continue
        inputs = GraphInputs.from_graph(g)
        v = Variant.parse(variant)
        params = init_params(v, inputs, rng, hidden, dim)
        if v.kind == "FEW":
            params = params.with_tensors({"edge_w": rng.uniform(0.5, 1.5, size=(inputs.a_hat.nnz, 1))})
        if first_layer_margin(params, inputs) > margin:
            return g, inputs, params


def brute_force_knn(phi, k):
    """Top-k lists from the full similarity matrix, sorted with explicit (score, index) keys."""
    n = phi.shape[0]
    s = 1.0 / (1.0 + np.exp(-(phi @ phi.T)))
    return np.array([sorted((v for v in range(n) if v != u), key=lambda v: (-s[u, v], v))[:k]
                     for u in range(n)])


def brute_force_dp(phi, g, k, eps=1e-4):
    """DP@k from :func:`brute_force_knn` and a direct KL sum."""
    n = g.n
    prior = g.sensitive.sum(axis=0) / n
    groups = g.groups
    vals = []
    for cand in brute_force_knn(phi, k):
        counts = np.bincount(groups[cand], minlength=g.k) + eps
        pi = counts / counts.sum()
        mask = prior > 0
        vals.append(float(np.sum(prior[mask] * np.log(prior[mask] / pi[mask]))))
    return float(np.mean(vals))


def nodewise_forward(params, g):
    """Embeddings by explicit per-node neighbourhood sums (the aggregation form)."""
    n = g.n
    deg = 1.0 + g.degrees()
    nbrs = [[v] for v in range(n)]
    for u, v in g.edges:
        nbrs[u].append(v)
        nbrs[v].append(u)
    f = g.features
    kind = params.variant.kind

    def aggregate(x, weight_of=None):
        out = np.zeros((n, x.shape[1]))
        for v in range(n):
            for j, u in enumerate(sorted(nbrs[v])):
                w = 1.0 / np.sqrt(deg[v] * deg[u])
                if weight_of is not None:
                    w *= weight_of(v, u)
                out[v] += w * x[u]
        return out

    if kind == "FEW":
        # stored entries are sorted by (row, col)
        lookup = {}
        idx = 0
        for v in range(n):
            for u in sorted(nbrs[v]):
                lookup[(v, u)] = params.fair_few[idx, 0]
                idx += 1
        msg = aggregate(f, lambda v, u: lookup[(v, u)])
    else:
        msg = aggregate(f)
        if kind == "GFO":
            msg = msg + params.fair_gfo
        elif kind == "CFO":
            msg = msg + params.fair_cfo_a @ params.fair_cfo_f
    h = np.maximum(msg @ params.w0, 0.0)
    return aggregate(h @ params.w1)


def write_content_cites(g, prefix):
    """Dump a Graph as a LINQS-style ``.content`` / ``.cites`` pair."""
    prefix = str(prefix)
    with open(prefix + ".content", "w") as fh:
        for v in range(g.n):
            feats = " ".join(str(int(x)) if float(x).is_integer() else repr(float(x)) for x in g.features[v])
            fh.write(f"{v} {feats} topic{g.groups[v]}\n")
    with open(prefix + ".cites", "w") as fh:
        for u, v in g.edges:
            fh.write(f"{v} {u}\n")
    return prefix
