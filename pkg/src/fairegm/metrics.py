"""Link-prediction quality (AUROC, F1) and DP@k fairness."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .autodiff import default_block_rows
from .errors import InvalidArgumentError
from .graph import Graph, sample_negative_edges, sensitive_distribution
from .linalg import Rng, sigmoid

DP_SMOOTHING = 1e-4
EDGE_OPERATORS = ("hadamard", "concat", "l1", "l2")


def edge_features(phi, edges, operator: str = "hadamard") -> np.ndarray:
    """One feature row per edge built from the two endpoint embeddings."""
    phi = np.asarray(phi, dtype=np.float64)
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if edges.size and (edges.min() < 0 or edges.max() >= phi.shape[0]):
        raise InvalidArgumentError("edge endpoint out of range")
    a, b = phi[edges[:, 0]], phi[edges[:, 1]]
    if operator == "hadamard":
        return a * b
    if operator == "concat":
        return np.hstack([a, b])
    if operator == "l1":
        return np.abs(a - b)
    if operator == "l2":
        return (a - b) ** 2
    raise InvalidArgumentError(f"unknown edge operator {operator!r}")


@dataclass(frozen=True)
class EdgeClassifier:
    weight: np.ndarray
    bias: float

    def decision(self, features) -> np.ndarray:
        return np.asarray(features, dtype=np.float64) @ self.weight + self.bias

    def predict_proba(self, features) -> np.ndarray:
        return sigmoid(self.decision(features))


def fit_classifier(features, labels, iters: int = 500, lr: float = 0.5) -> EdgeClassifier:
    """Logistic regression by full-batch gradient descent on the mean log-loss.

    Columns are standardized for the descent and the scaling is folded back
    into the returned weights. Starts from zero, so the fit is deterministic.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64).ravel()
    if x.ndim != 2 or x.shape[0] != y.size:
        raise InvalidArgumentError("features must be (samples, dims) matching labels")
    if iters < 1:
        raise InvalidArgumentError("iters must be >= 1")
    if not np.all((y == 0) | (y == 1)):
        raise InvalidArgumentError("labels must be 0/1")
    if y.min() == y.max():
        raise InvalidArgumentError("classifier needs both classes")
    mu = x.mean(axis=0)
    sd = x.std(axis=0)
    sd[sd == 0] = 1.0
    z = (x - mu) / sd
    w = np.zeros(x.shape[1])
    b = 0.0
    for _ in range(iters):
        r = sigmoid(z @ w + b) - y
        w -= lr * (z.T @ r) / y.size
        b -= lr * r.mean()
    weight = w / sd
    return EdgeClassifier(weight, float(b - mu @ weight))


def _check_binary(labels):
    y = np.asarray(labels).ravel()
    if not np.all((y == 0) | (y == 1)):
        raise InvalidArgumentError("labels must be 0/1")
    if y.min() == y.max():
        raise InvalidArgumentError("need both positive and negative labels")
    return y.astype(bool)


def auroc(scores, labels) -> float:
    """Mann-Whitney estimate of P(score+ > score-) with ties counted as 1/2."""
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = _check_binary(labels)
    if s.size != y.size:
        raise InvalidArgumentError("scores and labels differ in length")
    ranks = rankdata(s)  # average ranks give the half-credit for ties
    n_pos, n_neg = y.sum(), (~y).sum()
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2
    return float(u / (n_pos * n_neg))


def f1(scores, labels, threshold: float = 0.5) -> float:
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = _check_binary(labels)
    pred = s >= threshold
    tp = np.sum(pred & y)
    fp = np.sum(pred & ~y)
    fn = np.sum(~pred & y)
    if tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return float(2 * precision * recall / (precision + recall))


def dp_at_k(phi, g: Graph, k: int, block_rows=None) -> float:
    """Mean over nodes of KL(P_S || smoothed group mix of the node's top-k neighbours).

    Neighbours are ranked by sigmoid(phi_u . phi_v), ties broken by lower index.
    Group counts get ``DP_SMOOTHING`` added before normalizing.
    """
    return float(dp_at_k_per_node(phi, g, k, block_rows).mean())


def _check_k(n, k):
    if not 1 <= k < n:
        raise InvalidArgumentError(f"k must satisfy 1 <= k < n={n}, got {k}")


def _top_k_blocks(phi, k, block_rows):
    n = phi.shape[0]
    step = default_block_rows(n) if block_rows is None else block_rows
    for start in range(0, n, step):
        stop = min(n, start + step)
        s = sigmoid(phi[start:stop] @ phi.T)
        local = np.arange(stop - start)
        s[local, local + start] = -np.inf  # never rank a node as its own neighbour
        yield start, stop, np.argsort(-s, axis=1, kind="stable")[:, :k]


def knn_indices(phi, k: int, block_rows=None) -> np.ndarray:
    """``n x k`` nearest neighbours by decoded similarity, ties to the lower index."""
    phi = np.asarray(phi, dtype=np.float64)
    _check_k(phi.shape[0], k)
    out = np.empty((phi.shape[0], k), dtype=np.int64)
    for start, stop, top in _top_k_blocks(phi, k, block_rows):
        out[start:stop] = top
    return out


def dp_at_k_per_node(phi, g: Graph, k: int, block_rows=None) -> np.ndarray:
    phi = np.asarray(phi, dtype=np.float64)
    n = g.n
    if phi.shape[0] != n:
        raise InvalidArgumentError("embedding rows must match graph nodes")
    _check_k(n, k)
    prior = sensitive_distribution(g)
    groups = g.groups
    active = prior > 0
    p = prior[active]
    out = np.empty(n)
    for start, stop, top in _top_k_blocks(phi, k, block_rows):
        counts = np.zeros((stop - start, g.k))
        np.add.at(counts, (np.repeat(np.arange(stop - start), k), groups[top].ravel()), 1.0)
        pi = (counts + DP_SMOOTHING) / (k + g.k * DP_SMOOTHING)
        out[start:stop] = (p * (np.log(p) - np.log(pi[:, active]))).sum(axis=1)
    return out


@dataclass
class MetricsRecord:
    seed: int
    recon: float
    divergence_sum: float
    divergence_mean: float
    auroc: float
    f1: float
    dp: dict[int, float] = field(default_factory=dict)

    def as_row(self, ks) -> dict[str, float]:
        row = {"L_R": self.recon, "L_D_sum": self.divergence_sum, "L_D_mean": self.divergence_mean,
               "auroc": self.auroc, "f1": self.f1}
        row.update({f"dp{k}": self.dp[k] for k in ks})
        return row


@dataclass
class SummaryRecord:
    mean: dict[str, float]
    std: dict[str, float]
    count: int


def summarize(records, ks=(10, 20, 40)) -> SummaryRecord:
    """Per-metric mean and sample standard deviation (n - 1 denominator)."""
    records = list(records)
    if len(records) < 2:
        raise InvalidArgumentError("summarize needs at least two records")
    rows = [r.as_row(ks) for r in records]
    keys = list(rows[0])
    # sort values so the result does not depend on record order
    values = {key: np.sort([row[key] for row in rows]) for key in keys}
    return SummaryRecord(
        mean={key: float(np.mean(v)) for key, v in values.items()},
        std={key: float(np.std(v, ddof=1)) for key, v in values.items()},
        count=len(records),
    )


def link_prediction_scores(phi, split, rng: Rng, operator: str = "hadamard", iters: int = 500,
                           lr: float = 0.5) -> tuple[float, float]:
    """AUROC and F1 of a logistic edge classifier.

    Trains on every train edge plus as many sampled train non-edges, then
    scores the held-out positives against as many fresh non-edges.
    """
    train = split.train
    test_pos = split.test_pos
    if train.num_edges == 0 or len(test_pos) == 0:
        raise InvalidArgumentError("need train edges and held-out test edges to score link prediction")
    train_neg = sample_negative_edges(train, train.num_edges, rng, exclude=test_pos)
    test_neg = sample_negative_edges(train, len(test_pos), rng,
                                     exclude=np.vstack([test_pos, train_neg]))
    x_train = edge_features(phi, np.vstack([train.edges, train_neg]), operator)
    y_train = np.r_[np.ones(train.num_edges), np.zeros(len(train_neg))]
    clf = fit_classifier(x_train, y_train, iters=iters, lr=lr)
    x_test = edge_features(phi, np.vstack([test_pos, test_neg]), operator)
    y_test = np.r_[np.ones(len(test_pos)), np.zeros(len(test_neg))]
    prob = clf.predict_proba(x_test)
    return auroc(prob, y_test), f1(prob, y_test)
