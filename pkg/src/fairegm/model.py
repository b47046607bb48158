"""Two-layer graph autoencoder and its emulated-graph-modification variants.

All variants share the second layer ``act1(A_hat H W1)``; they differ in the
first-layer pre-activation:

=========  ===============================================
Base/AUG   (A_hat F) W0
GFO        (A_hat F + W_f) W0
CFO(c)     (A_hat F + A* F*) W0, with A* n x c and F* c x m
FEW        ((A_hat o W_f) F) W0, W_f on stored entries only
=========  ===============================================
"""
from __future__ import annotations

import re
from dataclasses import dataclass, replace

import numpy as np

from . import autodiff as ad
from .errors import InvalidArgumentError
from .graph import Graph, normalize_adjacency
from .linalg import Rng, SparseMatrix, glorot_normal, sigmoid, spmm

KINDS = ("Base", "GFO", "CFO", "FEW", "AUG")
ACTIVATIONS = {"relu": ad.relu, "sigmoid": ad.sigmoid, "identity": ad.identity}

# names under which each variant's fairness tensors are registered on a tape
FAIRNESS_TENSORS = {
    "Base": (),
    "AUG": (),
    "GFO": ("w_f",),
    "CFO": ("a_star", "f_star"),
    "FEW": ("edge_w",),
}


@dataclass(frozen=True)
class Variant:
    kind: str
    c: int | None = None
    lam: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidArgumentError(f"unknown model kind {self.kind!r}")
        if self.kind == "CFO":
            if self.c is None or int(self.c) < 1:
                raise InvalidArgumentError("CFO needs c >= 1")
            object.__setattr__(self, "c", int(self.c))
        elif self.c is not None:
            raise InvalidArgumentError(f"{self.kind} takes no c")
        if self.kind == "AUG":
            # lam=None defers to the run's lambda_f
            if self.lam is not None:
                if float(self.lam) < 0:
                    raise InvalidArgumentError("AUG needs lambda >= 0")
                object.__setattr__(self, "lam", float(self.lam))
        elif self.lam is not None:
            raise InvalidArgumentError(f"{self.kind} takes no lambda")

    @classmethod
    def parse(cls, text: str) -> "Variant":
        """Parse ``Base``, ``GFO``, ``FEW``, ``CFO(10)`` or ``AUG(100)``."""
        m = re.fullmatch(r"\s*(\w+)\s*(?:\(\s*([^)]*)\s*\))?\s*", text)
        if not m:
            raise InvalidArgumentError(f"cannot parse model {text!r}")
        kind = {k.lower(): k for k in KINDS}.get(m.group(1).lower())
        if kind is None:
            raise InvalidArgumentError(f"unknown model kind {m.group(1)!r}")
        arg = m.group(2)
        if kind == "CFO":
            if not arg:
                raise InvalidArgumentError("CFO needs c, e.g. CFO(10)")
            return cls(kind, c=int(arg))
        if kind == "AUG":
            return cls(kind, lam=float(arg) if arg else None)
        if arg:
            raise InvalidArgumentError(f"{kind} takes no argument")
        return cls(kind)

    def __str__(self):
        if self.kind == "CFO":
            return f"CFO({self.c})"
        if self.kind == "AUG" and self.lam is not None:
            return f"AUG({self.lam:g})"
        return self.kind

    @property
    def fairness_names(self) -> tuple[str, ...]:
        return FAIRNESS_TENSORS[self.kind]


@dataclass(frozen=True, eq=False)
class GraphInputs:
    """Per-graph constants reused on every forward pass."""

    a_hat: SparseMatrix
    features: np.ndarray
    a_hat_features: np.ndarray

    @classmethod
    def from_graph(cls, g: Graph) -> "GraphInputs":
        return cls.build(normalize_adjacency(g), g.features)

    @classmethod
    def build(cls, a_hat: SparseMatrix, features) -> "GraphInputs":
        features = np.asarray(features, dtype=np.float64)
        if a_hat.shape != (features.shape[0], features.shape[0]):
            raise InvalidArgumentError(f"A_hat {a_hat.shape} does not match features {features.shape}")
        return cls(a_hat, features, spmm(a_hat, features))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def m(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True, eq=False)
class ModelParams:
    w0: np.ndarray
    w1: np.ndarray
    variant: Variant
    fair_gfo: np.ndarray | None = None
    fair_cfo_a: np.ndarray | None = None
    fair_cfo_f: np.ndarray | None = None
    fair_few: np.ndarray | None = None
    activations: tuple[str, str] = ("relu", "identity")
    _fields = {"w0": "w0", "w1": "w1", "w_f": "fair_gfo", "a_star": "fair_cfo_a",
               "f_star": "fair_cfo_f", "edge_w": "fair_few"}

    def __post_init__(self):
        present = {name for name, attr in self._fields.items() if getattr(self, attr) is not None}
        expected = {"w0", "w1", *self.variant.fairness_names}
        if present != expected:
            raise InvalidArgumentError(
                f"{self.variant} expects tensors {sorted(expected)}, got {sorted(present)}")
        if self.w0.shape[1] != self.w1.shape[0]:
            raise InvalidArgumentError("w0 and w1 hidden sizes disagree")
        if self.variant.kind == "CFO":
            a, f = self.fair_cfo_a, self.fair_cfo_f
            if a.shape[1] != self.variant.c or f.shape != (self.variant.c, self.w0.shape[0]):
                raise InvalidArgumentError("CFO tensors do not match c and m")
        for act in self.activations:
            if act not in ACTIVATIONS:
                raise InvalidArgumentError(f"unknown activation {act!r}")

    def tensors(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, attr) for name, attr in self._fields.items()
                if getattr(self, attr) is not None}

    def with_tensors(self, updates: dict[str, np.ndarray]) -> "ModelParams":
        return replace(self, **{self._fields[name]: value for name, value in updates.items()})

    @property
    def utility_names(self) -> tuple[str, ...]:
        return ("w0", "w1")

    @property
    def fairness_names(self) -> tuple[str, ...]:
        return self.variant.fairness_names


def init_params(variant: Variant, inputs: GraphInputs, rng: Rng, hidden: int = 32, dim: int = 16,
                activations=("relu", "identity")) -> ModelParams:
    """Glorot-normal weights; FEW edge weights start at 1 so FEW begins at Base.

    The utility weights are drawn first, so every variant built from the same
    seed starts from identical ``w0`` and ``w1``.
    """
    n, m = inputs.n, inputs.m
    w0 = glorot_normal(m, hidden, rng)
    w1 = glorot_normal(hidden, dim, rng)
    extra = {}
    if variant.kind == "GFO":
        extra["fair_gfo"] = glorot_normal(n, m, rng)
    elif variant.kind == "CFO":
        extra["fair_cfo_a"] = glorot_normal(n, variant.c, rng)
        extra["fair_cfo_f"] = glorot_normal(variant.c, m, rng)
    elif variant.kind == "FEW":
        extra["fair_few"] = np.ones((inputs.a_hat.nnz, 1))
    return ModelParams(w0, w1, variant, activations=tuple(activations), **extra)


def record_forward(tape: ad.Tape, params: ModelParams, inputs: GraphInputs):
    """Register the parameters on ``tape`` and record the encoder.

    Returns the embedding node and the parameter nodes by name.
    """
    if params.w0.shape[0] != inputs.m:
        raise InvalidArgumentError(f"w0 expects {params.w0.shape[0]} features, graph has {inputs.m}")
    p = {name: tape.param(name, value) for name, value in params.tensors().items()}
    kind = params.variant.kind
    act0, act1 = (ACTIVATIONS[a] for a in params.activations)
    w0 = p["w0"]

    if kind == "GFO":
        if params.fair_gfo.shape != inputs.features.shape:
            raise InvalidArgumentError("W_f must have the feature matrix shape")
        pre = ad.matmul(ad.add(tape.const(inputs.a_hat_features), p["w_f"]), w0)
    elif kind == "CFO":
        if params.fair_cfo_a.shape[0] != inputs.n:
            raise InvalidArgumentError("A* must have one row per node")
        # (A_hat F + A* F*) W0 evaluated as A_hat F W0 + A* (F* W0): O(ncd) instead of O(ncm)
        base = ad.matmul(tape.const(inputs.a_hat_features), w0)
        pre = ad.add(base, ad.matmul(p["a_star"], ad.matmul(p["f_star"], w0)))
    elif kind == "FEW":
        # ((A_hat o W_f) F) W0, grouped like the base path so unit weights reproduce it bit for bit
        pre = ad.matmul(ad.weighted_spmm(inputs.a_hat, p["edge_w"], tape.const(inputs.features)), w0)
    else:
        pre = ad.matmul(tape.const(inputs.a_hat_features), w0)

    hidden = act0(pre)
    phi = act1(ad.spmm(inputs.a_hat, ad.matmul(hidden, p["w1"])))
    return phi, p


def forward(params: ModelParams, inputs: GraphInputs) -> np.ndarray:
    """Node embeddings, ``n x d``."""
    phi, _ = record_forward(ad.Tape(), params, inputs)
    return phi.value


def decode_block(phi, start: int, stop: int) -> np.ndarray:
    """Rows ``start:stop`` of sigmoid(phi phi^T)."""
    phi = np.asarray(phi, dtype=np.float64)
    if not 0 <= start <= stop <= phi.shape[0]:
        raise InvalidArgumentError(f"row range [{start}, {stop}) outside [0, {phi.shape[0]})")
    return sigmoid(phi[start:stop] @ phi.T)


def cfo_rank_witness(params: ModelParams) -> int:
    """Numerical rank of A* F* (singular values above 1e-10 * sigma_max)."""
    if params.variant.kind != "CFO":
        raise InvalidArgumentError("rank witness is only defined for CFO")
    sv = np.linalg.svd(params.fair_cfo_a @ params.fair_cfo_f, compute_uv=False)
    if sv.size == 0 or sv[0] == 0:
        return 0
    return int(np.sum(sv > 1e-10 * sv[0]))


def gfo_as_cfo(w_f, c: int) -> tuple[np.ndarray, np.ndarray]:
    """Factor an arbitrary n x m offset as A* F* with c >= min(n, m) added nodes."""
    w_f = np.asarray(w_f, dtype=np.float64)
    n, m = w_f.shape
    if c < min(n, m):
        raise InvalidArgumentError(f"c={c} is below min(n, m)={min(n, m)}; A*F* is rank-limited")
    if m <= n:
        a = np.zeros((n, c))
        a[:, :m] = w_f
        f = np.zeros((c, m))
        f[:m] = np.eye(m)
    else:
        a = np.zeros((n, c))
        a[:, :n] = np.eye(n)
        f = np.zeros((c, m))
        f[:n] = w_f
    return a, f
