"""A small reverse-mode tape over the fixed set of ops the models use.

Values are float64 numpy arrays. Every op records a node holding its forward
value and a vector-Jacobian closure; :meth:`Tape.backward` walks the nodes in
reverse, touching only nodes that lie between a requested parameter and the
output. Two fused nodes evaluate the n x n objectives in row blocks and never
keep the full similarity matrix alive.

Example::

    tape = Tape()
    w = tape.param("w", np.ones((2, 2)))
    loss = ad.sum(ad.hadamard(w, w))
    grads = tape.backward(loss, wrt=["w"])   # {"w": 2 * w}
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .errors import InvalidArgumentError, UnknownParameterError, UnsupportedOperationError
from .linalg import SparseMatrix, sigmoid as _sigmoid

PROB_CLAMP = 1e-12
BLOCK_ELEMENTS = 1 << 20  # ~8 MB of float64 per n-wide block temporary


def default_block_rows(n: int) -> int:
    return max(1, min(n, BLOCK_ELEMENTS // max(n, 1)))


class Var:
    """Handle to one tape node."""

    __slots__ = ("tape", "index")

    def __init__(self, tape: "Tape", index: int):
        self.tape = tape
        self.index = index

    @property
    def value(self) -> np.ndarray:
        return self.tape._nodes[self.index].value

    @property
    def shape(self):
        return self.value.shape

    @property
    def T(self) -> "Var":
        return transpose(self)

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, Var):
            return hadamard(self, other)
        return scale(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def _unsupported(self, *args, **kwargs):
        raise UnsupportedOperationError("operation is not part of the recorded op set")

    __truediv__ = __rtruediv__ = __pow__ = __rpow__ = __radd__ = __rsub__ = _unsupported

    def __array_ufunc__(self, ufunc, method, *inputs, **kwargs):
        raise UnsupportedOperationError(f"numpy ufunc {ufunc.__name__} cannot be recorded on a tape")

    def __float__(self):
        return float(self.value)

    def __repr__(self):
        return f"Var(#{self.index}, op={self.tape._nodes[self.index].op}, shape={self.shape})"


class _Node:
    __slots__ = ("op", "inputs", "value", "vjp", "param", "requires_grad")

    def __init__(self, op, inputs, value, vjp=None, param=None, requires_grad=False):
        self.op = op
        self.inputs = inputs
        self.value = value
        self.vjp = vjp
        self.param = param
        self.requires_grad = requires_grad


class Tape:
    """Records a computation; nodes are appended in topological order."""

    def __init__(self):
        self._nodes: list[_Node] = []
        self._params: dict[str, int] = {}

    def __len__(self):
        return len(self._nodes)

    @property
    def parameters(self) -> dict[str, Var]:
        return {name: Var(self, i) for name, i in self._params.items()}

    def param(self, name: str, value) -> Var:
        if name in self._params:
            raise InvalidArgumentError(f"parameter {name!r} already registered")
        arr = np.array(value, dtype=np.float64)
        self._params[name] = len(self._nodes)
        self._nodes.append(_Node("param", (), arr, param=name, requires_grad=True))
        return Var(self, len(self._nodes) - 1)

    def const(self, value) -> Var:
        self._nodes.append(_Node("const", (), np.asarray(value, dtype=np.float64)))
        return Var(self, len(self._nodes) - 1)

    def _push(self, op, inputs, value, vjp) -> Var:
        for v in inputs:
            if v.tape is not self:
                raise InvalidArgumentError("operands belong to a different tape")
        if not np.all(np.isfinite(value)):
            raise InvalidArgumentError(f"{op} produced a non-finite value")
        idx = tuple(v.index for v in inputs)
        needs = any(self._nodes[i].requires_grad for i in idx)
        self._nodes.append(_Node(op, idx, value, vjp, requires_grad=needs))
        return Var(self, len(self._nodes) - 1)

    def requires_grad(self, v: Var) -> bool:
        """True when ``v`` depends on at least one parameter."""
        return self._nodes[v.index].requires_grad

    def apply(self, op: str, *args, **kwargs) -> Var:
        """Record ``op`` by name; unknown names raise UnsupportedOperationError."""
        try:
            fn = OPS[op]
        except KeyError:
            raise UnsupportedOperationError(f"unsupported operation {op!r}") from None
        return fn(*args, **kwargs)

    def backward(self, output: Var, wrt=None) -> dict[str, np.ndarray]:
        """Gradient of the scalar ``output`` for each parameter in ``wrt``.

        ``wrt`` holds parameter names or Vars; ``None`` means every parameter.
        Parameters outside ``wrt`` get no entry.
        """
        if output.tape is not self:
            raise InvalidArgumentError("output belongs to a different tape")
        if output.value.size != 1:
            raise InvalidArgumentError(f"backward needs a scalar output, got shape {output.shape}")
        if wrt is None:
            targets = dict(self._params)
        else:
            targets = {}
            for item in wrt:
                if isinstance(item, Var):
                    name = self._nodes[item.index].param
                    if name is None or item.tape is not self:
                        raise UnknownParameterError(f"{item!r} is not a parameter of this tape")
                else:
                    name = item
                if name not in self._params:
                    raise UnknownParameterError(name)
                targets[name] = self._params[name]

        out = output.index
        live = np.zeros(out + 1, dtype=bool)
        live[list(i for i in targets.values() if i <= out)] = True
        for i in range(out + 1):
            if not live[i]:
                live[i] = any(live[j] for j in self._nodes[i].inputs)

        grads: dict[int, np.ndarray] = {out: np.ones_like(output.value)}
        for i in range(out, -1, -1):
            node = self._nodes[i]
            g = grads.pop(i, None) if node.vjp is not None else grads.get(i)
            if g is None or node.vjp is None or not live[i]:
                continue
            need = tuple(bool(live[j]) for j in node.inputs)
            for j, gj in zip(node.inputs, node.vjp(g, need)):
                if gj is None:
                    continue
                grads[j] = grads[j] + gj if j in grads else gj
        result = {}
        for name, idx in targets.items():
            g = grads.get(idx)
            result[name] = np.zeros_like(self._nodes[idx].value) if g is None else g
        return result


def _same_shape(name, a, b):
    if a.shape != b.shape:
        raise InvalidArgumentError(f"{name}: shape mismatch {a.shape} vs {b.shape}")


def add(a: Var, b: Var) -> Var:
    _same_shape("add", a, b)
    return a.tape._push("add", (a, b), a.value + b.value, lambda g, need: (g if need[0] else None, g if need[1] else None))


def sub(a: Var, b: Var) -> Var:
    _same_shape("sub", a, b)
    return a.tape._push("sub", (a, b), a.value - b.value, lambda g, need: (g if need[0] else None, -g if need[1] else None))


def hadamard(a: Var, b: Var) -> Var:
    _same_shape("hadamard", a, b)
    av, bv = a.value, b.value
    return a.tape._push(
        "hadamard", (a, b), av * bv,
        lambda g, need: (g * bv if need[0] else None, g * av if need[1] else None),
    )


def scale(a: Var, factor: float) -> Var:
    factor = float(factor)
    return a.tape._push("scale", (a,), a.value * factor, lambda g, need: (g * factor,))


def matmul(a: Var, b: Var) -> Var:
    av, bv = a.value, b.value
    if av.ndim != 2 or bv.ndim != 2 or av.shape[1] != bv.shape[0]:
        raise InvalidArgumentError(f"matmul shape mismatch: {av.shape} x {bv.shape}")
    return a.tape._push(
        "matmul", (a, b), av @ bv,
        lambda g, need: (g @ bv.T if need[0] else None, av.T @ g if need[1] else None),
    )


def transpose(a: Var) -> Var:
    return a.tape._push("transpose", (a,), np.ascontiguousarray(a.value.T), lambda g, need: (g.T,))


def sum(a: Var) -> Var:  # noqa: A001 - mirrors numpy naming
    shape = a.value.shape
    return a.tape._push("sum", (a,), np.asarray(a.value.sum()), lambda g, need: (np.full(shape, float(g)),))


def sigmoid(a: Var) -> Var:
    s = _sigmoid(a.value)
    return a.tape._push("sigmoid", (a,), s, lambda g, need: (g * s * (1.0 - s),))


def relu(a: Var) -> Var:
    mask = a.value > 0  # derivative at exactly 0 is taken as 0
    return a.tape._push("relu", (a,), np.where(mask, a.value, 0.0), lambda g, need: (g * mask,))


def identity(a: Var) -> Var:
    return a


def spmm(a: SparseMatrix, x: Var) -> Var:
    """Constant sparse matrix times a recorded dense operand."""
    xv = x.value
    if xv.ndim != 2 or a.shape[1] != xv.shape[0]:
        raise InvalidArgumentError(f"spmm shape mismatch: {a.shape} x {xv.shape}")
    csr = a.tocsr()
    return x.tape._push("spmm", (x,), np.asarray(csr @ xv), lambda g, need: (np.asarray(csr.T @ g),))


def weighted_spmm(pattern: SparseMatrix, weights: Var, x: Var) -> Var:
    """``(pattern o W) @ x`` where ``weights`` holds one value per stored entry.

    ``weights`` has shape ``(nnz, 1)`` and aligns with ``pattern.data``.
    """
    wv, xv = weights.value, x.value
    if wv.shape != (pattern.nnz, 1):
        raise InvalidArgumentError(f"weights must have shape ({pattern.nnz}, 1), got {wv.shape}")
    if xv.ndim != 2 or pattern.shape[1] != xv.shape[0]:
        raise InvalidArgumentError(f"spmm shape mismatch: {pattern.shape} x {xv.shape}")
    vals = pattern.data * wv[:, 0]
    mat = sp.csr_matrix((vals, (pattern.row, pattern.col)), shape=pattern.shape)
    rows, cols, base = pattern.row, pattern.col, pattern.data

    def vjp(g, need):
        gw = ((g[rows] * xv[cols]).sum(axis=1) * base)[:, None] if need[0] else None
        gx = np.asarray(mat.T @ g) if need[1] else None
        return gw, gx

    return weights.tape._push("weighted_spmm", (weights, x), np.asarray(mat @ xv), vjp)


def _row_blocks(n: int, block_rows: int | None):
    step = default_block_rows(n) if block_rows is None else int(block_rows)
    if step < 1:
        raise InvalidArgumentError("block_rows must be >= 1")
    for start in range(0, n, step):
        yield start, min(n, start + step)


def _logits(phi, start, stop):
    with np.errstate(over="ignore", invalid="ignore"):
        z = phi[start:stop] @ phi.T
    if not np.isfinite(z).all():
        raise InvalidArgumentError("non-finite logits in the decoder")
    return z


def bce_value_and_grad(phi, adjacency, pos_weight, block_rows=None, need_grad=True):
    """Sum of weighted BCE over all n^2 entries and its gradient w.r.t. ``phi``.

    Works on the dense negative term and corrects the stored positive
    entries from the sparse adjacency, so no dense target is built.
    """
    n = phi.shape[0]
    adj = sp.csr_matrix(adjacency)
    total = 0.0
    grad = np.empty_like(phi) if need_grad else None
    lo, hi = PROB_CLAMP, 1.0 - PROB_CLAMP
    for start, stop in _row_blocks(n, block_rows):
        p = _sigmoid(_logits(phi, start, stop))
        block = adj[start:stop]
        rows = np.repeat(np.arange(stop - start), np.diff(block.indptr))
        cols = block.indices
        pe = p[rows, cols]
        pec = np.clip(pe, lo, hi)
        neg = np.log1p(-np.clip(p, lo, hi))
        # every entry as a negative, then swap the positives' terms
        total -= neg.sum() - neg[rows, cols].sum() + pos_weight * np.log(pec).sum()
        if need_grad:
            del neg
            p[(p <= lo) | (p >= hi)] = 0.0  # clamped entries carry no gradient
            inside = (pe > lo) & (pe < hi)
            p[rows, cols] = pos_weight * (pe - 1.0) * inside
            # p now holds d(loss)/d(logit); it is symmetric overall, so the
            # row block of (G + G^T) phi is 2 G[block] phi
            grad[start:stop] = 2.0 * (p @ phi)
    return total, grad


def weighted_bce_mean(phi: Var, adjacency: sp.csr_matrix, pos_weight: float, block_rows=None) -> Var:
    """Mean over all n^2 entries of ``w * BCE(A, sigmoid(phi phi^T))``.

    ``adjacency`` must be symmetric and 0/1; positives carry ``pos_weight``.
    """
    pv = phi.value
    n = pv.shape[0]
    if adjacency.shape != (n, n):
        raise InvalidArgumentError(f"adjacency must be {n}x{n}, got {adjacency.shape}")
    total, grad = bce_value_and_grad(pv, adjacency, pos_weight, block_rows, phi.tape.requires_grad(phi))
    norm = 1.0 / (n * n)

    def vjp(g, need):
        return (grad * (norm * float(g)),)

    return phi.tape._push("weighted_bce_mean", (phi,), np.asarray(total * norm), vjp)


def kl_value_and_grad(phi, groups, k, block_rows=None, need_grad=True):
    """Sum over nodes of KL(P_S || f(v)) and its gradient w.r.t. ``phi``."""
    n = phi.shape[0]
    groups = np.asarray(groups, dtype=np.int64)
    onehot = np.zeros((n, k))
    onehot[np.arange(n), groups] = 1.0
    prior = onehot.sum(axis=0) / n
    active = prior > 0
    p = prior[active]
    total = 0.0
    grad = np.zeros_like(phi) if need_grad else None
    for start, stop in _row_blocks(n, block_rows):
        local = np.arange(stop - start)
        s = _sigmoid(_logits(phi, start, stop))
        s[local, local + start] = 0.0
        mass = s @ onehot  # similarity mass per group (unnormalized f(v))
        norm = np.maximum(mass.sum(axis=1, keepdims=True), 1e-300)
        f = mass / norm
        total += (p * (np.log(p) - np.log(np.maximum(f[:, active], PROB_CLAMP)))).sum()
        if not need_grad:
            continue
        gf = np.zeros_like(f)
        fa = f[:, active]
        gf[:, active] = np.where(fa > PROB_CLAMP, -p / np.maximum(fa, PROB_CLAMP), 0.0)
        gmass = (gf - (gf * f).sum(axis=1, keepdims=True)) / norm
        # d/dz of sigmoid is s(1 - s); the zeroed diagonal stays zero
        gz = np.take(gmass, groups, axis=1)
        gz *= s
        gz *= 1.0 - s
        gz[local, local + start] = 0.0
        grad[start:stop] += gz @ phi
        grad += gz.T @ phi[start:stop]
    return total, grad


def kl_normalized_rows(phi: Var, groups, k: int, reduction: str = "sum", block_rows=None) -> Var:
    """Link divergence: sum (or mean) over nodes of KL(P_S || f(v)).

    f(v) is the sigmoid-similarity mass node v assigns to each group, over
    all other nodes, normalized to a distribution.
    """
    if reduction not in ("sum", "mean"):
        raise InvalidArgumentError(f"reduction must be 'sum' or 'mean', got {reduction!r}")
    pv = phi.value
    n = pv.shape[0]
    if n < 2:
        raise InvalidArgumentError("link divergence needs at least two nodes")
    factor = 1.0 if reduction == "sum" else 1.0 / n
    total, grad = kl_value_and_grad(pv, groups, k, block_rows, phi.tape.requires_grad(phi))

    def vjp(g, need):
        return (grad * (factor * float(g)),)

    return phi.tape._push("kl_normalized_rows", (phi,), np.asarray(total * factor), vjp)


OPS = {
    "add": add,
    "sub": sub,
    "hadamard": hadamard,
    "scale": scale,
    "matmul": matmul,
    "transpose": transpose,
    "sum": sum,
    "sigmoid": sigmoid,
    "relu": relu,
    "spmm": spmm,
    "weighted_spmm": weighted_spmm,
    "weighted_bce_mean": weighted_bce_mean,
    "kl_normalized_rows": kl_normalized_rows,
}
