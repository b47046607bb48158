"""Adam and the alternating utility/fairness training loop."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import DivergenceError, InvalidArgumentError
from .graph import Graph
from .linalg import make_rng, thread_limit
from .losses import pos_weight
from .model import GraphInputs, ModelParams, Variant, forward, init_params, record_forward

log = logging.getLogger(__name__)

BETA1 = 0.9
BETA2 = 0.999
EPS = 1e-8


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros_like(cls, param) -> "AdamState":
        return cls(np.zeros_like(param), np.zeros_like(param))


def adam_step(state: AdamState, param: np.ndarray, grad: np.ndarray, lr: float) -> np.ndarray:
    """One bias-corrected Adam update; mutates ``state`` and returns the new parameter."""
    if param.shape != grad.shape or state.m.shape != param.shape:
        raise InvalidArgumentError(f"Adam shape mismatch: param {param.shape}, grad {grad.shape}")
    state.t += 1
    state.m = BETA1 * state.m + (1 - BETA1) * grad
    state.v = BETA2 * state.v + (1 - BETA2) * grad * grad
    m_hat = state.m / (1 - BETA1 ** state.t)
    v_hat = state.v / (1 - BETA2 ** state.t)
    return param - lr * m_hat / (np.sqrt(v_hat) + EPS)


class Adam:
    """Independent Adam state per named tensor."""

    def __init__(self, lr: float):
        self.lr = lr
        self.states: dict[str, AdamState] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
        out = {}
        for name, grad in grads.items():
            state = self.states.setdefault(name, AdamState.zeros_like(params[name]))
            out[name] = adam_step(state, params[name], grad, self.lr)
        return out


@dataclass
class TrainConfig:
    variant: Variant
    learning_rate: float = 1e-4
    epochs: int = 300
    lambda_f: float = 1.0
    seed: int = 0
    threads: int | None = 1
    hidden: int = 32
    dim: int = 16
    activations: tuple[str, str] = ("relu", "identity")
    block_rows: int | None = None

    def __post_init__(self):
        if isinstance(self.variant, str):
            self.variant = Variant.parse(self.variant)
        if not self.learning_rate > 0:
            raise InvalidArgumentError("learning_rate must be > 0")
        if self.epochs < 1:
            raise InvalidArgumentError("epochs must be >= 1")
        if self.lambda_f < 0:
            raise InvalidArgumentError("lambda_f must be >= 0")

    @property
    def aug_lambda(self) -> float:
        lam = self.variant.lam
        return self.lambda_f if lam is None else lam


@dataclass
class TrainHistory:
    recon: list[float] = field(default_factory=list)
    divergence: list[float] = field(default_factory=list)

    def __len__(self):
        return len(self.recon)


def joint_train(g: Graph, cfg: TrainConfig, observer=None):
    """Train one model on ``g``.

    Each epoch first steps the utility weights on the reconstruction loss,
    then re-runs the encoder and steps the fairness tensors on
    ``lambda_f``-scaled link-divergence gradients, each with its own Adam
    state. Base skips the fairness step; AUG takes a single step on
    ``L_R + lambda * L_D`` over the utility weights.

    ``observer(epoch, phase, names)`` is called after every parameter update.
    Returns ``(params, embeddings, history)``.
    """
    with thread_limit(cfg.threads):
        return _train(g, cfg, observer)


def _train(g, cfg, observer):
    inputs = GraphInputs.from_graph(g)
    pw = pos_weight(g)
    adj = g.adjacency()
    rng = make_rng(cfg.seed)
    params = init_params(cfg.variant, inputs, rng, cfg.hidden, cfg.dim, cfg.activations)
    kind = cfg.variant.kind
    utility_opt = Adam(cfg.learning_rate)
    fairness_opt = Adam(cfg.learning_rate)
    history = TrainHistory()
    notify = observer or (lambda *a: None)

    for epoch in range(1, cfg.epochs + 1):
        try:
            tape = ad.Tape()
            phi, _ = record_forward(tape, params, inputs)
            lr_node = ad.weighted_bce_mean(phi, adj, pw, cfg.block_rows)
            if kind == "AUG":
                ld_node = ad.kl_normalized_rows(phi, g.groups, g.k, "sum", cfg.block_rows)
                total = ad.add(lr_node, ad.scale(ld_node, cfg.aug_lambda))
                grads = tape.backward(total, wrt=params.utility_names)
                recon, div = float(lr_node.value), float(ld_node.value)
            else:
                grads = tape.backward(lr_node, wrt=params.utility_names)
                recon = float(lr_node.value)
                if kind == "Base":
                    div = ad.kl_value_and_grad(phi.value, g.groups, g.k, cfg.block_rows, need_grad=False)[0]
            _check_finite(epoch, recon, grads)
            params = params.with_tensors(utility_opt.step(params.tensors(), grads))
            notify(epoch, "augmented" if kind == "AUG" else "utility", tuple(grads))

            if kind not in ("Base", "AUG"):
                tape = ad.Tape()
                phi, _ = record_forward(tape, params, inputs)
                ld_node = ad.kl_normalized_rows(phi, g.groups, g.k, "sum", cfg.block_rows)
                div = float(ld_node.value)
                grads = tape.backward(ld_node, wrt=params.fairness_names)
                grads = {name: cfg.lambda_f * gr for name, gr in grads.items()}
                _check_finite(epoch, div, grads)
                params = params.with_tensors(fairness_opt.step(params.tensors(), grads))
                notify(epoch, "fairness", tuple(grads))
        except InvalidArgumentError as exc:
            if "non-finite" in str(exc):
                raise DivergenceError(epoch, str(exc)) from exc
            raise
        if not np.isfinite(div):
            raise DivergenceError(epoch, "non-finite link divergence")
        history.recon.append(recon)
        history.divergence.append(div)
        if epoch == 1 or epoch % 50 == 0 or epoch == cfg.epochs:
            log.debug("%s epoch %d: L_R=%.6g L_D=%.6g", cfg.variant, epoch, recon, div)

    return params, forward(params, inputs), history


def _check_finite(epoch, value, grads):
    if not np.isfinite(value) or not all(np.all(np.isfinite(gr)) for gr in grads.values()):
        raise DivergenceError(epoch)
