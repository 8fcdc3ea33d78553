"""Linear and two-layer GCN encoders (deterministic and variational)."""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from typing import Optional, Sequence

import numpy as np

from .graph import Operator

ENCODER_KINDS = ("linear", "gcn2", "gcn1")
LOG_SIGMA_BOUND = 10.0


@dataclass(frozen=True)
class EncoderConfig:
    """Encoder architecture.

    ``gcn2`` applies the community-augmented operator on the first layer
    only and the plain normalized adjacency on the second; ``gcn1`` uses the
    augmented operator on both layers.
    """

    kind: str = "linear"
    variational: bool = False
    dim: int = 16
    hidden: int = 32
    dropout: float = 0.0

    def __post_init__(self):
        if self.kind not in ENCODER_KINDS:
            raise ValueError(f"unknown encoder kind {self.kind!r}; expected one of {ENCODER_KINDS}")
        if self.dim < 1:
            raise ValueError("embedding dimension must be >= 1")
        if self.kind != "linear" and self.hidden < 1:
            raise ValueError("hidden width must be >= 1 for GCN encoders")
        if not 0 <= self.dropout < 1:
            raise ValueError("dropout must lie in [0, 1)")

    @property
    def layers(self) -> int:
        return 1 if self.kind == "linear" else 2


@dataclass
class Weights:
    """Weight matrices; the ``_sigma`` pair feeds the log-std encoder of VGAE."""

    W0: np.ndarray
    W1: Optional[np.ndarray] = None
    W0_sigma: Optional[np.ndarray] = None
    W1_sigma: Optional[np.ndarray] = None

    def items(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if value is not None:
                yield f.name, value

    def names(self) -> list[str]:
        return [name for name, _ in self.items()]

    def copy(self) -> "Weights":
        return replace(self, **{name: arr.copy() for name, arr in self.items()})

    def map(self, fn) -> "Weights":
        return replace(self, **{name: fn(name, arr) for name, arr in self.items()})

    def __getitem__(self, name):
        return getattr(self, name)


@dataclass
class Embedding:
    """Encoder output. For VGAE, ``Z = mu + exp(log_sigma) * noise``."""

    Z: np.ndarray
    mu: Optional[np.ndarray] = None
    log_sigma: Optional[np.ndarray] = None
    noise: Optional[np.ndarray] = None

    @property
    def variational(self) -> bool:
        return self.mu is not None

    @property
    def point(self) -> np.ndarray:
        """Deterministic embedding used downstream: ``mu`` for VGAE, ``Z`` otherwise."""
        return self.mu if self.mu is not None else self.Z


def _glorot(rng, fan_in: int, fan_out: int) -> np.ndarray:
    r = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-r, r, size=(fan_in, fan_out))


def init_weights(cfg: EncoderConfig, f_in: int, seed=0) -> Weights:
    """Glorot-uniform initialization; ``f_in`` is ``n`` under the identity-feature convention."""
    if f_in < 1:
        raise ValueError("input dimension must be positive")
    rng = np.random.default_rng(seed)

    def stack():
        if cfg.kind == "linear":
            return _glorot(rng, f_in, cfg.dim), None
        return _glorot(rng, f_in, cfg.hidden), _glorot(rng, cfg.hidden, cfg.dim)

    w0, w1 = stack()
    if not cfg.variational:
        return Weights(w0, w1)
    s0, s1 = stack()
    return Weights(w0, w1, s0, s1)


def _propagate(op: Operator, x, w: np.ndarray) -> np.ndarray:
    # identity features: op @ I @ W == op @ W, I is never built
    if x is None:
        if w.shape[0] != op.shape[1]:
            raise ValueError(f"shape mismatch: operator {op.shape} vs weights {w.shape}")
        return op @ w
    if x.shape[0] != op.shape[1] or x.shape[1] != w.shape[0]:
        raise ValueError(f"shape mismatch: operator {op.shape}, features {x.shape}, weights {w.shape}")
    return op @ (x @ w)


def _propagate_grad(op: Operator, x, g: np.ndarray) -> np.ndarray:
    # operators are symmetric, so op.T @ g == op @ g
    back = op @ g
    return back if x is None else x.T @ back


def _operators(cfg: EncoderConfig, ops) -> tuple[Operator, Optional[Operator]]:
    if isinstance(ops, Operator):
        ops = (ops,)
    ops = tuple(ops)
    if cfg.kind == "linear":
        return ops[0], None
    if cfg.kind == "gcn1":
        return ops[0], ops[0]
    if len(ops) < 2:
        raise ValueError("gcn2 needs (first-layer operator, second-layer operator)")
    return ops[0], ops[1]


def _stack_forward(cfg, op1, op2, x, w0, w1, rng, training):
    if cfg.kind == "linear":
        return _propagate(op1, x, w0), None
    pre = _propagate(op1, x, w0)
    h = np.maximum(pre, 0.0)
    mask = None
    if training and cfg.dropout > 0:
        mask = (rng.random(h.shape) >= cfg.dropout) / (1.0 - cfg.dropout)
        h = h * mask
    q = op2 @ h
    return q @ w1, {"pre": pre, "mask": mask, "q": q}


def _stack_backward(cfg, op1, op2, x, w1, cache, g):
    if cfg.kind == "linear":
        return _propagate_grad(op1, x, g), None
    dw1 = cache["q"].T @ g
    dh = op2 @ (g @ w1.T)
    if cache["mask"] is not None:
        dh = dh * cache["mask"]
    dpre = dh * (cache["pre"] > 0)
    return _propagate_grad(op1, x, dpre), dw1


def forward(cfg: EncoderConfig, ops, x, weights: Weights, rng=None, noise=None, training: bool = False):
    """Run the encoder, returning the :class:`Embedding` and a cache for :func:`backward`.

    ``noise`` fixes the reparameterization draw; otherwise it comes from ``rng``.
    Dropout is only active when ``training`` is true.
    """
    op1, op2 = _operators(cfg, ops)
    mu, c_mu = _stack_forward(cfg, op1, op2, x, weights.W0, weights.W1, rng, training)
    if not cfg.variational:
        return Embedding(mu), {"mu": c_mu}
    raw, c_sig = _stack_forward(cfg, op1, op2, x, weights.W0_sigma, weights.W1_sigma, rng, training)
    log_sigma = np.clip(raw, -LOG_SIGMA_BOUND, LOG_SIGMA_BOUND)
    if noise is None:
        if rng is None:
            raise ValueError("variational encoding needs either rng or noise")
        noise = rng.standard_normal(mu.shape)
    z = mu + np.exp(log_sigma) * noise
    cache = {"mu": c_mu, "sigma": c_sig, "raw": raw}
    return Embedding(z, mu, log_sigma, noise), cache


def backward(cfg: EncoderConfig, ops, x, weights: Weights, emb: Embedding, cache, d_z, d_mu=None, d_log_sigma=None) -> Weights:
    """Gradients of a scalar objective w.r.t. every weight matrix.

    ``d_z`` is the gradient w.r.t. the sampled embedding; ``d_mu`` and
    ``d_log_sigma`` carry terms that depend on the Gaussian parameters
    directly (the KL divergence).
    """
    op1, op2 = _operators(cfg, ops)
    if not cfg.variational:
        g0, g1 = _stack_backward(cfg, op1, op2, x, weights.W1, cache["mu"], d_z)
        return Weights(g0, g1)
    g_mu = d_z if d_mu is None else d_z + d_mu
    g_ls = d_z * np.exp(emb.log_sigma) * emb.noise
    if d_log_sigma is not None:
        g_ls = g_ls + d_log_sigma
    g_ls = g_ls * (np.abs(cache["raw"]) <= LOG_SIGMA_BOUND)
    g0, g1 = _stack_backward(cfg, op1, op2, x, weights.W1, cache["mu"], g_mu)
    s0, s1 = _stack_backward(cfg, op1, op2, x, weights.W1_sigma, cache["sigma"], g_ls)
    return Weights(g0, g1, s0, s1)


def encode_linear(op: Operator, x, weights: Weights) -> Embedding:
    """``Z = op X W0``."""
    return Embedding(_propagate(op, x, weights.W0))


def encode_gcn2(op_first: Operator, op_second: Operator, x, weights: Weights, dropout: float = 0.0, rng=None) -> Embedding:
    """``Z = op_second ReLU(op_first X W0) W1``; pass the same operator twice for GCN1."""
    cfg = EncoderConfig(kind="gcn2", dim=weights.W1.shape[1], hidden=weights.W0.shape[1], dropout=dropout)
    z, _ = _stack_forward(cfg, op_first, op_second, x, weights.W0, weights.W1, rng, dropout > 0)
    return Embedding(z)


def encode_variational(cfg: EncoderConfig, ops: Sequence[Operator], x, weights: Weights, seed=None, noise=None) -> Embedding:
    """Gaussian encoder: two independent stacks for ``mu`` and ``log_sigma``."""
    if not cfg.variational:
        raise ValueError("encoder config is not variational")
    rng = np.random.default_rng(seed)
    emb, _ = forward(cfg, ops, x, weights, rng=rng, noise=noise, training=False)
    return emb


def encode(cfg: EncoderConfig, ops, x, weights: Weights, seed=None) -> Embedding:
    """Inference-mode encoding for any configuration (no dropout)."""
    emb, _ = forward(cfg, ops, x, weights, rng=np.random.default_rng(seed), training=False)
    return emb
