"""Hand-derived gradients, Adam, the training loop and finite-difference checks."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .communities import Partition, build_operator, louvain, membership_matrix, sparsify
from .encoders import LOG_SIGMA_BOUND, EncoderConfig, Embedding, Weights, backward, forward, init_weights
from .graph import EdgeSplit, Graph, symmetric_normalize
from .objectives import (
    FastGAEConfig,
    LossConfig,
    LossValue,
    default_pos_weight,
    fastgae_sample,
    kl_term,
    objective,
    pairwise_terms,
)

MAGIC = b"MODGAE1\n"
ADAM_B1, ADAM_B2, ADAM_EPS = 0.9, 0.999, 1e-8


class NumericalError(FloatingPointError):
    """Non-finite loss or gradient; carries the iteration and the history so far."""

    def __init__(self, message: str, iteration: int, history=None):
        super().__init__(f"iteration {iteration}: {message}")
        self.iteration = iteration
        self.history = list(history or [])


class ModelFormatError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    """One training run. ``s=None`` keeps the complete community blocks."""

    learning_rate: float = 0.01
    iterations: int = 200
    seed: int = 0
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    lam: float = 0.0
    s: Optional[int] = None

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        if self.s is not None and self.s < 1:
            raise ValueError("s must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        enc = EncoderConfig(**d.pop("encoder"))
        loss = dict(d.pop("loss"))
        if loss.get("fastgae") is not None:
            loss["fastgae"] = FastGAEConfig(**loss["fastgae"])
        return cls(encoder=enc, loss=LossConfig(**loss), **d)


@dataclass
class AdamState:
    m: Weights
    v: Weights
    step: int = 0

    @classmethod
    def zeros_like(cls, weights: Weights) -> "AdamState":
        return cls(weights.map(lambda _, w: np.zeros_like(w)), weights.map(lambda _, w: np.zeros_like(w)), 0)


def adam_step(state: AdamState, weights: Weights, grads: Weights, lr: float):
    """Bias-corrected Adam update; returns new ``(weights, state)`` without mutating inputs."""
    if weights.names() != grads.names():
        raise ValueError("weights and gradients hold different matrices")
    t = state.step + 1
    m = state.m.map(lambda k, a: ADAM_B1 * a + (1.0 - ADAM_B1) * grads[k])
    v = state.v.map(lambda k, a: ADAM_B2 * a + (1.0 - ADAM_B2) * grads[k] * grads[k])
    c1 = 1.0 - ADAM_B1 ** t
    c2 = 1.0 - ADAM_B2 ** t
    new = weights.map(lambda k, w: w - lr * (m[k] / c1) / (np.sqrt(v[k] / c2) + ADAM_EPS))
    return new, AdamState(m, v, t)


@dataclass
class TrainedModel:
    config: TrainConfig
    weights: Weights
    embedding: Embedding
    history: list = field(default_factory=list)
    prior: Optional[Partition] = None

    @property
    def encoder(self) -> EncoderConfig:
        return self.config.encoder

    def regenerate(self, graph) -> Embedding:
        """Recompute the final embedding from the weights, the graph and the seed."""
        g = graph.train_graph if isinstance(graph, EdgeSplit) else graph
        streams = _seed_streams(self.config.seed)
        ops, _ = prepare_operators(g, self.config, streams["prior"])
        emb, _ = forward(self.encoder, ops, g.features, self.weights, rng=np.random.default_rng(streams["final"]))
        return emb


def _seed_streams(seed) -> dict:
    # fixed spawn order so every path draws identical streams for one seed
    kids = np.random.SeedSequence(seed).spawn(4)
    return dict(zip(("prior", "init", "train", "final"), kids))


def prepare_operators(graph: Graph, cfg: TrainConfig, prior_seed=None):
    """Build the encoder's message passing operators; Louvain runs only when ``lam > 0``."""
    if prior_seed is None:
        prior_seed = _seed_streams(cfg.seed)["prior"]
    plain = symmetric_normalize(graph)
    partition = None
    if cfg.lam > 0:
        rng = np.random.default_rng(prior_seed)
        louvain_seed, sparse_seed = (int(v) for v in rng.integers(2**63, size=2))
        partition = louvain(graph, seed=louvain_seed)
        ac = membership_matrix(partition) if cfg.s is None else sparsify(partition, cfg.s, seed=sparse_seed)
        aug = build_operator(graph, ac, cfg.lam)
    else:
        aug = plain
    if cfg.encoder.kind == "gcn2":
        return (aug, plain), partition
    return (aug,), partition


def compute_gradients(weights: Weights, ops, x, adjacency, cfg: TrainConfig, rng=None, noise=None, nodes=None,
                      training: bool = True, iteration: int = 0):
    """Loss value and exact gradients of the minimized objective w.r.t. every weight matrix.

    Returns ``(LossValue, Weights, Embedding)``.
    """
    emb, cache = forward(cfg.encoder, ops, x, weights, rng=rng, noise=noise, training=training)
    if not np.all(np.isfinite(emb.Z)):
        raise NumericalError("non-finite embedding", iteration)
    value, g = objective(emb, adjacency, cfg.loss, grad=True, nodes=nodes)
    grads = backward(cfg.encoder, ops, x, weights, emb, cache, g["z"], g.get("mu"), g.get("log_sigma"))
    if not np.isfinite(value.total) or not all(np.all(np.isfinite(a)) for _, a in grads.items()):
        raise NumericalError("non-finite loss or gradient", iteration)
    return value, grads, emb


def _fit(graph: Graph, cfg: TrainConfig, ops, streams, step_fn, prior=None) -> TrainedModel:
    x = graph.features
    f_in = graph.n if x is None else x.shape[1]
    weights = init_weights(cfg.encoder, f_in, seed=np.random.default_rng(streams["init"]))
    state = AdamState.zeros_like(weights)
    rng = np.random.default_rng(streams["train"])
    history: list[LossValue] = []
    for it in range(cfg.iterations):
        try:
            value, grads = step_fn(weights, rng, it)
        except NumericalError as err:
            raise NumericalError(str(err).split(": ", 1)[-1], it, history) from None
        history.append(value)
        weights, state = adam_step(state, weights, grads, cfg.learning_rate)
    emb, _ = forward(cfg.encoder, ops, x, weights, rng=np.random.default_rng(streams["final"]))
    return TrainedModel(cfg, weights, emb, history, prior)


def train(graph, cfg: TrainConfig) -> TrainedModel:
    """Louvain prior, sparsification, operator, then ``cfg.iterations`` Adam steps.

    ``graph`` may be an :class:`EdgeSplit`, in which case only its train graph
    is seen. FastGAE draws a fresh node subset every iteration when enabled.
    """
    g = graph.train_graph if isinstance(graph, EdgeSplit) else graph
    streams = _seed_streams(cfg.seed)
    ops, prior = prepare_operators(g, cfg, streams["prior"])
    fast = cfg.loss.fastgae_for(g.n)
    a = g.adjacency

    def step(weights, rng, it):
        nodes = fastgae_sample(a, fast.n_sub, fast.alpha, rng) if fast is not None else None
        value, grads, _ = compute_gradients(weights, ops, g.features, a, cfg, rng=rng, nodes=nodes, iteration=it)
        return value, grads

    return _fit(g, cfg, ops, streams, step, prior)


def train_reference(graph, encoder: EncoderConfig, learning_rate: float, iterations: int, seed: int = 0) -> TrainedModel:
    """Standard GAE / VGAE: plain normalized adjacency, reconstruction (+ KL) only."""
    g = graph.train_graph if isinstance(graph, EdgeSplit) else graph
    cfg = TrainConfig(learning_rate, iterations, seed, encoder, LossConfig(beta=0.0), lam=0.0)
    streams = _seed_streams(seed)
    plain = symmetric_normalize(g)
    ops = (plain, plain) if encoder.kind == "gcn2" else (plain,)
    a = g.adjacency
    w_pos = default_pos_weight(a)
    n = g.n

    def step(weights, rng, it):
        emb, cache = forward(encoder, ops, g.features, weights, rng=rng, training=True)
        terms = pairwise_terms(a, emb.Z, w_pos, modularity=False, grad=True)
        if encoder.variational:
            kl = kl_term(emb.mu, emb.log_sigma) / n
            value = LossValue(-terms.recon - kl, terms.recon, kl, float("nan"), True)
            d_mu = emb.mu * (1.0 / (n * n))
            d_ls = (np.exp(2.0 * emb.log_sigma) - 1.0) * (1.0 / (n * n))
        else:
            value = LossValue(terms.recon, terms.recon, 0.0, float("nan"))
            d_mu = d_ls = None
        grads = backward(encoder, ops, g.features, weights, emb, cache, terms.grad_recon, d_mu, d_ls)
        if not np.isfinite(value.total):
            raise NumericalError("non-finite loss", it)
        return value, grads

    return _fit(g, cfg, ops, streams, step)


@dataclass(frozen=True)
class GradCheckReport:
    max_rel_error: float
    checked: int
    skipped: int

    def __float__(self):
        return self.max_rel_error


def _kink_signature(cfg: EncoderConfig, emb: Embedding, cache) -> tuple:
    parts = []
    for key in ("mu", "sigma"):
        c = cache.get(key)
        if c is not None:
            parts.append((c["pre"] > 0).tobytes())
    if "raw" in cache:
        parts.append((np.abs(cache["raw"]) <= LOG_SIGMA_BOUND).tobytes())
    return tuple(parts)


def gradient_check(cfg: TrainConfig, graph: Graph, h: float = 1e-4, seed: int = 0) -> GradCheckReport:
    """Central-difference check of :func:`compute_gradients` over every weight entry.

    Dropout is disabled and the reparameterization noise is frozen. Entries
    whose perturbation flips a ReLU or clamp region are skipped, since the
    objective is not differentiable there; the count is reported.

    The loss is O(1) while some gradient entries are O(1e-8), so the default
    step is large enough that rounding in the loss does not swamp them.
    """
    if graph.n > 50:
        raise ValueError("gradient_check is limited to n <= 50")
    cfg = replace(cfg, encoder=replace(cfg.encoder, dropout=0.0))
    streams = _seed_streams(cfg.seed)
    ops, _ = prepare_operators(graph, cfg, streams["prior"])
    x = graph.features
    f_in = graph.n if x is None else x.shape[1]
    weights = init_weights(cfg.encoder, f_in, seed=np.random.default_rng(seed))
    noise = np.random.default_rng(seed + 1).standard_normal((graph.n, cfg.encoder.dim)) if cfg.encoder.variational else None
    a = graph.adjacency

    def evaluate(w):
        emb, cache = forward(cfg.encoder, ops, x, w, noise=noise, training=False)
        value, _ = objective(emb, a, cfg.loss)
        return value.minimized, _kink_signature(cfg.encoder, emb, cache)

    _, analytic, _ = compute_gradients(weights, ops, x, a, cfg, noise=noise, training=False)
    _, base_sig = evaluate(weights)
    worst, checked, skipped = 0.0, 0, 0
    for name, arr in weights.items():
        for idx in np.ndindex(arr.shape):
            plus, minus = weights.copy(), weights.copy()
            plus[name][idx] += h
            minus[name][idx] -= h
            f_p, sig_p = evaluate(plus)
            f_m, sig_m = evaluate(minus)
            if sig_p != base_sig or sig_m != base_sig:
                skipped += 1
                continue
            num = (f_p - f_m) / (2.0 * h)
            ana = analytic[name][idx]
            err = abs(ana - num) / max(1e-8, abs(ana) + abs(num))
            worst = max(worst, err)
            checked += 1
    return GradCheckReport(worst, checked, skipped)


def write_history(history, path) -> None:
    with open(path, "w") as fh:
        fh.write("iteration\trecon\tkl\tsoft_mod\ttotal\n")
        for i, v in enumerate(history):
            fh.write(f"{i}\t{v.recon:.17g}\t{v.kl:.17g}\t{v.soft_mod:.17g}\t{v.total:.17g}\n")


def read_history(path) -> list[LossValue]:
    out = []
    with open(path) as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if header != ["iteration", "recon", "kl", "soft_mod", "total"]:
            raise ModelFormatError(f"{path}: unexpected loss history header")
        for lineno, line in enumerate(fh, start=2):
            parts = line.rstrip("\n").split("\t")
            try:
                _, recon, kl, soft, total = parts
                out.append(LossValue(float(total), float(recon), float(kl), float(soft)))
            except ValueError:
                raise ModelFormatError(f"{path}:{lineno}: malformed loss row") from None
    return out


def save_model(model: TrainedModel, path) -> None:
    """MODGAE1 container: magic line, JSON header line, then little-endian float64 arrays."""
    arrays = dict(model.weights.items())
    emb = model.embedding
    for key in ("Z", "mu", "log_sigma"):
        val = getattr(emb, key)
        if val is not None:
            arrays[key] = val
    header = {
        "config": model.config.to_dict(),
        "arrays": [[k, list(v.shape)] for k, v in arrays.items()],
    }
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        for v in arrays.values():
            fh.write(np.ascontiguousarray(v, dtype="<f8").tobytes())


def load_model(path) -> TrainedModel:
    raw = Path(path).read_bytes()
    if not raw.startswith(MAGIC):
        raise ModelFormatError(f"{path}: not a MODGAE1 file")
    end = raw.index(b"\n", len(MAGIC))
    try:
        header = json.loads(raw[len(MAGIC):end])
        cfg = TrainConfig.from_dict(header["config"])
    except (ValueError, KeyError, TypeError) as err:
        raise ModelFormatError(f"{path}: bad header ({err})") from None
    pos = end + 1
    arrays = {}
    for name, shape in header["arrays"]:
        count = int(np.prod(shape))
        chunk = raw[pos:pos + 8 * count]
        if len(chunk) != 8 * count:
            raise ModelFormatError(f"{path}: truncated array {name}")
        arrays[name] = np.frombuffer(chunk, dtype="<f8").reshape(shape).astype(np.float64)
        pos += 8 * count
    if pos != len(raw):
        raise ModelFormatError(f"{path}: {len(raw) - pos} trailing bytes")
    weights = Weights(**{k: arrays.pop(k) for k in list(arrays) if k.startswith("W")})
    emb = Embedding(arrays["Z"], arrays.get("mu"), arrays.get("log_sigma"))
    return TrainedModel(cfg, weights, emb)
