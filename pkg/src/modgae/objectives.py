"""Inner-product decoder, reconstruction/ELBO losses and the soft-modularity regularizer.

All pairwise terms are streamed over row blocks, so the dense ``n x n``
reconstruction is never held in memory.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from .encoders import Embedding
from .graph import Graph

BLOCK_ROWS = 256
FASTGAE_AUTO_N = 20000


@dataclass(frozen=True)
class FastGAEConfig:
    n_sub: int = 10000
    alpha: float = 1.0


@dataclass(frozen=True)
class LossConfig:
    """``beta`` weights the soft modularity, ``gamma`` scales squared distances.

    ``w_pos=None`` uses ``(n^2 - 2m) / 2m`` computed on the reconstructed
    graph. ``fastgae=None`` enables subgraph sampling automatically when
    ``n > auto_fastgae_above``.
    """

    beta: float = 0.0
    gamma: float = 1.0
    w_pos: Optional[float] = None
    fastgae: Optional[FastGAEConfig] = None
    auto_fastgae_above: int = FASTGAE_AUTO_N

    def __post_init__(self):
        if self.beta < 0 or self.gamma < 0:
            raise ValueError("beta and gamma must be non-negative")
        if self.w_pos is not None and self.w_pos <= 0:
            raise ValueError("w_pos must be positive")

    def fastgae_for(self, n: int) -> Optional[FastGAEConfig]:
        if self.fastgae is not None:
            if self.fastgae.n_sub > n:
                raise ValueError(f"FastGAE subgraph size {self.fastgae.n_sub} exceeds n={n}")
            return self.fastgae
        if n > self.auto_fastgae_above:
            return FastGAEConfig(n_sub=min(FastGAEConfig.n_sub, n))
        return None


@dataclass(frozen=True)
class LossValue:
    """One evaluation of the training objective.

    For GAE ``total = recon - beta * soft_mod`` is minimized. For VGAE
    ``total = elbo + beta * soft_mod`` with ``elbo = -recon - kl`` is
    maximized; :attr:`minimized` gives the quantity descent acts on.
    """

    total: float
    recon: float
    kl: float
    soft_mod: float
    variational: bool = False

    @property
    def minimized(self) -> float:
        return -self.total if self.variational else self.total


def decode_pair(z_i, z_j) -> float:
    """Edge probability ``sigmoid(z_i . z_j)``."""
    z_i, z_j = np.asarray(z_i, dtype=np.float64), np.asarray(z_j, dtype=np.float64)
    if z_i.shape != z_j.shape:
        raise ValueError("embedding vectors must have equal dimension")
    return float(expit(z_i @ z_j))


def decode_pairs(z: np.ndarray, pairs) -> np.ndarray:
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    return expit(np.einsum("ij,ij->i", z[pairs[:, 0]], z[pairs[:, 1]]))


def default_pos_weight(adjacency) -> float:
    a = adjacency.adjacency if isinstance(adjacency, Graph) else adjacency
    n = a.shape[0]
    pos = float(a.sum())
    if pos <= 0:
        return 1.0
    return (n * n - pos) / pos


@dataclass
class PairTerms:
    recon: float
    soft_mod: float
    grad_recon: Optional[np.ndarray] = None
    grad_soft_mod: Optional[np.ndarray] = None


def pairwise_terms(adjacency, z: np.ndarray, w_pos: float, gamma: float = 0.0, modularity: bool = True,
                   grad: bool = False, block_rows: int = BLOCK_ROWS) -> PairTerms:
    """Reconstruction cross-entropy and soft modularity (with optional Z-gradients).

    recon    = -1/n^2 sum_ij [w_pos A_ij log s(x_ij) + (1 - A_ij) log(1 - s(x_ij))]
    soft_mod = 1/2m  sum_ij [A_ij - d_i d_j / 2m] exp(-gamma ||z_i - z_j||^2)

    with ``x = z_i . z_j`` and the diagonal included. The cross-entropy is
    written as ``softplus(x) + A [(w_pos - 1) softplus(x) - w_pos x]`` so the
    dense part does not depend on ``A``; edge corrections are sparse.
    """
    a = sp.csr_matrix(adjacency.adjacency if isinstance(adjacency, Graph) else adjacency)
    z = np.asarray(z, dtype=np.float64)
    n = z.shape[0]
    deg = np.asarray(a.sum(axis=1)).ravel()
    two_m = float(deg.sum())
    do_mod = modularity and two_m > 0
    sq = np.einsum("ij,ij->i", z, z)
    dz = np.column_stack([deg, deg[:, None] * z]) if grad else deg[:, None]
    recon_sum = 0.0
    mod_sum = 0.0
    g_rec = np.zeros_like(z) if grad else None
    g_mod = np.zeros_like(z) if (grad and do_mod) else None
    indptr, indices, data = a.indptr, a.indices, a.data
    for r0 in range(0, n, block_rows):
        r1 = min(r0 + block_rows, n)
        zb = z[r0:r1]
        x = zb @ z.T
        # softplus(x) = max(x, 0) + log1p(e) and sigmoid(x) share e = exp(-|x|)
        e = np.abs(x)
        np.negative(e, out=e)
        np.exp(e, out=e)
        splus = np.log1p(e)
        splus += np.maximum(x, 0.0)
        recon_sum += float(splus.sum())
        lo, hi = indptr[r0], indptr[r1]
        rows = np.repeat(np.arange(r1 - r0), np.diff(indptr[r0:r1 + 1]))
        cols = indices[lo:hi]
        vals = data[lo:hi]
        x_e = x[rows, cols]
        sp_e = splus[rows, cols]
        recon_sum += float(np.sum(vals * ((w_pos - 1.0) * sp_e - w_pos * x_e)))
        if grad:
            s = e + 1.0
            np.reciprocal(s, out=s)
            np.multiply(s, e, out=e)
            s = np.where(x >= 0.0, s, e)
            s_e = s[rows, cols]
            s[rows, cols] += vals * ((w_pos - 1.0) * s_e - w_pos)
            g_rec[r0:r1] = s @ z
        if do_mod:
            dist = np.multiply(x, -2.0)
            dist += sq[None, :]
            dist += sq[r0:r1, None]
            np.maximum(dist, 0.0, out=dist)
            dist *= -gamma
            e = np.exp(dist, out=dist)
            db = deg[r0:r1]
            e_e = e[rows, cols]
            # one pass gives e @ d and, for the gradient, e @ (d * Z)
            y = e @ dz
            mod_sum += float(np.sum(vals * e_e)) - float(db @ y[:, 0]) / two_m
            if grad:
                # H = B * d/dD exp(-gamma D) with B = A - d d^T / 2m, never formed densely:
                # its degree part is diag(db) e diag(d) * gamma / 2m, its edge part is sparse
                c = db * (gamma / two_m)
                h_e = -gamma * vals * e_e
                h_edge = sp.csr_matrix((h_e, cols, indptr[r0:r1 + 1] - lo), shape=(r1 - r0, n))
                rowsum = c * y[:, 0] + np.bincount(rows, weights=h_e, minlength=r1 - r0)
                hz = c[:, None] * y[:, 1:] + h_edge @ z
                g_mod[r0:r1] = 4.0 * (rowsum[:, None] * zb - hz)
    recon = recon_sum / (n * n)
    soft = mod_sum / two_m if do_mod else 0.0
    out = PairTerms(recon, soft)
    if grad:
        out.grad_recon = g_rec * (2.0 / (n * n))
        out.grad_soft_mod = g_mod / two_m if do_mod else np.zeros_like(z)
    return out


def recon_loss_gae(adjacency, z: np.ndarray, w_pos: Optional[float] = None) -> float:
    """Weighted cross-entropy between ``A`` and ``sigmoid(Z Z^T)`` over all n^2 pairs."""
    if w_pos is None:
        w_pos = default_pos_weight(adjacency)
    return pairwise_terms(adjacency, z, w_pos, modularity=False).recon


def kl_term(mu: np.ndarray, log_sigma: np.ndarray) -> float:
    """Mean over nodes of ``KL(N(mu_i, diag sigma_i^2) || N(0, I))``."""
    mu, log_sigma = np.asarray(mu, dtype=np.float64), np.asarray(log_sigma, dtype=np.float64)
    if mu.shape != log_sigma.shape:
        raise ValueError("mu and log_sigma shapes differ")
    n = mu.shape[0]
    return float(0.5 * np.sum(np.exp(2.0 * log_sigma) + mu * mu - 1.0 - 2.0 * log_sigma) / n)


def soft_modularity(adjacency, degrees, m: float, z: np.ndarray, gamma: float) -> float:
    """Modularity with ``delta(i, j)`` replaced by ``exp(-gamma ||z_i - z_j||^2)``.

    ``degrees`` and ``m`` must describe ``adjacency``; they are accepted for
    interface symmetry with the modularity formula and checked.
    """
    a = sp.csr_matrix(adjacency.adjacency if isinstance(adjacency, Graph) else adjacency)
    if m <= 0:
        raise ValueError("soft modularity needs m > 0")
    deg = np.asarray(a.sum(axis=1)).ravel()
    if not np.allclose(deg, degrees) or not np.isclose(2.0 * m, deg.sum()):
        raise ValueError("degrees / m inconsistent with adjacency")
    return pairwise_terms(a, z, 1.0, gamma=gamma, modularity=True).soft_mod


def fastgae_sample(graph, n_sub: int, alpha: float = 1.0, seed=None) -> np.ndarray:
    """Draw ``n_sub`` distinct nodes with probability proportional to ``(d_i + 1)^alpha``.

    ``seed`` may be a Generator, which is advanced (a fresh draw per call).
    """
    a = graph.adjacency if isinstance(graph, Graph) else sp.csr_matrix(graph)
    n = a.shape[0]
    if not 1 <= n_sub <= n:
        raise ValueError(f"n_sub must lie in [1, {n}], got {n_sub}")
    if n_sub == n:
        return np.arange(n)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    w = (np.asarray(a.sum(axis=1)).ravel() + 1.0) ** alpha
    return np.sort(rng.choice(n, size=n_sub, replace=False, p=w / w.sum()))


def objective(emb: Embedding, adjacency, cfg: LossConfig, grad: bool = False, nodes=None, modularity: bool = True):
    """Compose the training objective for a GAE or VGAE embedding.

    With ``nodes`` (a FastGAE draw) the pairwise terms use the induced
    subgraph only, with its own pair count, degrees and ``w_pos``. The KL
    term enters the ELBO divided by ``n`` so that it shares the per-pair
    ``1/n^2`` scaling of the reconstruction term.

    Returns ``(LossValue, grads)`` where ``grads`` is ``None`` or a dict with
    the gradient of :attr:`LossValue.minimized` w.r.t. ``Z`` (``"z"``) and,
    for VGAE, the direct ``mu``/``log_sigma`` terms.
    """
    a = sp.csr_matrix(adjacency.adjacency if isinstance(adjacency, Graph) else adjacency)
    z = emb.Z
    if nodes is not None:
        a_sub = a[nodes][:, nodes]
        z_sub = z[nodes]
    else:
        a_sub, z_sub = a, z
    w_pos = cfg.w_pos if cfg.w_pos is not None else default_pos_weight(a_sub)
    # skip the regularizer gradient entirely when it carries no weight
    use_mod = modularity and (cfg.beta > 0 or not grad)
    terms = pairwise_terms(a_sub, z_sub, w_pos, gamma=cfg.gamma, modularity=use_mod, grad=grad)
    soft = terms.soft_mod if use_mod else float("nan")
    variational = emb.variational
    if variational:
        n = z.shape[0]
        kl = kl_term(emb.mu, emb.log_sigma) / n
        elbo = -terms.recon - kl
        total = elbo + cfg.beta * soft if use_mod else elbo
    else:
        kl = 0.0
        total = terms.recon - cfg.beta * soft if use_mod else terms.recon
    value = LossValue(total, terms.recon, kl, soft, variational)
    if not grad:
        return value, None
    gz_sub = terms.grad_recon - cfg.beta * terms.grad_soft_mod if use_mod else terms.grad_recon
    if nodes is not None:
        gz = np.zeros_like(z)
        gz[nodes] = gz_sub
    else:
        gz = gz_sub
    grads = {"z": gz}
    if variational:
        n = z.shape[0]
        scale = 1.0 / (n * n)
        grads["mu"] = emb.mu * scale
        grads["log_sigma"] = (np.exp(2.0 * emb.log_sigma) - 1.0) * scale
    return value, grads


def total_loss(emb: Embedding, adjacency, cfg: LossConfig, nodes=None) -> LossValue:
    """Value of the (modularity-regularized) GAE loss or VGAE objective."""
    value, _ = objective(emb, adjacency, cfg, grad=False, nodes=nodes)
    return value
