"""k-means clustering of embeddings and the community / link prediction metrics."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import gammaln
from scipy.stats import rankdata

from .communities import Partition, modularity
from .graph import EdgeSplit, Graph
from .objectives import decode_pairs


class MetricError(ValueError):
    pass


class DegenerateClustersError(ValueError):
    """More clusters requested than there are distinct embedding rows."""


@dataclass(frozen=True)
class ScoredPairs:
    scores: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.scores, dtype=np.float64).ravel()
        y = np.asarray(self.labels).ravel()
        if s.shape != y.shape:
            raise MetricError("scores and labels differ in length")
        if not np.isin(y, (0, 1)).all():
            raise MetricError("labels must be 0/1")
        object.__setattr__(self, "scores", s)
        object.__setattr__(self, "labels", y.astype(np.int64))

    @classmethod
    def from_pairs(cls, z: np.ndarray, pos, neg) -> "ScoredPairs":
        pos, neg = np.asarray(pos).reshape(-1, 2), np.asarray(neg).reshape(-1, 2)
        scores = np.concatenate([decode_pairs(z, pos), decode_pairs(z, neg)])
        return cls(scores, np.r_[np.ones(len(pos), np.int64), np.zeros(len(neg), np.int64)])


@dataclass(frozen=True)
class ClusteringResult:
    partition: Partition
    inertia: float
    iterations: int
    centers: np.ndarray = field(repr=False)
    inertia_trace: tuple = field(default=(), repr=False)


def _sq_dist(z, centers, z_sq):
    d = z_sq[:, None] - 2.0 * (z @ centers.T) + np.einsum("ij,ij->i", centers, centers)[None, :]
    return np.maximum(d, 0.0)


def _plusplus(z, k, rng, z_sq):
    """Greedy k-means++: each new centre is the best of ``2 + ln k`` D^2-weighted candidates."""
    n = len(z)
    trials = 2 + int(np.log(k))
    centers = np.empty((k, z.shape[1]))
    centers[0] = z[rng.integers(n)]
    closest = _sq_dist(z, centers[:1], z_sq)[:, 0]
    for c in range(1, k):
        total = closest.sum()
        if total <= 0:
            cand = rng.integers(n, size=trials)
        else:
            cand = np.searchsorted(np.cumsum(closest), rng.random(trials) * total, side="right")
            cand = np.minimum(cand, n - 1)
        d = np.minimum(closest[:, None], _sq_dist(z, z[cand], z_sq))
        best = int(np.argmin(d.sum(axis=0)))
        centers[c] = z[cand[best]]
        closest = d[:, best]
    return centers


def _fill_empty(z, labels, centers, k, z_sq):
    counts = np.bincount(labels, minlength=k)
    for c in np.flatnonzero(counts == 0):
        cost = _sq_dist(z, centers, z_sq)[np.arange(len(z)), labels]
        cost[counts[labels] <= 1] = -1.0
        far = int(np.argmax(cost))
        counts[labels[far]] -= 1
        labels[far] = c
        counts[c] = 1
    return labels


def _means(z, labels, k):
    sums = np.zeros((k, z.shape[1]))
    np.add.at(sums, labels, z)
    return sums / np.bincount(labels, minlength=k)[:, None]


def _inertia(z, labels, centers):
    diff = z - centers[labels]
    return float(np.einsum("ij,ij->", diff, diff))


def _lloyd(z, k, rng, max_iter, tol_abs, z_sq):
    centers = _plusplus(z, k, rng, z_sq)
    labels = np.argmin(_sq_dist(z, centers, z_sq), axis=1)
    trace = []
    it = 0
    for it in range(1, max_iter + 1):
        labels = _fill_empty(z, labels, centers, k, z_sq)
        new = _means(z, labels, k)
        trace.append(_inertia(z, labels, new))
        shift = float(np.sum((new - centers) ** 2))
        centers = new
        labels = np.argmin(_sq_dist(z, centers, z_sq), axis=1)
        if shift <= tol_abs:
            break
    labels = _fill_empty(z, labels, centers, k, z_sq)
    centers = _means(z, labels, k)
    inertia = _inertia(z, labels, centers)
    trace.append(inertia)
    return labels, centers, inertia, it, trace


def kmeans(z, k: int, seed=0, max_iter: int = 300, tol: float = 1e-7, restarts: int = 10) -> ClusteringResult:
    """Lloyd's algorithm from k-means++ seeds, best of ``restarts`` by inertia.

    Convergence is declared when the squared centroid shift drops below
    ``tol`` times the mean per-dimension variance of ``z``. A cluster that
    empties is re-seeded with the point farthest from its own centroid.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2:
        raise ValueError("embedding must be a 2-d array")
    n = len(z)
    if not 1 <= k <= n:
        raise DegenerateClustersError(f"k={k} must lie in [1, n={n}]")
    if len(np.unique(z, axis=0)) < k:
        raise DegenerateClustersError(f"only {len(np.unique(z, axis=0))} distinct rows for k={k} clusters")
    rng = np.random.default_rng(seed)
    z_sq = np.einsum("ij,ij->i", z, z)
    tol_abs = tol * float(np.mean(np.var(z, axis=0)))
    best = None
    for _ in range(restarts):
        labels, centers, inertia, it, trace = _lloyd(z, k, rng, max_iter, tol_abs, z_sq)
        if best is None or inertia < best[2]:
            best = (labels, centers, inertia, it, trace)
    labels, centers, inertia, it, trace = best
    return ClusteringResult(Partition(labels.astype(np.int64)), inertia, it, centers, tuple(trace))


def contingency(p1, p2) -> np.ndarray:
    a = _labels(p1)
    b = _labels(p2)
    if len(a) != len(b):
        raise MetricError(f"partitions cover {len(a)} and {len(b)} nodes")
    _, ia = np.unique(a, return_inverse=True)
    _, ib = np.unique(b, return_inverse=True)
    table = np.zeros((ia.max() + 1, ib.max() + 1), dtype=np.int64)
    np.add.at(table, (ia.ravel(), ib.ravel()), 1)
    return table


def _labels(p) -> np.ndarray:
    return p.assign if isinstance(p, Partition) else np.asarray(p).ravel()


def _same_partition(table) -> bool:
    # identical up to relabeling: every row and column has one nonzero cell
    nz = table > 0
    return bool((nz.sum(axis=0) == 1).all() and (nz.sum(axis=1) == 1).all())


def _entropy(counts, n) -> float:
    p = counts[counts > 0] / n
    return float(-np.sum(p * np.log(p)))


def _expected_mi(a, b, n) -> float:
    """Expected mutual information under the hypergeometric (permutation) model."""
    emi = 0.0
    lg_n = gammaln(n + 1)
    for ai in a:
        for bj in b:
            lo = max(1, ai + bj - n)
            hi = min(ai, bj)
            if lo > hi:
                continue
            nij = np.arange(lo, hi + 1, dtype=np.float64)
            log_p = (gammaln(ai + 1) + gammaln(bj + 1) + gammaln(n - ai + 1) + gammaln(n - bj + 1)
                     - lg_n - gammaln(nij + 1) - gammaln(ai - nij + 1) - gammaln(bj - nij + 1)
                     - gammaln(n - ai - bj + nij + 1))
            emi += float(np.sum(nij / n * np.log(n * nij / (ai * bj)) * np.exp(log_p)))
    return emi


def ami(p1, p2) -> float:
    """Adjusted mutual information, arithmetic-mean normalization.

    Identical partitions score 1. Otherwise, if either side has a single
    cluster, the mutual information and its expectation are both zero and the
    score is 0.
    """
    table = contingency(p1, p2)
    if _same_partition(table):
        return 1.0
    if table.shape[0] == 1 or table.shape[1] == 1:
        return 0.0
    n = int(table.sum())
    a = table.sum(axis=1)
    b = table.sum(axis=0)
    nz = table > 0
    nij = table[nz].astype(np.float64)
    outer = np.outer(a, b)[nz].astype(np.float64)
    mi = float(np.sum(nij / n * np.log(n * nij / outer)))
    emi = _expected_mi(a, b, n)
    h = 0.5 * (_entropy(a, n) + _entropy(b, n))
    denom = h - emi
    if abs(denom) < np.finfo(np.float64).eps:
        denom = np.copysign(np.finfo(np.float64).eps, denom) if denom else np.finfo(np.float64).eps
    return float((mi - emi) / denom)


def _comb2(x):
    x = np.asarray(x, dtype=np.float64)
    return x * (x - 1.0) / 2.0


def ari(p1, p2) -> float:
    """Hubert-Arabie adjusted Rand index."""
    table = contingency(p1, p2)
    if _same_partition(table):
        return 1.0
    n = int(table.sum())
    index = float(_comb2(table).sum())
    sa = float(_comb2(table.sum(axis=1)).sum())
    sb = float(_comb2(table.sum(axis=0)).sum())
    expected = sa * sb / float(_comb2(n))
    denom = 0.5 * (sa + sb) - expected
    if denom == 0:
        return 0.0
    return (index - expected) / denom


def _as_scored(sp_or_scores, labels=None) -> ScoredPairs:
    if isinstance(sp_or_scores, ScoredPairs):
        return sp_or_scores
    return ScoredPairs(sp_or_scores, labels)


def auc(sp, labels=None) -> float:
    """ROC AUC in Mann-Whitney form, ties counted one half."""
    sp = _as_scored(sp, labels)
    n_pos = int(sp.labels.sum())
    n_neg = len(sp.labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError("AUC needs at least one positive and one negative")
    ranks = rankdata(sp.scores)
    return float((ranks[sp.labels == 1].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def ap(sp, labels=None) -> float:
    """Non-interpolated average precision over the descending-score ranking."""
    sp = _as_scored(sp, labels)
    n_pos = int(sp.labels.sum())
    if n_pos == 0:
        raise MetricError("AP needs at least one positive")
    order = np.argsort(-sp.scores, kind="stable")
    rel = sp.labels[order]
    hits = np.cumsum(rel)
    precision = hits / np.arange(1, len(rel) + 1)
    return float(np.sum(precision[rel == 1]) / n_pos)


@dataclass(frozen=True)
class EvaluationReport:
    ami: float
    ari: float
    q: float
    auc: Optional[float] = None
    ap: Optional[float] = None
    k: int = 0

    def as_dict(self) -> dict:
        out = {"AMI": self.ami, "ARI": self.ari, "Q": self.q}
        if self.auc is not None:
            out["AUC"] = self.auc
            out["AP"] = self.ap
        return out

    def to_text(self) -> str:
        return "".join(f"{key} = {val:.17g}\n" for key, val in self.as_dict().items())


def evaluate(model, data, ground_truth=None, k: Optional[int] = None, seed=0) -> EvaluationReport:
    """Task 1 (``data`` a Graph) or Task 2 (``data`` an EdgeSplit) evaluation.

    ``model`` is a trained model or a raw embedding matrix; VGAE models are
    evaluated on their means. Q is the modularity of the k-means partition on
    the graph the model was trained on.
    """
    z = model if isinstance(model, np.ndarray) else model.embedding.point
    split = data if isinstance(data, EdgeSplit) else None
    graph: Graph = split.train_graph if split is not None else data
    if ground_truth is None:
        ground_truth = graph.labels
    if ground_truth is None:
        raise MetricError("ground-truth labels are required")
    truth = Partition.from_labels(ground_truth)
    if truth.n != len(z):
        raise MetricError(f"labels cover {truth.n} nodes, embedding has {len(z)}")
    k = truth.K if k is None else k
    clusters = kmeans(z, k, seed=seed).partition
    report = dict(ami=ami(truth, clusters), ari=ari(truth, clusters), q=modularity(graph, clusters), k=k)
    if split is not None:
        scored = ScoredPairs.from_pairs(z, split.test_pos, split.test_neg)
        report.update(auc=auc(scored), ap=ap(scored))
    return EvaluationReport(**report)
