"""Graph container, file ingestion, normalization, edge splitting and SBM generation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

WEIGHT_TOL = 1e-9


class GraphFormatError(ValueError):
    """Raised for malformed edge-list, label or feature files."""


class WeightRangeError(GraphFormatError):
    """Raised when an edge weight lies outside [0, 1] beyond tolerance."""


class SplitError(ValueError):
    """Raised when an edge split cannot be constructed."""


@dataclass(frozen=True, eq=False)
class Graph:
    """Immutable undirected graph with CSR adjacency.

    The adjacency is symmetric, has a zero diagonal and entries in [0, 1].
    ``features`` is an optional dense ``n x f`` matrix; ``None`` means the
    identity convention (featureless graph). ``labels`` holds optional
    ground-truth community ids.
    """

    adjacency: sp.csr_matrix
    features: Optional[np.ndarray] = None
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        a = sp.csr_matrix(self.adjacency, dtype=np.float64, copy=True)
        a.eliminate_zeros()
        a.sort_indices()
        if a.shape[0] != a.shape[1]:
            raise ValueError(f"adjacency must be square, got {a.shape}")
        if a.diagonal().any():
            raise ValueError("adjacency must have a zero diagonal")
        if a.nnz and (a != a.T).nnz:
            raise ValueError("adjacency must be symmetric")
        if a.nnz and (a.data.min() < 0 or a.data.max() > 1):
            raise ValueError("adjacency entries must lie in [0, 1]")
        a.data.setflags(write=False)
        object.__setattr__(self, "adjacency", a)
        if self.features is not None:
            x = np.asarray(self.features, dtype=np.float64)
            if x.ndim != 2 or x.shape[0] != a.shape[0]:
                raise ValueError("features must be an n x f matrix")
            x.setflags(write=False)
            object.__setattr__(self, "features", x)
        if self.labels is not None:
            lab = np.asarray(self.labels, dtype=np.int64)
            if lab.shape != (a.shape[0],):
                raise ValueError("labels must have one entry per node")
            lab.setflags(write=False)
            object.__setattr__(self, "labels", lab)

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    @property
    def m(self) -> int:
        """Number of undirected edges (each counted once)."""
        return self.adjacency.nnz // 2

    @property
    def total_weight(self) -> float:
        """Sum of edge weights, the ``m`` of the modularity formula."""
        return float(self.adjacency.sum()) / 2.0

    def degrees(self) -> np.ndarray:
        """Weighted degree vector ``d_i = sum_j A_ij``."""
        return np.asarray(self.adjacency.sum(axis=1)).ravel()

    def edges(self) -> np.ndarray:
        """Upper-triangular edge list as an ``(m, 2)`` int array with i < j."""
        upper = sp.triu(self.adjacency, k=1).tocoo()
        order = np.lexsort((upper.col, upper.row))
        return np.column_stack([upper.row[order], upper.col[order]]).astype(np.int64)

    def with_labels(self, labels) -> "Graph":
        return Graph(self.adjacency, self.features, labels)


@dataclass(frozen=True, eq=False)
class Operator:
    """Symmetric sparse message passing operator, e.g. the normalized ``A + I``.

    Deliberately not a :class:`Graph`: normalizing an operator again is a
    type error rather than a silent double normalization.
    """

    matrix: sp.csr_matrix

    def __post_init__(self):
        mat = sp.csr_matrix(self.matrix, dtype=np.float64)
        mat.sort_indices()
        mat.data.setflags(write=False)
        object.__setattr__(self, "matrix", mat)

    @property
    def shape(self):
        return self.matrix.shape

    def __matmul__(self, other):
        return self.matrix @ other

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()


@dataclass(frozen=True, eq=False)
class EdgeSplit:
    """Train graph plus validation/test positive and negative pairs (i < j)."""

    train_graph: Graph
    val_pos: np.ndarray
    val_neg: np.ndarray
    test_pos: np.ndarray
    test_neg: np.ndarray
    original: Optional[Graph] = field(default=None, repr=False)


def from_edges(n: int, edges, weights=None, labels=None, features=None) -> Graph:
    """Build a :class:`Graph` from an edge array; duplicates and self-loops are dropped."""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if weights is None:
        weights = np.ones(len(edges))
    weights = np.asarray(weights, dtype=np.float64)
    keep = edges[:, 0] != edges[:, 1]
    edges, weights = edges[keep], weights[keep]
    lo = np.minimum(edges[:, 0], edges[:, 1])
    hi = np.maximum(edges[:, 0], edges[:, 1])
    if len(lo) and (lo.min() < 0 or hi.max() >= n):
        raise ValueError("edge endpoint out of range")
    # first occurrence of each undirected pair wins
    key = lo * n + hi
    _, first = np.unique(key, return_index=True)
    lo, hi, weights = lo[first], hi[first], weights[first]
    rows = np.concatenate([lo, hi])
    cols = np.concatenate([hi, lo])
    data = np.concatenate([weights, weights])
    adj = sp.csr_matrix((data, (rows, cols)), shape=(n, n))
    return Graph(adj, features=features, labels=labels)


def load_edge_list(path, weighted: bool = False) -> Graph:
    """Read a whitespace/TAB separated edge list with 0-based node ids.

    Lines are ``src dst [weight]``. An optional header ``# n=<int>`` fixes the
    node count; other ``#`` lines are comments. Reversed and duplicate edges
    are merged, self-loops dropped.
    """
    n_header = None
    src, dst, wts = [], [], []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip().replace(" ", "")
                if body.startswith("n="):
                    try:
                        n_header = int(body[2:])
                    except ValueError:
                        raise GraphFormatError(f"{path}:{lineno}: bad header {line!r}") from None
                continue
            parts = line.split()
            if len(parts) not in (2, 3) or (len(parts) == 3 and not weighted):
                raise GraphFormatError(f"{path}:{lineno}: expected 'src dst{' [weight]' if weighted else ''}', got {line!r}")
            try:
                i, j = int(parts[0]), int(parts[1])
                w = float(parts[2]) if len(parts) == 3 else 1.0
            except ValueError:
                raise GraphFormatError(f"{path}:{lineno}: non-numeric field in {line!r}") from None
            if i < 0 or j < 0:
                raise GraphFormatError(f"{path}:{lineno}: negative node id")
            if weighted:
                if w < -WEIGHT_TOL or w > 1 + WEIGHT_TOL or math.isnan(w):
                    raise WeightRangeError(f"{path}:{lineno}: weight {w} outside [0, 1]")
                w = min(max(w, 0.0), 1.0)
            src.append(i)
            dst.append(j)
            wts.append(w)
    max_id = max(max(src, default=-1), max(dst, default=-1))
    n = max_id + 1 if n_header is None else n_header
    if max_id >= n:
        raise GraphFormatError(f"{path}: node id {max_id} exceeds header n={n}")
    edges = np.column_stack([src, dst]) if src else np.zeros((0, 2), dtype=np.int64)
    return from_edges(n, edges, weights=wts if weighted else None)


def load_labels(path, n: int) -> np.ndarray:
    """Read ``node label`` lines; labels are arbitrary strings mapped to dense ids.

    Ids are assigned in order of first appearance.
    """
    mapping: dict[str, int] = {}
    out = np.full(n, -1, dtype=np.int64)
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(None, 1)
            if len(parts) != 2:
                raise GraphFormatError(f"{path}:{lineno}: expected 'node label'")
            try:
                node = int(parts[0])
            except ValueError:
                raise GraphFormatError(f"{path}:{lineno}: bad node id {parts[0]!r}") from None
            if not 0 <= node < n:
                raise GraphFormatError(f"{path}:{lineno}: node {node} out of range for n={n}")
            if out[node] != -1:
                raise GraphFormatError(f"{path}:{lineno}: node {node} labeled twice")
            out[node] = mapping.setdefault(parts[1].strip(), len(mapping))
    missing = np.flatnonzero(out < 0)
    if len(missing):
        raise GraphFormatError(f"{path}: {len(missing)} node(s) unlabeled, first is {missing[0]}")
    return out


def load_features(path, n: int) -> np.ndarray:
    """Dense TSV feature matrix, one row per node."""
    x = np.loadtxt(path, dtype=np.float64, ndmin=2)
    if x.shape[0] != n:
        raise GraphFormatError(f"{path}: expected {n} feature rows, got {x.shape[0]}")
    return x


def write_edge_list(graph: Graph, path, weighted: bool = False) -> None:
    edges = graph.edges()
    with open(path, "w") as fh:
        fh.write(f"# n={graph.n}\n")
        if weighted:
            w = np.asarray(graph.adjacency[edges[:, 0], edges[:, 1]]).ravel()
            for (i, j), x in zip(edges, w):
                fh.write(f"{i}\t{j}\t{x!r}\n")
        else:
            for i, j in edges:
                fh.write(f"{i}\t{j}\n")


def write_labels(labels, path) -> None:
    with open(path, "w") as fh:
        for i, lab in enumerate(labels):
            fh.write(f"{i}\t{int(lab)}\n")


def write_pairs(pairs, path) -> None:
    with open(path, "w") as fh:
        for i, j in np.asarray(pairs).reshape(-1, 2):
            fh.write(f"{i}\t{j}\n")


def symmetric_normalize(adjacency) -> Operator:
    """Return ``(D + I)^-1/2 (A + I) (D + I)^-1/2`` as an :class:`Operator`."""
    if isinstance(adjacency, Operator):
        raise TypeError("expected an adjacency matrix, got an Operator (already normalized)")
    if isinstance(adjacency, Graph):
        adjacency = adjacency.adjacency
    a = sp.csr_matrix(adjacency, dtype=np.float64)
    n = a.shape[0]
    deg = np.asarray(a.sum(axis=1)).ravel()
    scale = 1.0 / np.sqrt(deg + 1.0)
    a_tilde = a + sp.identity(n, format="csr")
    d = sp.diags(scale)
    return Operator((d @ a_tilde @ d).tocsr())


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def split_edges(graph: Graph, val_frac: float = 0.05, test_frac: float = 0.10, seed: int = 0) -> EdgeSplit:
    """Mask edges uniformly at random for link prediction.

    ``round(val_frac * m)`` and ``round(test_frac * m)`` edges become the
    positive validation/test pairs; the same number of unconnected pairs are
    drawn by rejection sampling as negatives. Train nodes may become isolated.
    """
    if val_frac < 0 or test_frac < 0 or val_frac + test_frac >= 1:
        raise SplitError("need val_frac, test_frac >= 0 and val_frac + test_frac < 1")
    if graph.m < 20:
        raise SplitError(f"graph has {graph.m} edges; at least 20 are required")
    rng = np.random.default_rng(seed)
    edges = graph.edges()
    m, n = len(edges), graph.n
    n_val = _round_half_up(val_frac * m)
    n_test = _round_half_up(test_frac * m)
    n_neg = n_val + n_test
    if n * (n - 1) // 2 - m < n_neg:
        raise SplitError(f"only {n * (n - 1) // 2 - m} non-edges available, {n_neg} needed")

    perm = rng.permutation(m)
    val_pos = edges[np.sort(perm[:n_val])]
    test_pos = edges[np.sort(perm[n_val:n_val + n_test])]
    train_idx = np.sort(perm[n_val + n_test:])

    existing = set((edges[:, 0] * n + edges[:, 1]).tolist())
    negatives: list[tuple[int, int]] = []
    seen: set[int] = set()
    while len(negatives) < n_neg:
        batch = rng.integers(0, n, size=(max(2 * (n_neg - len(negatives)), 16), 2))
        for i, j in batch.tolist():
            if i == j:
                continue
            if i > j:
                i, j = j, i
            key = i * n + j
            if key in existing or key in seen:
                continue
            seen.add(key)
            negatives.append((i, j))
            if len(negatives) == n_neg:
                break
    neg = np.array(negatives, dtype=np.int64).reshape(-1, 2)

    train_edges = edges[train_idx]
    if len(train_edges):
        w = np.asarray(graph.adjacency[train_edges[:, 0], train_edges[:, 1]]).ravel()
    else:
        w = np.zeros(0)
    train = from_edges(n, train_edges, weights=w, labels=graph.labels, features=graph.features)
    return EdgeSplit(
        train_graph=train,
        val_pos=val_pos,
        val_neg=neg[:n_val],
        test_pos=test_pos,
        test_neg=neg[n_val:],
        original=graph,
    )


_TRIU_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _triu(size: int):
    if size not in _TRIU_CACHE:
        _TRIU_CACHE[size] = np.triu_indices(size, k=1)
    return _TRIU_CACHE[size]


def _sample_block(rng, population: int, prob: float) -> np.ndarray:
    if population == 0 or prob <= 0:
        return np.zeros(0, dtype=np.int64)
    if prob >= 1:
        return np.arange(population, dtype=np.int64)
    count = rng.binomial(population, prob)
    return np.sort(rng.choice(population, size=count, replace=False))


def generate_sbm(n_communities: int, community_size: int, p: float, q: float, seed: int = 0) -> Graph:
    """Planted-partition stochastic block model with equal community sizes.

    Within-community pairs are linked with probability ``p``, others with
    ``q``. Each block draws a binomial edge count and then that many distinct
    pairs, so the cost is linear in the number of edges for sparse blocks.
    """
    if not 0 <= q < p <= 1:
        raise ValueError("need 0 <= q < p <= 1")
    if n_communities < 1 or community_size < 1:
        raise ValueError("community count and size must be positive")
    n = n_communities * community_size
    if n > 2**31 - 1:
        raise OverflowError(f"{n_communities} x {community_size} nodes exceeds the supported size")
    rng = np.random.default_rng(seed)
    rows, cols = [], []
    iu, ju = _triu(community_size)
    for k in range(n_communities):
        idx = _sample_block(rng, len(iu), p)
        off = k * community_size
        rows.append(iu[idx] + off)
        cols.append(ju[idx] + off)
    for k in range(n_communities):
        for l in range(k + 1, n_communities):
            idx = _sample_block(rng, community_size * community_size, q)
            rows.append(idx // community_size + k * community_size)
            cols.append(idx % community_size + l * community_size)
    edges = np.column_stack([np.concatenate(rows), np.concatenate(cols)]) if rows else np.zeros((0, 2))
    labels = np.repeat(np.arange(n_communities), community_size)
    return from_edges(n, edges, labels=labels)
