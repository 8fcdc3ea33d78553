"""Modularity, Louvain clustering and the community-augmented message passing operator."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .graph import Graph, Operator, symmetric_normalize

MOVE_TOL = 1e-12
LEVEL_TOL = 1e-10


class EmptyGraphError(ValueError):
    """Modularity is undefined for graphs without edges."""


@dataclass(frozen=True, eq=False)
class Partition:
    """Assignment of every node to exactly one of ``K`` communities ``0..K-1``."""

    assign: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.assign)
        if a.ndim != 1:
            raise ValueError("assignment must be a vector")
        if len(a) == 0:
            a = a.astype(np.int64)
        else:
            if not np.issubdtype(a.dtype, np.integer) or a.min() < 0:
                raise ValueError("community ids must be non-negative integers")
            if len(np.unique(a)) != a.max() + 1:
                raise ValueError("community ids must occupy 0..K-1 without gaps")
            a = a.astype(np.int64)
        a.setflags(write=False)
        object.__setattr__(self, "assign", a)

    @classmethod
    def from_labels(cls, labels) -> "Partition":
        """Densely relabel arbitrary hashable labels, ids in order of first appearance."""
        labels = np.asarray(labels)
        _, first, inverse = np.unique(labels, return_index=True, return_inverse=True)
        rank = np.empty(len(first), dtype=np.int64)
        rank[np.argsort(first, kind="stable")] = np.arange(len(first))
        return cls(rank[inverse.ravel()])

    @property
    def n(self) -> int:
        return len(self.assign)

    @property
    def K(self) -> int:
        return int(self.assign.max()) + 1 if len(self.assign) else 0

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.assign, minlength=self.K)

    def members(self) -> list[np.ndarray]:
        order = np.argsort(self.assign, kind="stable")
        return np.split(order, np.cumsum(self.sizes)[:-1])

    def indicator(self) -> sp.csr_matrix:
        """The ``n x K`` 0/1 membership matrix ``M``."""
        n = self.n
        return sp.csr_matrix((np.ones(n), (np.arange(n), self.assign)), shape=(n, self.K))


@dataclass(frozen=True, eq=False)
class MembershipMatrix:
    """``A_c = M M^T - I``: each community becomes a complete block."""

    matrix: sp.csr_matrix
    partition: Partition


@dataclass(frozen=True, eq=False)
class SparsifiedMembership:
    """Within-community (near-)regular subgraph of ``A_c`` with target degree ``s``.

    ``near_regular`` lists communities where odd ``s`` and odd size made
    exact regularity impossible; one node there has degree ``s + 1``.
    """

    matrix: sp.csr_matrix
    s: int
    partition: Partition
    near_regular: tuple = field(default=())


def _as_partition(p) -> Partition:
    return p if isinstance(p, Partition) else Partition.from_labels(p)


def _adjacency(g) -> sp.csr_matrix:
    return g.adjacency if isinstance(g, Graph) else sp.csr_matrix(g)


def modularity(graph, partition) -> float:
    """Newman modularity of a partition on a (weighted) graph."""
    a = _adjacency(graph)
    p = _as_partition(partition)
    if p.n != a.shape[0]:
        raise ValueError(f"partition covers {p.n} nodes, graph has {a.shape[0]}")
    two_m = float(a.sum())
    if two_m <= 0:
        raise EmptyGraphError("modularity is undefined on a graph without edges")
    coo = a.tocoo()
    same = p.assign[coo.row] == p.assign[coo.col]
    inside = float(coo.data[same].sum())
    deg = np.asarray(a.sum(axis=1)).ravel()
    tot = np.bincount(p.assign, weights=deg, minlength=p.K)
    return inside / two_m - float(np.dot(tot, tot)) / (two_m * two_m)


def _level_modularity(indptr, indices, data, comm, k, two_m) -> float:
    rows = np.repeat(np.arange(len(indptr) - 1), np.diff(indptr))
    same = comm[rows] == comm[indices]
    inside = float(data[same].sum())
    tot = np.bincount(comm, weights=k)
    return inside / two_m - float(np.dot(tot, tot)) / (two_m * two_m)


def _move_nodes(w: sp.csr_matrix, two_m: float, rng, history: list) -> np.ndarray:
    """Local-move phase on one level graph; returns the community of each node."""
    n = w.shape[0]
    indptr_np, indices_np, data_np = w.indptr, w.indices, w.data
    indptr, indices, data = indptr_np.tolist(), indices_np.tolist(), data_np.tolist()
    k_np = np.asarray(w.sum(axis=1)).ravel()
    k = k_np.tolist()
    comm = list(range(n))
    tot = list(k)
    m = two_m / 2.0
    while True:
        moved = False
        for i in rng.permutation(n).tolist():
            ci = comm[i]
            ki = k[i]
            links: dict[int, float] = {}
            for t in range(indptr[i], indptr[i + 1]):
                j = indices[t]
                if j != i:
                    cj = comm[j]
                    links[cj] = links.get(cj, 0.0) + data[t]
            tot[ci] -= ki
            ratio = ki / two_m
            stay = links.get(ci, 0.0) - tot[ci] * ratio
            best_c, best = ci, None
            for c in sorted(links):
                if c == ci:
                    continue
                gain = links[c] - tot[c] * ratio
                if best is None or gain > best:
                    best_c, best = c, gain
            if best is not None and (best - stay) / m > MOVE_TOL:
                comm[i] = best_c
                moved = True
            else:
                best_c = ci
            tot[best_c] += ki
        history.append(_level_modularity(indptr_np, indices_np, data_np, np.asarray(comm), k_np, two_m))
        if not moved:
            return np.asarray(comm, dtype=np.int64)


def louvain(graph, seed: int = 0, return_history: bool = False):
    """Two-phase greedy modularity maximization.

    Nodes are visited in a seed-shuffled order each sweep; a node joins the
    neighbouring community with the largest gain (lowest id on exact ties) if
    that gain exceeds ``1e-12``. Levels are aggregated until a level gains at
    most ``1e-10``.

    Returns the :class:`Partition`, and with ``return_history`` also the
    modularity recorded after every local-move sweep.
    """
    a = _adjacency(graph)
    two_m = float(a.sum())
    if two_m <= 0:
        raise EmptyGraphError("Louvain needs a graph with at least one edge")
    rng = np.random.default_rng(seed)
    n = a.shape[0]
    node_comm = np.arange(n)
    level = sp.csr_matrix(a, dtype=np.float64)
    history: list[float] = []
    q_prev = _level_modularity(level.indptr, level.indices, level.data, np.arange(n), np.asarray(level.sum(axis=1)).ravel(), two_m)
    while True:
        comm = _move_nodes(level, two_m, rng, history)
        _, comm = np.unique(comm, return_inverse=True)
        n_comm = int(comm.max()) + 1
        node_comm = comm[node_comm]
        gain = history[-1] - q_prev
        q_prev = history[-1]
        if n_comm == level.shape[0] or gain <= LEVEL_TOL:
            break
        s = sp.csr_matrix((np.ones(level.shape[0]), (np.arange(level.shape[0]), comm)), shape=(level.shape[0], n_comm))
        level = (s.T @ level @ s).tocsr()
        level.sort_indices()
    part = Partition.from_labels(node_comm)
    return (part, history) if return_history else part


def membership_matrix(partition) -> MembershipMatrix:
    p = _as_partition(partition)
    m = p.indicator()
    ac = (m @ m.T - sp.identity(p.n, format="csr")).tocsr()
    ac.eliminate_zeros()
    ac.sort_indices()
    return MembershipMatrix(ac, p)


def _block_edges(size: int, s: int) -> tuple[list[tuple[int, int]], bool]:
    """Edges of a circulant (near-)s-regular graph on ring positions ``0..size-1``."""
    if s >= size - 1:
        return [(i, j) for i in range(size) for j in range(i + 1, size)], False
    edges = set()
    for off in range(1, s // 2 + 1):
        for i in range(size):
            j = (i + off) % size
            edges.add((min(i, j), max(i, j)))
    near = False
    if s % 2 == 1:
        if size % 2 == 0:
            half = size // 2
            edges.update((i, i + half) for i in range(half))
        else:
            # odd s, odd size: chords on the first size-1 positions, the last
            # position attaches to one chord endpoint which ends at degree s+1
            h = (size - 1) // 2
            edges.update((i, i + h) for i in range(h))
            edges.add((h - 1, size - 1))
            near = True
    return sorted(edges), near


def sparsify(partition, s: int, seed: int = 0) -> SparsifiedMembership:
    """Random circulant ``s``-regular sparsification of the membership matrix.

    Members of each community are shuffled onto a ring and linked to their
    ``s // 2`` nearest ring neighbours on each side, plus a diametric chord
    when ``s`` is odd. Communities with at most ``s + 1`` members stay complete.
    """
    if s < 1:
        raise ValueError("s must be at least 1")
    p = _as_partition(partition)
    rng = np.random.default_rng(seed)
    rows, cols, near = [], [], []
    for k, members in enumerate(p.members()):
        size = len(members)
        if size < 2:
            continue
        ring = rng.permutation(members) if s < size - 1 else members
        edges, is_near = _block_edges(size, s)
        if is_near:
            near.append(k)
        e = np.asarray(edges, dtype=np.int64)
        rows.append(ring[e[:, 0]])
        cols.append(ring[e[:, 1]])
    if rows:
        r, c = np.concatenate(rows), np.concatenate(cols)
    else:
        r = c = np.zeros(0, dtype=np.int64)
    mat = sp.csr_matrix((np.ones(2 * len(r)), (np.concatenate([r, c]), np.concatenate([c, r]))), shape=(p.n, p.n))
    mat.sort_indices()
    return SparsifiedMembership(mat, s, p, tuple(near))


def build_operator(adjacency, membership, lam: float) -> Operator:
    """Normalized ``A + lam * A_c^(s)``; ``lam = 0`` is exactly the normalized ``A``."""
    if lam < 0:
        raise ValueError(f"lambda must be non-negative, got {lam}")
    a = _adjacency(adjacency)
    if lam == 0:
        return symmetric_normalize(a)
    ac = membership.matrix if hasattr(membership, "matrix") else sp.csr_matrix(membership)
    if ac.shape != a.shape:
        raise ValueError(f"shape mismatch: adjacency {a.shape} vs membership {ac.shape}")
    return symmetric_normalize(a + lam * ac)
