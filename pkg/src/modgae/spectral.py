"""Dense Jacobi eigensolver and numerical checks of the operator spectra.

The checks cover: the normalized membership matrix has eigenvalue 1 with
multiplicity K and 0 otherwise; on regular components with aligned
communities the augmented operator's spectrum is an affine function of the
joint eigenvalues of its two parts; and the sparsified membership keeps a
unit eigenvalue of multiplicity at least K with the community indicators as
eigenvectors.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .communities import Partition, _block_edges, membership_matrix, sparsify
from .graph import Graph, from_edges, symmetric_normalize

CONV_RTOL = 1e-12
MAX_SWEEPS = 100
PROP_TOL = 1e-8
SPECTRUM_TOL = 1e-7
# generic mixing weight separating the joint eigenspaces of two commuting operators
JOINT_MIX = 0.5 * np.sqrt(2.0) - 0.1234


class ContractError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class EigenSystem:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    sweeps: int = 0

    def reconstruction_error(self, m) -> float:
        v, lam = self.eigenvectors, self.eigenvalues
        return float(np.max(np.abs(np.asarray(m) - (v * lam) @ v.T))) if len(lam) else 0.0

    def orthogonality_error(self) -> float:
        v = self.eigenvectors
        return float(np.max(np.abs(v.T @ v - np.eye(v.shape[1])))) if v.size else 0.0


def eigendecompose(m) -> EigenSystem:
    """Cyclic Jacobi rotations until the off-diagonal norm is below ``1e-12 * ||M||_F``."""
    a = np.array(m.toarray() if sp.issparse(m) else m, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ContractError(f"expected a square matrix, got shape {a.shape}")
    if not np.allclose(a, a.T, rtol=0.0, atol=1e-12):
        raise ContractError("matrix is not symmetric")
    n = a.shape[0]
    if n > 2000:
        raise ContractError("eigendecompose is limited to n <= 2000")
    a = 0.5 * (a + a.T)
    v = np.eye(n)
    target = CONV_RTOL * np.linalg.norm(a)
    sweeps = 0
    iu = np.triu_indices(n, 1)
    while True:
        off = np.sqrt(2.0 * np.sum(a[iu] ** 2))
        if off <= target:
            break
        if sweeps >= MAX_SWEEPS:
            raise ConvergenceError(f"Jacobi did not converge in {MAX_SWEEPS} sweeps (off-norm {off:.3e})")
        sweeps += 1
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = np.copysign(1.0, theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                col_p, col_q = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p, row_q = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                a[p, q] = a[q, p] = 0.0
                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    lam = np.diag(a).copy()
    order = np.argsort(-lam, kind="stable")
    return EigenSystem(lam[order], v[:, order], sweeps)


@dataclass
class SpectralReport:
    name: str
    passed: bool
    worst: float
    residuals: dict = field(default_factory=dict)
    info: dict = field(default_factory=dict)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}\t{self.name}\tworst={self.worst:.3e}"


def _indicator_residual(op: np.ndarray, partition: Partition) -> float:
    worst = 0.0
    for members in partition.members():
        v = np.zeros(op.shape[0])
        v[members] = 1.0
        worst = max(worst, float(np.max(np.abs(op @ v - v))))
    return worst


def check_prop1(partition, tol: float = PROP_TOL) -> SpectralReport:
    """Normalized membership matrix: K unit eigenvalues, n - K zeros, indicators fixed."""
    p = partition if isinstance(partition, Partition) else Partition.from_labels(partition)
    if p.K < 1:
        raise ValueError("partition must have at least one community")
    op = symmetric_normalize(membership_matrix(p).matrix).toarray()
    eig = eigendecompose(op)
    lam = eig.eigenvalues
    ones, zeros = lam[:p.K], lam[p.K:]
    res = {
        "unit_eigenvalues": float(np.max(np.abs(ones - 1.0))),
        "zero_eigenvalues": float(np.max(np.abs(zeros))) if len(zeros) else 0.0,
        "indicators": _indicator_residual(op, p),
        "reconstruction": eig.reconstruction_error(op),
    }
    worst = max(res.values())
    return SpectralReport(f"prop1 n={p.n} K={p.K}", worst < tol, worst, res)


def regular_components(b: int, n_prime: int, K: int) -> Graph:
    """``K`` disjoint ``b``-regular circulant graphs on ``n_prime`` nodes each.

    Even ``b`` gives a ring lattice, ``b = n_prime - 1`` a complete graph, odd
    ``b`` needs even ``n_prime`` (diametric chords).
    """
    if not 1 <= b < n_prime:
        raise ValueError(f"need 1 <= b < n' (got b={b}, n'={n_prime})")
    if b % 2 == 1 and n_prime % 2 == 1:
        raise ValueError(f"no {b}-regular graph on {n_prime} nodes (odd degree, odd order)")
    if K < 1:
        raise ValueError("need at least one component")
    block, _ = _block_edges(n_prime, b)
    block = np.asarray(block, dtype=np.int64)
    edges = np.concatenate([block + k * n_prime for k in range(K)])
    return from_edges(K * n_prime, edges, labels=np.repeat(np.arange(K), n_prime))


def ring_lattice(n: int, b: int = 2) -> Graph:
    return regular_components(b, n, 1)


def complete_graph(n: int) -> Graph:
    return regular_components(n - 1, n, 1)


def prop2_coefficients(b: int, n_prime: int, lam: float):
    """Affine maps ``(g1, g2)`` with eigenvalue ``g1(theta) + g2(eta)`` of the augmented operator."""
    c = b + lam * (n_prime - 1) + 1.0
    return (lambda th: (b + 1.0) / c * (th - 1.0)), (lambda eta: lam * n_prime / c * (eta - 1.0) + 1.0)


def check_prop2(b: int, n_prime: int, K: int, lam: float, tol: float = SPECTRUM_TOL) -> SpectralReport:
    """Shared eigenvectors and affine eigenvalue map for ``A + lam * A_c`` on regular components.

    Joint eigenvectors come from a generic combination of the two commuting
    operators; the predicted multiset ``{g1(theta_i) + g2(eta_i)}`` is matched
    against the sorted spectrum of the augmented operator. The coefficient of
    ``g2`` is ``lam * n' / c``; ``info["literal_residual"]`` reports the error
    of the variant with ``(lam (n' - 1) + 1) / c``, which agrees only at
    ``lam = 1``.
    """
    if b >= n_prime:
        raise ValueError(f"infeasible: b={b} >= n'={n_prime}")
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    g = regular_components(b, n_prime, K)
    ac = membership_matrix(g.labels).matrix
    op_a = symmetric_normalize(g).toarray()
    op_c = symmetric_normalize(ac).toarray()
    op_aug = symmetric_normalize(g.adjacency + lam * ac).toarray()
    commutator = float(np.max(np.abs(op_a @ op_c - op_c @ op_a)))
    joint = eigendecompose(op_a + JOINT_MIX * op_c).eigenvectors
    theta = np.einsum("ij,ij->j", joint, op_a @ joint)
    eta = np.einsum("ij,ij->j", joint, op_c @ joint)
    shared = max(float(np.max(np.abs(op_a @ joint - joint * theta))), float(np.max(np.abs(op_c @ joint - joint * eta))))
    g1, g2 = prop2_coefficients(b, n_prime, lam)
    predicted = np.sort(g1(theta) + g2(eta))
    actual = np.sort(eigendecompose(op_aug).eigenvalues)
    spectrum = float(np.max(np.abs(predicted - actual)))
    c = b + lam * (n_prime - 1) + 1.0
    literal = np.sort(g1(theta) + (lam * (n_prime - 1) + 1.0) / c * (eta - 1.0) + 1.0)
    res = {"commutator": commutator, "shared_eigenvectors": shared, "spectrum": spectrum}
    worst = max(res.values())
    passed = commutator < PROP_TOL and shared < tol and spectrum < tol
    return SpectralReport(f"prop2 b={b} n'={n_prime} K={K} lambda={lam:g}", passed, worst, res,
                          {"literal_residual": float(np.max(np.abs(literal - actual)))})


def check_prop3(partition, s: int, seed: int = 0, tol: float = PROP_TOL) -> SpectralReport:
    """Sparsified membership: top eigenvalue 1 with multiplicity >= K, indicators fixed."""
    p = partition if isinstance(partition, Partition) else Partition.from_labels(partition)
    spm = sparsify(p, s, seed=seed)
    if spm.near_regular:
        raise ValueError(f"s={s} is infeasible for communities {list(spm.near_regular)} (odd s, odd size)")
    op = symmetric_normalize(spm.matrix).toarray()
    eig = eigendecompose(op)
    lam = eig.eigenvalues
    mult = int(np.sum(np.abs(lam - 1.0) < tol))
    gap = float(lam[0] - lam[p.K]) if len(lam) > p.K else float("nan")
    res = {
        "top_eigenvalue": float(abs(lam[0] - 1.0)),
        "multiplicity_shortfall": float(max(0, p.K - mult)),
        "indicators": _indicator_residual(op, p),
        "reconstruction": eig.reconstruction_error(op),
    }
    worst = max(res.values())
    return SpectralReport(f"prop3 n={p.n} K={p.K} s={s}", worst < tol, worst, res,
                          {"multiplicity": mult, "eigen_gap": gap, "second_block_eigenvalue": float(lam[min(p.K, len(lam) - 1)])})


def spectrum_union_residual(graph) -> float:
    """Max deviation between the operator spectrum and the merged per-component spectra."""
    from scipy.sparse.csgraph import connected_components

    a = graph.adjacency if isinstance(graph, Graph) else sp.csr_matrix(graph)
    n_comp, comp = connected_components(a, directed=False)
    whole = eigendecompose(symmetric_normalize(a).toarray()).eigenvalues
    parts = []
    for c in range(n_comp):
        idx = np.flatnonzero(comp == c)
        parts.append(eigendecompose(symmetric_normalize(a[idx][:, idx]).toarray()).eigenvalues)
    merged = np.sort(np.concatenate(parts))[::-1]
    return float(np.max(np.abs(whole - merged)))


def run_suite(suite: str = "all", seed: int = 0) -> list[SpectralReport]:
    """Fixed battery of checks used by the command-line ``spectral-check``."""
    rng = np.random.default_rng(seed)
    reports = []
    if suite in ("all", "prop1"):
        for sizes in ([3, 4, 5], [1] * 6, [7]):
            reports.append(check_prop1(np.repeat(np.arange(len(sizes)), sizes)))
        for _ in range(3):
            n = int(rng.integers(5, 40))
            reports.append(check_prop1(Partition.from_labels(rng.integers(0, int(rng.integers(1, 6)), n))))
    if suite in ("all", "prop2"):
        for lam in (0.0, 0.3, 0.5, 1.0):
            reports.append(check_prop2(2, 6, 2, lam))
            reports.append(check_prop2(4, 5, 3, lam))
    if suite in ("all", "prop3"):
        for sizes, s in (([8, 8], 2), ([6, 6, 6], 3), ([5, 7, 9], 4), ([4, 4], 5)):
            reports.append(check_prop3(np.repeat(np.arange(len(sizes)), sizes), s, seed=seed))
    if not reports:
        raise ValueError(f"unknown suite {suite!r}; expected all, prop1, prop2 or prop3")
    return reports
