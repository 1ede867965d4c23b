"""Weighted graph Laplacians, a cyclic Jacobi eigensolver and spectral
coordinates for nodes and node pairs."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .molgraph import MolecularGraph

DEFAULT_TOL = 1e-10
MAX_SWEEPS = 60
# Entries closer than this in magnitude count as tied for the sign rule.
SIGN_TIE = 1e-8


class EigenConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class WeightedLaplacian:
    matrix: np.ndarray

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class CoordinateSet:
    phi_n: np.ndarray
    eigenvalues: np.ndarray

    @property
    def d(self) -> int:
        return self.phi_n.shape[1]

    @property
    def n(self) -> int:
        return self.phi_n.shape[0]


def build_laplacian(g: MolecularGraph) -> WeightedLaplacian:
    w = g.bond_matrix()
    lap = -w
    # Diagonal set from row sums of W so each row sums to exactly zero.
    np.fill_diagonal(lap, w.sum(axis=1))
    return WeightedLaplacian(lap)


def _round_robin(n: int) -> list[list[tuple[int, int]]]:
    """Tournament schedule: n-1 rounds of disjoint pairs covering all pairs once."""
    m = n + (n % 2)
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        pairs = []
        for k in range(m // 2):
            p, q = players[k], players[m - 1 - k]
            if p < n and q < n:
                pairs.append((min(p, q), max(p, q)))
        rounds.append(pairs)
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def _jacobi(a: np.ndarray, tol: float) -> tuple[np.ndarray, np.ndarray]:
    n = a.shape[0]
    a = np.array(a, dtype=np.float64)
    v = np.eye(n)
    if n == 1:
        return a.diagonal().copy(), v
    scale = max(1.0, np.linalg.norm(a))
    target = 1e-3 * tol * scale
    rounds = _round_robin(n)
    for _ in range(MAX_SWEEPS):
        off = np.sqrt(np.sum(np.triu(a, 1) ** 2))
        if off <= target:
            return a.diagonal().copy(), v
        for pairs in rounds:
            p = np.array([pq[0] for pq in pairs])
            q = np.array([pq[1] for pq in pairs])
            apq = a[p, q]
            active = np.abs(apq) > 1e-300
            if not active.any():
                continue
            p, q, apq = p[active], q[active], apq[active]
            theta = (a[q, q] - a[p, p]) / (2.0 * apq)
            t = np.sign(theta) / (np.abs(theta) + np.sqrt(theta * theta + 1.0))
            t[theta == 0] = 1.0
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            rot = np.eye(n)
            rot[p, p] = c
            rot[q, q] = c
            rot[p, q] = s
            rot[q, p] = -s
            a = rot.T @ a @ rot
            a = 0.5 * (a + a.T)
            v = v @ rot
    off = np.sqrt(np.sum(np.triu(a, 1) ** 2))
    if off <= target:
        return a.diagonal().copy(), v
    raise EigenConvergenceError(f"Jacobi did not converge in {MAX_SWEEPS} sweeps (off-diagonal norm {off:.3e})")


def _fix_sign(vec: np.ndarray) -> np.ndarray:
    mag = np.abs(vec)
    k = int(np.flatnonzero(mag >= mag.max() - SIGN_TIE)[0])
    return -vec if vec[k] < 0 else vec


def eigendecompose(lap: WeightedLaplacian | np.ndarray, tol: float = DEFAULT_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues ascending and orthonormal eigenvectors (columns), sign-fixed.

    Inside a cluster of eigenvalues closer than ``tol`` the vectors are ordered
    lexicographically (descending) so the output is fully deterministic.
    """
    mat = lap.matrix if isinstance(lap, WeightedLaplacian) else np.asarray(lap, dtype=np.float64)
    if tol <= 0:
        raise ValueError("tol must be positive")
    if not np.array_equal(mat, mat.T):
        raise ValueError("matrix is not symmetric")
    vals, vecs = _jacobi(mat, tol)
    order = np.argsort(vals, kind="stable")
    vals, vecs = vals[order], vecs[:, order]
    vecs = np.column_stack([_fix_sign(vecs[:, k]) for k in range(vecs.shape[1])])

    scale = max(1.0, np.linalg.norm(mat))
    start = 0
    n = len(vals)
    while start < n:
        stop = start + 1
        while stop < n and vals[stop] - vals[stop - 1] < tol * scale:
            stop += 1
        if stop - start > 1:
            block = vecs[:, start:stop]
            keys = [tuple(np.round(-block[:, k], 9)) for k in range(block.shape[1])]
            perm = sorted(range(block.shape[1]), key=lambda k: keys[k])
            vecs[:, start:stop] = block[:, perm]
            vals[start:stop] = vals[start:stop][perm]
        start = stop
    return vals, vecs


def node_coordinates(g: MolecularGraph, d: int, tol: float = DEFAULT_TOL) -> CoordinateSet:
    if d < 1:
        raise ValueError("d must be >= 1")
    vals, vecs = eigendecompose(build_laplacian(g), tol)
    n = g.n_atoms
    phi = np.zeros((n, d))
    m = min(n, d)
    phi[:, :m] = vecs[:, :m]
    return CoordinateSet(phi, vals)


def edge_coordinates(cs: CoordinateSet, i: int, j: int) -> np.ndarray:
    n = cs.n
    if not (0 <= i < n and 0 <= j < n):
        raise IndexError(f"node pair ({i}, {j}) out of range for N={n}")
    if i == j:
        raise ValueError("edge coordinates need two distinct nodes")
    return cs.phi_n[i] * cs.phi_n[j]


def pair_coordinates(cs: CoordinateSet) -> tuple[np.ndarray, list[tuple[int, int]]]:
    """Edge coordinates for every unordered pair i < j, row-major."""
    iu, ju = np.triu_indices(cs.n, k=1)
    return cs.phi_n[iu] * cs.phi_n[ju], list(zip(iu.tolist(), ju.tolist()))
