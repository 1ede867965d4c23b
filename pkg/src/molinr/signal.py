"""Molecules as functions: coordinates in, atom/bond/null signal vectors out."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .molgraph import AtomAlphabet, MolecularGraph
from .spectral import DEFAULT_TOL, CoordinateSet, node_coordinates, pair_coordinates

N_BOND_SLOTS = 3


@dataclass(frozen=True)
class SignalLayout:
    f: int
    atom_range: range
    bond_range: range
    null_index: int


def signal_layout(alphabet: AtomAlphabet) -> SignalLayout:
    a = len(alphabet)
    return SignalLayout(a + N_BOND_SLOTS + 1, range(0, a), range(a, a + N_BOND_SLOTS), a + N_BOND_SLOTS)


@dataclass(frozen=True)
class NodeKind:
    i: int


@dataclass(frozen=True)
class EdgeKind:
    i: int
    j: int


Kind = Union[NodeKind, EdgeKind]


@dataclass(frozen=True)
class FunctionEvaluation:
    coordinate: np.ndarray
    kind: Kind
    target: np.ndarray


@dataclass(frozen=True)
class MoleculeFunction:
    """All N node and N(N-1)/2 pair evaluations of one molecule.

    ``coords`` and ``targets`` stack the evaluations row-wise, nodes first then
    pairs in row-major (i < j) order; ``kinds`` labels each row.
    """

    graph: MolecularGraph
    cs: CoordinateSet
    coords: np.ndarray
    targets: np.ndarray
    kinds: tuple[Kind, ...]

    @property
    def n_evaluations(self) -> int:
        return len(self.kinds)

    @property
    def evaluations(self) -> list[FunctionEvaluation]:
        return [FunctionEvaluation(c, k, y) for c, k, y in zip(self.coords, self.kinds, self.targets)]


def topology_kinds(n: int) -> tuple[Kind, ...]:
    iu, ju = np.triu_indices(n, k=1)
    return tuple(NodeKind(i) for i in range(n)) + tuple(EdgeKind(int(i), int(j)) for i, j in zip(iu, ju))


def topology_coordinates(cs: CoordinateSet) -> np.ndarray:
    """Stacked node rows followed by pair rows, matching ``topology_kinds``."""
    pairs, _ = pair_coordinates(cs)
    return np.vstack([cs.phi_n, pairs]) if len(pairs) else cs.phi_n.copy()


def encode_molecule(g: MolecularGraph, d: int, tol: float = DEFAULT_TOL,
                    cs: CoordinateSet | None = None) -> MoleculeFunction:
    layout = signal_layout(g.alphabet)
    if cs is None:
        cs = node_coordinates(g, d, tol)
    n = g.n_atoms
    kinds = topology_kinds(n)
    targets = np.zeros((len(kinds), layout.f))
    targets[np.arange(n), np.asarray(g.atom_types, dtype=int)] = 1.0

    orders = {(min(i, j), max(i, j)): o for i, j, o in g.bonds}
    for row, kind in enumerate(kinds[n:], start=n):
        o = orders.get((kind.i, kind.j))
        slot = layout.null_index if o is None else layout.bond_range[o - 1]
        targets[row, slot] = 1.0
    return MoleculeFunction(g, cs, topology_coordinates(cs), targets, kinds)


def decode_sample(kinds: Sequence[Kind], signals, alphabet: AtomAlphabet) -> MolecularGraph:
    """Masked argmax decoding; ties go to the lower slot. Never repairs valency."""
    layout = signal_layout(alphabet)
    signals = np.asarray(signals, dtype=np.float64)
    if signals.ndim != 2 or signals.shape[1] != layout.f:
        raise ValueError(f"signals must have shape (n, {layout.f}), got {signals.shape}")
    if len(kinds) != len(signals):
        raise ValueError("one signal per evaluation is required")
    if not np.all(np.isfinite(signals)):
        raise ValueError("signals contain non-finite values")
    atoms: dict[int, int] = {}
    bonds = []
    a0, b0 = layout.atom_range.start, layout.bond_range.start
    for kind, y in zip(kinds, signals):
        if isinstance(kind, NodeKind):
            atoms[kind.i] = int(np.argmax(y[layout.atom_range.start:layout.atom_range.stop])) + a0
        else:
            b = int(np.argmax(y[b0:layout.null_index + 1]))
            if b < N_BOND_SLOTS:
                bonds.append((kind.i, kind.j, b + 1))
    n = len(atoms)
    if sorted(atoms) != list(range(n)):
        raise ValueError("node kinds must cover 0..N-1 exactly once")
    return MolecularGraph(tuple(atoms[i] for i in range(n)), tuple(bonds), alphabet)
