"""Molecular graphs: data model, text format, valency checks, WL hashing and a
synthetic dataset generator.

A molecule line looks like ``C,C,O;0-1:1,1-2:2``: comma separated element
symbols, a semicolon, then comma separated ``i-j:order`` bonds.
"""
from __future__ import annotations

import hashlib
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

# Kekulized valences, hydrogens implicit. The only valence table in the package.
VALENCES = {
    "C": 4, "N": 3, "O": 2, "F": 1,
    "S": 6, "P": 5, "Cl": 1, "Br": 1, "I": 1,
}

MAX_BOND_ORDER = 3


class MoleculeFormatError(ValueError):
    """Raised for malformed molecule text or graphs breaking an invariant."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = []
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


@dataclass(frozen=True)
class AtomAlphabet:
    symbols: tuple[str, ...]
    valences: tuple[int, ...]

    def __post_init__(self):
        if len(self.symbols) < 1:
            raise ValueError("alphabet needs at least one symbol")
        if len(self.symbols) != len(self.valences):
            raise ValueError("symbols and valences differ in length")
        if len(set(self.symbols)) != len(self.symbols):
            raise ValueError(f"duplicate symbols in alphabet {self.symbols}")
        if any(v < 1 for v in self.valences):
            raise ValueError("valences must be >= 1")

    def __len__(self) -> int:
        return len(self.symbols)

    def index(self, symbol: str) -> int:
        return self.symbols.index(symbol)

    @classmethod
    def from_symbols(cls, symbols: Iterable[str]) -> "AtomAlphabet":
        symbols = tuple(symbols)
        return cls(symbols, tuple(VALENCES[s] for s in symbols))

    @classmethod
    def parse(cls, text: str) -> "AtomAlphabet":
        """Parse ``C:4,N:3,O:2,F:1``; a bare symbol takes its tabulated valence."""
        symbols, valences = [], []
        for item in text.split(","):
            item = item.strip()
            if not item:
                raise ValueError(f"empty alphabet entry in {text!r}")
            if ":" in item:
                sym, val = item.split(":", 1)
                symbols.append(sym.strip())
                valences.append(int(val))
            else:
                symbols.append(item)
                valences.append(VALENCES[item])
        return cls(tuple(symbols), tuple(valences))

    def format(self) -> str:
        return ",".join(f"{s}:{v}" for s, v in zip(self.symbols, self.valences))


QM9_ALPHABET = AtomAlphabet.from_symbols(["C", "N", "O", "F"])
ZINC_ALPHABET = AtomAlphabet.from_symbols(["C", "N", "O", "F", "P", "S", "Cl", "Br", "I"])


@dataclass(frozen=True)
class MolecularGraph:
    """Atoms as alphabet indices plus bonds ``(i, j, order)``.

    Construction does not enforce connectivity or valency so that raw decodes
    can be represented; ``validate`` checks the structural invariants.
    """

    atom_types: tuple[int, ...]
    bonds: tuple[tuple[int, int, int], ...]
    alphabet: AtomAlphabet = field(default=QM9_ALPHABET, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "atom_types", tuple(int(a) for a in self.atom_types))
        object.__setattr__(self, "bonds", tuple((int(i), int(j), int(o)) for i, j, o in self.bonds))

    @property
    def n_atoms(self) -> int:
        return len(self.atom_types)

    def canonical_bonds(self) -> tuple[tuple[int, int, int], ...]:
        return tuple(sorted((min(i, j), max(i, j), o) for i, j, o in self.bonds))

    def canonical(self) -> "MolecularGraph":
        return MolecularGraph(self.atom_types, self.canonical_bonds(), self.alphabet)

    def bond_matrix(self) -> np.ndarray:
        n = self.n_atoms
        w = np.zeros((n, n))
        for i, j, o in self.bonds:
            w[i, j] = w[j, i] = o
        return w

    def neighbors(self) -> list[list[tuple[int, int]]]:
        adj: list[list[tuple[int, int]]] = [[] for _ in range(self.n_atoms)]
        for i, j, o in self.bonds:
            adj[i].append((j, o))
            adj[j].append((i, o))
        return adj

    def bond_order_sums(self) -> list[int]:
        sums = [0] * self.n_atoms
        for i, j, o in self.bonds:
            sums[i] += o
            sums[j] += o
        return sums

    def is_connected(self) -> bool:
        n = self.n_atoms
        if n == 0:
            return False
        adj = self.neighbors()
        seen = {0}
        queue = deque([0])
        while queue:
            u = queue.popleft()
            for v, _ in adj[u]:
                if v not in seen:
                    seen.add(v)
                    queue.append(v)
        return len(seen) == n

    def validate(self) -> None:
        """Raise MoleculeFormatError unless every structural invariant holds."""
        n = self.n_atoms
        if n < 1:
            raise MoleculeFormatError("molecule has no atoms")
        for a in self.atom_types:
            if not 0 <= a < len(self.alphabet):
                raise MoleculeFormatError(f"atom type {a} outside alphabet of size {len(self.alphabet)}")
        seen = set()
        for i, j, o in self.bonds:
            if not (0 <= i < n and 0 <= j < n):
                raise MoleculeFormatError(f"bond {i}-{j} references a missing atom (N={n})")
            if i == j:
                raise MoleculeFormatError(f"self-loop on atom {i}")
            if o not in (1, 2, 3):
                raise MoleculeFormatError(f"bond order {o} not in 1..3")
            key = (min(i, j), max(i, j))
            if key in seen:
                raise MoleculeFormatError(f"duplicate bond {key[0]}-{key[1]}")
            seen.add(key)
        if not self.is_connected():
            raise MoleculeFormatError("molecule is disconnected")


@dataclass(frozen=True)
class ValidityReport:
    valid: bool
    violations: tuple[tuple[int, int, int], ...]


def parse_molecule(line: str, alphabet: AtomAlphabet = QM9_ALPHABET, lineno: int | None = None) -> MolecularGraph:
    """Parse one molecule line. Errors carry the line and column when known."""
    text = line.rstrip("\r\n")
    if ";" not in text:
        raise MoleculeFormatError("missing ';' between atoms and bonds", lineno, len(text) + 1)
    atom_part, bond_part = text.split(";", 1)
    if not atom_part:
        raise MoleculeFormatError("no atoms", lineno, 1)

    atom_types = []
    col = 1
    for sym in atom_part.split(","):
        if sym not in alphabet.symbols:
            raise MoleculeFormatError(f"unknown atom symbol {sym!r}", lineno, col)
        atom_types.append(alphabet.index(sym))
        col += len(sym) + 1

    n = len(atom_types)
    bonds = []
    seen = set()
    col = len(atom_part) + 2
    if bond_part:
        for tok in bond_part.split(","):
            try:
                pair, order = tok.split(":")
                i, j = pair.split("-")
                i, j, order = int(i), int(j), int(order)
            except ValueError:
                raise MoleculeFormatError(f"malformed bond {tok!r}", lineno, col) from None
            if not (0 <= i < n and 0 <= j < n):
                raise MoleculeFormatError(f"bond {tok!r} references a missing atom (N={n})", lineno, col)
            if i == j:
                raise MoleculeFormatError(f"self-loop in bond {tok!r}", lineno, col)
            if order not in (1, 2, 3):
                raise MoleculeFormatError(f"bond order {order} not in 1..3", lineno, col)
            key = (min(i, j), max(i, j))
            if key in seen:
                raise MoleculeFormatError(f"duplicate bond {key[0]}-{key[1]}", lineno, col)
            seen.add(key)
            bonds.append((i, j, order))
            col += len(tok) + 1

    g = MolecularGraph(tuple(atom_types), tuple(bonds), alphabet)
    if not g.is_connected():
        raise MoleculeFormatError("molecule is disconnected", lineno, 1)
    return g


def serialize_molecule(g: MolecularGraph) -> str:
    atoms = ",".join(g.alphabet.symbols[a] for a in g.atom_types)
    bonds = ",".join(f"{i}-{j}:{o}" for i, j, o in g.canonical_bonds())
    return f"{atoms};{bonds}"


def iter_molecule_lines(lines: Iterable[str]) -> Iterator[tuple[int, str]]:
    for lineno, line in enumerate(lines, start=1):
        stripped = line.strip()
        if stripped and not stripped.startswith("#"):
            yield lineno, stripped


def read_molecule_file(path, alphabet: AtomAlphabet | None = None) -> tuple[list[MolecularGraph], AtomAlphabet]:
    """Read a molecule file. A ``#alphabet`` header overrides the default alphabet."""
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    header = None
    for line in lines:
        if line.startswith("#alphabet"):
            header = AtomAlphabet.parse(line[len("#alphabet"):].strip())
            break
    if header is not None:
        alphabet = header
    elif alphabet is None:
        alphabet = QM9_ALPHABET
    mols = [parse_molecule(text, alphabet, lineno) for lineno, text in iter_molecule_lines(lines)]
    return mols, alphabet


def write_molecule_file(path, molecules: Sequence[MolecularGraph], alphabet: AtomAlphabet) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"#alphabet {alphabet.format()}\n")
        for g in molecules:
            fh.write(serialize_molecule(g) + "\n")


def check_valency(g: MolecularGraph, alphabet: AtomAlphabet | None = None) -> ValidityReport:
    alphabet = alphabet or g.alphabet
    violations = []
    for node, total in enumerate(g.bond_order_sums()):
        allowed = alphabet.valences[g.atom_types[node]]
        if total > allowed:
            violations.append((node, total, allowed))
    return ValidityReport(not violations, tuple(violations))


def is_valid_molecule(g: MolecularGraph) -> bool:
    """Valency respected and a single connected fragment."""
    return g.n_atoms >= 1 and g.is_connected() and check_valency(g).valid


def _digest(label: str, size: int = 8) -> str:
    return hashlib.blake2b(label.encode("utf-8"), digest_size=size).hexdigest()


def canonical_hash(g: MolecularGraph) -> int:
    """64-bit Weisfeiler-Lehman digest over atom symbols and bond orders.

    Runs N refinement rounds and hashes the sorted multiset of final labels
    together with the multisets of every intermediate round. WL cannot separate
    some regular graphs, which only merges distinct molecules, never splits
    isomorphic ones.
    """
    adj = g.neighbors()
    labels = [g.alphabet.symbols[a] for a in g.atom_types]
    history = [",".join(sorted(labels))]
    for _ in range(g.n_atoms):
        labels = [
            _digest(labels[u] + "|" + ";".join(sorted(f"{o}:{labels[v]}" for v, o in adj[u])))
            for u in range(g.n_atoms)
        ]
        history.append(",".join(sorted(labels)))
    full = hashlib.blake2b("/".join(history).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(full, "big")


def permute_molecule(g: MolecularGraph, perm: Sequence[int]) -> MolecularGraph:
    """Relabel so that old node ``i`` becomes new node ``perm[i]``."""
    atoms = [0] * g.n_atoms
    for old, new in enumerate(perm):
        atoms[new] = g.atom_types[old]
    bonds = tuple((perm[i], perm[j], o) for i, j, o in g.bonds)
    return MolecularGraph(tuple(atoms), bonds, g.alphabet).canonical()


def _random_molecule(rng: np.random.Generator, max_atoms: int, alphabet: AtomAlphabet,
                     type_probs: np.ndarray) -> MolecularGraph:
    n_target = int(rng.integers(1, max_atoms + 1))
    val = alphabet.valences
    multi = [a for a in range(len(alphabet)) if val[a] >= 2]

    # The root must be able to take a neighbour whenever more atoms follow.
    if n_target > 1 and multi:
        p = type_probs[multi] / type_probs[multi].sum()
        atoms = [int(rng.choice(multi, p=p))]
    else:
        atoms = [int(rng.choice(len(alphabet), p=type_probs))]
    free = [val[atoms[0]]]
    bonds: dict[tuple[int, int], int] = {}

    for new in range(1, n_target):
        open_nodes = [u for u in range(new) if free[u] > 0]
        if not open_nodes:
            break
        parent = int(rng.choice(open_nodes))
        # Keep at least one open slot somewhere unless this is the last atom.
        need_open = new < n_target - 1 and sum(free) - 1 == 0
        choices = multi if need_open and multi else list(range(len(alphabet)))
        p = type_probs[choices] / type_probs[choices].sum()
        a = int(rng.choice(choices, p=p))
        atoms.append(a)
        free.append(val[a] - 1)
        free[parent] -= 1
        bonds[(parent, new)] = 1

    n = len(atoms)
    # Ring closures.
    for _ in range(int(rng.integers(0, 3))):
        cand = [(i, j) for i in range(n) for j in range(i + 1, n)
                if (i, j) not in bonds and free[i] > 0 and free[j] > 0]
        if not cand or rng.random() < 0.5:
            continue
        i, j = cand[int(rng.integers(len(cand)))]
        bonds[(i, j)] = 1
        free[i] -= 1
        free[j] -= 1
    # Bond order upgrades.
    for _ in range(int(rng.integers(0, 3))):
        cand = [k for k, o in bonds.items() if o < MAX_BOND_ORDER and free[k[0]] > 0 and free[k[1]] > 0]
        if not cand or rng.random() < 0.4:
            continue
        i, j = cand[int(rng.integers(len(cand)))]
        bonds[(i, j)] += 1
        free[i] -= 1
        free[j] -= 1

    return MolecularGraph(tuple(atoms), tuple((i, j, o) for (i, j), o in sorted(bonds.items())), alphabet)


def _substitute_atoms(rng: np.random.Generator, g: MolecularGraph, type_probs: np.ndarray) -> MolecularGraph:
    """Redraw every atom type among elements whose valence covers its bonds."""
    val = np.asarray(g.alphabet.valences)
    atoms = []
    for total in g.bond_order_sums():
        ok = np.flatnonzero(val >= total)
        p = type_probs[ok] / type_probs[ok].sum()
        atoms.append(int(rng.choice(ok, p=p)))
    return MolecularGraph(tuple(atoms), g.bonds, g.alphabet)


def generate_synthetic_dataset(count: int, max_atoms: int, alphabet: AtomAlphabet = QM9_ALPHABET,
                               seed: int = 0, variants: int = 1) -> list[MolecularGraph]:
    """Random connected, valency-valid molecules: a random tree, then a few ring
    closures and bond-order upgrades where free valence allows.

    With ``variants > 1`` each skeleton is emitted up to ``variants`` times with
    atom types redrawn among valence-compatible elements (duplicates skipped),
    so several molecules share one weighted skeleton as in real datasets.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if not 1 <= max_atoms <= 38:
        raise ValueError("max_atoms must lie in [1, 38]")
    if variants < 1:
        raise ValueError("variants must be >= 1")
    rng = np.random.default_rng(seed)
    # Carbon-heavy type distribution, decaying for the rarer elements.
    weights = np.array([4.0 if s == "C" else 1.0 / (1 + i) for i, s in enumerate(alphabet.symbols)])
    type_probs = weights / weights.sum()
    out: list[MolecularGraph] = []
    while len(out) < count:
        base = _random_molecule(rng, max_atoms, alphabet, type_probs)
        family = [base]
        for _ in range(4 * (variants - 1)):
            if len(family) == variants:
                break
            cand = _substitute_atoms(rng, base, type_probs)
            if cand.atom_types not in {m.atom_types for m in family}:
                family.append(cand)
        out.extend(family[:count - len(out)])
    return out
