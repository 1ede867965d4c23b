"""Generation metrics and a histogram-based distribution distance."""
from __future__ import annotations

from collections import Counter
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

from .molgraph import MolecularGraph, canonical_hash, is_valid_molecule


@dataclass(frozen=True)
class GraphStatsDistance:
    atom_tv: float
    bond_tv: float
    degree_tv: float
    nodes_tv: float

    @property
    def mean(self) -> float:
        return (self.atom_tv + self.bond_tv + self.degree_tv + self.nodes_tv) / 4.0

    def to_dict(self) -> dict:
        return {**asdict(self), "mean": self.mean}


@dataclass(frozen=True)
class GenerationMetrics:
    validity: float
    uniqueness: float
    novelty: float
    n_generated: int
    n_valid: int

    @property
    def vun(self) -> float:
        return self.validity * self.uniqueness * self.novelty

    def to_dict(self) -> dict:
        return {"validity": self.validity, "uniqueness": self.uniqueness, "novelty": self.novelty,
                "vun": self.vun, "n_generated": self.n_generated, "n_valid": self.n_valid}


def training_hashes(mols: Iterable[MolecularGraph]) -> set:
    return {canonical_hash(g) for g in mols}


def compute_metrics(generated: Sequence[MolecularGraph | None], train_hashes: set) -> GenerationMetrics:
    """Validity over everything, uniqueness and novelty over the valid subset.

    ``None`` entries stand for decodes that could not be turned into a graph at all.
    """
    total = len(generated)
    valid = [g for g in generated if g is not None and is_valid_molecule(g)]
    if not valid:
        return GenerationMetrics(0.0, 0.0, 0.0, total, 0)
    hashes = {canonical_hash(g) for g in valid}
    novel = hashes - set(train_hashes)
    return GenerationMetrics(
        validity=len(valid) / total,
        uniqueness=len(hashes) / len(valid),
        novelty=len(novel) / len(hashes),
        n_generated=total,
        n_valid=len(valid),
    )


def _tv(a: Counter, b: Counter) -> float:
    na, nb = sum(a.values()), sum(b.values())
    if na == 0 and nb == 0:
        return 0.0
    if na == 0 or nb == 0:
        return 1.0
    keys = set(a) | set(b)
    return 0.5 * sum(abs(a[x] / na - b[x] / nb) for x in keys)


def _histograms(mols: Sequence[MolecularGraph]) -> tuple[Counter, Counter, Counter, Counter]:
    atoms, bonds, degrees, nodes = Counter(), Counter(), Counter(), Counter()
    for g in mols:
        # Keyed by symbol so molecules over different alphabets compare sensibly.
        atoms.update(g.alphabet.symbols[a] for a in g.atom_types)
        bonds.update(order for _, _, order in g.bonds)
        degrees.update(len(nb) for nb in g.neighbors())
        nodes[g.n_atoms] += 1
    return atoms, bonds, degrees, nodes


def graph_stats_distance(a: Sequence[MolecularGraph], b: Sequence[MolecularGraph]) -> GraphStatsDistance:
    if not a or not b:
        raise ValueError("graph_stats_distance needs two non-empty molecule lists")
    ha, hb = _histograms(a), _histograms(b)
    return GraphStatsDistance(*(_tv(x, y) for x, y in zip(ha, hb)))
