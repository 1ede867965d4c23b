"""Functional denoising diffusion over molecular graphs with twin conditional INRs."""
from .checkpoint import Checkpoint
from .config import RunConfig, load_config
from .emtrain import sample, train
from .metrics import compute_metrics, graph_stats_distance
from .molgraph import (
    QM9_ALPHABET,
    ZINC_ALPHABET,
    AtomAlphabet,
    MolecularGraph,
    canonical_hash,
    generate_synthetic_dataset,
    parse_molecule,
    read_molecule_file,
    serialize_molecule,
    write_molecule_file,
)
from .signal import decode_sample, encode_molecule
from .spectral import node_coordinates

__all__ = [
    "AtomAlphabet", "Checkpoint", "MolecularGraph", "QM9_ALPHABET", "RunConfig", "ZINC_ALPHABET",
    "canonical_hash", "compute_metrics", "decode_sample", "encode_molecule", "generate_synthetic_dataset",
    "graph_stats_distance", "load_config", "node_coordinates", "parse_molecule", "read_molecule_file",
    "sample", "serialize_molecule", "train", "write_molecule_file",
]
