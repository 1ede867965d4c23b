import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from molinr.molgraph import QM9_ALPHABET, ZINC_ALPHABET, MolecularGraph, generate_synthetic_dataset, parse_molecule
from molinr.signal import EdgeKind, NodeKind, decode_sample, encode_molecule, signal_layout, topology_kinds


def test_layout_qm9():
    layout = signal_layout(QM9_ALPHABET)
    assert layout.f == 8
    assert list(layout.atom_range) == [0, 1, 2, 3]
    assert list(layout.bond_range) == [4, 5, 6]
    assert layout.null_index == 7


def test_layout_zinc():
    assert signal_layout(ZINC_ALPHABET).f == 13


def test_kinds_order():
    assert topology_kinds(3) == (NodeKind(0), NodeKind(1), NodeKind(2),
                                 EdgeKind(0, 1), EdgeKind(0, 2), EdgeKind(1, 2))


def test_encode_formaldehyde_like():
    g = parse_molecule("C,O,C;0-1:2,0-2:1")
    mf = encode_molecule(g, 3)
    assert mf.n_evaluations == 6
    assert mf.coords.shape == (6, 3)
    np.testing.assert_array_equal(mf.targets, [
        [1, 0, 0, 0, 0, 0, 0, 0],
        [0, 0, 1, 0, 0, 0, 0, 0],
        [1, 0, 0, 0, 0, 0, 0, 0],
        [0, 0, 0, 0, 0, 1, 0, 0],
        [0, 0, 0, 0, 1, 0, 0, 0],
        [0, 0, 0, 0, 0, 0, 0, 1],
    ])
    # Pair rows are Hadamard products of node rows.
    np.testing.assert_array_equal(mf.coords[3], mf.coords[0] * mf.coords[1])
    assert mf.evaluations[4].kind == EdgeKind(0, 2)


def test_single_atom():
    mf = encode_molecule(parse_molecule("N;"), 4)
    assert mf.n_evaluations == 1
    np.testing.assert_array_equal(mf.coords, [[1, 0, 0, 0]])


class TestDecode:
    kinds = topology_kinds(2)

    def test_argmax(self):
        y = np.array([[0.1, 0.9, 0, 0, 0, 0, 0, 0], [0.5, 0, 0, 0.2, 0, 0, 0, 0],
                      [0, 0, 0, 0, 0.1, 0.3, 0.2, 0.25]])
        g = decode_sample(self.kinds, y, QM9_ALPHABET)
        assert g.atom_types == (1, 0)
        assert g.bonds == ((0, 1, 2),)

    def test_mask_ignores_other_slots(self):
        # A large bond value in a node row must not leak into the atom choice.
        y = np.zeros((3, 8))
        y[0, 5] = 9.0
        y[0, 2] = 0.1
        y[2, 0] = 9.0
        y[2, 7] = 0.1
        g = decode_sample(self.kinds, y, QM9_ALPHABET)
        assert g.atom_types[0] == 2
        assert g.bonds == ()

    def test_ties_go_low(self):
        g = decode_sample(self.kinds, np.zeros((3, 8)), QM9_ALPHABET)
        assert g.atom_types == (0, 0)
        assert g.bonds == ((0, 1, 1),)

    def test_shape_errors(self):
        with pytest.raises(ValueError):
            decode_sample(self.kinds, np.zeros((3, 7)), QM9_ALPHABET)
        with pytest.raises(ValueError):
            decode_sample(self.kinds, np.zeros((2, 8)), QM9_ALPHABET)

    def test_non_finite(self):
        y = np.zeros((3, 8))
        y[1, 1] = np.nan
        with pytest.raises(ValueError):
            decode_sample(self.kinds, y, QM9_ALPHABET)

    def test_may_emit_disconnected(self):
        y = np.zeros((3, 8))
        y[2, 7] = 1.0
        g = decode_sample(self.kinds, y, QM9_ALPHABET)
        assert isinstance(g, MolecularGraph) and not g.is_connected()


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), d=st.integers(1, 12))
def test_round_trip(seed, d):
    for g in generate_synthetic_dataset(3, 16, ZINC_ALPHABET, seed=seed):
        mf = encode_molecule(g, d)
        assert decode_sample(mf.kinds, mf.targets, ZINC_ALPHABET) == g.canonical()
