"""Fingerprints, similarity, and the built-in property calculators."""

import math
import random

import pytest

from molsteer.metrics import (
    BUILTIN_PROPERTIES,
    Fingerprint,
    LengthMismatchError,
    UnknownPropertyError,
    builtin_property,
    morgan_fingerprint,
    tanimoto,
)
from molsteer.molgraph import parse_single, permuted

from helpers import corpus_200


class TestFingerprint:
    def test_methane_radius_zero_single_bit(self):
        assert morgan_fingerprint(parse_single("C"), radius=0).popcount == 1

    def test_atom_order_invariance_simple(self):
        assert (
            morgan_fingerprint(parse_single("OCC")).bits
            == morgan_fingerprint(parse_single("CCO")).bits
        )

    def test_atom_order_invariance_corpus(self):
        rng = random.Random(41)
        for mol in corpus_200()[:50]:
            reference = morgan_fingerprint(mol).bits
            order = list(range(len(mol.atoms)))
            rng.shuffle(order)
            assert morgan_fingerprint(permuted(mol, order)).bits == reference

    def test_popcount_bounded_by_environments(self):
        for mol in corpus_200()[:50]:
            fp = morgan_fingerprint(mol, radius=2)
            assert fp.popcount <= mol.heavy_atom_count * 3

    def test_distinct_molecules_distinct_bits(self):
        seen = {}
        for smi in ("CCO", "c1ccccc1", "CC(=O)O", "CCN", "C1CCCCC1"):
            bits = morgan_fingerprint(parse_single(smi)).bits
            assert bits not in seen.values()
            seen[smi] = bits

    def test_n_bits_validation(self):
        with pytest.raises(ValueError):
            Fingerprint(bits=0, n_bits=100)
        with pytest.raises(ValueError):
            Fingerprint(bits=0, n_bits=3000)
        Fingerprint(bits=0, n_bits=256)
        Fingerprint(bits=0, n_bits=8192)

    def test_parameters_recorded(self):
        fp = morgan_fingerprint(parse_single("CC"), radius=3, n_bits=512)
        assert fp.radius == 3 and fp.n_bits == 512
        assert all(i < 512 for i in fp.on_bits())


class TestTanimoto:
    def test_identity(self):
        fp = morgan_fingerprint(parse_single("c1ccccc1O"))
        assert tanimoto(fp, fp) == 1.0

    def test_known_overlap(self):
        x = Fingerprint(bits=0b1110, n_bits=256)
        y = Fingerprint(bits=0b11100, n_bits=256)
        assert tanimoto(x, y) == 0.5

    def test_disjoint_and_empty(self):
        x = Fingerprint(bits=0b11, n_bits=256)
        y = Fingerprint(bits=0b1100, n_bits=256)
        assert tanimoto(x, y) == 0.0
        assert tanimoto(Fingerprint(0, 256), Fingerprint(0, 256)) == 1.0

    def test_symmetry_and_range(self):
        mols = corpus_200()[:30]
        fps = [morgan_fingerprint(m) for m in mols]
        rng = random.Random(17)
        for _ in range(200):
            a, b = rng.choice(fps), rng.choice(fps)
            s = tanimoto(a, b)
            assert 0.0 <= s <= 1.0
            assert s == tanimoto(b, a)

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatchError):
            tanimoto(Fingerprint(0, 256), Fingerprint(0, 512))


class TestBuiltinProperties:
    def test_logp_reference(self):
        assert builtin_property(parse_single("CCO"), "logp_estimate").value == 0.0
        assert builtin_property(parse_single("c1ccccc1"), "logp_estimate").value == 1.8

    def test_sa_proxy_reference(self):
        assert builtin_property(parse_single("C"), "sa_proxy").value == 0.9524
        assert builtin_property(parse_single("CC(C)(C)C"), "sa_proxy").value == 0.7407

    def test_ring_count(self):
        assert builtin_property(parse_single("c1ccccc1"), "ring_count").value == 1.0
        assert builtin_property(parse_single("CCO"), "ring_count").value == 0.0
        assert builtin_property(parse_single("c1ccc2ccccc2c1"), "ring_count").value == 2.0

    def test_donor_acceptor_counts(self):
        phenol = parse_single("Oc1ccccc1")
        assert builtin_property(phenol, "hbd_count").value == 1.0
        assert builtin_property(phenol, "hba_count").value == 1.0
        assert builtin_property(parse_single("c1ccncc1"), "hbd_count").value == 0.0
        assert builtin_property(parse_single("Nc1ccccc1"), "hbd_count").value == 1.0

    def test_counts(self):
        assert builtin_property(parse_single("FC(F)(F)Cl"), "halogen_count").value == 4.0
        assert builtin_property(parse_single("CCO"), "heavy_atom_count").value == 3.0

    def test_mol_weight_delegates(self):
        aspirin = parse_single("CC(=O)Oc1ccccc1C(=O)O")
        assert builtin_property(aspirin, "mol_weight").value == 180.159

    def test_unknown_property(self):
        with pytest.raises(UnknownPropertyError):
            builtin_property(parse_single("C"), "boiling_point")

    def test_total_over_corpus(self):
        for mol in corpus_200()[:40]:
            for pid in BUILTIN_PROPERTIES:
                pv = builtin_property(mol, pid)
                assert pv.status == "ok"
                assert math.isfinite(pv.value)

    def test_growth_monotonicity(self):
        base = parse_single("CCC")
        with_ring = parse_single("CCC1CC1")
        longer = parse_single("CCCC")
        rc = lambda m: builtin_property(m, "ring_count").value
        hc = lambda m: builtin_property(m, "heavy_atom_count").value
        assert rc(with_ring) > rc(base)
        assert hc(longer) > hc(base)
