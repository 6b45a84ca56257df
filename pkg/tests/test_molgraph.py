"""Graph layer: parsing, valence, canonical form, ring perception, layout."""

import math
import random

import pytest

from molsteer.molgraph import (
    Atom,
    Bond,
    BondOrder,
    EmptyInputError,
    Molecule,
    SmilesError,
    SmilesSyntaxError,
    UnbalancedParenthesisError,
    UnclosedRingBondError,
    UnknownElementError,
    ValenceViolationError,
    allowed_valences,
    layout_2d,
    molecular_weight,
    parse_single,
    parse_smiles,
    permuted,
    ring_bonds,
    validate_valence,
)

from helpers import brute_force_isomorphic, corpus_200, ring_bonds_by_removal


class TestParsing:
    def test_methane(self):
        mol = parse_single("C")
        assert len(mol.atoms) == 1
        assert mol.atoms[0].element == "C"
        assert mol.atoms[0].implicit_hydrogens == 4

    def test_ethanol_hydrogens(self):
        mol = parse_single("CCO")
        assert [a.implicit_hydrogens for a in mol.atoms] == [3, 2, 1]

    def test_bond_orders(self):
        mol = parse_single("C=C")
        assert mol.bonds[0].order is BondOrder.DOUBLE
        assert [a.implicit_hydrogens for a in mol.atoms] == [2, 2]
        mol = parse_single("C#N")
        assert mol.bonds[0].order is BondOrder.TRIPLE
        assert mol.atoms[0].implicit_hydrogens == 1
        assert mol.atoms[1].implicit_hydrogens == 0

    def test_branches_and_rings(self):
        mol = parse_single("CC(C)(C)C")
        assert mol.degree(1) == 4
        ring = parse_single("C1CCCCC1")
        assert len(ring.bonds) == 6
        assert len(ring_bonds(ring)) == 6

    def test_two_digit_ring_closure(self):
        a = parse_single("C%10CCCCC%10")
        b = parse_single("C1CCCCC1")
        assert a.canonical_smiles == b.canonical_smiles

    def test_dot_fragments_ordered(self):
        frags = parse_smiles("CCO.[NH4+].C")
        assert [len(m.atoms) for m in frags] == [3, 1, 1]
        assert frags[1].atoms[0].formal_charge == 1

    def test_bracket_charges(self):
        anion = parse_single("[O-]C(=O)C")
        assert anion.atoms[0].formal_charge == -1
        assert anion.atoms[0].implicit_hydrogens == 0
        cation = parse_single("C[N+](C)(C)C")
        assert cation.atoms[1].formal_charge == 1

    def test_pinned_hydrogens_survive(self):
        mol = parse_single("[SH4]")
        assert mol.atoms[0].implicit_hydrogens == 4
        assert mol.atoms[0].h_pinned
        # a bare S token would fill to the lowest valence instead
        assert parse_single("S").atoms[0].implicit_hydrogens == 2

    def test_explicit_single_bond_between_aromatics(self):
        mol = parse_single("c1ccc(-c2ccccc2)cc1")
        orders = {b.order for b in mol.bonds}
        assert BondOrder.SINGLE in orders and BondOrder.AROMATIC in orders


class TestAromaticity:
    def test_benzene_kekule_alternates(self):
        mol = parse_single("c1ccccc1")
        assert sorted(mol.kekule_orders) == [1, 1, 1, 2, 2, 2]
        assert all(a.implicit_hydrogens == 1 for a in mol.atoms)

    def test_pyridine_nitrogen_has_no_hydrogen(self):
        mol = parse_single("c1ccncc1")
        n_atom = next(a for a in mol.atoms if a.element == "N")
        assert n_atom.implicit_hydrogens == 0

    def test_pyrrole_keeps_bracket_hydrogen(self):
        mol = parse_single("c1cc[nH]c1")
        n_atom = next(a for a in mol.atoms if a.element == "N")
        assert n_atom.implicit_hydrogens == 1
        assert mol.canonical_smiles == "c1cc[nH]c1"

    def test_five_membered_heteroaromatics(self):
        for smi in ("c1ccoc1", "c1ccsc1"):
            mol = parse_single(smi)
            hetero = next(a for a in mol.atoms if a.element != "C")
            assert hetero.implicit_hydrogens == 0

    def test_unkekulizable_ring_rejected(self):
        # five aromatic carbons cannot alternate
        with pytest.raises(ValenceViolationError):
            parse_smiles("c1cccc1")

    def test_naphthalene_fused(self):
        mol = parse_single("c1ccc2ccccc2c1")
        assert mol.heavy_atom_count == 10
        assert all(a.implicit_hydrogens in (0, 1) for a in mol.atoms)
        assert sum(a.implicit_hydrogens for a in mol.atoms) == 8


class TestValence:
    def test_allowed_valence_table(self):
        assert allowed_valences("C") == (4,)
        assert allowed_valences("S") == (2, 4, 6)
        assert allowed_valences("P") == (3, 5)
        assert allowed_valences("N", 1) == (4,)
        assert allowed_valences("O", -1) == (1,)
        assert allowed_valences("B", -1) == (4,)

    def test_sulfuric_acid_uses_high_valence(self):
        mol = parse_single("OS(=O)(=O)O")
        s_index = next(i for i, a in enumerate(mol.atoms) if a.element == "S")
        assert mol.total_valence(s_index) == 6
        assert validate_valence(mol) == []

    def test_pentavalent_carbon_rejected(self):
        with pytest.raises(ValenceViolationError) as exc:
            parse_smiles("C(C)(C)(C)(C)C")
        assert exc.value.offset == 0

    def test_charged_nitrogen_valences(self):
        assert validate_valence(parse_single("[NH4+]")) == []
        assert validate_valence(parse_single("O=[N+]([O-])C")) == []

    def test_validate_valence_reports_all_atoms_ok(self):
        for mol in corpus_200()[:60]:
            assert validate_valence(mol) == []


class TestParseErrors:
    @pytest.mark.parametrize(
        "text,err,offset",
        [
            ("C(", UnbalancedParenthesisError, 1),
            ("CC)C", UnbalancedParenthesisError, 2),
            ("C1CC", UnclosedRingBondError, 1),
            ("CXC", UnknownElementError, 1),
            ("C(C)(C)(C)(C)C", ValenceViolationError, 0),
            ("", EmptyInputError, 0),
            ("   ", EmptyInputError, 0),
        ],
    )
    def test_error_class_and_offset(self, text, err, offset):
        with pytest.raises(err) as exc:
            parse_smiles(text)
        assert exc.value.offset == offset

    @pytest.mark.parametrize("text", ["C@C", "C/C=C/C", "[C@H](C)(C)C", "C\\C"])
    def test_stereo_tokens_rejected(self, text):
        with pytest.raises(SmilesSyntaxError):
            parse_smiles(text)

    def test_isotopes_rejected(self):
        with pytest.raises(SmilesSyntaxError):
            parse_smiles("[13C]")

    def test_oversized_input_rejected(self):
        with pytest.raises(SmilesError):
            parse_smiles("C" * 5000)

    def test_heavy_atom_cap(self):
        with pytest.raises(SmilesError):
            parse_smiles("C" * 121)
        assert parse_single("C" * 120).heavy_atom_count == 120

    def test_duplicate_ring_bond_rejected(self):
        with pytest.raises(SmilesSyntaxError):
            parse_smiles("C12CC12")

    def test_aromatic_bond_needs_aromatic_atoms(self):
        with pytest.raises(SmilesSyntaxError):
            parse_smiles("C:C")


class TestMolecularWeight:
    def test_frozen_reference_values(self):
        assert molecular_weight(parse_single("O")) == 18.015
        assert molecular_weight(parse_single("C")) == 16.043

    def test_additive_over_fragments(self):
        joined = parse_smiles("CCO.CC(=O)O")
        separate = [parse_single("CCO"), parse_single("CC(=O)O")]
        assert sum(molecular_weight(m) for m in joined) == pytest.approx(
            sum(molecular_weight(m) for m in separate)
        )

    def test_counts_implicit_hydrogens(self):
        # ethane C2H6: 2*12.011 + 6*1.008 = 30.07
        assert molecular_weight(parse_single("CC")) == 30.07


class TestCanonical:
    def test_atom_order_does_not_matter(self):
        assert (
            parse_single("OCC").canonical_smiles
            == parse_single("CCO").canonical_smiles
        )
        assert (
            parse_single("C(O)C").canonical_smiles
            == parse_single("CCO").canonical_smiles
        )

    def test_frozen_strings_stay_stable(self):
        # identity keys are persisted, so the exact strings must not drift
        assert parse_single("CCO").canonical_smiles == "CCO"
        assert parse_single("c1ccccc1").canonical_smiles == "c1ccccc1"
        assert parse_single("OS(=O)(=O)O").canonical_smiles == "O=S(=O)(O)O"
        assert (
            parse_single("O=[N+]([O-])c1ccc(O)cc1").canonical_smiles
            == "c1cc(ccc1[N+]([O-])=O)O"
        )

    def test_permutation_invariance_corpus(self):
        rng = random.Random(99)
        for mol in corpus_200()[:60]:
            reference = mol.canonical_smiles
            for _ in range(10):
                order = list(range(len(mol.atoms)))
                rng.shuffle(order)
                assert permuted(mol, order).canonical_smiles == reference

    def test_round_trip_isomorphic(self):
        for mol in corpus_200()[:80]:
            again = parse_single(mol.canonical_smiles)
            assert again.canonical_smiles == mol.canonical_smiles
            if len(mol.atoms) <= 10:
                assert brute_force_isomorphic(mol, again)

    def test_distinguishes_pinned_hydrogens(self):
        # the two sulfurs only differ in hydrogen count
        a = parse_single("C[SH4]SC")
        b = permuted(a, list(reversed(range(len(a.atoms)))))
        assert a.canonical_smiles == b.canonical_smiles
        assert "[SH4]" in a.canonical_smiles or "SH4" in a.canonical_smiles


class TestRingBonds:
    def test_acyclic_has_none(self):
        assert ring_bonds(parse_single("CCO")) == frozenset()

    def test_benzene_all_ring(self):
        assert len(ring_bonds(parse_single("c1ccccc1"))) == 6

    def test_toluene_exocyclic_excluded(self):
        mol = parse_single("Cc1ccccc1")
        ring = ring_bonds(mol)
        assert len(ring) == 6
        for idx in ring:
            bond = mol.bonds[idx]
            assert mol.atoms[bond.a].aromatic and mol.atoms[bond.b].aromatic

    def test_matches_removal_oracle(self):
        for mol in corpus_200()[:100]:
            assert ring_bonds(mol) == ring_bonds_by_removal(mol)


class TestLayout:
    def test_single_atom_at_origin(self):
        assert layout_2d(parse_single("C")).coords == ((0.0, 0.0),)

    def test_benzene_regular_hexagon(self):
        mol = parse_single("c1ccccc1")
        lay = layout_2d(mol)
        assert not lay.fallback
        distances = [
            math.dist(lay.coords[b.a], lay.coords[b.b]) for b in mol.bonds
        ]
        for d in distances:
            assert abs(d - distances[0]) < 1e-9

    def test_chain_zigzag_angle(self):
        lay = layout_2d(parse_single("CCCCC"))
        pts = lay.coords
        for i in range(1, len(pts) - 1):
            v1 = (pts[i - 1][0] - pts[i][0], pts[i - 1][1] - pts[i][1])
            v2 = (pts[i + 1][0] - pts[i][0], pts[i + 1][1] - pts[i][1])
            dot = v1[0] * v2[0] + v1[1] * v2[1]
            angle = math.degrees(
                math.acos(dot / (math.hypot(*v1) * math.hypot(*v2)))
            )
            assert angle == pytest.approx(120.0, abs=1e-6)

    def test_minimum_separation_holds(self):
        for mol in corpus_200()[:80]:
            lay = layout_2d(mol)
            if lay.fallback:
                continue
            coords = lay.coords
            for i in range(len(coords)):
                for j in range(i + 1, len(coords)):
                    assert math.dist(coords[i], coords[j]) >= 0.5 - 1e-9

    def test_deterministic(self):
        mol = parse_single("CC(C)(C)c1ccc(O)cc1")
        assert layout_2d(mol) == layout_2d(mol)


class TestGraphConstruction:
    def test_disconnected_graph_rejected(self):
        with pytest.raises(ValueError):
            Molecule.from_graph([Atom("C"), Atom("C")], [])

    def test_duplicate_bond_rejected(self):
        with pytest.raises(ValueError):
            Molecule.from_graph(
                [Atom("C"), Atom("C")],
                [Bond(0, 1), Bond(1, 0)],
            )

    def test_permuted_preserves_identity(self):
        mol = parse_single("CC(=O)Nc1ccc(O)cc1")
        order = list(range(len(mol.atoms)))
        random.Random(3).shuffle(order)
        twin = permuted(mol, order)
        assert twin.canonical_smiles == mol.canonical_smiles
        assert molecular_weight(twin) == molecular_weight(mol)
