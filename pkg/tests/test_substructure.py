"""Pattern grammar and subgraph matcher."""

import random

import pytest

from molsteer.molgraph import parse_single, permuted
from molsteer.substructure import (
    MatchResult,
    Pattern,
    PatternSyntaxError,
    PatternTooLargeError,
    StructureRule,
    find_matches,
    match_count,
    parse_pattern,
)

from helpers import corpus_200, count_monomorphisms_brute


def _to_predicates(pattern: Pattern):
    def atom_pred(qa):
        def pred(mol, i):
            a = mol.atoms[i]
            if qa.element is not None and a.element != qa.element:
                return False
            if qa.aromatic is not None and a.aromatic != qa.aromatic:
                return False
            if qa.in_ring is not None and (i in mol.ring_atom_indices) != qa.in_ring:
                return False
            return True

        return pred

    def bond_pred(qb):
        return lambda bond: qb.order is None or bond.order == qb.order

    return (
        [atom_pred(a) for a in pattern.atoms],
        [(b.a, b.b, bond_pred(b)) for b in pattern.bonds],
    )


class TestPatternParsing:
    def test_single_atom(self):
        pat = parse_pattern("O")
        assert len(pat.atoms) == 1
        assert pat.atoms[0].element == "O"
        assert pat.atoms[0].aromatic is False

    def test_tert_butyl_shape(self):
        pat = parse_pattern("CC(C)(C)")
        assert len(pat.atoms) == 4
        assert len(pat.bonds) == 3

    def test_diphenylamine_shape(self):
        pat = parse_pattern("c1ccccc1Nc1ccccc1")
        assert len(pat.atoms) == 13
        assert len(pat.bonds) == 14

    def test_wildcards_and_flags(self):
        assert parse_pattern("*").atoms[0].element is None
        assert parse_pattern("[R]").atoms[0].in_ring is True
        assert parse_pattern("[!R]").atoms[0].in_ring is False
        any_bond = parse_pattern("C~O").bonds[0]
        assert any_bond.order is None

    def test_case_encodes_aromaticity(self):
        assert parse_pattern("c").atoms[0].aromatic is True
        assert parse_pattern("C").atoms[0].aromatic is False

    @pytest.mark.parametrize(
        "text,offset",
        [
            ("C(", 1),
            ("C1CC", 1),
            ("[X]", 0),
            ("C==C", 2),
            ("", 0),
            ("C.C", 1),
            (")C", 0),
        ],
    )
    def test_syntax_errors_carry_offsets(self, text, offset):
        with pytest.raises(PatternSyntaxError) as exc:
            parse_pattern(text)
        assert exc.value.offset == offset

    def test_size_cap(self):
        parse_pattern("C" * 24)
        with pytest.raises(PatternTooLargeError):
            parse_pattern("C" * 25)

    def test_disconnected_rejected(self):
        with pytest.raises(PatternSyntaxError):
            parse_pattern("C.C")


class TestMatching:
    def test_single_oxygen(self):
        assert match_count(parse_single("CCO"), parse_pattern("O")) == 1

    def test_aromatic_flag_blocks_cyclohexane(self):
        benzene_pat = parse_pattern("c1ccccc1")
        assert match_count(parse_single("C1CCCCC1"), benzene_pat) == 0
        assert match_count(parse_single("c1ccccc1"), benzene_pat) == 1

    def test_wildcard_counts_heavy_atoms(self):
        star = parse_pattern("*")
        for smi in ("CCO", "c1ccccc1O", "CC(C)(C)c1ccc(O)cc1"):
            mol = parse_single(smi)
            assert match_count(mol, star) == mol.heavy_atom_count

    def test_distinct_atom_sets_not_mappings(self):
        # symmetric pattern in a symmetric molecule still counts each set once
        assert match_count(parse_single("CC"), parse_pattern("CC")) == 1
        assert match_count(parse_single("C1CC1"), parse_pattern("C1CC1")) == 1

    def test_tert_butyl_occurrences(self):
        bht = parse_single("Cc1cc(C(C)(C)C)c(O)c(C(C)(C)C)c1")
        assert match_count(bht, parse_pattern("CC(C)(C)")) == 2
        assert match_count(parse_single("CC(C)(C)O"), parse_pattern("CC(C)(C)")) == 1

    def test_diphenylamine_hit(self):
        dpa = parse_single("c1ccc(Nc2ccccc2)cc1")
        assert match_count(dpa, parse_pattern("c1ccccc1Nc1ccccc1")) == 1

    def test_ring_membership_flags(self):
        toluene = parse_single("Cc1ccccc1")
        assert match_count(toluene, parse_pattern("[R]")) == 6
        assert match_count(toluene, parse_pattern("[!R]")) == 1

    def test_bond_order_constraints(self):
        mol = parse_single("CC(=O)CO")
        assert match_count(mol, parse_pattern("C=O")) == 1
        assert match_count(mol, parse_pattern("C~O")) == 2

    def test_agreement_with_brute_force(self):
        patterns = [
            "O", "CC", "CCO", "C=O", "c", "cc", "ccc", "C~*", "*~*",
            "[R]", "[!R]", "C(C)C", "CC(C)C", "CN", "cO", "C1CC1", "*1**1",
        ]
        mols = [m for m in corpus_200() if len(m.atoms) <= 10][:60]
        for text in patterns:
            pat = parse_pattern(text)
            if len(pat.atoms) > 4:
                continue
            qa, qb = _to_predicates(pat)
            for mol in mols:
                assert match_count(mol, pat) == count_monomorphisms_brute(mol, qa, qb), (
                    text,
                    mol.canonical_smiles,
                )

    def test_invariant_under_reordering(self):
        pat = parse_pattern("CC(C)(C)")
        rng = random.Random(23)
        mol = parse_single("CC(C)(C)c1ccc(O)cc1C(C)(C)C")
        reference = match_count(mol, pat)
        for _ in range(10):
            order = list(range(len(mol.atoms)))
            rng.shuffle(order)
            assert match_count(permuted(mol, order), pat) == reference

    def test_self_match_from_canonical(self):
        for mol in corpus_200()[:40]:
            smi = mol.canonical_smiles
            try:
                pat = parse_pattern(smi)
            except (PatternSyntaxError, PatternTooLargeError):
                continue  # bracket atoms are outside the pattern grammar
            assert match_count(mol, pat) >= 1, smi

    def test_budget_truncation_flagged(self):
        mol = parse_single("C" * 60)
        pat = parse_pattern("*~*~*~*~*~*")
        full = find_matches(mol, pat)
        assert full.count > 0 and not full.truncated
        cut = find_matches(mol, pat, budget=10)
        assert cut == MatchResult(0, truncated=True)


class TestStructureRule:
    def test_kind_validation(self):
        pat = parse_pattern("O")
        StructureRule(pat, "reward", 0.1)
        StructureRule(pat, "alert")
        with pytest.raises(ValueError):
            StructureRule(pat, "bonus", 0.1)

    def test_magnitude_normalized_scale(self):
        pat = parse_pattern("O")
        with pytest.raises(ValueError):
            StructureRule(pat, "penalty", 1.5)

    def test_label_defaults_to_source(self):
        rule = StructureRule(parse_pattern("CC(C)(C)"), "penalty", 0.2)
        assert rule.label == "CC(C)(C)"
