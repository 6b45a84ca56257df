"""Independent oracles and corpus generators used across the test suite.

Everything here is deliberately written against the public graph types
only, with brute-force algorithms that are slow but obviously correct, so
that the optimized implementation paths have something honest to disagree
with.
"""

from __future__ import annotations

import itertools
import random

from molsteer.molgraph import Atom, Bond, BondOrder, Molecule, parse_single


def atom_label(atom: Atom) -> tuple:
    return (atom.element, atom.formal_charge, atom.aromatic, atom.implicit_hydrogens)


def brute_force_isomorphic(a: Molecule, b: Molecule) -> bool:
    """Exact labeled-graph isomorphism by permutation search (small inputs)."""
    if len(a.atoms) != len(b.atoms) or len(a.bonds) != len(b.bonds):
        return False
    labels_a = sorted(atom_label(x) for x in a.atoms)
    labels_b = sorted(atom_label(x) for x in b.atoms)
    if labels_a != labels_b:
        return False
    n = len(a.atoms)
    bonds_b = {}
    for bond in b.bonds:
        bonds_b[(bond.a, bond.b)] = bond.order
        bonds_b[(bond.b, bond.a)] = bond.order

    candidates = [
        [
            j
            for j in range(n)
            if atom_label(b.atoms[j]) == atom_label(a.atoms[i])
            and len(b.adjacency[j]) == len(a.adjacency[i])
        ]
        for i in range(n)
    ]

    mapping = [-1] * n
    used = [False] * n

    def extend(i: int) -> bool:
        if i == n:
            return True
        for j in candidates[i]:
            if used[j]:
                continue
            ok = True
            for nbr, bond_idx in a.adjacency[i]:
                if nbr < i:
                    order = a.bonds[bond_idx].order
                    if bonds_b.get((j, mapping[nbr])) is not order:
                        ok = False
                        break
            if ok:
                mapping[i] = j
                used[j] = True
                if extend(i + 1):
                    return True
                used[j] = False
        return False

    return extend(0)


def ring_bonds_by_removal(mol: Molecule) -> frozenset[int]:
    """A bond is a ring bond iff deleting it keeps the graph connected."""
    n = len(mol.atoms)
    result = set()
    for skip in range(len(mol.bonds)):
        adjacency = [[] for _ in range(n)]
        for idx, bond in enumerate(mol.bonds):
            if idx == skip:
                continue
            adjacency[bond.a].append(bond.b)
            adjacency[bond.b].append(bond.a)
        seen = {0}
        queue = [0]
        while queue:
            cur = queue.pop()
            for nxt in adjacency[cur]:
                if nxt not in seen:
                    seen.add(nxt)
                    queue.append(nxt)
        if len(seen) == n:
            result.add(skip)
    return frozenset(result)


def count_monomorphisms_brute(target: Molecule, query_atoms, query_bonds) -> int:
    """Count distinct target atom sets admitting an injective match.

    ``query_atoms`` is a list of predicates over (molecule, atom index);
    ``query_bonds`` is a list of (qa, qb, predicate over Bond or None).
    """
    n = len(target.atoms)
    k = len(query_atoms)
    if k > n:
        return 0
    matched_sets = set()
    bond_lookup = {}
    for bond in target.bonds:
        bond_lookup[(bond.a, bond.b)] = bond
        bond_lookup[(bond.b, bond.a)] = bond
    for perm in itertools.permutations(range(n), k):
        ok = all(pred(target, perm[i]) for i, pred in enumerate(query_atoms))
        if not ok:
            continue
        for qa, qb, pred in query_bonds:
            bond = bond_lookup.get((perm[qa], perm[qb]))
            if bond is None or not pred(bond):
                ok = False
                break
        if ok:
            matched_sets.add(frozenset(perm))
    return len(matched_sets)


# -- corpus generation -------------------------------------------------------

_CHAIN_ELEMENTS = ["C", "C", "C", "C", "N", "N", "O", "O", "S", "F", "Cl", "Br"]


def random_molecule(rng: random.Random, max_heavy: int = 12) -> Molecule:
    """Grow a random acyclic-then-ringed molecule, always valid."""
    atoms = [Atom(rng.choice(["C", "C", "C", "N", "O"]))]
    bonds: list[Bond] = []
    target = rng.randint(1, max_heavy)
    attempts = 0
    while len(atoms) < target and attempts < 200:
        attempts += 1
        host = rng.randrange(len(atoms))
        order = BondOrder.SINGLE
        if rng.random() < 0.15:
            order = BondOrder.DOUBLE
        element = rng.choice(_CHAIN_ELEMENTS)
        candidate_atoms = atoms + [Atom(element)]
        candidate_bonds = bonds + [Bond(host, len(atoms), order)]
        try:
            Molecule.from_graph(candidate_atoms, candidate_bonds)
        except ValueError:
            continue
        atoms, bonds = candidate_atoms, candidate_bonds
    # try a couple of ring closures
    for _ in range(rng.randint(0, 2)):
        if len(atoms) < 5:
            break
        a = rng.randrange(len(atoms))
        b = rng.randrange(len(atoms))
        if a == b:
            continue
        if any({bond.a, bond.b} == {min(a, b), max(a, b)} for bond in bonds):
            continue
        candidate_bonds = bonds + [Bond(min(a, b), max(a, b), BondOrder.SINGLE)]
        try:
            Molecule.from_graph(atoms, candidate_bonds)
        except ValueError:
            continue
        bonds = candidate_bonds
    return Molecule.from_graph(atoms, bonds)


CURATED_SMILES = [
    "C",
    "CC",
    "CCO",
    "OCC",
    "C=C",
    "C#N",
    "CC(C)C",
    "CC(C)(C)C",
    "C1CCCCC1",
    "C1CCNCC1",
    "c1ccccc1",
    "Cc1ccccc1",
    "c1ccncc1",
    "c1cc[nH]c1",
    "c1ccoc1",
    "c1ccsc1",
    "Oc1ccccc1",
    "Oc1ccc2ccccc2c1",
    "CC(=O)O",
    "CC(=O)Nc1ccc(O)cc1",
    "O=C(O)c1ccccc1O",
    "OS(=O)(=O)O",
    "CP(C)C",
    "FC(F)(F)C",
    "ClCCl",
    "BrCBr",
    "ICI",
    "C[N+](C)(C)C",
    "[O-]C(=O)C",
    "[NH4+]",
    "O=[N+]([O-])c1ccc(O)cc1",
    "CSC",
    "CS(C)=O",
    "CS(=O)(=O)C",
    "CB(C)C",
    "C%10CCCCC%10",
    "c1ccc2c(c1)OCO2",
    "CC(C)(C)c1ccc(O)cc1",
    "c1ccc(Nc2ccccc2)cc1",
    "C1CC2CCC1CC2",
    "OCC(O)CO",
    "NCCO",
    "CC(N)C(=O)O",
    "CNC",
    "CCOC(=O)C",
    "N#CC#N",
    "C=C=C",
    "CC=CC",
    "c1ccc(-c2ccccc2)cc1",
    "[SH4]",
]


def corpus_200(seed: int = 7) -> list[Molecule]:
    """200-molecule corpus: curated list padded with generated structures."""
    rng = random.Random(seed)
    molecules = [parse_single(s) for s in CURATED_SMILES]
    while len(molecules) < 200:
        molecules.append(random_molecule(rng, max_heavy=16))
    return molecules[:200]
