"""Canonical atom ranking and the canonical SMILES writer.

Ranking starts from local atom invariants and refines them with sorted
neighbor signatures until stable, then breaks residual ties with a
distance-profile invariant so the result does not depend on input atom
order.  The writer walks the graph in rank order, which makes the emitted
string a stable identity key for the molecule.
"""

from __future__ import annotations

from .model import Bond, BondOrder, Molecule, allowed_valences

_ELEMENT_CODE = {
    sym: idx
    for idx, sym in enumerate(
        ("H", "B", "C", "N", "O", "F", "P", "S", "Cl", "Br", "I")
    )
}
_BOND_CODE = {
    BondOrder.SINGLE: 1,
    BondOrder.DOUBLE: 2,
    BondOrder.TRIPLE: 3,
    BondOrder.AROMATIC: 4,
}
_ORGANIC_WRITABLE = frozenset({"B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I"})
_AROMATIC_WRITABLE = frozenset({"B", "C", "N", "O", "P", "S"})


def _dense_ranks(keys: list) -> list[int]:
    order = {key: rank for rank, key in enumerate(sorted(set(keys)))}
    return [order[key] for key in keys]


def _refine(mol: Molecule, ranks: list[int]) -> list[int]:
    adjacency = mol.adjacency
    bonds = mol.bonds
    while True:
        signatures = []
        for i in range(len(ranks)):
            nbr_sig = sorted(
                (_BOND_CODE[bonds[bond_idx].order], ranks[nbr])
                for nbr, bond_idx in adjacency[i]
            )
            signatures.append((ranks[i], tuple(nbr_sig)))
        new_ranks = _dense_ranks(signatures)
        if max(new_ranks, default=0) == max(ranks, default=0):
            return new_ranks
        ranks = new_ranks


def _distance_profile(mol: Molecule, start: int, ranks: list[int]) -> tuple:
    """Sorted rank multisets per BFS shell; invariant under atom reordering."""
    dist = [-1] * len(mol.atoms)
    dist[start] = 0
    frontier = [start]
    shells = []
    while frontier:
        shells.append(tuple(sorted(ranks[i] for i in frontier)))
        nxt = []
        for node in frontier:
            for nbr, _ in mol.adjacency[node]:
                if dist[nbr] == -1:
                    dist[nbr] = dist[node] + 1
                    nxt.append(nbr)
        frontier = nxt
    return tuple(shells)


def canonical_ranks(mol: Molecule) -> list[int]:
    """Assign each atom a distinct rank that is stable under atom reordering."""
    n = len(mol.atoms)
    seeds = [
        (
            _ELEMENT_CODE[a.element],
            len(mol.adjacency[i]),
            a.formal_charge,
            int(a.aromatic),
            a.implicit_hydrogens,
        )
        for i, a in enumerate(mol.atoms)
    ]
    ranks = _refine(mol, _dense_ranks(seeds))
    while max(ranks) != n - 1:
        # promote one member of the lowest tied class, then refine again
        by_rank: dict[int, list[int]] = {}
        for i, rank in enumerate(ranks):
            by_rank.setdefault(rank, []).append(i)
        tied_rank = min(r for r, members in by_rank.items() if len(members) > 1)
        members = by_rank[tied_rank]
        chosen = min(members, key=lambda i: (_distance_profile(mol, i, ranks), i))
        ranks = [
            rank + 1 if rank > tied_rank or (rank == tied_rank and i != chosen) else rank
            for i, rank in enumerate(ranks)
        ]
        ranks = _refine(mol, ranks)
    return ranks


def _hydrogen_fill(mol: Molecule, index: int) -> int:
    """Hydrogen count a bare organic-subset token would get on re-parse."""
    atom = mol.atoms[index]
    bond_sum = sum(
        mol.kekule_orders[bond_idx] for _, bond_idx in mol.adjacency[index]
    )
    for v in allowed_valences(atom.element, atom.formal_charge):
        if v >= bond_sum:
            return v - bond_sum
    return -1


def _bare_token_reparses(mol: Molecule, index: int) -> bool:
    """True when a bare token reproduces this atom's hydrogen and pi state."""
    atom = mol.atoms[index]
    if atom.implicit_hydrogens != _hydrogen_fill(mol, index):
        return False
    if not atom.aromatic:
        return True
    # the reader derives an aromatic atom's double-bond requirement from the
    # token form, so the atom's actual Kekule role has to match the bare rule
    has_pi = any(
        mol.kekule_orders[bond_idx] == 2
        and mol.bonds[bond_idx].order is BondOrder.AROMATIC
        for _, bond_idx in mol.adjacency[index]
    )
    if atom.element == "C":
        bare_rule = True
    elif atom.element in ("N", "P"):
        plain = all(
            mol.bonds[bond_idx].order in (BondOrder.SINGLE, BondOrder.AROMATIC)
            for _, bond_idx in mol.adjacency[index]
        )
        bare_rule = plain and len(mol.adjacency[index]) <= 2
    else:
        bare_rule = False
    return has_pi == bare_rule


def _atom_token(mol: Molecule, index: int) -> str:
    atom = mol.atoms[index]
    symbol = atom.element.lower() if atom.aromatic else atom.element
    writable = _AROMATIC_WRITABLE if atom.aromatic else _ORGANIC_WRITABLE
    if (
        atom.formal_charge == 0
        and atom.element in writable
        and _bare_token_reparses(mol, index)
    ):
        return symbol
    h = atom.implicit_hydrogens
    h_part = "" if h == 0 else ("H" if h == 1 else f"H{h}")
    charge = atom.formal_charge
    if charge == 0:
        charge_part = ""
    elif charge in (1, -1):
        charge_part = "+" if charge == 1 else "-"
    else:
        charge_part = f"{'+' if charge > 0 else '-'}{abs(charge)}"
    return f"[{symbol}{h_part}{charge_part}]"


def _bond_token(mol: Molecule, bond: Bond) -> str:
    both_aromatic = mol.atoms[bond.a].aromatic and mol.atoms[bond.b].aromatic
    default = BondOrder.AROMATIC if both_aromatic else BondOrder.SINGLE
    if bond.order is default:
        return ""
    return {
        BondOrder.SINGLE: "-",
        BondOrder.DOUBLE: "=",
        BondOrder.TRIPLE: "#",
        BondOrder.AROMATIC: ":",
    }[bond.order]


def write_canonical_smiles(mol: Molecule) -> str:
    ranks = canonical_ranks(mol)
    adjacency = mol.adjacency
    n = len(mol.atoms)
    start = ranks.index(min(ranks))

    def sorted_entries(node: int):
        return sorted(adjacency[node], key=lambda entry: ranks[entry[0]])

    # pass 1: classify bonds into tree and ring-closure following the exact
    # traversal the writer uses, and record each atom's visit position
    visited = [False] * n
    visit_index = [-1] * n
    tree_bonds: set[int] = set()
    closure_set: set[int] = set()
    counter = 0

    def scan(node: int, parent_bond: int) -> None:
        nonlocal counter
        visited[node] = True
        visit_index[node] = counter
        counter += 1
        for nbr, bond_idx in sorted_entries(node):
            if bond_idx == parent_bond or bond_idx in closure_set:
                continue
            if visited[nbr]:
                closure_set.add(bond_idx)
            else:
                tree_bonds.add(bond_idx)
                scan(nbr, bond_idx)

    scan(start, -1)

    closures_at: dict[int, list[int]] = {i: [] for i in range(n)}
    for bond_idx in closure_set:
        bond = mol.bonds[bond_idx]
        closures_at[bond.a].append(bond_idx)
        closures_at[bond.b].append(bond_idx)
    for node, bond_list in closures_at.items():
        bond_list.sort(
            key=lambda idx: visit_index[
                mol.bonds[idx].b if mol.bonds[idx].a == node else mol.bonds[idx].a
            ]
        )

    # pass 2: emit tokens in the same order, assigning ring numbers as the
    # first endpoint of each closure comes up and freeing them at the second
    out: list[str] = []
    numbers: dict[int, int] = {}
    free_numbers = list(range(99, 0, -1))

    def emit(node: int, parent_bond: int) -> None:
        out.append(_atom_token(mol, node))
        for bond_idx in closures_at[node]:
            if bond_idx not in numbers:
                number = free_numbers.pop()
                numbers[bond_idx] = number
                out.append(
                    _bond_token(mol, mol.bonds[bond_idx]) + _ring_number(number)
                )
            else:
                number = numbers[bond_idx]
                free_numbers.append(number)
                out.append(_ring_number(number))
        children = [
            (nbr, bond_idx)
            for nbr, bond_idx in sorted_entries(node)
            if bond_idx != parent_bond and bond_idx in tree_bonds
        ]
        for pos, (nbr, bond_idx) in enumerate(children):
            token = _bond_token(mol, mol.bonds[bond_idx])
            if pos < len(children) - 1:
                out.append("(" + token)
                emit(nbr, bond_idx)
                out.append(")")
            else:
                out.append(token)
                emit(nbr, bond_idx)

    emit(start, -1)
    return "".join(out)


def _ring_number(number: int) -> str:
    return str(number) if number < 10 else f"%{number:02d}"
