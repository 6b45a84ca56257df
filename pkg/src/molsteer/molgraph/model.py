"""Molecular graph model.

Atoms and bonds are plain frozen dataclasses; a Molecule is an immutable
connected graph with derived hydrogen counts and a Kekule assignment for
its aromatic bonds.  All valence bookkeeping lives here so that the parser,
the editing operators, and the canonical writer share one rule set.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from functools import cached_property
from importlib import resources

MAX_HEAVY_ATOMS = 120

SUPPORTED_ELEMENTS = frozenset(
    {"H", "B", "C", "N", "O", "F", "P", "S", "Cl", "Br", "I"}
)
# elements that may carry the aromatic flag
AROMATIC_ELEMENTS = frozenset({"B", "C", "N", "O", "P", "S"})
HALOGENS = frozenset({"F", "Cl", "Br", "I"})

_BASE_VALENCES: dict[str, tuple[int, ...]] = {
    "H": (1,),
    "B": (3,),
    "C": (4,),
    "N": (3,),
    "O": (2,),
    "F": (1,),
    "P": (3, 5),
    "S": (2, 4, 6),
    "Cl": (1,),
    "Br": (1,),
    "I": (1,),
}

# elements more electronegative than carbon gain a bonding slot per positive
# charge (ammonium, oxocarbenium style); boron goes the other way (borate)
_ELECTRONEGATIVE = frozenset({"N", "O", "P", "S", "F", "Cl", "Br", "I"})

MIN_CHARGE, MAX_CHARGE = -2, 2


def _load_masses() -> dict[str, float]:
    path = resources.files("molsteer.data").joinpath("atomic_masses.csv")
    with path.open(encoding="utf-8") as fh:
        return {row["symbol"]: float(row["mass"]) for row in csv.DictReader(fh)}


ATOMIC_MASSES: dict[str, float] = _load_masses()


def allowed_valences(element: str, charge: int = 0) -> tuple[int, ...]:
    """Allowed total valences (bond order sum + hydrogens) for an element/charge."""
    if element in _ELECTRONEGATIVE:
        adjust = charge
    elif element == "B":
        adjust = -charge
    else:  # C, H: both cation and anion drop one slot
        adjust = -abs(charge)
    return tuple(v + adjust for v in _BASE_VALENCES[element] if v + adjust >= 0)


class BondOrder(enum.Enum):
    SINGLE = "single"
    DOUBLE = "double"
    TRIPLE = "triple"
    AROMATIC = "aromatic"


_INTEGER_ORDER = {BondOrder.SINGLE: 1, BondOrder.DOUBLE: 2, BondOrder.TRIPLE: 3}


class MoleculeError(ValueError):
    """Raised when a graph cannot form a valid Molecule.

    ``atom_index`` points at the offending atom when one can be named.
    """

    def __init__(self, message: str, atom_index: int | None = None):
        super().__init__(message)
        self.atom_index = atom_index


class ValenceError(MoleculeError):
    pass


@dataclass(frozen=True)
class Atom:
    element: str
    formal_charge: int = 0
    aromatic: bool = False
    implicit_hydrogens: int = 0
    # True when the hydrogen count was written explicitly (bracket atom) and
    # must survive edits instead of being re-derived from the valence table.
    h_pinned: bool = False

    def __post_init__(self) -> None:
        if self.element not in SUPPORTED_ELEMENTS:
            raise MoleculeError(f"unsupported element {self.element!r}")
        if not MIN_CHARGE <= self.formal_charge <= MAX_CHARGE:
            raise MoleculeError(f"formal charge {self.formal_charge} out of range")
        if self.aromatic and self.element not in AROMATIC_ELEMENTS:
            raise MoleculeError(f"element {self.element} cannot be aromatic")
        if self.implicit_hydrogens < 0:
            raise MoleculeError("negative hydrogen count")


@dataclass(frozen=True)
class Bond:
    a: int
    b: int
    order: BondOrder = BondOrder.SINGLE


@dataclass(frozen=True, eq=False)
class Molecule:
    """Connected molecular graph with resolved hydrogen counts.

    Construct through :meth:`from_graph`, which derives implicit hydrogens,
    assigns a Kekule structure to aromatic bonds and enforces the valence
    model.  ``kekule_orders`` holds one integer order per bond with aromatic
    bonds resolved to the chosen alternating pattern.
    """

    atoms: tuple[Atom, ...]
    bonds: tuple[Bond, ...]
    kekule_orders: tuple[int, ...]

    @classmethod
    def from_graph(cls, atoms, bonds) -> "Molecule":
        atoms = tuple(atoms)
        bonds = tuple(
            Bond(min(b.a, b.b), max(b.a, b.b), b.order) for b in bonds
        )
        if not atoms:
            raise MoleculeError("empty molecule")
        n = len(atoms)
        seen_pairs = set()
        for bond in bonds:
            if not (0 <= bond.a < n and 0 <= bond.b < n):
                raise MoleculeError("bond endpoint out of range")
            if bond.a == bond.b:
                raise MoleculeError("self bond", bond.a)
            if (bond.a, bond.b) in seen_pairs:
                raise MoleculeError("duplicate bond", bond.a)
            seen_pairs.add((bond.a, bond.b))
            if bond.order is BondOrder.AROMATIC:
                if not (atoms[bond.a].aromatic and atoms[bond.b].aromatic):
                    raise MoleculeError(
                        "aromatic bond between non-aromatic atoms", bond.a
                    )

        heavy = sum(1 for a in atoms if a.element != "H")
        if heavy == 0:
            raise MoleculeError("molecule has no heavy atoms")
        if heavy > MAX_HEAVY_ATOMS:
            raise MoleculeError(f"heavy atom count {heavy} exceeds {MAX_HEAVY_ATOMS}")

        adjacency: list[list[tuple[int, int]]] = [[] for _ in range(n)]
        for idx, bond in enumerate(bonds):
            adjacency[bond.a].append((bond.b, idx))
            adjacency[bond.b].append((bond.a, idx))

        if n > 1:
            seen = {0}
            queue = [0]
            while queue:
                cur = queue.pop()
                for nxt, _ in adjacency[cur]:
                    if nxt not in seen:
                        seen.add(nxt)
                        queue.append(nxt)
            if len(seen) != n:
                raise MoleculeError("molecule graph is not connected")

        # Kekule assignment alternates around cycles; an aromatic bond on a
        # bridge has no cycle to alternate over, so graph edits that cut an
        # aromatic ring open are rejected here rather than silently kept.
        aromatic_idx = [
            i for i, b in enumerate(bonds) if b.order is BondOrder.AROMATIC
        ]
        if aromatic_idx:
            on_ring = _non_bridge_bonds(n, adjacency)
            for i in aromatic_idx:
                if i not in on_ring:
                    raise MoleculeError("aromatic bond outside a ring", bonds[i].a)

        kekule = _kekulize(atoms, bonds, adjacency)
        final_atoms = _resolve_hydrogens(atoms, bonds, adjacency, kekule)
        return cls(final_atoms, bonds, tuple(kekule))

    # -- derived views -------------------------------------------------

    @cached_property
    def adjacency(self) -> tuple[tuple[tuple[int, int], ...], ...]:
        """Per-atom tuple of (neighbor index, bond index)."""
        adj: list[list[tuple[int, int]]] = [[] for _ in self.atoms]
        for idx, bond in enumerate(self.bonds):
            adj[bond.a].append((bond.b, idx))
            adj[bond.b].append((bond.a, idx))
        return tuple(tuple(entries) for entries in adj)

    def neighbors(self, index: int) -> tuple[int, ...]:
        return tuple(nbr for nbr, _ in self.adjacency[index])

    def degree(self, index: int) -> int:
        return len(self.adjacency[index])

    def bond_between(self, a: int, b: int) -> Bond | None:
        for nbr, idx in self.adjacency[a]:
            if nbr == b:
                return self.bonds[idx]
        return None

    @property
    def heavy_atom_count(self) -> int:
        return sum(1 for a in self.atoms if a.element != "H")

    @cached_property
    def ring_bond_indices(self) -> frozenset[int]:
        """Indices of bonds that sit on a cycle (i.e. are not bridges)."""
        return _non_bridge_bonds(len(self.atoms), self.adjacency)

    @cached_property
    def ring_atom_indices(self) -> frozenset[int]:
        members = set()
        for idx in self.ring_bond_indices:
            members.add(self.bonds[idx].a)
            members.add(self.bonds[idx].b)
        return frozenset(members)

    @cached_property
    def canonical_smiles(self) -> str:
        from .canon import write_canonical_smiles

        return write_canonical_smiles(self)

    def total_valence(self, index: int) -> int:
        """Bond order sum (Kekule-resolved) plus the hydrogen count."""
        total = self.atoms[index].implicit_hydrogens
        for _, bond_idx in self.adjacency[index]:
            total += self.kekule_orders[bond_idx]
        return total


def ring_bonds(mol: Molecule) -> frozenset[int]:
    """Bond indices whose removal keeps the graph connected."""
    return mol.ring_bond_indices


def molecular_weight(mol: Molecule) -> float:
    """Sum of atomic masses over all atoms plus implicit hydrogens.

    Rounded to 3 decimals so the value is stable for export and display.
    """
    weight = 0.0
    h_mass = ATOMIC_MASSES["H"]
    for atom in mol.atoms:
        weight += ATOMIC_MASSES[atom.element]
        weight += atom.implicit_hydrogens * h_mass
    return round(weight, 3)


def validate_valence(mol: Molecule) -> list[tuple[int, str]]:
    """Check every atom's total valence; returns (atom index, message) pairs."""
    problems = []
    for i, atom in enumerate(mol.atoms):
        allowed = allowed_valences(atom.element, atom.formal_charge)
        total = mol.total_valence(i)
        if total not in allowed:
            problems.append(
                (i, f"{atom.element} total valence {total} not in {sorted(allowed)}")
            )
    return problems


def permuted(mol: Molecule, order: list[int]) -> Molecule:
    """Rebuild the molecule with atoms re-indexed by ``order``.

    ``order[new_index] = old_index``; used by tests and the canonical writer
    round-trip checks.
    """
    position = {old: new for new, old in enumerate(order)}
    atoms = [mol.atoms[old] for old in order]
    bonds = [
        Bond(position[b.a], position[b.b], b.order) for b in mol.bonds
    ]
    return Molecule.from_graph(atoms, bonds)


# -- internals ----------------------------------------------------------


def _sigma_sum(atom_index, atoms, bonds, adjacency, pinned_h) -> int:
    """Bond order sum counting aromatic bonds as one, plus pinned hydrogens."""
    total = pinned_h
    for _, bond_idx in adjacency[atom_index]:
        order = bonds[bond_idx].order
        total += _INTEGER_ORDER.get(order, 1)
    return total


def _kekulize(atoms, bonds, adjacency) -> list[int]:
    """Resolve aromatic bonds to integer orders via a perfect matching.

    Every aromatic atom that still needs one unit of unsaturation must be
    paired with a neighbor through an aromatic bond; paired bonds become
    double, the rest single.  Raises ValenceError when no assignment exists.
    """
    orders = [_INTEGER_ORDER.get(b.order, 1) for b in bonds]
    aromatic_atoms = [i for i, a in enumerate(atoms) if a.aromatic]
    if not aromatic_atoms:
        return orders

    needs_pi: dict[int, bool] = {}
    for i in aromatic_atoms:
        atom = atoms[i]
        if atom.h_pinned:
            sigma = _sigma_sum(i, atoms, bonds, adjacency, atom.implicit_hydrogens)
            slack = None
            for v in allowed_valences(atom.element, atom.formal_charge):
                if v >= sigma:
                    slack = v - sigma
                    break
            if slack is None or slack > 1:
                raise ValenceError(
                    f"aromatic {atom.element} cannot reach an allowed valence", i
                )
            needs_pi[i] = slack == 1
        elif atom.element == "C":
            needs_pi[i] = True
        elif atom.element in ("N", "P"):
            # two-connected ring N/P is pyridine-like; a third substituent
            # marks the pyrrole-like case where the lone pair stays in plane
            plain = all(
                bonds[idx].order in (BondOrder.SINGLE, BondOrder.AROMATIC)
                for _, idx in adjacency[i]
            )
            needs_pi[i] = plain and len(adjacency[i]) <= 2
        else:  # O, S, B contribute no double bond in the aromatic pattern
            needs_pi[i] = False

    pi_atoms = [i for i in aromatic_atoms if needs_pi[i]]
    if not pi_atoms:
        return orders

    # candidate partners through aromatic bonds only
    partner_bonds: dict[int, list[tuple[int, int]]] = {i: [] for i in pi_atoms}
    for idx, bond in enumerate(bonds):
        if bond.order is BondOrder.AROMATIC:
            if needs_pi.get(bond.a) and needs_pi.get(bond.b):
                partner_bonds[bond.a].append((bond.b, idx))
                partner_bonds[bond.b].append((bond.a, idx))

    matched: dict[int, int] = {}

    def match(remaining: list[int]) -> bool:
        while remaining and remaining[-1] in matched:
            remaining = remaining[:-1]
        if not remaining:
            return True
        cur = remaining[-1]
        rest = remaining[:-1]
        for nbr, bond_idx in partner_bonds[cur]:
            if nbr in matched:
                continue
            matched[cur] = bond_idx
            matched[nbr] = bond_idx
            if match(rest):
                return True
            del matched[cur]
            del matched[nbr]
        return False

    # deterministic order, hardest-to-match atoms last so they bind first
    queue = sorted(pi_atoms, key=lambda i: (-len(partner_bonds[i]), i))
    if not match(queue):
        raise ValenceError(
            "no alternating double-bond assignment for the aromatic system",
            pi_atoms[0],
        )
    for bond_idx in set(matched.values()):
        orders[bond_idx] = 2
    return orders


def _resolve_hydrogens(atoms, bonds, adjacency, kekule) -> tuple[Atom, ...]:
    """Fill implicit hydrogens and validate every atom against the valence table."""
    resolved = []
    for i, atom in enumerate(atoms):
        bond_sum = sum(kekule[bond_idx] for _, bond_idx in adjacency[i])
        allowed = allowed_valences(atom.element, atom.formal_charge)
        if not allowed:
            raise ValenceError(
                f"{atom.element} with charge {atom.formal_charge} has no valid valence",
                i,
            )
        if atom.h_pinned:
            total = bond_sum + atom.implicit_hydrogens
            if total not in allowed:
                raise ValenceError(
                    f"{atom.element} total valence {total} not in {sorted(allowed)}",
                    i,
                )
            resolved.append(atom)
        else:
            target = None
            for v in allowed:
                if v >= bond_sum:
                    target = v
                    break
            if target is None:
                raise ValenceError(
                    f"{atom.element} bond order sum {bond_sum} exceeds "
                    f"allowed valences {sorted(allowed)}",
                    i,
                )
            hydrogens = target - bond_sum
            if hydrogens == atom.implicit_hydrogens:
                resolved.append(atom)
            else:
                resolved.append(
                    Atom(
                        atom.element,
                        atom.formal_charge,
                        atom.aromatic,
                        hydrogens,
                        False,
                    )
                )
    return tuple(resolved)


def _non_bridge_bonds(n: int, adjacency) -> frozenset[int]:
    """Find all non-bridge bonds with an iterative lowpoint DFS."""
    visit_time = [-1] * n
    low = [0] * n
    bridges: set[int] = set()
    all_bonds: set[int] = set()
    timer = 0
    for root in range(n):
        if visit_time[root] != -1:
            continue
        stack: list[tuple[int, int, int]] = [(root, -1, 0)]
        while stack:
            node, parent_bond, child_pos = stack.pop()
            if child_pos == 0:
                visit_time[node] = low[node] = timer
                timer += 1
            entries = adjacency[node]
            advanced = False
            for pos in range(child_pos, len(entries)):
                nbr, bond_idx = entries[pos]
                all_bonds.add(bond_idx)
                if bond_idx == parent_bond:
                    continue
                if visit_time[nbr] == -1:
                    stack.append((node, parent_bond, pos + 1))
                    stack.append((nbr, bond_idx, 0))
                    advanced = True
                    break
                low[node] = min(low[node], visit_time[nbr])
            if not advanced and parent_bond != -1:
                # node finished; propagate lowpoint to the DFS parent
                parent = stack[-1][0] if stack else None
                if parent is not None:
                    low[parent] = min(low[parent], low[node])
                    if low[node] > visit_time[parent]:
                        bridges.add(parent_bond)
    return frozenset(all_bonds - bridges)
