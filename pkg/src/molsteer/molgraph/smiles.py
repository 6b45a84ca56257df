"""SMILES reader.

Supports the organic subset (B C N O P S F Cl Br I), bracket atoms with
charge and explicit hydrogen counts, bonds ``- = # :``, branches, ring
closures including ``%nn``, dots for multi-fragment input and aromatic
lowercase atoms.  Stereochemistry and isotopes are rejected with a clear
error.  Every parse error carries the byte offset of the offending token.
"""

from __future__ import annotations

from dataclasses import dataclass

from .model import (
    AROMATIC_ELEMENTS,
    MAX_CHARGE,
    MIN_CHARGE,
    Atom,
    Bond,
    BondOrder,
    Molecule,
    MoleculeError,
    _non_bridge_bonds,
)

MAX_INPUT_LENGTH = 4096

_ORGANIC_TWO_CHAR = ("Cl", "Br")
_ORGANIC_UPPER = frozenset({"B", "C", "N", "O", "P", "S", "F", "I"})
_ORGANIC_LOWER = frozenset({"b", "c", "n", "o", "p", "s"})
_BRACKET_SYMBOLS = {
    s: (s, False) for s in ("H", "B", "C", "N", "O", "F", "P", "S", "Cl", "Br", "I")
}
_BRACKET_SYMBOLS.update({s: (s.upper(), True) for s in _ORGANIC_LOWER})
_BOND_SYMBOLS = {
    "-": BondOrder.SINGLE,
    "=": BondOrder.DOUBLE,
    "#": BondOrder.TRIPLE,
    ":": BondOrder.AROMATIC,
}


class SmilesError(ValueError):
    """Base class for SMILES rejections; ``offset`` is a byte position."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset


class EmptyInputError(SmilesError):
    pass


class UnbalancedParenthesisError(SmilesError):
    pass


class UnclosedRingBondError(SmilesError):
    pass


class UnknownElementError(SmilesError):
    pass


class ValenceViolationError(SmilesError):
    pass


class SmilesSyntaxError(SmilesError):
    pass


@dataclass
class _PendingAtom:
    element: str
    charge: int
    aromatic: bool
    h_count: int
    h_pinned: bool
    offset: int


@dataclass
class _PendingBond:
    a: int
    b: int
    order: BondOrder | None
    offset: int


def parse_smiles(text: str) -> list[Molecule]:
    """Parse one SMILES string into its fragment molecules.

    Fragments (dot-separated or otherwise disconnected) come back as
    separate molecules ordered by their first atom's position in the input.
    """
    if text is None or text == "" or text.strip() == "":
        raise EmptyInputError("empty input", 0)
    if len(text) > MAX_INPUT_LENGTH:
        raise SmilesSyntaxError(
            f"input longer than {MAX_INPUT_LENGTH} characters", MAX_INPUT_LENGTH
        )

    atoms: list[_PendingAtom] = []
    bonds: list[_PendingBond] = []
    prev: int | None = None
    branch_stack: list[tuple[int | None, int]] = []
    pending: tuple[BondOrder, int] | None = None
    open_rings: dict[int, tuple[int, BondOrder | None, int]] = {}

    def add_atom(atom: _PendingAtom) -> None:
        nonlocal prev, pending
        idx = len(atoms)
        atoms.append(atom)
        if prev is not None:
            order, _ = pending if pending else (None, -1)
            bonds.append(_PendingBond(prev, idx, order, atom.offset))
        elif pending is not None:
            raise SmilesSyntaxError("bond with no preceding atom", pending[1])
        pending = None
        prev = idx

    def close_or_open_ring(number: int, offset: int) -> None:
        nonlocal pending
        if prev is None:
            raise SmilesSyntaxError("ring closure before any atom", offset)
        if number in open_rings:
            other, other_order, other_offset = open_rings.pop(number)
            if other == prev:
                raise SmilesSyntaxError("ring closure to the same atom", offset)
            order = None
            if pending and other_order and pending[0] is not other_order:
                raise SmilesSyntaxError("conflicting ring bond orders", offset)
            if pending:
                order = pending[0]
            elif other_order:
                order = other_order
            for existing in bonds:
                if {existing.a, existing.b} == {other, prev}:
                    raise SmilesSyntaxError("duplicate bond between atoms", offset)
            bonds.append(_PendingBond(other, prev, order, offset))
        else:
            open_rings[number] = (prev, pending[0] if pending else None, offset)
        pending = None

    i = 0
    length = len(text)
    while i < length:
        ch = text[i]
        if ch == "(":
            if prev is None:
                raise SmilesSyntaxError("branch before any atom", i)
            if pending is not None:
                raise SmilesSyntaxError("bond before branch open", pending[1])
            branch_stack.append((prev, i))
            i += 1
        elif ch == ")":
            if not branch_stack:
                raise UnbalancedParenthesisError("unmatched closing parenthesis", i)
            if pending is not None:
                raise SmilesSyntaxError("dangling bond before branch close", pending[1])
            prev = branch_stack.pop()[0]
            i += 1
        elif ch in _BOND_SYMBOLS:
            if pending is not None:
                raise SmilesSyntaxError("two consecutive bond symbols", i)
            pending = (_BOND_SYMBOLS[ch], i)
            i += 1
        elif ch == ".":
            if pending is not None:
                raise SmilesSyntaxError("bond before dot separator", pending[1])
            prev = None
            i += 1
        elif ch == "%":
            if i + 2 >= length or not text[i + 1 : i + 3].isdigit():
                raise SmilesSyntaxError("%% ring closure needs two digits", i)
            close_or_open_ring(int(text[i + 1 : i + 3]), i)
            i += 3
        elif ch.isdigit():
            close_or_open_ring(int(ch), i)
            i += 1
        elif ch in "@/\\":
            raise SmilesSyntaxError("stereochemistry tokens are not supported", i)
        elif ch == "[":
            atom, width = _parse_bracket(text, i)
            add_atom(atom)
            i += width
        elif text[i : i + 2] in _ORGANIC_TWO_CHAR:
            add_atom(_PendingAtom(text[i : i + 2], 0, False, 0, False, i))
            i += 2
        elif ch in _ORGANIC_UPPER:
            add_atom(_PendingAtom(ch, 0, False, 0, False, i))
            i += 1
        elif ch in _ORGANIC_LOWER:
            add_atom(_PendingAtom(ch.upper(), 0, True, 0, False, i))
            i += 1
        elif ch.isalpha():
            raise UnknownElementError(f"unknown element {ch!r}", i)
        else:
            raise SmilesSyntaxError(f"unexpected character {ch!r}", i)

    if pending is not None:
        raise SmilesSyntaxError("dangling bond at end of input", pending[1])
    if branch_stack:
        raise UnbalancedParenthesisError("unclosed branch", branch_stack[-1][1])
    if open_rings:
        first = min(open_rings.values(), key=lambda entry: entry[2])
        raise UnclosedRingBondError("unclosed ring bond", first[2])

    return _assemble_fragments(atoms, bonds)


def _parse_bracket(text: str, start: int) -> tuple[_PendingAtom, int]:
    end = text.find("]", start)
    if end == -1:
        raise SmilesSyntaxError("unterminated bracket atom", start)
    body = text[start + 1 : end]
    pos = 0
    if not body:
        raise SmilesSyntaxError("empty bracket atom", start)
    if body[0].isdigit():
        raise SmilesSyntaxError("isotope labels are not supported", start + 1)

    element = None
    aromatic = False
    for symbol in ("Cl", "Br"):
        if body.startswith(symbol):
            element, aromatic = symbol, False
            pos = 2
            break
    if element is None:
        head = body[0]
        if head in _BRACKET_SYMBOLS:
            element, aromatic = _BRACKET_SYMBOLS[head]
            pos = 1
        elif head == "@":
            raise SmilesSyntaxError(
                "stereochemistry tokens are not supported", start + 1
            )
        else:
            raise UnknownElementError(f"unknown element {head!r}", start + 1)

    h_count = 0
    if pos < len(body) and body[pos] == "H":
        pos += 1
        digits = ""
        while pos < len(body) and body[pos].isdigit():
            digits += body[pos]
            pos += 1
        h_count = int(digits) if digits else 1

    charge = 0
    if pos < len(body) and body[pos] in "+-":
        sign = 1 if body[pos] == "+" else -1
        symbol = body[pos]
        pos += 1
        if pos < len(body) and body[pos].isdigit():
            charge = sign * int(body[pos])
            pos += 1
        else:
            charge = sign
            while pos < len(body) and body[pos] == symbol:
                charge += sign
                pos += 1
        if not MIN_CHARGE <= charge <= MAX_CHARGE:
            raise SmilesSyntaxError(
                f"formal charge {charge} out of range [{MIN_CHARGE}, {MAX_CHARGE}]",
                start + 1,
            )

    if pos != len(body):
        raise SmilesSyntaxError(
            f"unsupported bracket content {body[pos:]!r}", start + 1 + pos
        )
    if aromatic and element not in AROMATIC_ELEMENTS:
        raise SmilesSyntaxError(f"element {element} cannot be aromatic", start + 1)
    return (
        _PendingAtom(element, charge, aromatic, h_count, True, start),
        end - start + 1,
    )


def _assemble_fragments(
    atoms: list[_PendingAtom], bonds: list[_PendingBond]
) -> list[Molecule]:
    n = len(atoms)
    adjacency: list[list[int]] = [[] for _ in range(n)]
    for pos, bond in enumerate(bonds):
        adjacency[bond.a].append(pos)
        adjacency[bond.b].append(pos)

    component = [-1] * n
    order_of_component: list[list[int]] = []
    for root in range(n):
        if component[root] != -1:
            continue
        members = [root]
        component[root] = len(order_of_component)
        queue = [root]
        while queue:
            cur = queue.pop()
            for bond_pos in adjacency[cur]:
                bond = bonds[bond_pos]
                nxt = bond.b if bond.a == cur else bond.a
                if component[nxt] == -1:
                    component[nxt] = component[root]
                    members.append(nxt)
                    queue.append(nxt)
        order_of_component.append(sorted(members))

    molecules = []
    for members in order_of_component:
        local = {old: new for new, old in enumerate(members)}
        frag_atoms = []
        for old in members:
            pending = atoms[old]
            frag_atoms.append(
                Atom(
                    pending.element,
                    pending.charge,
                    pending.aromatic,
                    pending.h_count,
                    pending.h_pinned,
                )
            )
        frag_bonds = []
        implicit_aromatic: list[int] = []
        for bond in bonds:
            if component[bond.a] != component[members[0]]:
                continue
            order = bond.order
            if order is None:
                both_aromatic = atoms[bond.a].aromatic and atoms[bond.b].aromatic
                if both_aromatic:
                    order = BondOrder.AROMATIC
                    implicit_aromatic.append(len(frag_bonds))
                else:
                    order = BondOrder.SINGLE
            elif order is BondOrder.AROMATIC:
                if not (atoms[bond.a].aromatic and atoms[bond.b].aromatic):
                    raise SmilesSyntaxError(
                        "aromatic bond between non-aromatic atoms", bond.offset
                    )
            frag_bonds.append(Bond(local[bond.a], local[bond.b], order))
        # An unmarked bond between aromatic atoms is aromatic only inside a
        # ring; across a bridge (biphenyl-style) it is a plain single bond.
        # Explicit ':' on a bridge stays aromatic and is rejected later.
        if implicit_aromatic:
            frag_adj: list[list[tuple[int, int]]] = [[] for _ in members]
            for idx, b in enumerate(frag_bonds):
                frag_adj[b.a].append((b.b, idx))
                frag_adj[b.b].append((b.a, idx))
            on_ring = _non_bridge_bonds(len(members), frag_adj)
            for idx in implicit_aromatic:
                if idx not in on_ring:
                    b = frag_bonds[idx]
                    frag_bonds[idx] = Bond(b.a, b.b, BondOrder.SINGLE)
        try:
            molecules.append(Molecule.from_graph(frag_atoms, frag_bonds))
        except MoleculeError as exc:
            if exc.atom_index is not None:
                offset = atoms[members[exc.atom_index]].offset
                raise ValenceViolationError(str(exc), offset) from exc
            raise SmilesSyntaxError(str(exc), atoms[members[0]].offset) from exc
    return molecules


def parse_single(text: str) -> Molecule:
    """Parse SMILES that must contain exactly one fragment."""
    fragments = parse_smiles(text)
    if len(fragments) != 1:
        raise SmilesSyntaxError(
            f"expected a single fragment, got {len(fragments)}", 0
        )
    return fragments[0]
