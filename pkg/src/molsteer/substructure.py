"""Substructure pattern language and matcher for rewards, penalties, and alerts.

Patterns are a small SMILES-shaped grammar: element tokens (uppercase requires
aliphatic, lowercase requires aromatic), "*" matches any atom, "~" matches any
bond, and the bracket forms "[R]" / "[!R]" constrain ring membership. Matching
counts distinct heavy-atom subsets, so a symmetric pattern does not multiply
counts through its automorphisms.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .molgraph import BondOrder, Molecule, ring_bonds

MAX_PATTERN_ATOMS = 24
MATCH_NODE_BUDGET = 10**6

_TWO_LETTER = ("Cl", "Br")
_UPPER = {"B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I"}
_LOWER = {"b", "c", "n", "o", "p", "s"}


class PatternSyntaxError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset


class PatternTooLargeError(ValueError):
    pass


@dataclass(frozen=True)
class QueryAtom:
    element: str | None  # None matches any element
    aromatic: bool | None  # None matches either
    in_ring: bool | None


@dataclass(frozen=True)
class QueryBond:
    a: int
    b: int
    order: BondOrder | None  # None matches any order


@dataclass(frozen=True)
class Pattern:
    atoms: tuple[QueryAtom, ...]
    bonds: tuple[QueryBond, ...]
    source_text: str

    @property
    def adjacency(self) -> tuple[tuple[tuple[int, int], ...], ...]:
        adj: list[list[tuple[int, int]]] = [[] for _ in self.atoms]
        for idx, bond in enumerate(self.bonds):
            adj[bond.a].append((bond.b, idx))
            adj[bond.b].append((bond.a, idx))
        return tuple(tuple(e) for e in adj)


_BOND_TOKENS = {
    "-": BondOrder.SINGLE,
    "=": BondOrder.DOUBLE,
    "#": BondOrder.TRIPLE,
    ":": BondOrder.AROMATIC,
    "~": None,
}


def parse_pattern(text: str) -> Pattern:
    """Parse a query string; raises PatternSyntaxError with a byte offset."""
    if not text or not text.strip():
        raise PatternSyntaxError("empty pattern", 0)
    atoms: list[QueryAtom] = []
    bonds: list[QueryBond] = []
    seen_bonds: set[tuple[int, int]] = set()
    branch_stack: list[int] = []
    open_rings: dict[str, tuple[int, BondOrder | None, bool, int]] = {}
    prev: int | None = None
    pending: BondOrder | None = None
    pending_any = False

    def add_atom(atom: QueryAtom, offset: int):
        nonlocal prev, pending, pending_any
        atoms.append(atom)
        if len(atoms) > MAX_PATTERN_ATOMS:
            raise PatternTooLargeError(
                f"pattern exceeds {MAX_PATTERN_ATOMS} atoms"
            )
        idx = len(atoms) - 1
        if prev is not None:
            _add_bond(prev, idx, pending, pending_any, offset)
        prev = idx
        pending = None
        pending_any = False

    def _add_bond(a: int, b: int, order, any_bond: bool, offset: int):
        key = (min(a, b), max(a, b))
        if a == b or key in seen_bonds:
            raise PatternSyntaxError("duplicate or self bond", offset)
        seen_bonds.add(key)
        if not any_bond and order is None:
            # default bond: aromatic only when both sides demand aromatic
            qa, qb = atoms[a], atoms[b]
            if qa.aromatic is True and qb.aromatic is True:
                order = BondOrder.AROMATIC
            else:
                order = BondOrder.SINGLE
        bonds.append(QueryBond(key[0], key[1], order))

    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        if ch == "(":
            if prev is None:
                raise PatternSyntaxError("branch before any atom", i)
            branch_stack.append(prev)
            i += 1
            continue
        if ch == ")":
            if not branch_stack:
                raise PatternSyntaxError("unmatched ')'", i)
            prev = branch_stack.pop()
            i += 1
            continue
        if ch in _BOND_TOKENS:
            if pending is not None or pending_any:
                raise PatternSyntaxError("two bond symbols in a row", i)
            if ch == "~":
                pending_any = True
            else:
                pending = _BOND_TOKENS[ch]
            i += 1
            continue
        if ch.isdigit() or ch == "%":
            if ch == "%":
                if i + 2 >= n or not text[i + 1 : i + 3].isdigit():
                    raise PatternSyntaxError("'%' needs two digits", i)
                label = text[i + 1 : i + 3]
                i += 3
            else:
                label = ch
                i += 1
            if prev is None:
                raise PatternSyntaxError("ring closure before any atom", i - 1)
            if label in open_rings:
                start, order, any_bond, _ = open_rings.pop(label)
                if pending is not None and order is not None and pending != order:
                    raise PatternSyntaxError("ring bond order conflict", i - 1)
                _add_bond(
                    start,
                    prev,
                    pending if pending is not None else order,
                    pending_any or any_bond,
                    i - 1,
                )
                pending = None
                pending_any = False
            else:
                open_rings[label] = (prev, pending, pending_any, i - 1)
                pending = None
                pending_any = False
            continue
        if ch == "*":
            add_atom(QueryAtom(None, None, None), i)
            i += 1
            continue
        if ch == "[":
            end = text.find("]", i)
            if end < 0:
                raise PatternSyntaxError("unterminated '['", i)
            body = text[i + 1 : end]
            if body == "R":
                add_atom(QueryAtom(None, None, True), i)
            elif body == "!R":
                add_atom(QueryAtom(None, None, False), i)
            else:
                raise PatternSyntaxError(
                    f"unsupported bracket '{body}' (only [R] and [!R])", i
                )
            i = end + 1
            continue
        two = text[i : i + 2]
        if two in _TWO_LETTER:
            add_atom(QueryAtom(two, False, None), i)
            i += 2
            continue
        if ch in _UPPER:
            add_atom(QueryAtom(ch, False, None), i)
            i += 1
            continue
        if ch in _LOWER:
            add_atom(QueryAtom(ch.capitalize(), True, None), i)
            i += 1
            continue
        raise PatternSyntaxError(f"unexpected character {ch!r}", i)

    if branch_stack:
        raise PatternSyntaxError("unmatched '('", n - 1)
    if open_rings:
        _, _, _, at = min(open_rings.values(), key=lambda t: t[3])
        raise PatternSyntaxError("unclosed ring bond", at)
    if not atoms:
        raise PatternSyntaxError("empty pattern", 0)

    # connectivity over the query graph
    seen = {0}
    frontier = [0]
    adj: list[list[int]] = [[] for _ in atoms]
    for bond in bonds:
        adj[bond.a].append(bond.b)
        adj[bond.b].append(bond.a)
    while frontier:
        cur = frontier.pop()
        for nxt in adj[cur]:
            if nxt not in seen:
                seen.add(nxt)
                frontier.append(nxt)
    if len(seen) != len(atoms):
        raise PatternSyntaxError("pattern must be a connected graph", 0)
    return Pattern(tuple(atoms), tuple(bonds), text)


@dataclass(frozen=True)
class MatchResult:
    count: int
    truncated: bool = False


def _atom_compatible(qa: QueryAtom, mol: Molecule, idx: int, ring_atoms) -> bool:
    atom = mol.atoms[idx]
    if qa.element is not None and atom.element != qa.element:
        return False
    if qa.aromatic is not None and atom.aromatic != qa.aromatic:
        return False
    if qa.in_ring is not None and (idx in ring_atoms) != qa.in_ring:
        return False
    return True


def _bond_compatible(qb: QueryBond, order: BondOrder) -> bool:
    return qb.order is None or qb.order == order


def find_matches(
    mol: Molecule, pattern: Pattern, budget: int = MATCH_NODE_BUDGET
) -> MatchResult:
    """Count distinct atom-set embeddings of pattern into mol.

    Backtracking with a node budget; when the budget runs out the result is
    marked truncated and callers treat the count as 0.
    """
    n_query = len(pattern.atoms)
    if n_query > len(mol.atoms):
        return MatchResult(0)
    ring_atoms = mol.ring_atom_indices
    p_adj = pattern.adjacency

    # visit query atoms in a connected order, preferring constrained ones
    order: list[int] = []
    placed = [False] * n_query
    def constraint_weight(q: int) -> int:
        qa = pattern.atoms[q]
        w = len(p_adj[q]) * 2
        if qa.element is not None:
            w += 4
        if qa.aromatic is not None:
            w += 1
        if qa.in_ring is not None:
            w += 1
        return w

    order.append(max(range(n_query), key=constraint_weight))
    placed[order[0]] = True
    while len(order) < n_query:
        frontier = [
            q for q in range(n_query)
            if not placed[q] and any(placed[o] for o, _ in p_adj[q])
        ]
        nxt = max(frontier, key=constraint_weight)
        order.append(nxt)
        placed[nxt] = True

    # for each query atom, the already-placed neighbors it must connect to
    back_edges: list[list[tuple[int, QueryBond]]] = []
    position = {q: k for k, q in enumerate(order)}
    for k, q in enumerate(order):
        edges = []
        for other, bidx in p_adj[q]:
            if position[other] < k:
                edges.append((other, pattern.bonds[bidx]))
        back_edges.append(edges)

    matched_sets: set[frozenset[int]] = set()
    mapping: dict[int, int] = {}
    used: set[int] = set()
    nodes = 0
    truncated = False

    def extend(k: int):
        nonlocal nodes, truncated
        if truncated:
            return
        if k == n_query:
            matched_sets.add(frozenset(mapping.values()))
            return
        q = order[k]
        qa = pattern.atoms[q]
        if back_edges[k]:
            anchor, _ = back_edges[k][0]
            candidates = [m for m, _ in mol.adjacency[mapping[anchor]]]
        else:
            candidates = range(len(mol.atoms))
        for cand in candidates:
            nodes += 1
            if nodes > budget:
                truncated = True
                return
            if cand in used:
                continue
            if not _atom_compatible(qa, mol, cand, ring_atoms):
                continue
            ok = True
            for other, qbond in back_edges[k]:
                bond = mol.bond_between(mapping[other], cand)
                if bond is None or not _bond_compatible(qbond, bond.order):
                    ok = False
                    break
            if not ok:
                continue
            mapping[q] = cand
            used.add(cand)
            extend(k + 1)
            used.discard(cand)
            del mapping[q]

    extend(0)
    if truncated:
        return MatchResult(0, truncated=True)
    return MatchResult(len(matched_sets))


def match_count(mol: Molecule, pattern: Pattern) -> int:
    return find_matches(mol, pattern).count


@dataclass(frozen=True)
class StructureRule:
    pattern: Pattern
    kind: str  # reward | penalty | alert
    magnitude: float = 0.0
    label: str = ""

    def __post_init__(self):
        if self.kind not in ("reward", "penalty", "alert"):
            raise ValueError(f"unknown rule kind {self.kind!r}")
        if not (0.0 <= self.magnitude <= 1.0):
            raise ValueError("magnitude must be in [0, 1]")
        if not self.label:
            object.__setattr__(self, "label", self.pattern.source_text)
