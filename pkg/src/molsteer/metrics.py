"""Circular fingerprints, Tanimoto similarity, and built-in property calculators.

Fingerprint hashing uses a splitmix64-style finalizer seeded with the 64-bit
golden-ratio constant 0x9E3779B97F4A7C15, so bit patterns are identical across
interpreter runs and platforms. The logP contribution table is a shipped
heuristic, not a trained model.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources

from .molgraph import HALOGENS, BondOrder, Molecule, molecular_weight

_MASK = (1 << 64) - 1
_HASH_SEED = 0x9E3779B97F4A7C15

_ELEMENT_CODE = {
    "B": 5, "C": 6, "N": 7, "O": 8, "F": 9,
    "P": 15, "S": 16, "Cl": 17, "Br": 35, "I": 53,
}

_BOND_CODE = {
    BondOrder.SINGLE: 1,
    BondOrder.DOUBLE: 2,
    BondOrder.TRIPLE: 3,
    BondOrder.AROMATIC: 4,
}


def _mix64(values) -> int:
    h = _HASH_SEED
    for v in values:
        h = (h ^ (v & _MASK)) & _MASK
        h = (h * 0xBF58476D1CE4E5B9) & _MASK
        h ^= h >> 27
        h = (h * 0x94D049BB133111EB) & _MASK
        h ^= h >> 31
    return h


@dataclass(frozen=True)
class Fingerprint:
    """Fixed-length bit vector stored as an int bitmask."""

    bits: int
    n_bits: int = 2048
    radius: int = 2

    def __post_init__(self):
        n = self.n_bits
        if n < 256 or n > 8192 or n & (n - 1):
            raise ValueError(f"n_bits must be a power of two in [256, 8192], got {n}")
        if self.bits < 0 or self.bits >> n:
            raise ValueError("bits out of range for n_bits")

    @property
    def popcount(self) -> int:
        return self.bits.bit_count()

    def on_bits(self) -> tuple[int, ...]:
        return tuple(i for i in range(self.n_bits) if self.bits >> i & 1)


class LengthMismatchError(ValueError):
    pass


def morgan_fingerprint(mol: Molecule, radius: int = 2, n_bits: int = 2048) -> Fingerprint:
    """Hash each atom's r-neighborhood for r in 0..radius into a bit vector.

    Environment identifiers follow the usual circular-fingerprint update: the
    initial atom invariant covers element, degree, charge, aromaticity, and
    hydrogen count; each round folds in the sorted (bond, neighbor) invariants
    from the previous round. One identifier per (atom, r); identical
    environments collapse onto the same bit.
    """
    if radius < 0:
        raise ValueError("radius must be non-negative")
    invariants = [
        _mix64((
            _ELEMENT_CODE[a.element],
            mol.degree(i),
            a.formal_charge & _MASK,
            int(a.aromatic),
            a.implicit_hydrogens,
        ))
        for i, a in enumerate(mol.atoms)
    ]
    identifiers = set(invariants)
    for _ in range(radius):
        nxt = []
        for i in range(len(mol.atoms)):
            env = sorted(
                (_BOND_CODE[mol.bonds[b].order], invariants[j])
                for j, b in mol.adjacency[i]
            )
            parts = [invariants[i]]
            for code, inv in env:
                parts.append(code)
                parts.append(inv)
            nxt.append(_mix64(parts))
        invariants = nxt
        identifiers.update(invariants)
    bits = 0
    for ident in identifiers:
        bits |= 1 << (ident % n_bits)
    return Fingerprint(bits=bits, n_bits=n_bits, radius=radius)


def tanimoto(a: Fingerprint, b: Fingerprint) -> float:
    """Intersection over union of the on-bit sets; 1.0 when both are empty."""
    if a.n_bits != b.n_bits:
        raise LengthMismatchError(
            f"fingerprint lengths differ: {a.n_bits} vs {b.n_bits}"
        )
    union = (a.bits | b.bits).bit_count()
    if union == 0:
        return 1.0
    return (a.bits & b.bits).bit_count() / union


@dataclass(frozen=True)
class PropertyValue:
    property_id: str
    value: float | None
    status: str = "ok"  # ok | missing | error
    message: str | None = None

    def __post_init__(self):
        if self.status == "ok":
            if self.value is None or not (self.value == self.value):
                raise ValueError("ok status requires a finite value")


class UnknownPropertyError(KeyError):
    pass


@lru_cache(maxsize=1)
def _logp_table() -> dict[tuple[str, bool], float]:
    text = resources.files("molsteer.data").joinpath("logp_contributions.csv").read_text()
    table = {}
    for row in csv.DictReader(text.splitlines()):
        table[(row["element"], row["aromatic"] == "1")] = float(row["contribution"])
    return table


def _logp_estimate(mol: Molecule) -> float:
    table = _logp_table()
    total = 0.0
    h_term = table.get(("H", False), 0.0)
    for atom in mol.atoms:
        total += table.get((atom.element, atom.aromatic), table[(atom.element, False)])
        total += h_term * atom.implicit_hydrogens
    return round(total, 4)


def _ring_count(mol: Molecule) -> int:
    # cyclomatic number; molecules are connected by construction
    return len(mol.bonds) - len(mol.atoms) + 1


def _branch_points(mol: Molecule) -> int:
    return sum(1 for i in range(len(mol.atoms)) if mol.degree(i) >= 3)


def _sa_proxy(mol: Molecule) -> float:
    heavy = mol.heavy_atom_count
    score = 1.0 / (1.0 + 0.05 * heavy + 0.30 * _ring_count(mol) + 0.10 * _branch_points(mol))
    return round(score, 4)


def _hbd_count(mol: Molecule) -> int:
    return sum(
        1 for a in mol.atoms
        if a.element in ("N", "O") and a.implicit_hydrogens >= 1
    )


def _hba_count(mol: Molecule) -> int:
    return sum(1 for a in mol.atoms if a.element in ("N", "O"))


def _halogen_count(mol: Molecule) -> int:
    return sum(1 for a in mol.atoms if a.element in HALOGENS)


BUILTIN_PROPERTIES = {
    "mol_weight": molecular_weight,
    "logp_estimate": _logp_estimate,
    "sa_proxy": _sa_proxy,
    "ring_count": lambda mol: float(_ring_count(mol)),
    "hbd_count": lambda mol: float(_hbd_count(mol)),
    "hba_count": lambda mol: float(_hba_count(mol)),
    "heavy_atom_count": lambda mol: float(mol.heavy_atom_count),
    "halogen_count": lambda mol: float(_halogen_count(mol)),
}


def builtin_property(mol: Molecule, property_id: str) -> PropertyValue:
    try:
        fn = BUILTIN_PROPERTIES[property_id]
    except KeyError:
        raise UnknownPropertyError(property_id) from None
    return PropertyValue(property_id=property_id, value=float(fn(mol)))
