"""Molecular graphs: SMILES parsing, canonical form, valence and layout."""

from .canon import canonical_ranks, write_canonical_smiles
from .layout import Layout2D, layout_2d
from .model import (
    AROMATIC_ELEMENTS,
    ATOMIC_MASSES,
    HALOGENS,
    MAX_HEAVY_ATOMS,
    SUPPORTED_ELEMENTS,
    Atom,
    Bond,
    BondOrder,
    Molecule,
    MoleculeError,
    ValenceError,
    allowed_valences,
    molecular_weight,
    permuted,
    ring_bonds,
    validate_valence,
)
from .smiles import (
    EmptyInputError,
    SmilesError,
    SmilesSyntaxError,
    UnbalancedParenthesisError,
    UnclosedRingBondError,
    UnknownElementError,
    ValenceViolationError,
    parse_single,
    parse_smiles,
)


def canonical_smiles(smiles_or_mol) -> str:
    """Canonical SMILES for a molecule or the first fragment of a string."""
    if isinstance(smiles_or_mol, Molecule):
        return smiles_or_mol.canonical_smiles
    return parse_single(smiles_or_mol).canonical_smiles


__all__ = [
    "AROMATIC_ELEMENTS",
    "ATOMIC_MASSES",
    "Atom",
    "Bond",
    "BondOrder",
    "EmptyInputError",
    "HALOGENS",
    "Layout2D",
    "MAX_HEAVY_ATOMS",
    "Molecule",
    "MoleculeError",
    "SmilesError",
    "SmilesSyntaxError",
    "SUPPORTED_ELEMENTS",
    "UnbalancedParenthesisError",
    "UnclosedRingBondError",
    "UnknownElementError",
    "ValenceError",
    "ValenceViolationError",
    "allowed_valences",
    "canonical_ranks",
    "canonical_smiles",
    "layout_2d",
    "molecular_weight",
    "parse_single",
    "parse_smiles",
    "permuted",
    "ring_bonds",
    "validate_valence",
    "write_canonical_smiles",
]
