"""The evolutionary loop: selection, graph crossover, graph mutation,
deduplication, tombstone enforcement, and generation stepping.

Selection is linear-ranking roulette over valid-report individuals. Crossover
cuts one acyclic single bond per parent and joins one fragment from each with
a new single bond; ring surgery is left to the mutation catalogue. Every
offspring is rebuilt through the molecular-graph constructor, so anything a
snapshot contains has passed valence, connectivity, and size checks.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

from .molgraph import (
    AROMATIC_ELEMENTS,
    Atom,
    Bond,
    BondOrder,
    Molecule,
    MoleculeError,
    parse_smiles,
)
from .scoring import ScoreReport, ScoringSpec, evaluate_population

GENERATION_ATTEMPT_FACTOR = 50

# palette for new or substituted atoms, weighted toward carbon
_ELEMENT_PALETTE = (
    "C", "C", "C", "C", "C", "C",
    "N", "N", "O", "O", "S", "F", "Cl", "Br",
)

_NONAROMATIC_ORDERS = (BondOrder.SINGLE, BondOrder.DOUBLE, BondOrder.TRIPLE)


class NoValidCandidatesError(RuntimeError):
    pass


def canonical_form(mol: Molecule) -> tuple[Molecule, str]:
    """Rebuild a molecule in canonical atom order.

    Individuals are stored this way so that index-based random draws (mutation
    targets, cut bonds) depend only on the canonical key, never on the atom
    order an operator happened to produce. Exported sessions therefore resume
    bit-identically.
    """
    key = mol.canonical_smiles
    return parse_smiles(key)[0], key


class PopulationCollapseError(RuntimeError):
    pass


@dataclass(frozen=True)
class GAConfig:
    population_size: int = 50
    generations_per_run: int = 10
    mutation_rate: float = 0.5
    crossover_rate: float = 0.8
    elite_count: int = 2
    selection_pressure: float = 1.5
    rng_seed: int = 0
    max_operator_retries: int = 20

    def __post_init__(self):
        if self.population_size < 4:
            raise ValueError("population_size must be at least 4")
        if self.generations_per_run < 1:
            raise ValueError("generations_per_run must be at least 1")
        for name in ("mutation_rate", "crossover_rate"):
            rate = getattr(self, name)
            if not 0.0 <= rate <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        if not 0 <= self.elite_count < self.population_size:
            raise ValueError("elite_count must be smaller than population_size")
        if not 1.0 <= self.selection_pressure <= 2.0:
            raise ValueError("selection_pressure must be in [1, 2]")
        if not 0 <= self.rng_seed < 2**64:
            raise ValueError("rng_seed must be a 64-bit integer")
        if self.max_operator_retries < 0:
            raise ValueError("max_operator_retries must be non-negative")

    def to_dict(self) -> dict:
        return {
            "population_size": self.population_size,
            "generations_per_run": self.generations_per_run,
            "mutation_rate": self.mutation_rate,
            "crossover_rate": self.crossover_rate,
            "elite_count": self.elite_count,
            "selection_pressure": self.selection_pressure,
            "rng_seed": self.rng_seed,
            "max_operator_retries": self.max_operator_retries,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "GAConfig":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})


@dataclass(frozen=True)
class Origin:
    kind: str  # seed | crossover | mutation | manual_edit | llm
    parents: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {"kind": self.kind, "parents": list(self.parents)}

    @classmethod
    def from_dict(cls, d: Mapping) -> "Origin":
        return cls(kind=d["kind"], parents=tuple(d.get("parents", ())))


@dataclass(frozen=True)
class Individual:
    molecule: Molecule
    canonical_key: str
    report: ScoreReport
    origin: Origin
    generation_born: int

    def __post_init__(self):
        if self.canonical_key != self.molecule.canonical_smiles:
            raise ValueError("canonical_key must match the molecule")


@dataclass(frozen=True)
class GenerationSnapshot:
    index: int
    individuals: tuple[Individual, ...]
    config_used: GAConfig
    spec_version_used: int
    exhausted: bool = False

    def __post_init__(self):
        keys = [ind.canonical_key for ind in self.individuals]
        if len(keys) != len(set(keys)):
            raise ValueError("snapshot contains duplicate canonical keys")


def _ranked_valid(population: Sequence[Individual]) -> list[Individual]:
    valid = [ind for ind in population if ind.report.valid]
    return sorted(valid, key=lambda ind: (-ind.report.total, ind.canonical_key))


def select_parent(
    population: Sequence[Individual],
    rng: random.Random,
    pressure: float = 1.5,
) -> Individual:
    """Linear-ranking roulette: P(rank r of n) proportional to
    pressure - (2*pressure - 2)*(r - 1)/(n - 1). Invalid reports never win."""
    ranked = _ranked_valid(population)
    if not ranked:
        raise NoValidCandidatesError("no valid-report individuals to select from")
    n = len(ranked)
    if n == 1:
        return ranked[0]
    weights = [
        pressure - (2.0 * pressure - 2.0) * r / (n - 1) for r in range(n)
    ]
    total = sum(weights)
    pick = rng.random() * total
    cumulative = 0.0
    for ind, w in zip(ranked, weights):
        cumulative += w
        if pick < cumulative:
            return ind
    return ranked[-1]


def _acyclic_single_bonds(mol: Molecule) -> list[int]:
    ring = mol.ring_bond_indices
    return [
        i for i, bond in enumerate(mol.bonds)
        if bond.order is BondOrder.SINGLE and i not in ring
    ]


def _fragment_atoms(mol: Molecule, start: int, excluded_bond: int) -> list[int]:
    seen = {start}
    frontier = [start]
    while frontier:
        cur = frontier.pop()
        for nbr, bidx in mol.adjacency[cur]:
            if bidx == excluded_bond or nbr in seen:
                continue
            seen.add(nbr)
            frontier.append(nbr)
    return sorted(seen)


def _join_fragments(
    mol_a: Molecule, keep_a: list[int], attach_a: int,
    mol_b: Molecule, keep_b: list[int], attach_b: int,
) -> Molecule:
    index_a = {old: new for new, old in enumerate(keep_a)}
    index_b = {old: new + len(keep_a) for new, old in enumerate(keep_b)}
    atoms = [mol_a.atoms[i] for i in keep_a] + [mol_b.atoms[i] for i in keep_b]
    bonds = []
    for bond in mol_a.bonds:
        if bond.a in index_a and bond.b in index_a:
            bonds.append(Bond(index_a[bond.a], index_a[bond.b], bond.order))
    for bond in mol_b.bonds:
        if bond.a in index_b and bond.b in index_b:
            bonds.append(Bond(index_b[bond.a], index_b[bond.b], bond.order))
    bonds.append(Bond(index_a[attach_a], index_b[attach_b], BondOrder.SINGLE))
    return Molecule.from_graph(atoms, bonds)


def crossover(
    parent_a: Molecule,
    parent_b: Molecule,
    rng: random.Random,
    retries: int = 20,
) -> Molecule | None:
    """Cut one acyclic single bond per parent, join one fragment from each.

    Returns None (rejected) when either parent has no acyclic single bond or
    no valid offspring appears within the retry budget.
    """
    cuts_a = _acyclic_single_bonds(parent_a)
    cuts_b = _acyclic_single_bonds(parent_b)
    if not cuts_a or not cuts_b:
        return None
    for _ in range(retries + 1):
        cut_a = rng.choice(cuts_a)
        cut_b = rng.choice(cuts_b)
        bond_a = parent_a.bonds[cut_a]
        bond_b = parent_b.bonds[cut_b]
        attach_a = bond_a.a if rng.random() < 0.5 else bond_a.b
        attach_b = bond_b.a if rng.random() < 0.5 else bond_b.b
        keep_a = _fragment_atoms(parent_a, attach_a, cut_a)
        keep_b = _fragment_atoms(parent_b, attach_b, cut_b)
        try:
            return _join_fragments(
                parent_a, keep_a, attach_a, parent_b, keep_b, attach_b
            )
        except MoleculeError:
            continue
    return None


# -- mutation catalogue -------------------------------------------------------
# Each edit returns a new Molecule or None when no valid application exists
# for the drawn targets. The catalogue probabilities are fixed:
#   append 0.25, delete 0.15, substitute 0.20, bond order 0.15,
#   insert 0.10, form ring 0.075, break ring 0.075.


def _rebuild(atoms: list[Atom], bonds: list[Bond]) -> Molecule | None:
    try:
        return Molecule.from_graph(atoms, bonds)
    except MoleculeError:
        return None


def _fresh_atom(element: str) -> Atom:
    return Atom(element=element)


def _can_gain_bond(atom: Atom) -> bool:
    return not atom.h_pinned and atom.implicit_hydrogens >= 1


def try_append_atom(mol: Molecule, rng: random.Random) -> Molecule | None:
    hosts = [i for i, a in enumerate(mol.atoms) if _can_gain_bond(a)]
    if not hosts:
        return None
    host = rng.choice(hosts)
    element = rng.choice(_ELEMENT_PALETTE)
    atoms = list(mol.atoms) + [_fresh_atom(element)]
    bonds = list(mol.bonds) + [Bond(host, len(mol.atoms), BondOrder.SINGLE)]
    return _rebuild(atoms, bonds)


def try_delete_terminal_atom(mol: Molecule, rng: random.Random) -> Molecule | None:
    if len(mol.atoms) < 2:
        return None  # molecules never become empty
    leaves = [i for i in range(len(mol.atoms)) if mol.degree(i) == 1]
    if not leaves:
        return None
    victim = rng.choice(leaves)
    keep = [i for i in range(len(mol.atoms)) if i != victim]
    index = {old: new for new, old in enumerate(keep)}
    atoms = [mol.atoms[i] for i in keep]
    bonds = [
        Bond(index[b.a], index[b.b], b.order)
        for b in mol.bonds
        if b.a != victim and b.b != victim
    ]
    return _rebuild(atoms, bonds)


def try_substitute_element(mol: Molecule, rng: random.Random) -> Molecule | None:
    target = rng.randrange(len(mol.atoms))
    current = mol.atoms[target]
    candidates = [e for e in _ELEMENT_PALETTE if e != current.element]
    if current.aromatic:
        candidates = [e for e in candidates if e in AROMATIC_ELEMENTS]
    if not candidates:
        return None
    element = rng.choice(candidates)
    atoms = list(mol.atoms)
    atoms[target] = Atom(element=element, aromatic=current.aromatic)
    return _rebuild(atoms, list(mol.bonds))


def try_change_bond_order(mol: Molecule, rng: random.Random) -> Molecule | None:
    editable = [
        i for i, b in enumerate(mol.bonds) if b.order is not BondOrder.AROMATIC
    ]
    if not editable:
        return None
    target = rng.choice(editable)
    current = mol.bonds[target]
    order = rng.choice([o for o in _NONAROMATIC_ORDERS if o is not current.order])
    bonds = list(mol.bonds)
    bonds[target] = Bond(current.a, current.b, order)
    return _rebuild(list(mol.atoms), bonds)


def try_insert_atom(mol: Molecule, rng: random.Random) -> Molecule | None:
    editable = [
        i for i, b in enumerate(mol.bonds) if b.order is not BondOrder.AROMATIC
    ]
    if not editable:
        return None
    target = rng.choice(editable)
    old = mol.bonds[target]
    element = rng.choice(_ELEMENT_PALETTE)
    atoms = list(mol.atoms) + [_fresh_atom(element)]
    fresh = len(mol.atoms)
    bonds = [b for i, b in enumerate(mol.bonds) if i != target]
    bonds.append(Bond(old.a, fresh, BondOrder.SINGLE))
    bonds.append(Bond(fresh, old.b, BondOrder.SINGLE))
    return _rebuild(atoms, bonds)


def _distances_from(mol: Molecule, start: int) -> dict[int, int]:
    dist = {start: 0}
    frontier = [start]
    while frontier:
        nxt = []
        for cur in frontier:
            for nbr, _ in mol.adjacency[cur]:
                if nbr not in dist:
                    dist[nbr] = dist[cur] + 1
                    nxt.append(nbr)
        frontier = nxt
    return dist


def try_form_ring(mol: Molecule, rng: random.Random) -> Molecule | None:
    """Close a 5- or 6-ring between atoms at graph distance 4 or 5."""
    pairs = []
    for a in range(len(mol.atoms)):
        if not _can_gain_bond(mol.atoms[a]):
            continue
        dist = _distances_from(mol, a)
        for b, d in dist.items():
            if b <= a or d not in (4, 5):
                continue
            if not _can_gain_bond(mol.atoms[b]):
                continue
            if mol.bond_between(a, b) is None:
                pairs.append((a, b))
    if not pairs:
        return None
    a, b = pairs[rng.randrange(len(pairs))]
    bonds = list(mol.bonds) + [Bond(a, b, BondOrder.SINGLE)]
    return _rebuild(list(mol.atoms), bonds)


def try_break_ring_bond(mol: Molecule, rng: random.Random) -> Molecule | None:
    ring = sorted(mol.ring_bond_indices)
    if not ring:
        return None
    target = ring[rng.randrange(len(ring))]
    bonds = [b for i, b in enumerate(mol.bonds) if i != target]
    return _rebuild(list(mol.atoms), bonds)


_CATALOGUE: tuple[tuple[float, Callable], ...] = (
    (0.25, try_append_atom),
    (0.15, try_delete_terminal_atom),
    (0.20, try_substitute_element),
    (0.15, try_change_bond_order),
    (0.10, try_insert_atom),
    (0.075, try_form_ring),
    (0.075, try_break_ring_bond),
)


def mutate(
    mol: Molecule, rng: random.Random, retries: int = 20
) -> Molecule | None:
    """Draw one edit from the catalogue, validate, resample on failure."""
    for _ in range(retries + 1):
        pick = rng.random()
        cumulative = 0.0
        edit = _CATALOGUE[-1][1]
        for prob, fn in _CATALOGUE:
            cumulative += prob
            if pick < cumulative:
                edit = fn
                break
        result = edit(mol, rng)
        if result is not None:
            return result
    return None


def evolve_generation(
    snapshot: GenerationSnapshot,
    config: GAConfig,
    spec: ScoringSpec,
    tombstones: frozenset[str] | set[str],
    rng: random.Random,
    evaluate: Callable[[Sequence[Molecule]], list[ScoreReport]] | None = None,
) -> GenerationSnapshot:
    """Produce the next snapshot: elites carried, slots filled by crossover /
    mutation / parent copies, deduplicated against the new generation and the
    tombstone set.

    ``evaluate`` scores a list of molecules under ``spec``; the default is
    local-only evaluation. Individuals carrying reports from an older spec
    version are re-scored before selection.
    """
    if evaluate is None:
        evaluate = lambda mols: evaluate_population(mols, spec)

    pool = [
        ind for ind in snapshot.individuals
        if ind.canonical_key not in tombstones
    ]
    if not pool:
        raise PopulationCollapseError("every candidate is tombstoned")

    if any(ind.report.spec_version != spec.version for ind in pool):
        reports = evaluate([ind.molecule for ind in pool])
        pool = [replace(ind, report=rep) for ind, rep in zip(pool, reports)]

    ranked = _ranked_valid(pool)
    if not ranked:
        raise PopulationCollapseError("no valid-report candidates remain")

    next_index = snapshot.index + 1
    elites = ranked[: config.elite_count]
    members: list[Individual] = list(elites)
    taken = {ind.canonical_key for ind in members}
    pending: list[tuple[Molecule, str, Origin]] = []

    def admit(key: str) -> bool:
        return key not in taken and key not in tombstones

    attempts = 0
    budget = config.population_size * GENERATION_ATTEMPT_FACTOR
    while len(members) + len(pending) < config.population_size and attempts < budget:
        attempts += 1
        child: Molecule | None = None
        origin: Origin | None = None
        if rng.random() < config.crossover_rate:
            pa = select_parent(pool, rng, config.selection_pressure)
            pb = select_parent(pool, rng, config.selection_pressure)
            child = crossover(
                pa.molecule, pb.molecule, rng, config.max_operator_retries
            )
            if child is not None:
                origin = Origin("crossover", (pa.canonical_key, pb.canonical_key))
            else:
                child = mutate(pa.molecule, rng, config.max_operator_retries)
                if child is not None:
                    origin = Origin("mutation", (pa.canonical_key,))
                else:
                    if admit(pa.canonical_key):
                        members.append(pa)
                        taken.add(pa.canonical_key)
                    continue
        elif rng.random() < config.mutation_rate:
            parent = select_parent(pool, rng, config.selection_pressure)
            child = mutate(parent.molecule, rng, config.max_operator_retries)
            if child is not None:
                origin = Origin("mutation", (parent.canonical_key,))
            else:
                if admit(parent.canonical_key):
                    members.append(parent)
                    taken.add(parent.canonical_key)
                continue
        else:
            parent = select_parent(pool, rng, config.selection_pressure)
            if admit(parent.canonical_key):
                members.append(parent)
                taken.add(parent.canonical_key)
            continue

        child, key = canonical_form(child)
        if not admit(key):
            continue
        pending.append((child, key, origin))
        taken.add(key)

    exhausted = len(members) + len(pending) < config.population_size
    if pending:
        reports = evaluate([mol for mol, _, _ in pending])
        for (mol, key, origin), report in zip(pending, reports):
            members.append(
                Individual(
                    molecule=mol,
                    canonical_key=key,
                    report=report,
                    origin=origin,
                    generation_born=next_index,
                )
            )

    return GenerationSnapshot(
        index=next_index,
        individuals=tuple(members),
        config_used=config,
        spec_version_used=spec.version,
        exhausted=exhausted,
    )


def seed_snapshot(
    molecules: Sequence[Molecule],
    config: GAConfig,
    spec: ScoringSpec,
    evaluate: Callable[[Sequence[Molecule]], list[ScoreReport]] | None = None,
) -> GenerationSnapshot:
    """Generation 0 from a deduplicated seed set."""
    if evaluate is None:
        evaluate = lambda mols: evaluate_population(mols, spec)
    unique: list[tuple[Molecule, str]] = []
    seen: set[str] = set()
    for mol in molecules:
        normalized, key = canonical_form(mol)
        if key in seen:
            continue
        seen.add(key)
        unique.append((normalized, key))
    if not unique:
        raise PopulationCollapseError("empty seed set")
    reports = evaluate([mol for mol, _ in unique])
    individuals = tuple(
        Individual(
            molecule=mol,
            canonical_key=key,
            report=report,
            origin=Origin("seed"),
            generation_born=0,
        )
        for (mol, key), report in zip(unique, reports)
    )
    return GenerationSnapshot(
        index=0,
        individuals=individuals,
        config_used=config,
        spec_version_used=spec.version,
    )
