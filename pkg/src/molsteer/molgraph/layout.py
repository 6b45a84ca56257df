"""Deterministic 2D depiction coordinates.

Rings are laid out as regular polygons (fused rings share edges, spiro
rings share a vertex), acyclic stretches as 120-degree zigzag chains.  A
repulsion post-pass enforces a minimum pairwise distance of half a bond
length; when it cannot, the layout falls back to a circle and says so
instead of failing.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

from .model import Molecule

MIN_DISTANCE = 0.5
_REPULSION_ROUNDS = 60


@dataclass(frozen=True)
class Layout2D:
    coords: tuple[tuple[float, float], ...]
    fallback: bool = False


def layout_2d(mol: Molecule) -> Layout2D:
    n = len(mol.atoms)
    if n == 1:
        return Layout2D(((0.0, 0.0),))

    cycles = _cycle_basis(mol)
    system_of: dict[int, int] = {}
    systems: list[list[tuple[int, ...]]] = []
    for cycle in cycles:
        touching = {system_of[a] for a in cycle if a in system_of}
        if not touching:
            sys_id = len(systems)
            systems.append([cycle])
        else:
            sys_id = min(touching)
            merged = [cycle]
            for other_id in sorted(touching - {sys_id}, reverse=True):
                merged.extend(systems[other_id])
                for atoms_in in systems[other_id]:
                    for a in atoms_in:
                        system_of[a] = sys_id
                systems[other_id] = []
            systems[sys_id].extend(merged)
        for a in cycle:
            system_of[a] = sys_id

    positions: dict[int, tuple[float, float]] = {}
    depth: dict[int, int] = {}
    placed_systems: set[int] = set()

    def place_system(sys_id: int, entry: int | None, incoming) -> list[int]:
        placed_systems.add(sys_id)
        pending = [c for c in systems[sys_id] if c]
        new_atoms: list[int] = []
        if entry is None:
            first = min(pending, key=lambda c: (len(c), c))
            _place_polygon_at_origin(first, positions)
            new_atoms.extend(first)
            pending.remove(first)
        else:
            candidates = [c for c in pending if entry in c]
            first = min(candidates, key=lambda c: (len(c), c))
            new_atoms.extend(_place_ring(first, positions, incoming))
            pending.remove(first)
        while pending:
            ready = [c for c in pending if any(a in positions for a in c)]
            if not ready:
                ready = pending
            nxt = max(
                ready,
                key=lambda c: (
                    sum(1 for a in c if a in positions),
                    -len(c),
                    tuple(-a for a in c),
                ),
            )
            new_atoms.extend(_place_ring(nxt, positions, None))
            pending.remove(nxt)
        return new_atoms

    if 0 in system_of:
        fresh = place_system(system_of[0], None, None)
    else:
        positions[0] = (0.0, 0.0)
        fresh = [0]
    for a in fresh:
        depth[a] = 0

    queue = deque(sorted(fresh))
    while queue:
        u = queue.popleft()
        for w in sorted(mol.neighbors(u)):
            if w in positions:
                continue
            direction = _free_direction(mol, u, positions, depth.get(u, 0))
            positions[w] = (
                positions[u][0] + direction[0],
                positions[u][1] + direction[1],
            )
            depth[w] = depth.get(u, 0) + 1
            if w in system_of and system_of[w] not in placed_systems:
                fresh = place_system(system_of[w], w, direction)
                for a in fresh:
                    depth.setdefault(a, depth[w] + 1)
                queue.extend(sorted(set(fresh) | {w}))
            else:
                queue.append(w)

    coords = [positions[i] for i in range(n)]
    if _relax(coords):
        return Layout2D(tuple(coords))
    return Layout2D(_circle_layout(n), fallback=True)


# -- ring machinery -------------------------------------------------------


def _cycle_basis(mol: Molecule) -> list[tuple[int, ...]]:
    """Short simple cycles covering every ring bond (greedy GF(2) basis)."""
    ring = sorted(mol.ring_bond_indices)
    if not ring:
        return []
    ring_set = set(ring)
    candidates = []
    for bond_idx in ring:
        bond = mol.bonds[bond_idx]
        path = _shortest_path(mol, bond.a, bond.b, bond_idx, ring_set)
        if path is None:
            continue
        bonds_in_cycle = {bond_idx}
        for x, y in zip(path, path[1:]):
            for nbr, bidx in mol.adjacency[x]:
                if nbr == y:
                    bonds_in_cycle.add(bidx)
                    break
        candidates.append((tuple(path), frozenset(bonds_in_cycle)))
    candidates.sort(key=lambda item: (len(item[0]), item[0]))

    basis: list[tuple[int, frozenset[int]]] = []
    cycles = []
    for path, bond_set in candidates:
        reduced = set(bond_set)
        for pivot, vector in basis:
            if pivot in reduced:
                reduced ^= vector
        if reduced:
            basis.append((min(reduced), frozenset(reduced)))
            basis.sort(key=lambda item: item[0])
            cycles.append(path)
    return cycles


def _shortest_path(mol, a, b, skip_bond, ring_set):
    parent = {a: (-1, -1)}
    frontier = [a]
    while frontier:
        nxt = []
        for node in frontier:
            for nbr, bidx in sorted(mol.adjacency[node]):
                if bidx == skip_bond or bidx not in ring_set or nbr in parent:
                    continue
                parent[nbr] = (node, bidx)
                if nbr == b:
                    path = [b]
                    cur = b
                    while cur != a:
                        cur = parent[cur][0]
                        path.append(cur)
                    return tuple(reversed(path))
                nxt.append(nbr)
        frontier = nxt
    return None


def _orient(cycle: tuple[int, ...]) -> list[int]:
    k = len(cycle)
    pivot = cycle.index(min(cycle))
    seq = [cycle[(pivot + j) % k] for j in range(k)]
    if seq[-1] < seq[1]:
        seq = [seq[0]] + seq[:0:-1]
    return seq


def _place_polygon_at_origin(cycle, positions) -> None:
    seq = _orient(cycle)
    k = len(seq)
    radius = 0.5 / math.sin(math.pi / k)
    for j, atom in enumerate(seq):
        angle = math.pi / 2 + 2.0 * math.pi * j / k
        positions[atom] = (radius * math.cos(angle), radius * math.sin(angle))


def _place_ring(cycle, positions, incoming) -> list[int]:
    """Place one ring given whatever of it is already positioned."""
    seq = _orient(cycle)
    k = len(seq)
    placed = [a for a in seq if a in positions]
    new_atoms = [a for a in seq if a not in positions]
    if not new_atoms:
        return []
    radius = 0.5 / math.sin(math.pi / k)

    adjacent_pair = None
    for j in range(k):
        u, v = seq[j], seq[(j + 1) % k]
        if u in positions and v in positions:
            adjacent_pair = j
            break

    if len(placed) == 1:
        u = placed[0]
        away = incoming if incoming is not None else (1.0, 0.0)
        ux, uy = positions[u]
        center = (ux + radius * away[0], uy + radius * away[1])
        base = math.atan2(uy - center[1], ux - center[0])
        start = seq.index(u)
        for j in range(1, k):
            atom = seq[(start + j) % k]
            angle = base + 2.0 * math.pi * j / k
            positions[atom] = (
                center[0] + radius * math.cos(angle),
                center[1] + radius * math.sin(angle),
            )
        return new_atoms
    if adjacent_pair is not None:
        _walk_polygon(seq, adjacent_pair, positions)
        _arc_fill(seq, positions)
        return [a for a in new_atoms if a in positions]
    if len(placed) == 0:
        # detached ring inside a partially placed system; rare, keep it sane
        _place_polygon_at_origin(cycle, positions)
        return new_atoms
    _arc_fill(seq, positions)
    return [a for a in new_atoms if a in positions]


def _walk_polygon(seq, start_edge, positions) -> None:
    k = len(seq)
    u, v = seq[start_edge], seq[(start_edge + 1) % k]
    ux, uy = positions[u]
    vx, vy = positions[v]
    reference = _centroid(
        [pos for atom, pos in positions.items() if atom not in (u, v)]
    )
    heading = math.atan2(vy - uy, vx - ux)
    turn = 2.0 * math.pi / k
    best = None
    for sign in (1.0, -1.0):
        pts = {}
        h = heading
        x, y = vx, vy
        for j in range(2, k):
            h += sign * turn
            x += math.cos(h)
            y += math.sin(h)
            pts[seq[(start_edge + j) % k]] = (x, y)
        score = sum(
            math.dist(p, reference) for p in pts.values()
        ) if reference else sign
        if best is None or score > best[0]:
            best = (score, pts)
    for atom, pos in best[1].items():
        if atom not in positions:
            positions[atom] = pos


def _arc_fill(seq, positions) -> list[int]:
    """Fill remaining unplaced runs of a bridged ring along gentle arcs."""
    k = len(seq)
    filled = []
    reference = _centroid(list(positions.values()))
    for j in range(k):
        if seq[j] in positions:
            continue
        run = [seq[j]]
        left = seq[(j - 1) % k]
        step = 1
        while seq[(j + step) % k] not in positions:
            run.append(seq[(j + step) % k])
            step += 1
        right = seq[(j + step) % k]
        if left not in positions or right not in positions:
            continue
        lx, ly = positions[left]
        rx, ry = positions[right]
        nx, ny = -(ry - ly), rx - lx
        norm = math.hypot(nx, ny) or 1.0
        nx, ny = nx / norm, ny / norm
        mid = ((lx + rx) / 2.0, (ly + ry) / 2.0)
        if reference and (
            (mid[0] - reference[0]) * nx + (mid[1] - reference[1]) * ny
        ) < 0:
            nx, ny = -nx, -ny
        bulge = 0.4 + 0.2 * len(run)
        for pos_idx, atom in enumerate(run):
            if atom in positions:
                continue
            t = (pos_idx + 1) / (len(run) + 1)
            positions[atom] = (
                lx + (rx - lx) * t + nx * bulge * math.sin(math.pi * t),
                ly + (ry - ly) * t + ny * bulge * math.sin(math.pi * t),
            )
            filled.append(atom)
    return filled


def _centroid(points):
    if not points:
        return None
    return (
        sum(p[0] for p in points) / len(points),
        sum(p[1] for p in points) / len(points),
    )


# -- chains ----------------------------------------------------------------


def _free_direction(mol, u, positions, parity) -> tuple[float, float]:
    existing = []
    ux, uy = positions[u]
    for nbr in sorted(mol.neighbors(u)):
        if nbr in positions:
            dx, dy = positions[nbr][0] - ux, positions[nbr][1] - uy
            norm = math.hypot(dx, dy)
            if norm > 1e-12:
                existing.append(math.atan2(dy, dx))
    if not existing:
        return (1.0, 0.0)
    if len(existing) == 1:
        sign = 1.0 if parity % 2 == 0 else -1.0
        angle = existing[0] + sign * 2.0 * math.pi / 3.0
        return (math.cos(angle), math.sin(angle))
    angles = sorted(a % (2.0 * math.pi) for a in existing)
    best_gap, best_angle = -1.0, 0.0
    for i, a in enumerate(angles):
        b = angles[(i + 1) % len(angles)] + (2.0 * math.pi if i + 1 == len(angles) else 0.0)
        gap = b - a
        if gap > best_gap + 1e-12:
            best_gap, best_angle = gap, (a + b) / 2.0
    return (math.cos(best_angle), math.sin(best_angle))


# -- post-pass --------------------------------------------------------------


def _relax(coords: list[tuple[float, float]]) -> bool:
    n = len(coords)
    for _ in range(_REPULSION_ROUNDS):
        moved = False
        for i in range(n):
            for j in range(i + 1, n):
                dx = coords[j][0] - coords[i][0]
                dy = coords[j][1] - coords[i][1]
                d = math.hypot(dx, dy)
                if d >= MIN_DISTANCE:
                    continue
                if d < 1e-9:
                    angle = (0.618033988749895 * (i * n + j)) % 1.0 * 2.0 * math.pi
                    dx, dy, d = math.cos(angle) * 1e-6, math.sin(angle) * 1e-6, 1e-6
                push = (MIN_DISTANCE - d) / 2.0 + 0.01
                ux, uy = dx / d, dy / d
                coords[i] = (coords[i][0] - ux * push, coords[i][1] - uy * push)
                coords[j] = (coords[j][0] + ux * push, coords[j][1] + uy * push)
                moved = True
        if not moved:
            return True
    return _min_distance(coords) >= MIN_DISTANCE


def _min_distance(coords) -> float:
    best = math.inf
    for i in range(len(coords)):
        for j in range(i + 1, len(coords)):
            best = min(best, math.dist(coords[i], coords[j]))
    return best


def _circle_layout(n: int) -> tuple[tuple[float, float], ...]:
    radius = 0.5 / math.sin(math.pi / n)
    return tuple(
        (
            radius * math.cos(2.0 * math.pi * j / n),
            radius * math.sin(2.0 * math.pi * j / n),
        )
        for j in range(n)
    )
