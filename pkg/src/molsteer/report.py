"""Static report rendering: delimited data plus figures, written to files.

Everything renders through the Agg backend so reports work in headless runs
and CI. Figures are deliberately plain: score trajectories over generations,
the projection scatter of the latest population, and a structure grid drawn
straight from the server-side 2D layouts (the same coordinates the UI uses,
so depictions agree everywhere).
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
from matplotlib.lines import Line2D

from .molgraph import BondOrder, parse_smiles
from .session import Session

_BOND_GAP = 0.09
_GRID_COLUMNS = 4


def score_history_figure(session: Session, path: str | Path) -> Path:
    """Best and mean valid totals per generation."""
    indices, best, mean = [], [], []
    for snapshot in session.snapshots:
        totals = [
            ind.report.total for ind in snapshot.individuals
            if ind.report.valid
        ]
        if not totals:
            continue
        indices.append(snapshot.index)
        best.append(max(totals))
        mean.append(sum(totals) / len(totals))
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(indices, best, marker="o", label="best")
    ax.plot(indices, mean, marker="s", linestyle="--", label="mean")
    ax.set_xlabel("generation")
    ax.set_ylabel("total score")
    ax.set_ylim(0, 1)
    ax.legend(frameon=False)
    ax.spines["top"].set_visible(False)
    ax.spines["right"].set_visible(False)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def projection_figure(
    session: Session, path: str | Path, generation: int | None = None
) -> Path:
    """Projection scatter of one snapshot, colored by total score."""
    if generation is None:
        generation = session.snapshots[-1].index
    view = session.get_population(generation)
    xs, ys, cs = [], [], []
    for row in view["individuals"]:
        if row["projection"] is None:
            continue
        xs.append(row["projection"][0])
        ys.append(row["projection"][1])
        total = row["report"]["total"]
        cs.append(total if total is not None else 0.0)
    fig, ax = plt.subplots(figsize=(5, 5))
    scatter = ax.scatter(xs, ys, c=cs, cmap="viridis", vmin=0, vmax=1,
                         s=36, edgecolors="none")
    fig.colorbar(scatter, ax=ax, label="total score")
    ev = view["explained_variance"]
    ax.set_xlabel(f"component 1 ({ev[0]:.0%} var)" if ev else "component 1")
    ax.set_ylabel(f"component 2 ({ev[1]:.0%} var)" if ev else "component 2")
    ax.set_title(f"generation {generation}")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def _draw_molecule(ax, mol, coords) -> None:
    for idx, bond in enumerate(mol.bonds):
        (x1, y1), (x2, y2) = coords[bond.a], coords[bond.b]
        dx, dy = x2 - x1, y2 - y1
        length = (dx * dx + dy * dy) ** 0.5 or 1.0
        # unit normal for offsetting parallel strokes
        nx, ny = -dy / length * _BOND_GAP, dx / length * _BOND_GAP
        order = bond.order
        if order is BondOrder.SINGLE:
            offsets = [0.0]
        elif order is BondOrder.DOUBLE:
            offsets = [-0.5, 0.5]
        elif order is BondOrder.TRIPLE:
            offsets = [-1.0, 0.0, 1.0]
        else:
            offsets = [0.0]
        for off in offsets:
            ax.add_line(Line2D(
                [x1 + nx * off, x2 + nx * off],
                [y1 + ny * off, y2 + ny * off],
                color="0.2", linewidth=1.2, zorder=1,
            ))
        if order is BondOrder.AROMATIC:
            ax.add_line(Line2D(
                [x1 + nx, x2 + nx], [y1 + ny, y2 + ny],
                color="0.2", linewidth=0.9, linestyle=(0, (2, 2)), zorder=1,
            ))
    for atom, (x, y) in zip(mol.atoms, coords):
        if atom.element == "C" and atom.formal_charge == 0:
            continue
        label = atom.element
        if atom.implicit_hydrogens == 1:
            label += "H"
        elif atom.implicit_hydrogens > 1:
            label += f"H{atom.implicit_hydrogens}"
        if atom.formal_charge:
            label += "+" if atom.formal_charge > 0 else "-"
        ax.text(x, y, label, fontsize=8, ha="center", va="center",
                zorder=2, bbox=dict(boxstyle="round,pad=0.08",
                                    facecolor="white", edgecolor="none"))
    ax.set_aspect("equal")
    ax.axis("off")


def structure_grid_figure(
    session: Session,
    path: str | Path,
    generation: int | None = None,
    max_cells: int = 12,
) -> Path:
    """Top-scoring structures of one snapshot on a fixed grid."""
    if generation is None:
        generation = session.snapshots[-1].index
    view = session.get_population(generation, sort="total", order="desc")
    rows = view["individuals"][:max_cells]
    columns = min(_GRID_COLUMNS, max(1, len(rows)))
    n_rows = (len(rows) + columns - 1) // columns
    fig, axes = plt.subplots(
        n_rows, columns, figsize=(2.4 * columns, 2.4 * n_rows), squeeze=False
    )
    for ax in axes.flat:
        ax.axis("off")
    for ax, row in zip(axes.flat, rows):
        mol = parse_smiles(row["canonical_smiles"])[0]
        _draw_molecule(ax, mol, row["layout"])
        total = row["report"]["total"]
        title = "invalid" if total is None else f"{total:.3f}"
        ax.set_title(title, fontsize=8)
    fig.suptitle(f"generation {generation}, best {len(rows)}", fontsize=10)
    path = Path(path)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_report(
    session: Session, out_dir: str | Path, generation: int | None = None
) -> list[Path]:
    """Write the delimited export and the figures next to each other."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "population.csv"
    csv_path.write_text(session.export_csv())
    written = [csv_path]
    if session.snapshots:
        written.append(
            score_history_figure(session, out / "score_history.png")
        )
        written.append(
            projection_figure(session, out / "projection.png", generation)
        )
        written.append(
            structure_grid_figure(session, out / "structures.png", generation)
        )
    return written
