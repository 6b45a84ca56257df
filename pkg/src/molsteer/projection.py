"""Deterministic 2D embedding of fingerprint populations.

Top-2 PCA via the iterated power method on the centered 0/1 bit matrix:
tolerance 1e-9, at most 1000 iterations, all-ones start vector, and the
largest-magnitude loading of each component forced positive. Deterministic by
construction, so identical populations always land on identical pictures.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .metrics import Fingerprint

METHOD_ID = "pca-v1"
POWER_TOLERANCE = 1e-9
POWER_MAX_ITERATIONS = 1000
_ZERO_EIGENVALUE = 1e-12


@dataclass(frozen=True)
class ProjectionResult:
    coords: tuple[tuple[float, float], ...]
    explained_variance: tuple[float, float]
    method_id: str = METHOD_ID


def _bit_matrix(fingerprints: Sequence[Fingerprint]) -> np.ndarray:
    n_bits = fingerprints[0].n_bits
    matrix = np.zeros((len(fingerprints), n_bits), dtype=np.float64)
    for row, fp in enumerate(fingerprints):
        bits = fp.bits
        while bits:
            low = bits & -bits
            matrix[row, low.bit_length() - 1] = 1.0
            bits ^= low
    return matrix


def _power_component(centered: np.ndarray, deflate: np.ndarray | None) -> tuple[np.ndarray, float]:
    """Leading eigenvector/value of centered^T centered / n, after deflating
    the supplied component. Returns a zero vector for zero variance."""
    n, d = centered.shape

    def apply(v: np.ndarray) -> np.ndarray:
        if deflate is not None:
            v = v - np.dot(deflate, v) * deflate
        out = centered.T @ (centered @ v) / n
        if deflate is not None:
            out = out - np.dot(deflate, out) * deflate
        return out

    v = np.ones(d) / np.sqrt(d)
    eigenvalue = 0.0
    for _ in range(POWER_MAX_ITERATIONS):
        w = apply(v)
        norm = float(np.linalg.norm(w))
        if norm < _ZERO_EIGENVALUE:
            return np.zeros(d), 0.0
        w /= norm
        eigenvalue = norm
        if float(np.linalg.norm(w - v)) < POWER_TOLERANCE:
            v = w
            break
        v = w
    # sign convention: the largest-magnitude loading points positive
    peak = int(np.argmax(np.abs(v)))
    if v[peak] < 0:
        v = -v
    return v, eigenvalue


def project(fingerprints: Sequence[Fingerprint]) -> ProjectionResult:
    if not fingerprints:
        raise ValueError("need at least one fingerprint")
    n_bits = fingerprints[0].n_bits
    if any(fp.n_bits != n_bits for fp in fingerprints):
        raise ValueError("fingerprints must share n_bits")
    n = len(fingerprints)
    if n == 1:
        return ProjectionResult(((0.0, 0.0),), (0.0, 0.0))

    matrix = _bit_matrix(fingerprints)
    centered = matrix - matrix.mean(axis=0)
    total_variance = float((centered**2).sum()) / n
    if total_variance < _ZERO_EIGENVALUE:
        return ProjectionResult(tuple((0.0, 0.0) for _ in range(n)), (0.0, 0.0))

    v1, lam1 = _power_component(centered, None)
    v2, lam2 = _power_component(centered, v1 if lam1 > 0 else None)
    xs = centered @ v1 if lam1 > 0 else np.zeros(n)
    ys = centered @ v2 if lam2 > 0 else np.zeros(n)
    ev1 = lam1 / total_variance
    ev2 = lam2 / total_variance
    if ev2 > ev1:  # concession to rare non-convergence on flat spectra
        xs, ys, ev1, ev2 = ys, xs, ev2, ev1
    return ProjectionResult(
        coords=tuple((float(x), float(y)) for x, y in zip(xs, ys)),
        explained_variance=(min(ev1, 1.0), min(ev2, 1.0)),
    )
