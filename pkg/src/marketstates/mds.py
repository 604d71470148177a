"""Pairwise distances between epoch matrices and classical (Torgerson) MDS.

The distance between two epoch matrices is taken over their strictly-
upper-triangle entries, either as the mean absolute difference (l1_mean)
or the Euclidean norm (l2). L1 distances are generally not Euclidean-
realizable, so negative eigenvalues of the double-centered matrix can
occur; they are clamped to zero and flagged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import eigsh
from scipy.spatial.distance import pdist, squareform

from .correlation import EpochCorrelation, upper_triangle
from .errors import DataError

# below this size a dense eigh is cheaper than iterative top-k
DENSE_EIG_CUTOFF = 256


@dataclass
class DistanceMatrix:
    """Symmetric pairwise distances between epochs."""

    n: int
    values: np.ndarray
    metric: str  # "l1_mean" or "l2"


@dataclass
class Embedding3D:
    """Low-dimensional coordinates from classical MDS."""

    coords: np.ndarray           # n x dims, column-centered
    eigenvalues_used: np.ndarray  # before clamping, descending
    stress: float
    clamped: bool = False        # some retained eigenvalue was negative
    degenerate: bool = False     # all input distances were zero


def pairwise_distances(matrices: list[EpochCorrelation], metric: str = "l1_mean",
                       ) -> DistanceMatrix:
    """All pairwise distances between the epoch matrices' upper triangles."""
    if len(matrices) < 2:
        raise DataError("need at least 2 matrices for pairwise distances")
    dims = {m.matrix.shape[0] for m in matrices}
    if len(dims) != 1:
        raise DataError(f"matrix dimension mismatch: {sorted(dims)}")
    features = np.vstack([upper_triangle(m.matrix) for m in matrices])
    if metric == "l1_mean":
        condensed = pdist(features, metric="cityblock") / features.shape[1]
    elif metric == "l2":
        condensed = pdist(features, metric="euclidean")
    else:
        raise DataError(f"unknown distance metric {metric!r}")
    return DistanceMatrix(n=len(matrices), values=squareform(condensed), metric=metric)


def _top_eigensystem(b: np.ndarray, dims: int):
    n = b.shape[0]
    if n <= DENSE_EIG_CUTOFF:
        eigenvalues, eigenvectors = np.linalg.eigh(b)
        order = np.argsort(eigenvalues)[::-1][:dims]
        return eigenvalues[order], eigenvectors[:, order]
    v0 = np.ones(n) / np.sqrt(n)  # fixed start vector keeps runs deterministic
    eigenvalues, eigenvectors = eigsh(b, k=dims, which="LA", v0=v0,
                                      tol=1e-10, maxiter=10_000)
    order = np.argsort(eigenvalues)[::-1]
    return eigenvalues[order], eigenvectors[:, order]


def classical_mds(d: DistanceMatrix, dims: int = 3) -> Embedding3D:
    """Torgerson MDS: double-center -D^2/2, keep the top ``dims`` components.

    Axes are ordered by descending eigenvalue; each axis sign is fixed so
    its largest-magnitude coordinate is positive.
    """
    if d.n <= dims:
        raise DataError(f"need more than {dims} points, got {d.n}")
    dist = np.asarray(d.values, dtype=float)
    if not dist.any():
        return Embedding3D(
            coords=np.zeros((d.n, dims)),
            eigenvalues_used=np.zeros(dims),
            stress=0.0,
            degenerate=True,
        )

    sq = dist**2
    # J (-D^2/2) J with J = I - 11^T/n, done without forming J
    row_mean = sq.mean(axis=1, keepdims=True)
    b = -0.5 * (sq - row_mean - row_mean.T + sq.mean())

    eigenvalues, eigenvectors = _top_eigensystem(b, dims)
    clamped = bool((eigenvalues < 0).any())
    coords = eigenvectors * np.sqrt(np.clip(eigenvalues, 0.0, None))

    for j in range(dims):
        col = coords[:, j]
        if len(col) and col[np.abs(col).argmax()] < 0:
            coords[:, j] = -col

    embedded = squareform(pdist(coords))
    stress = float(np.sqrt(((embedded - dist) ** 2).sum() / (dist**2).sum()))
    return Embedding3D(
        coords=coords,
        eigenvalues_used=eigenvalues,
        stress=stress,
        clamped=clamped,
    )
