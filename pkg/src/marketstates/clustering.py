"""Market-state identification via deterministic seeded k-means.

Epoch correlation matrices are flattened to their strictly-upper-triangle
vectors and clustered with Lloyd's algorithm under k-means++ seeding.
Restarts use consecutive seeds and the minimum-inertia run wins, with ties
broken by the lowest seed, so results are reproducible bit for bit. After
convergence states are renumbered by ascending average correlation of
their member matrices.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import date

import numpy as np
from scipy.spatial.distance import cdist

from .correlation import EpochCorrelation, average_correlation, upper_triangle
from .errors import DataError, NumericError

MAX_ITER = 500


@dataclass
class StateSequence:
    """Per-epoch state labels (1..k) with centroids and per-state statistics."""

    k: int
    labels: np.ndarray           # int, values in 1..k
    centroids: np.ndarray        # k x d
    state_avg_corr: np.ndarray   # ascending by construction
    inertia: float
    seed: int
    epoch_dates: tuple[date, ...]  # window end date per epoch
    inertia_history: tuple[float, ...] = ()


def feature_matrix(matrices: list[EpochCorrelation]) -> np.ndarray:
    """Stack the upper-triangle flattenings of the epoch matrices."""
    return np.vstack([upper_triangle(m.matrix) for m in matrices])


def _squared_distances(x: np.ndarray, centers: np.ndarray) -> np.ndarray:
    d2 = (
        (x * x).sum(axis=1)[:, None]
        - 2.0 * x @ centers.T
        + (centers * centers).sum(axis=1)[None, :]
    )
    return np.maximum(d2, 0.0)


def _plusplus_init(x: np.ndarray, k: int, rng: np.random.Generator,
                   metric: str) -> np.ndarray:
    """k-means++ seeding; selection weight is the distance to the nearest
    chosen center (squared for l2, plain for l1)."""
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    weight = _point_costs(x, centers[:1], metric).ravel()
    for j in range(1, k):
        total = weight.sum()
        if total <= 0:
            # all points coincide with chosen centers; any choice works
            centers[j] = x[rng.integers(n)]
            continue
        pick = rng.choice(n, p=weight / total)
        centers[j] = x[pick]
        weight = np.minimum(weight, _point_costs(x, centers[j:j + 1], metric).ravel())
    return centers


def _point_costs(x, centers, metric):
    if metric == "l2":
        return _squared_distances(x, centers)
    return cdist(x, centers, metric="cityblock")


def _lloyd(x: np.ndarray, k: int, rng: np.random.Generator, metric: str):
    centers = _plusplus_init(x, k, rng, metric)
    labels = np.full(x.shape[0], -1)
    history = []
    for _ in range(MAX_ITER):
        costs = _point_costs(x, centers, metric)
        new_labels = costs.argmin(axis=1)  # ties go to the lowest state index
        inertia = float(costs[np.arange(x.shape[0]), new_labels].sum())
        history.append(inertia)
        for j in range(k):
            members = x[new_labels == j]
            if len(members) == 0:
                # reseed at the point farthest from its assigned centroid
                worst = costs[np.arange(x.shape[0]), new_labels].argmax()
                centers[j] = x[worst]
                new_labels[worst] = j
                members = x[new_labels == j]
            if metric == "l2":
                centers[j] = members.mean(axis=0)
            else:
                centers[j] = np.median(members, axis=0)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    else:
        labels = new_labels
    counts = np.bincount(labels, minlength=k)
    if (counts == 0).any():
        raise NumericError("empty cluster could not be repaired")
    costs = _point_costs(x, centers, metric)
    inertia = float(costs[np.arange(x.shape[0]), labels].sum())
    return labels, centers, inertia, history


def kmeans_states(matrices: list[EpochCorrelation], k: int, seed: int,
                  restarts: int = 100, metric: str = "l2") -> StateSequence:
    """Cluster epoch matrices into k states, numbered by average correlation."""
    if k < 1:
        raise DataError(f"k must be >= 1, got {k}")
    if len(matrices) < k:
        raise DataError(f"{len(matrices)} epochs < k={k}")
    if metric not in ("l2", "l1"):
        raise DataError(f"unknown clustering metric {metric!r}")

    x = feature_matrix(matrices)
    best = None
    for attempt in range(restarts):
        rng = np.random.default_rng(seed + attempt)
        labels, centers, inertia, history = _lloyd(x, k, rng, metric)
        if best is None or inertia < best[2]:
            best = (labels, centers, inertia, history)
    labels, centers, inertia, history = best

    # renumber states by ascending average correlation of their members
    avg = np.array([average_correlation(m) for m in matrices])
    state_avg = np.array([avg[labels == j].mean() for j in range(k)])
    order = np.argsort(state_avg, kind="stable")
    rank = np.empty(k, dtype=int)
    rank[order] = np.arange(k)

    return StateSequence(
        k=k,
        labels=rank[labels] + 1,
        centroids=centers[order],
        state_avg_corr=state_avg[order],
        inertia=inertia,
        seed=seed,
        epoch_dates=tuple(m.window[1] for m in matrices),
        inertia_history=tuple(history),
    )


def contiguous_runs(labels: np.ndarray, state: int) -> list[tuple[int, int]]:
    """Inclusive index ranges over which ``labels`` equals ``state``."""
    runs = []
    start = None
    for i, lab in enumerate(labels):
        if lab == state and start is None:
            start = i
        elif lab != state and start is not None:
            runs.append((start, i - 1))
            start = None
    if start is not None:
        runs.append((start, len(labels) - 1))
    return runs


def state_report(seq: StateSequence, matrices: list[EpochCorrelation]) -> list[dict]:
    """Per-state summary: size, average correlation, date span, runs."""
    if len(matrices) != len(seq.labels):
        raise DataError("label count does not match matrix count")
    report = []
    for state in range(1, seq.k + 1):
        member = seq.labels == state
        dates = [d for d, m in zip(seq.epoch_dates, member) if m]
        report.append({
            "state": state,
            "count": int(member.sum()),
            "avg_corr": float(seq.state_avg_corr[state - 1]),
            "first_date": dates[0],
            "last_date": dates[-1],
            "runs": contiguous_runs(seq.labels, state),
        })
    return report


def states_after(seq: StateSequence, cutoff: date) -> list[int]:
    """States whose epochs all end strictly after ``cutoff``."""
    dates = np.array([d.toordinal() for d in seq.epoch_dates])
    out = []
    for state in range(1, seq.k + 1):
        member = seq.labels == state
        if member.any() and dates[member].min() > cutoff.toordinal():
            out.append(state)
    return out
