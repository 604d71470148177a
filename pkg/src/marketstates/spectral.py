"""Eigen-spectra, participation ratios, and element distributions of
epoch correlation matrices.

The participation ratio of a unit eigenvector v is 1 / sum_i v_i^4: it
counts how many components carry significant weight, ranging from 1
(localized) to N (uniform), with a Gaussian Orthogonal Ensemble baseline
of N/3.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import date

import numpy as np

from .correlation import EpochCorrelation, upper_triangle
from .errors import DataError, NumericError

DEGENERATE_GAP = 1e-10


@dataclass
class EpochSpectrum:
    """Full eigendecomposition summary of one epoch matrix."""

    epoch_id: int
    eigenvalues: np.ndarray    # descending
    top_eigenvector: np.ndarray
    pr_top: float
    kind: str
    degenerate_top: bool = False  # top eigenvalue multiplicity > 1


@dataclass
class ElementHistogram:
    """Histogram and moments of the strictly-upper-triangle entries."""

    epoch_id: int
    bin_edges: np.ndarray
    counts: np.ndarray
    moments: tuple  # (mean, variance, skewness, excess kurtosis)


def spectrum(m: EpochCorrelation) -> EpochSpectrum:
    """Eigendecompose one epoch matrix; top eigenvector sign-fixed to sum >= 0."""
    if not np.isfinite(m.matrix).all():
        raise NumericError(f"epoch {m.epoch_id}: non-finite matrix entries")
    eigenvalues, eigenvectors = np.linalg.eigh(m.matrix)
    eigenvalues = eigenvalues[::-1]
    top = eigenvectors[:, -1]
    if top.sum() < 0:
        top = -top
    degenerate = bool(
        len(eigenvalues) > 1 and (eigenvalues[0] - eigenvalues[1]) < DEGENERATE_GAP)
    return EpochSpectrum(
        epoch_id=m.epoch_id,
        eigenvalues=eigenvalues,
        top_eigenvector=top,
        pr_top=participation_ratio(top),
        kind=m.kind,
        degenerate_top=degenerate,
    )


def participation_ratio(v: np.ndarray) -> float:
    """PR = 1 / sum_i v_i^4 for a unit vector v."""
    v = np.asarray(v, dtype=float)
    norm = np.linalg.norm(v)
    if abs(norm - 1.0) > 1e-10:
        raise DataError(f"participation ratio needs a unit vector, |v| = {norm}")
    return float(1.0 / np.sum(v**4))


def inverse_participation_ratio(v: np.ndarray) -> float:
    """IPR = sum_i v_i^4, the reciprocal of the participation ratio."""
    return 1.0 / participation_ratio(v)


def pr_series(matrices: list[EpochCorrelation]) -> list[tuple[date, float, bool]]:
    """(end date, top-eigenvector PR, degenerate flag) per epoch, in order."""
    if not matrices:
        raise DataError("no epoch matrices given")
    out = []
    for m in matrices:
        s = spectrum(m)
        out.append((m.window[1], s.pr_top, s.degenerate_top))
    return out


def sample_moments(values: np.ndarray) -> tuple:
    """(mean, variance, skewness, excess kurtosis); population central moments.

    Skewness and kurtosis are NaN for a constant sample.
    """
    values = np.asarray(values, dtype=float)
    mean = values.mean()
    centered = values - mean
    variance = (centered**2).mean()
    if variance <= 0:
        return (float(mean), 0.0, float("nan"), float("nan"))
    sd = np.sqrt(variance)
    skew = (centered**3).mean() / sd**3
    kurt = (centered**4).mean() / sd**4 - 3.0
    return (float(mean), float(variance), float(skew), float(kurt))


def pr_period_moments(series, period) -> dict:
    """Moments of the PR values whose epoch end date lies in [start, end)."""
    start, end = period
    values = np.array([pr for d, pr, _ in series if start <= d < end])
    if len(values) == 0:
        raise DataError(f"no epochs in period {start}..{end}")
    mean, variance, skew, kurt = sample_moments(values)
    return {
        "mean": mean,
        "variance": variance,
        "skewness": skew,
        "excess_kurtosis": kurt,
        "count": int(len(values)),
    }


def element_histogram(m: EpochCorrelation, bins: int = 201) -> ElementHistogram:
    """Histogram of upper-triangle entries on uniform bins over [-1, 1]."""
    if bins < 2:
        raise DataError(f"bins must be >= 2, got {bins}")
    entries = np.clip(upper_triangle(m.matrix), -1.0, 1.0)
    counts, edges = np.histogram(entries, bins=bins, range=(-1.0, 1.0))
    return ElementHistogram(
        epoch_id=m.epoch_id,
        bin_edges=edges,
        counts=counts,
        moments=sample_moments(entries),
    )
