"""Log returns and sliding-epoch correlation matrices.

Returns are logarithmic, with zero filled in on unquoted days; the return
on the next quoted day is taken against the last quoted price. Epoch
correlation matrices come in two kinds: plain Pearson, and correlation
relative to the reference index (the partial correlation controlling for
the index return series).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import date

import numpy as np

from .errors import DataError
from .ingest import PriceTable

DEGENERACY_EPS = 1e-12


@dataclass
class ReturnsMatrix:
    """Per-ticker log-return series plus the index series, aligned on dates."""

    tickers: tuple[str, ...]
    returns: np.ndarray          # N x (T-1), index excluded
    index_returns: np.ndarray    # T-1
    return_dates: tuple[date, ...]


@dataclass(frozen=True)
class EpochSpec:
    """Sliding-window geometry: window length and shift in trading days."""

    length: int = 20
    shift: int = 1

    def __post_init__(self):
        if self.length < 2:
            raise DataError(f"epoch length must be >= 2, got {self.length}")
        if self.shift < 1:
            raise DataError(f"epoch shift must be >= 1, got {self.shift}")


@dataclass
class EpochCorrelation:
    """One symmetric correlation matrix with its window metadata."""

    epoch_id: int
    window: tuple[date, date]
    kind: str  # "pearson" or "relative"
    matrix: np.ndarray
    degenerate_tickers: frozenset[str] = field(default_factory=frozenset)


def log_returns(prices: PriceTable) -> ReturnsMatrix:
    """Compute log returns against the last quoted price, zero on unquoted days."""
    n_days = len(prices.calendar)
    returns = np.zeros((len(prices.tickers), n_days - 1))
    for i in range(len(prices.tickers)):
        last_price = prices.prices[i, 0]
        for t in range(1, n_days):
            if prices.quoted[i, t]:
                returns[i, t - 1] = np.log(prices.prices[i, t] / last_price)
                last_price = prices.prices[i, t]
    idx = prices.tickers.index(prices.index_ticker)
    keep = [i for i in range(len(prices.tickers)) if i != idx]
    return ReturnsMatrix(
        tickers=tuple(prices.tickers[i] for i in keep),
        returns=returns[keep],
        index_returns=returns[idx],
        return_dates=prices.calendar.dates[1:],
    )


def epoch_windows(n_returns: int, spec: EpochSpec) -> list[tuple[int, int]]:
    """Half-open index windows [k*shift, k*shift + length) fitting in n_returns."""
    if n_returns < spec.length:
        raise DataError(f"{n_returns} return days < epoch length {spec.length}")
    count = (n_returns - spec.length) // spec.shift + 1
    return [(k * spec.shift, k * spec.shift + spec.length) for k in range(count)]


def _pearson(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Correlation matrix of row series, with degenerate-row mask.

    Uses population standard deviations. Rows with zero variance get zero
    off-diagonals and unit diagonal, which keeps the matrix positive
    semidefinite.
    """
    centered = x - x.mean(axis=1, keepdims=True)
    cov = centered @ centered.T / x.shape[1]
    sd = np.sqrt(np.diag(cov))
    degenerate = sd <= 0
    scale = np.where(degenerate, 1.0, sd)
    corr = cov / np.outer(scale, scale)
    corr[degenerate, :] = 0.0
    corr[:, degenerate] = 0.0
    corr = (corr + corr.T) / 2
    np.fill_diagonal(corr, 1.0)
    return corr, degenerate


def pearson_epoch(returns: ReturnsMatrix, window: tuple[int, int],
                  epoch_id: int = 0) -> EpochCorrelation:
    """Pearson correlation matrix of the ticker returns over one window."""
    start, end = _check_window(returns, window)
    corr, degenerate = _pearson(returns.returns[:, start:end])
    return EpochCorrelation(
        epoch_id=epoch_id,
        window=(returns.return_dates[start], returns.return_dates[end - 1]),
        kind="pearson",
        matrix=corr,
        degenerate_tickers=frozenset(
            t for t, d in zip(returns.tickers, degenerate) if d
        ),
    )


def relative_epoch(returns: ReturnsMatrix, window: tuple[int, int],
                   epoch_id: int = 0) -> EpochCorrelation:
    """Correlation relative to the index over one window.

    RC_ij = (C_ij - C_iS * C_jS) / sqrt((1 - C_iS^2) (1 - C_jS^2)) where S is
    the index series. Tickers whose correlation with the index is +-1 (zero
    denominator) are flagged degenerate and zeroed off-diagonal.
    """
    start, end = _check_window(returns, window)
    stacked = np.vstack([returns.returns[:, start:end],
                         returns.index_returns[start:end]])
    corr, degenerate = _pearson(stacked)
    n = len(returns.tickers)
    c = corr[:n, :n]
    c_index = corr[:n, n]

    denom_sq = 1.0 - c_index**2
    bad = degenerate[:n] | (denom_sq < DEGENERACY_EPS)
    scale = np.where(bad, 1.0, np.sqrt(np.clip(denom_sq, 0.0, None)))
    rc = (c - np.outer(c_index, c_index)) / np.outer(scale, scale)
    rc[bad, :] = 0.0
    rc[:, bad] = 0.0
    rc = np.clip((rc + rc.T) / 2, -1.0, 1.0)
    np.fill_diagonal(rc, 1.0)
    return EpochCorrelation(
        epoch_id=epoch_id,
        window=(returns.return_dates[start], returns.return_dates[end - 1]),
        kind="relative",
        matrix=rc,
        degenerate_tickers=frozenset(
            t for t, b in zip(returns.tickers, bad) if b
        ),
    )


def epoch_series(returns: ReturnsMatrix, spec: EpochSpec,
                 kind: str = "pearson") -> list[EpochCorrelation]:
    """All sliding-window correlation matrices of one kind, in epoch order."""
    compute = {"pearson": pearson_epoch, "relative": relative_epoch}[kind]
    windows = epoch_windows(returns.returns.shape[1], spec)
    return [compute(returns, w, epoch_id=i) for i, w in enumerate(windows)]


def average_correlation(m) -> float:
    """Mean of the strictly-upper-triangle entries."""
    matrix = m.matrix if isinstance(m, EpochCorrelation) else np.asarray(m)
    n = matrix.shape[0]
    if n < 2:
        raise DataError("average correlation needs at least a 2x2 matrix")
    iu = np.triu_indices(n, k=1)
    return float(matrix[iu].mean())


def upper_triangle(matrix: np.ndarray) -> np.ndarray:
    """Strictly-upper-triangle entries in row-major order."""
    return matrix[np.triu_indices(matrix.shape[0], k=1)]


def _check_window(returns: ReturnsMatrix, window):
    start, end = window
    if not (0 <= start < end <= returns.returns.shape[1]):
        raise DataError(f"window {window} out of bounds")
    return start, end
