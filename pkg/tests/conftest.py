import math
from datetime import date, timedelta

import numpy as np
import pytest

from marketstates.correlation import EpochCorrelation
from marketstates.ingest import PriceTable, TradingCalendar


def business_days(start: date, count: int) -> list[date]:
    """First `count` weekdays starting at `start`."""
    days = []
    day = start
    while len(days) < count:
        if day.weekday() < 5:
            days.append(day)
        day += timedelta(days=1)
    return days


def write_price_csv(path, rows, extra_column=True):
    """Write a Yahoo-style CSV; rows are (iso_date, price_text) pairs."""
    lines = ["Date,Adj Close,Volume" if extra_column else "Date,Adj Close"]
    for day, price in rows:
        lines.append(f"{day},{price},100" if extra_column else f"{day},{price}")
    path.write_text("\n".join(lines) + "\n")


def make_price_table(price_rows, tickers, index_ticker, start=date(2020, 1, 6),
                     quoted=None):
    """PriceTable straight from an array, bypassing file ingestion."""
    prices = np.asarray(price_rows, dtype=float)
    n, t = prices.shape
    calendar = TradingCalendar(tuple(business_days(start, t)))
    if quoted is None:
        quoted = np.ones((n, t), dtype=bool)
    return PriceTable(calendar=calendar, tickers=tuple(tickers),
                      index_ticker=index_ticker, prices=prices,
                      quoted=np.asarray(quoted, dtype=bool))


def constant_correlation(n: int, rho: float) -> np.ndarray:
    m = np.full((n, n), rho)
    np.fill_diagonal(m, 1.0)
    return m


def noisy_epoch(base: np.ndarray, rng, noise: float, epoch_id: int,
                end_date: date, kind="pearson") -> EpochCorrelation:
    """Epoch matrix = base plus symmetric uniform noise on the off-diagonal."""
    n = base.shape[0]
    perturbation = rng.uniform(-noise, noise, size=(n, n))
    perturbation = (perturbation + perturbation.T) / 2
    np.fill_diagonal(perturbation, 0.0)
    matrix = np.clip(base + perturbation, -1.0, 1.0)
    np.fill_diagonal(matrix, 1.0)
    return EpochCorrelation(epoch_id=epoch_id, window=(end_date, end_date),
                            kind=kind, matrix=matrix)


def planted_two_regimes(n_epochs=200, n=8, noise=0.02, seed=7):
    """Epochs around two well-separated base matrices; returns (epochs, truth).

    Separation between the base feature vectors is >= 10x the noise radius.
    """
    rng = np.random.default_rng(seed)
    bases = [constant_correlation(n, 0.2), constant_correlation(n, 0.7)]
    days = business_days(date(2015, 1, 5), n_epochs)
    truth = rng.integers(0, 2, size=n_epochs)
    # keep both regimes populated
    truth[0], truth[1] = 0, 1
    epochs = [noisy_epoch(bases[truth[i]], rng, noise, i, days[i])
              for i in range(n_epochs)]
    return epochs, truth


def pearson_oracle(a, b) -> float:
    """Scalar two-pass Pearson correlation with population std."""
    n = len(a)
    ma = sum(a) / n
    mb = sum(b) / n
    cov = sum((x - ma) * (y - mb) for x, y in zip(a, b)) / n
    sa = math.sqrt(sum((x - ma) ** 2 for x in a) / n)
    sb = math.sqrt(sum((y - mb) ** 2 for y in b) / n)
    return cov / (sa * sb)


def partial_corr_oracle(x, y, z) -> float:
    """Partial correlation of x and y given z via regression residuals."""
    x, y, z = (np.asarray(v, dtype=float) for v in (x, y, z))
    design = np.column_stack([np.ones_like(z), z])
    rx = x - design @ np.linalg.lstsq(design, x, rcond=None)[0]
    ry = y - design @ np.linalg.lstsq(design, y, rcond=None)[0]
    return float(np.corrcoef(rx, ry)[0, 1])


def random_correlation_matrix(n: int, rng, window: int = 30) -> np.ndarray:
    """Valid correlation matrix from random return series."""
    x = rng.standard_normal((n, window))
    c = np.corrcoef(x)
    return (c + c.T) / 2


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
