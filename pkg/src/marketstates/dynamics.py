"""State-to-state transition dynamics and Markovianity diagnostics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, NumericError

EQUILIBRIUM_TOL = 1e-12
EQUILIBRIUM_MAX_ITER = 1_000_000


@dataclass
class TransitionModel:
    """Empirical transition counts, probabilities, and equilibrium."""

    k: int
    counts: np.ndarray          # k x k integer pair counts
    probs: np.ndarray           # row-stochastic
    equilibrium: np.ndarray
    empirical_freq: np.ndarray
    flagged_states: tuple[int, ...] = ()  # states never seen as a source (1-based)


@dataclass
class MarkovDiagnostics:
    """Necessary-condition checks for the Markov property of a label sequence."""

    ck_deviation: float           # Chapman-Kolmogorov: max |two-step - P^2|
    stationarity_tv: float        # total variation between equilibrium and occupancy
    ck_threshold: float
    stationarity_threshold: float
    flags: dict = field(default_factory=dict)

    @property
    def ck_pass(self) -> bool:
        return self.ck_deviation <= self.ck_threshold

    @property
    def stationarity_pass(self) -> bool:
        return self.stationarity_tv <= self.stationarity_threshold


def _pair_counts(labels: np.ndarray, k: int, step: int) -> np.ndarray:
    counts = np.zeros((k, k), dtype=np.int64)
    np.add.at(counts, (labels[:-step] - 1, labels[step:] - 1), 1)
    return counts


def _row_normalize(counts: np.ndarray) -> tuple[np.ndarray, list[int]]:
    row_sums = counts.sum(axis=1)
    flagged = [j for j in range(len(counts)) if row_sums[j] == 0]
    probs = np.eye(len(counts))
    live = row_sums > 0
    probs[live] = counts[live] / row_sums[live, None]
    return probs, flagged


def stationary_distribution(probs: np.ndarray, start: np.ndarray) -> np.ndarray:
    """Left fixpoint of a row-stochastic matrix via power iteration.

    Iterates on the lazy chain (P + I)/2, which has exactly the same
    stationary vectors as P but converges even for periodic chains.
    """
    pi = np.asarray(start, dtype=float)
    pi = pi / pi.sum()
    for _ in range(EQUILIBRIUM_MAX_ITER):
        nxt = (pi + pi @ probs) / 2
        nxt = nxt / nxt.sum()
        if np.abs(nxt - pi).max() < EQUILIBRIUM_TOL:
            return nxt
        pi = nxt
    raise NumericError("equilibrium power iteration did not converge")


def transition_matrix(labels, k: int) -> TransitionModel:
    """Estimate the transition model from consecutive epoch label pairs.

    States that never occur as a source keep an identity row and are flagged;
    the equilibrium is still the fixpoint of the resulting matrix, so treat
    it with care when flags are present.
    """
    labels = np.asarray(labels, dtype=int)
    if len(labels) < 2:
        raise DataError("need at least 2 labels for transitions")
    if labels.min() < 1 or labels.max() > k:
        raise DataError(f"labels must lie in 1..{k}")

    counts = _pair_counts(labels, k, step=1)
    probs, flagged = _row_normalize(counts)
    empirical = np.bincount(labels - 1, minlength=k) / len(labels)
    equilibrium = stationary_distribution(probs, np.maximum(empirical, 1e-15))
    return TransitionModel(
        k=k,
        counts=counts,
        probs=probs,
        equilibrium=equilibrium,
        empirical_freq=empirical,
        flagged_states=tuple(j + 1 for j in flagged),
    )


def markovianity_check(labels, k: int, ck_threshold: float = 0.1,
                       stationarity_threshold: float = 0.1) -> MarkovDiagnostics:
    """Two necessary conditions for Markovianity of the label sequence.

    (a) Chapman-Kolmogorov: the empirical two-step transition matrix should
        match the square of the one-step matrix.
    (b) Stationarity: the fixpoint of the one-step matrix should match the
        empirical state occupancy.
    Both are necessary, not sufficient; thresholds are configurable.
    """
    labels = np.asarray(labels, dtype=int)
    if len(labels) < 3:
        raise DataError("need at least 3 labels for a two-step estimate")
    model = transition_matrix(labels, k)

    two_step_counts = _pair_counts(labels, k, step=2)
    two_step, flagged2 = _row_normalize(two_step_counts)
    # compare only rows observed in both estimates
    live = np.ones(k, dtype=bool)
    for j in model.flagged_states:
        live[j - 1] = False
    for j in flagged2:
        live[j] = False
    if not live.any():
        raise DataError("no state observed often enough for a two-step estimate")
    ck_dev = float(np.abs(two_step[live] - (model.probs @ model.probs)[live]).max())

    tv = float(0.5 * np.abs(model.equilibrium - model.empirical_freq).sum())
    return MarkovDiagnostics(
        ck_deviation=ck_dev,
        stationarity_tv=tv,
        ck_threshold=ck_threshold,
        stationarity_threshold=stationarity_threshold,
        flags={
            "unseen_source_states": list(model.flagged_states),
            "unseen_two_step_states": [j + 1 for j in flagged2],
        },
    )


def nearly_tridiagonal_score(probs: np.ndarray, freq=None) -> float:
    """Fraction of transition mass on the diagonal and first off-diagonals.

    Rows are weighted by the state occupancy ``freq`` (uniform if omitted);
    states are assumed already in average-correlation order.
    """
    probs = np.asarray(probs, dtype=float)
    k = probs.shape[0]
    if freq is None:
        freq = np.full(k, 1.0 / k)
    freq = np.asarray(freq, dtype=float)
    band = np.abs(np.subtract.outer(np.arange(k), np.arange(k))) <= 1
    weighted = freq[:, None] * probs
    return float(weighted[band].sum() / weighted.sum())


def simulate_chain(probs: np.ndarray, n_steps: int, seed: int,
                   start_state: int = 1) -> np.ndarray:
    """Sample a label sequence (1-based) from a row-stochastic matrix."""
    rng = np.random.default_rng(seed)
    k = probs.shape[0]
    labels = np.empty(n_steps, dtype=int)
    state = start_state - 1
    for t in range(n_steps):
        labels[t] = state + 1
        state = rng.choice(k, p=probs[state])
    return labels
