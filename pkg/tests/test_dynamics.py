import numpy as np
import pytest

from marketstates.dynamics import (markovianity_check, nearly_tridiagonal_score,
                                   simulate_chain, stationary_distribution,
                                   transition_matrix)
from marketstates.errors import DataError

TRUE_CHAIN = np.array([
    [0.7, 0.2, 0.1],
    [0.3, 0.5, 0.2],
    [0.1, 0.3, 0.6],
])


class TestTransitionMatrix:
    def test_single_state(self):
        model = transition_matrix([1, 1, 1], k=1)
        np.testing.assert_array_equal(model.probs, [[1.0]])
        np.testing.assert_array_equal(model.equilibrium, [1.0])

    def test_alternating_two_states(self):
        model = transition_matrix([1, 2, 1, 2, 1], k=2)
        np.testing.assert_array_equal(model.probs, [[0, 1], [1, 0]])
        np.testing.assert_allclose(model.equilibrium, [0.5, 0.5], atol=1e-10)
        np.testing.assert_array_equal(model.counts, [[0, 2], [2, 0]])

    def test_counts_sum(self):
        labels = [1, 2, 2, 3, 1, 1, 2]
        model = transition_matrix(labels, k=3)
        assert model.counts.sum() == len(labels) - 1
        np.testing.assert_allclose(model.probs.sum(axis=1), 1.0, atol=1e-12)

    def test_equilibrium_is_fixpoint(self):
        labels = simulate_chain(TRUE_CHAIN, 2000, seed=4)
        model = transition_matrix(labels, k=3)
        residual = np.abs(model.equilibrium @ model.probs - model.equilibrium)
        assert residual.max() <= 1e-10
        assert model.equilibrium.min() >= 0
        assert model.equilibrium.sum() == pytest.approx(1.0, abs=1e-12)

    def test_unseen_source_state_flagged(self):
        model = transition_matrix([1, 1, 2], k=3)
        assert model.flagged_states == (2, 3)
        np.testing.assert_array_equal(model.probs[2], [0, 0, 1])

    def test_simulated_chain_recovers_truth(self):
        labels = simulate_chain(TRUE_CHAIN, 100_000, seed=1)
        model = transition_matrix(labels, k=3)
        assert np.abs(model.probs - TRUE_CHAIN).max() <= 0.01
        # analytic stationary vector of TRUE_CHAIN
        eigenvalues, eigenvectors = np.linalg.eig(TRUE_CHAIN.T)
        truth = np.real(eigenvectors[:, np.argmax(np.real(eigenvalues))])
        truth = truth / truth.sum()
        assert np.abs(model.equilibrium - truth).max() <= 0.01

    def test_relabeling_permutation_invariance(self):
        labels = simulate_chain(TRUE_CHAIN, 500, seed=9)
        perm = np.array([2, 0, 1])  # state s -> perm[s-1] + 1
        model = transition_matrix(labels, k=3)
        permuted = transition_matrix(perm[labels - 1] + 1, k=3)
        np.testing.assert_array_equal(
            permuted.counts[np.ix_(perm, perm)], model.counts)
        np.testing.assert_allclose(
            permuted.equilibrium[perm], model.equilibrium, atol=1e-10)

    def test_too_short(self):
        with pytest.raises(DataError):
            transition_matrix([1], k=1)

    def test_label_out_of_range(self):
        with pytest.raises(DataError):
            transition_matrix([1, 4], k=3)


class TestMarkovianityCheck:
    def test_simulated_chain_small_deviation(self):
        labels = simulate_chain(TRUE_CHAIN, 100_000, seed=2)
        diag = markovianity_check(labels, k=3, ck_threshold=0.02)
        assert diag.ck_deviation <= 0.02
        assert diag.ck_pass

    def test_deterministic_cycle_exact(self):
        labels = np.tile([1, 2, 3], 200)
        diag = markovianity_check(labels, k=3)
        assert diag.ck_deviation == 0.0

    def test_anti_markov_sequence(self):
        # repeating 1,2,1,3: two-step from state 2 always lands in 3,
        # while P^2 predicts an even split
        labels = np.tile([1, 2, 1, 3], 100)
        diag = markovianity_check(labels, k=3)
        assert diag.ck_deviation > 0.4

    def test_stationarity_tv(self):
        labels = simulate_chain(TRUE_CHAIN, 50_000, seed=3)
        diag = markovianity_check(labels, k=3)
        assert diag.stationarity_tv <= 0.02

    def test_too_short(self):
        with pytest.raises(DataError):
            markovianity_check([1, 2], k=2)


class TestNearlyTridiagonalScore:
    def test_identity(self):
        assert nearly_tridiagonal_score(np.eye(5)) == pytest.approx(1.0)

    def test_uniform_4x4(self):
        assert nearly_tridiagonal_score(np.full((4, 4), 0.25)) == pytest.approx(10 / 16)

    def test_2x2_always_banded(self):
        assert nearly_tridiagonal_score(np.array([[.3, .7], [.9, .1]])) == pytest.approx(1.0)

    def test_row_weighting(self):
        probs = np.array([[1.0, 0, 0], [0, 1.0, 0], [1.0, 0, 0]])
        # all occupancy on state 3, whose row jumps to state 1 (off band)
        score = nearly_tridiagonal_score(probs, freq=[0, 0, 1.0])
        assert score == pytest.approx(0.0)


class TestStationaryDistribution:
    def test_lazy_iteration_handles_periodic(self):
        flip = np.array([[0.0, 1.0], [1.0, 0.0]])
        pi = stationary_distribution(flip, np.array([0.9, 0.1]))
        np.testing.assert_allclose(pi, [0.5, 0.5], atol=1e-10)
