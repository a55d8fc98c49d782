"""Factored belief type and discrete Bayes filter against dense oracles."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tactloc.belief import (
    DeltaAction,
    FactoredBelief,
    FactoredState,
    StateSpaceSpec,
    belief_entropy,
    map_estimate,
    predict,
    shift_indices,
    step,
    uniform_belief,
    update,
)


def transition_matrix(delta: int, d: int) -> np.ndarray:
    """Dense d x d stochastic matrix for the clamped shift."""
    mat = np.zeros((d, d))
    for k in range(d):
        j = min(max(k + delta, 0), d - 1)
        mat[j, k] = 1.0
    return mat


def random_belief(rng, n, d) -> FactoredBelief:
    rows = rng.random((n, d)) + 1e-3
    return FactoredBelief(rows / rows.sum(axis=1, keepdims=True))


class TestSpecTypes:
    def test_spec_defaults(self):
        spec = StateSpaceSpec()
        assert (spec.n, spec.d) == (4, 11)
        assert spec.origin_bin == 5
        assert spec.labels == ("position_y", "position_z", "rotation_x", "rotation_y")
        assert spec.resolutions == ("2mm", "2mm", "1deg", "1deg")

    @pytest.mark.parametrize("n,d", [(0, 11), (4, 2), (4, 4), (4, 1)])
    def test_spec_rejects_bad_shapes(self, n, d):
        with pytest.raises(ValueError):
            StateSpaceSpec(n=n, d=d)

    def test_delta_action_range_enforced(self):
        DeltaAction((-2, -1, 0, 1))
        with pytest.raises(ValueError):
            DeltaAction((3, 0))
        with pytest.raises(ValueError):
            DeltaAction((-3,))

    def test_belief_rejects_negative_and_unnormalized(self):
        with pytest.raises(ValueError):
            FactoredBelief(np.array([[0.5, -0.1, 0.6]]))
        with pytest.raises(ValueError):
            FactoredBelief(np.array([[0.2, 0.2, 0.2]]))

    def test_belief_json_roundtrip(self, rng):
        bel = random_belief(rng, 3, 5)
        again = FactoredBelief.from_json(bel.to_json())
        assert np.allclose(again.rows, bel.rows, atol=1e-15)

    def test_belief_rows_immutable(self):
        bel = uniform_belief(StateSpaceSpec(n=2, d=5))
        with pytest.raises(ValueError):
            bel.rows[0, 0] = 0.5


class TestUniformBelief:
    def test_entries_equal_one_over_d(self):
        bel = uniform_belief(StateSpaceSpec(n=4, d=11))
        assert np.all(bel.rows == 1.0 / 11)

    def test_rows_sum_exactly_one(self):
        bel = uniform_belief(StateSpaceSpec(n=4, d=11))
        assert np.allclose(bel.rows.sum(axis=1), 1.0, atol=1e-15)

    def test_uniform_entropy(self):
        bel = uniform_belief(StateSpaceSpec(n=4, d=11))
        assert np.allclose(belief_entropy(bel), np.log(11), atol=1e-12)


class TestPredict:
    def test_zero_action_is_identity(self, rng):
        bel = random_belief(rng, 4, 11)
        out = predict(bel, DeltaAction((0, 0, 0, 0)))
        assert np.allclose(out.rows, bel.rows, atol=1e-15)

    def test_delta_moves_point_mass(self):
        rows = np.zeros((1, 11))
        rows[0, 5] = 1.0
        out = predict(FactoredBelief(rows), DeltaAction((2,)))
        assert out.rows[0, 7] == 1.0

    def test_boundary_clamp_accumulates(self):
        rows = np.zeros((1, 11))
        rows[0, 10] = 1.0
        out = predict(FactoredBelief(rows), DeltaAction((2,)))
        assert out.rows[0, 10] == 1.0

    def test_matches_transition_matrix_oracle(self, rng):
        for _ in range(20):
            n, d = 3, 11
            bel = random_belief(rng, n, d)
            deltas = tuple(int(x) for x in rng.integers(-2, 3, size=n))
            out = predict(bel, DeltaAction(deltas))
            for i in range(n):
                oracle = transition_matrix(deltas[i], d) @ bel.rows[i]
                assert np.max(np.abs(out.rows[i] - oracle)) < 1e-12

    @given(st.integers(0, 2 ** 31 - 1), st.integers(-2, 2))
    @settings(max_examples=40, deadline=None)
    def test_mass_conserved(self, seed, delta):
        gen = np.random.default_rng(seed)
        bel = random_belief(gen, 1, 7)
        out = predict(bel, DeltaAction((delta,)))
        assert abs(out.rows.sum() - bel.rows.sum()) < 1e-12


class TestUpdate:
    def test_uniform_likelihood_is_identity(self, rng):
        bel = random_belief(rng, 2, 5)
        out = update(bel, np.full((2, 5), 0.3))
        assert np.allclose(out.rows, bel.rows, atol=1e-12)

    def test_product_and_normalize_example(self):
        bel = FactoredBelief(np.array([[0.5, 0.5, 0.0]]))
        out = update(bel, np.array([[0.2, 0.8, 0.5]]))
        assert np.allclose(out.rows, [[0.2, 0.8, 0.0]], atol=1e-12)

    def test_one_hot_likelihood_gives_one_hot_posterior(self, rng):
        bel = random_belief(rng, 2, 5)
        lik = np.zeros((2, 5))
        lik[0, 3] = 1.0
        lik[1, 1] = 1.0
        out = update(bel, lik)
        assert out.rows[0, 3] == 1.0 and out.rows[1, 1] == 1.0

    def test_collapsed_row_resets_to_uniform_with_flag(self):
        rows = np.zeros((2, 4))
        rows[0, 0] = 1.0
        rows[1, 2] = 1.0
        bel = FactoredBelief(rows)
        lik = np.ones((2, 4))
        lik[0] = [0.0, 1.0, 1.0, 1.0]  # no overlap with row 0 support
        out = update(bel, lik)
        assert out.reset_dims == (0,)
        assert np.allclose(out.rows[0], 0.25, atol=1e-15)
        assert out.rows[1, 2] == 1.0

    def test_rejects_negative_likelihood(self, rng):
        bel = random_belief(rng, 1, 4)
        with pytest.raises(ValueError):
            update(bel, np.array([[0.1, -0.2, 0.3, 0.1]]))


def brute_force_filter(rows, deltas, likelihoods, d):
    """Dense per-dimension Bayes filter: transition matrix multiply, then
    elementwise multiply-normalize, for a whole episode."""
    rows = rows.copy()
    for delta_vec, lik in zip(deltas, likelihoods):
        for i in range(rows.shape[0]):
            rows[i] = transition_matrix(int(delta_vec[i]), d) @ rows[i]
            rows[i] = rows[i] * lik[i]
            rows[i] /= rows[i].sum()
    return rows


class TestStep:
    def test_zero_action_uniform_likelihood_identity(self, rng):
        bel = random_belief(rng, 4, 11)
        out = step(bel, DeltaAction((0,) * 4), np.ones((4, 11)))
        assert np.allclose(out.rows, bel.rows, atol=1e-12)

    def test_point_mass_tracks_shifted_state(self):
        spec = StateSpaceSpec(n=2, d=5)
        rows = np.zeros((2, 5))
        rows[:, 2] = 1.0
        bel = FactoredBelief(rows)
        action = DeltaAction((1, -2))
        true = shift_indices(np.array([2, 2]), action.as_array(), 5)
        lik = np.zeros((2, 5))
        lik[np.arange(2), true] = 1.0
        out = step(bel, action, lik)
        assert map_estimate(out).indices == tuple(true)

    @pytest.mark.parametrize("n", [1, 2, 4])
    @pytest.mark.parametrize("d", [3, 5, 11])
    def test_matches_brute_force_filter_over_episodes(self, n, d, rng):
        for _ in range(10):
            bel = random_belief(rng, n, d)
            start_rows = bel.rows.copy()
            deltas = rng.integers(-2, 3, size=(8, n))
            likelihoods = rng.random((8, n, d)) + 1e-6
            current = bel
            for t in range(8):
                current = step(current, DeltaAction(tuple(int(x) for x in deltas[t])), likelihoods[t])
            oracle = brute_force_filter(start_rows, deltas, likelihoods, d)
            assert np.max(np.abs(current.rows - oracle)) < 1e-9


class TestMapEstimate:
    def test_one_hot_rows_give_exact_indices(self):
        rows = np.zeros((3, 5))
        rows[0, 4] = rows[1, 0] = rows[2, 2] = 1.0
        assert map_estimate(FactoredBelief(rows)).indices == (4, 0, 2)

    def test_uniform_ties_break_low(self):
        bel = uniform_belief(StateSpaceSpec(n=2, d=5))
        assert map_estimate(bel).indices == (0, 0)

    def test_simple_argmax(self):
        bel = FactoredBelief(np.array([[0.1, 0.6, 0.3]]))
        assert map_estimate(bel).indices == (1,)


class TestBeliefEntropy:
    def test_one_hot_entropy_zero(self):
        rows = np.zeros((2, 5))
        rows[:, 0] = 1.0
        assert np.allclose(belief_entropy(FactoredBelief(rows)), 0.0, atol=1e-15)

    def test_two_point_entropy(self):
        rows = np.zeros((1, 6))
        rows[0, :2] = 0.5
        assert abs(belief_entropy(FactoredBelief(rows))[0] - np.log(2)) < 1e-12


class TestFilterConsistency:
    def test_indicator_likelihoods_lock_onto_truth(self, rng):
        """Exact indicator likelihoods: MAP equals truth from the first
        update on and entropy never increases."""
        spec = StateSpaceSpec(n=3, d=7)
        true = rng.integers(0, spec.d, size=spec.n)
        bel = uniform_belief(spec)
        lik = np.zeros((spec.n, spec.d))
        lik[np.arange(spec.n), true] = 1.0
        bel = update(bel, lik)
        assert tuple(true) == map_estimate(bel).indices
        prev_entropy = belief_entropy(bel)
        for _ in range(10):
            deltas = rng.integers(-2, 3, size=spec.n)
            true = shift_indices(true, deltas, spec.d)
            lik = np.zeros((spec.n, spec.d))
            lik[np.arange(spec.n), true] = 1.0
            bel = step(bel, DeltaAction(tuple(int(x) for x in deltas)), lik)
            assert map_estimate(bel).indices == tuple(true)
            ent = belief_entropy(bel)
            assert np.all(ent <= prev_entropy + 1e-12)
            prev_entropy = ent

    @given(st.integers(0, 2 ** 31 - 1))
    @settings(max_examples=25, deadline=None)
    def test_rows_stay_normalized_under_random_op_sequences(self, seed):
        gen = np.random.default_rng(seed)
        spec = StateSpaceSpec(n=2, d=7)
        bel = uniform_belief(spec)
        for _ in range(12):
            if gen.random() < 0.5:
                bel = predict(bel, DeltaAction(tuple(int(x) for x in gen.integers(-2, 3, size=2))))
            else:
                bel = update(bel, gen.random((2, 7)) + 1e-9)
            assert np.all(np.abs(bel.rows.sum(axis=1) - 1.0) < 1e-6)
            assert np.all(bel.rows >= 0)


class TestFactoredState:
    def test_roundtrip(self):
        s = FactoredState((1, 2, 3))
        assert FactoredState.from_array(s.as_array()) == s
