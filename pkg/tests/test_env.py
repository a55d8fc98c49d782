"""Object signatures, episodic tasks, and dataset construction."""

import numpy as np
import pytest
from scipy import stats

from tactloc.belief import DeltaAction, FactoredBelief, FactoredState, StateSpaceSpec, map_estimate, predict, uniform_belief, update
from tactloc.env import (
    SignatureParams,
    TaskConfig,
    build_dataset,
    env_step,
    generate_objects,
    load_dataset,
    normalized_pose,
    observe,
    reset,
    save_dataset,
    shortest_path_steps,
    split_pool,
    state_grid,
)
from tactloc.exceptions import DatasetError, EpisodeStateError

SMALL_PARAMS = SignatureParams(feature_dim=8, components=4, f_max=1.5)


def small_spec():
    return StateSpaceSpec(n=2, d=5)


def make_task(task="reaching", noise=0.1, horizon=16, n_objects=3, spec=None):
    spec = spec or small_spec()
    objs = generate_objects(n_objects, seed=5, params=SMALL_PARAMS, state_dims=spec.n)
    return TaskConfig(task=task, spec=spec, objects=tuple(objs), horizon=horizon, noise_sigma=noise)


class TestGenerateObjects:
    def test_same_seed_is_identical(self):
        a = generate_objects(4, seed=9, params=SMALL_PARAMS, state_dims=2)
        b = generate_objects(4, seed=9, params=SMALL_PARAMS, state_dims=2)
        for oa, ob in zip(a, b):
            assert np.array_equal(oa.amplitudes, ob.amplitudes)
            assert np.array_equal(oa.frequencies, ob.frequencies)
            assert np.array_equal(oa.phases, ob.phases)

    def test_sixty_objects_split_disjoint(self):
        pool = generate_objects(60, seed=1, params=SMALL_PARAMS, state_dims=2)
        train, holdout = split_pool(pool, 50)
        assert len(train) == 50 and len(holdout) == 10
        assert not ({o.object_id for o in train} & {o.object_id for o in holdout})

    def test_zero_f_max_gives_constant_signature(self):
        obj = generate_objects(1, seed=3, params=SignatureParams(feature_dim=6, components=3, f_max=0.0), state_dims=2)[0]
        xs = np.random.default_rng(0).random((10, 2))
        feats = obj.features(xs, 0)
        assert np.allclose(feats, feats[0], atol=1e-12)

    def test_features_bounded_by_unit_amplitude(self):
        obj = generate_objects(1, seed=3, params=SMALL_PARAMS, state_dims=2)[0]
        xs = np.random.default_rng(0).random((200, 2))
        for finger in (0, 1):
            assert np.max(np.abs(obj.features(xs, finger))) <= 1.0 + 1e-12

    def test_pool_shares_category_frequencies(self):
        a, b = generate_objects(2, seed=4, params=SMALL_PARAMS, state_dims=2)
        assert np.array_equal(a.frequencies, b.frequencies)
        assert not np.array_equal(a.amplitudes, b.amplitudes)


class TestObserve:
    def test_zero_noise_equals_signature(self):
        spec = small_spec()
        obj = generate_objects(1, seed=7, params=SMALL_PARAMS, state_dims=2)[0]
        state = FactoredState((3, 1))
        obs = observe(obj, state, spec, 0.0, np.random.default_rng(0))
        x = normalized_pose(state.as_array(), spec)
        assert np.array_equal(obs.left, obj.features(x, 0))
        assert np.array_equal(obs.right, obj.features(x, 1))

    def test_monte_carlo_mean_converges(self):
        spec = small_spec()
        obj = generate_objects(1, seed=7, params=SMALL_PARAMS, state_dims=2)[0]
        state = np.array([2, 4])
        sigma, n_draws = 0.2, 10_000
        rng = np.random.default_rng(42)
        total = np.zeros(SMALL_PARAMS.feature_dim)
        for _ in range(n_draws):
            total += observe(obj, state, spec, sigma, rng).left
        mean = total / n_draws
        mu = obj.features(normalized_pose(state, spec), 0)
        assert np.all(np.abs(mean - mu) < 3 * sigma / np.sqrt(n_draws))

    def test_aliased_states_are_indistinguishable(self):
        spec = small_spec()
        obj = generate_objects(1, seed=7, params=SignatureParams(feature_dim=8, components=4, f_max=0.0), state_dims=2)[0]
        a = observe(obj, np.array([0, 0]), spec, 0.0, np.random.default_rng(0))
        b = observe(obj, np.array([4, 2]), spec, 0.0, np.random.default_rng(0))
        assert np.array_equal(a.left, b.left) and np.array_equal(a.right, b.right)

    def test_out_of_range_state_rejected(self):
        spec = small_spec()
        obj = generate_objects(1, seed=7, params=SMALL_PARAMS, state_dims=2)[0]
        with pytest.raises(ValueError):
            observe(obj, np.array([5, 0]), spec, 0.0, np.random.default_rng(0))


class TestReset:
    def test_start_histogram_uniform_chi_squared(self):
        task = make_task()
        rng = np.random.default_rng(2)
        counts = np.zeros((task.spec.n, task.spec.d))
        for _ in range(10_000):
            ep, _ = reset(task, 0, rng)
            counts[np.arange(task.spec.n), ep.true_state] += 1
        expected = 10_000 / task.spec.d
        crit = stats.chi2.ppf(0.99, df=task.spec.d - 1)
        for dim in range(task.spec.n):
            chi2 = float(((counts[dim] - expected) ** 2 / expected).sum())
            assert chi2 < crit

    def test_reaching_goal_differs_from_start(self):
        task = make_task()
        rng = np.random.default_rng(3)
        for _ in range(200):
            ep, _ = reset(task, 0, rng)
            assert not np.array_equal(ep.goal, ep.true_state)

    def test_fresh_episode_state(self):
        task = make_task()
        ep, obs = reset(task, 1, np.random.default_rng(0))
        assert ep.step_count == 0 and not ep.done
        assert obs.left.shape == (SMALL_PARAMS.feature_dim,)

    def test_active_task_has_no_goal(self):
        ep, _ = reset(make_task(task="active"), 0, np.random.default_rng(0))
        assert ep.goal is None


class TestEnvStep:
    def test_correct_estimate_rewards_and_ends(self):
        task = make_task(task="active")
        ep, _ = reset(task, 0, np.random.default_rng(1))
        action = DeltaAction((1, 0))
        expected = np.clip(ep.true_state + [1, 0], 0, task.spec.d - 1)
        _, reward, done = env_step(ep, action, FactoredState(tuple(expected)))
        assert reward == 1.0 and done

    def test_reaching_no_goal_no_reward_not_done(self):
        task = make_task()
        rng = np.random.default_rng(4)
        ep, _ = reset(task, 0, rng)
        # pick a move that provably misses the goal
        for _ in range(50):
            ep, _ = reset(task, 0, rng)
            target = np.clip(ep.true_state, 0, task.spec.d - 1)
            if not np.array_equal(target, ep.goal):
                break
        _, reward, done = env_step(ep, DeltaAction((0, 0)))
        assert reward == 0.0 and not done and ep.step_count == 1

    def test_horizon_exhaustion_ends_with_zero_reward(self):
        task = make_task(horizon=16)
        ep, _ = reset(task, 0, np.random.default_rng(5))
        ep.goal = np.array([task.spec.d - 1, task.spec.d - 1])
        ep.true_state = np.array([0, 0])
        done = False
        rewards = []
        while not done:
            _, r, done = env_step(ep, DeltaAction((0, 0)))
            rewards.append(r)
        assert ep.step_count == 16 and rewards[-1] == 0.0
        assert all(r == 0.0 for r in rewards)

    def test_step_after_done_raises(self):
        task = make_task(horizon=1)
        ep, _ = reset(task, 0, np.random.default_rng(6))
        env_step(ep, DeltaAction((0, 0)))
        assert ep.done
        with pytest.raises(EpisodeStateError):
            env_step(ep, DeltaAction((0, 0)))

    def test_active_requires_estimate(self):
        ep, _ = reset(make_task(task="active"), 0, np.random.default_rng(7))
        with pytest.raises(ValueError):
            env_step(ep, DeltaAction((0, 0)))

    def test_reward_is_sparse_and_single(self):
        task = make_task()
        rng = np.random.default_rng(8)
        for _ in range(30):
            ep, _ = reset(task, 0, rng)
            rewards = []
            done = False
            while not done:
                deltas = tuple(int(x) for x in rng.integers(-2, 3, size=2))
                _, r, done = env_step(ep, DeltaAction(deltas))
                rewards.append(r)
            assert set(rewards) <= {0.0, 1.0}
            assert rewards.count(1.0) <= 1
            if rewards[-1] == 1.0:
                assert done

    def test_dynamics_match_filter_predict(self):
        """The environment's clamped move and belief.predict are the same
        function: a one-hot belief pushed through predict tracks true_state."""
        task = make_task(noise=0.0)
        rng = np.random.default_rng(9)
        for _ in range(20):
            ep, _ = reset(task, 0, rng)
            rows = np.zeros((task.spec.n, task.spec.d))
            rows[np.arange(task.spec.n), ep.true_state] = 1.0
            bel = FactoredBelief(rows)
            for _ in range(8):
                if ep.done:
                    break
                action = DeltaAction(tuple(int(x) for x in rng.integers(-2, 3, size=2)))
                env_step(ep, action)
                bel = predict(bel, action)
                assert map_estimate(bel).indices == tuple(ep.true_state)
                assert bel.rows[np.arange(task.spec.n), ep.true_state].min() == 1.0

    def test_identical_seeds_identical_trajectories(self):
        task = make_task()

        def run(seed):
            rng = np.random.default_rng(seed)
            ep, obs = reset(task, 2, rng)
            trace = [ep.true_state.copy(), obs.left.copy()]
            for _ in range(5):
                if ep.done:
                    break
                obs, r, _ = env_step(ep, DeltaAction((1, -1)))
                trace.extend([ep.true_state.copy(), obs.right.copy(), r])
            return trace

        t1, t2 = run(77), run(77)
        assert all(np.array_equal(a, b) for a, b in zip(t1, t2))

    def test_noiseless_injective_single_observation_localizes(self):
        """With zero noise and injective signatures, enumerating signature
        matches yields an exact one-hot posterior after the first update."""
        spec = small_spec()
        task = make_task(noise=0.0, spec=spec)
        obj = task.objects[0]
        grid = state_grid(spec)
        mu = obj.features(grid.astype(np.float64) / (spec.d - 1), 0)
        assert np.unique(np.round(mu, 9), axis=0).shape[0] == grid.shape[0], "signature not injective"
        rng = np.random.default_rng(11)
        ep, obs = reset(task, 0, rng)
        match = np.all(np.abs(mu - obs.left) < 1e-12, axis=1)
        lik = np.zeros((spec.n, spec.d))
        for s, hit in zip(grid, match):
            if hit:
                lik[np.arange(spec.n), s] = 1.0
        bel = update(uniform_belief(spec), lik)
        assert np.sort(bel.rows, axis=1)[:, -1].min() == 1.0
        assert map_estimate(bel).indices == tuple(ep.true_state)


class TestShortestPath:
    def test_examples(self):
        assert shortest_path_steps(np.array([0, 0]), np.array([10, 1])) == 5
        assert shortest_path_steps(np.array([3, 3]), np.array([3, 4])) == 1
        assert shortest_path_steps(np.array([5, 5]), np.array([5, 5])) == 0


class TestBuildDataset:
    def test_counting_oracle(self):
        spec = small_spec()
        objs = generate_objects(3, seed=5, params=SMALL_PARAMS, state_dims=2)
        ds = build_dataset(objs, spec, samples_per_state=1, noise_sigma=0.1, seed=1, params=SMALL_PARAMS)
        assert len(ds) == 3 * 5 ** 2

    def test_counting_with_noiseless_pass(self):
        spec = small_spec()
        objs = generate_objects(2, seed=5, params=SMALL_PARAMS, state_dims=2)
        ds = build_dataset(objs, spec, 2, 0.1, seed=1, params=SMALL_PARAMS, include_noiseless=True)
        assert len(ds) == 2 * 25 * 3

    def test_split_fractions_per_object(self):
        spec = StateSpaceSpec(n=2, d=11)
        objs = generate_objects(4, seed=5, params=SMALL_PARAMS, state_dims=2)
        ds = build_dataset(objs, spec, 1, 0.0, seed=1, params=SMALL_PARAMS)
        for obj in objs:
            mask = ds.object_ids == obj.object_id
            n_val = int(np.isin(np.nonzero(mask)[0], ds.val_indices).sum())
            assert abs(n_val - 0.1 * mask.sum()) <= 1

    def test_split_partitions_everything(self):
        spec = small_spec()
        objs = generate_objects(2, seed=5, params=SMALL_PARAMS, state_dims=2)
        ds = build_dataset(objs, spec, 1, 0.0, seed=1, params=SMALL_PARAMS)
        joined = np.sort(np.concatenate([ds.train_indices, ds.val_indices]))
        assert np.array_equal(joined, np.arange(len(ds)))

    def test_labels_are_valid_one_hots(self):
        spec = small_spec()
        objs = generate_objects(2, seed=5, params=SMALL_PARAMS, state_dims=2)
        ds = build_dataset(objs, spec, 1, 0.2, seed=1, params=SMALL_PARAMS)
        labels = ds.one_hot_labels(np.arange(10))
        assert np.all(labels.sum(axis=2) == 1.0)
        assert np.all((labels == 0) | (labels == 1))
        recovered = np.argmax(labels, axis=2)
        assert np.array_equal(recovered, ds.states[:10])

    def test_deterministic_per_seed(self):
        spec = small_spec()
        objs = generate_objects(2, seed=5, params=SMALL_PARAMS, state_dims=2)
        a = build_dataset(objs, spec, 1, 0.3, seed=4, params=SMALL_PARAMS)
        b = build_dataset(objs, spec, 1, 0.3, seed=4, params=SMALL_PARAMS)
        assert np.array_equal(a.left, b.left)
        assert np.array_equal(a.val_indices, b.val_indices)

    def test_save_load_roundtrip(self, tmp_path):
        spec = small_spec()
        objs = generate_objects(2, seed=5, params=SMALL_PARAMS, state_dims=2)
        ds = build_dataset(objs, spec, 1, 0.2, seed=4, params=SMALL_PARAMS)
        save_dataset(ds, tmp_path / "d.bin", tmp_path / "d.json")
        loaded = load_dataset(tmp_path / "d.bin", tmp_path / "d.json")
        assert np.array_equal(loaded.left, ds.left)
        assert np.array_equal(loaded.states, ds.states)
        assert np.array_equal(loaded.train_indices, ds.train_indices)
        assert loaded.spec.d == spec.d

    def test_corrupt_sidecar_rejected(self, tmp_path):
        (tmp_path / "d.json").write_text("{not json")
        with pytest.raises(DatasetError):
            load_dataset(tmp_path / "d.bin", tmp_path / "d.json")

    def test_record_count_mismatch_rejected(self, tmp_path):
        spec = small_spec()
        objs = generate_objects(1, seed=5, params=SMALL_PARAMS, state_dims=2)
        ds = build_dataset(objs, spec, 1, 0.0, seed=4, params=SMALL_PARAMS)
        save_dataset(ds, tmp_path / "d.bin", tmp_path / "d.json")
        data = (tmp_path / "d.bin").read_bytes()
        (tmp_path / "d.bin").write_bytes(data[: len(data) // 2])
        with pytest.raises(DatasetError):
            load_dataset(tmp_path / "d.bin", tmp_path / "d.json")
