"""Rollout collection, evaluation, and the full training loops.

Environments run as vectorized batches: one numpy block of beliefs, one
shared rng, and per-episode Python state.  The belief agent and the recurrent
baseline share the episodic plumbing but differ in what the policy consumes
(beliefs + goal channels vs raw finger features + goal).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import nn
from ..belief import (
    DeltaAction,
    FactoredBelief,
    belief_entropy,
    map_estimate,
    shift_indices,
    step as belief_step,
    uniform_belief,
    update as belief_update,
)
from ..env.signatures import ObjectSignature
from ..env.tasks import TASK_ACTIVE, TASK_REACHING, TaskConfig, env_step, reset, shortest_path_steps
from ..obsmodel import ObsModelConfig, forward_batch, fuse_rows
from .networks import (
    PolicyNetConfig,
    RecurrentNetConfig,
    build_policy_params,
    build_recurrent_params,
    categories_to_deltas,
    greedy_categories,
    policy_value_forward,
    recurrent_forward,
    sample_categories,
)
from .ppo import PPOConfig, TrajectoryBatch, compute_gae, ppo_update, ppo_update_recurrent


class LearnedLikelihood:
    """Fused per-dimension likelihoods from the trained observation model."""

    def __init__(self, params: nn.ModelParameters, spec, config: ObsModelConfig):
        self.params = params
        self.spec = spec
        self.config = config

    def __call__(self, left: np.ndarray, right: np.ndarray, true_states: np.ndarray) -> np.ndarray:
        with nn.no_grad():
            pl = forward_batch(np.asarray(left, dtype=np.float64), self.params, self.spec, self.config).data
            pr = forward_batch(np.asarray(right, dtype=np.float64), self.params, self.spec, self.config).data
        rows, _ = fuse_rows(pl, pr, self.config.fusion)
        return rows


class OracleLikelihood:
    """One-hot likelihood at the true state (diagnostic privilege, tests and
    upper-bound baselines only)."""

    def __init__(self, spec):
        self.spec = spec

    def __call__(self, left: np.ndarray, right: np.ndarray, true_states: np.ndarray) -> np.ndarray:
        batch = true_states.shape[0]
        rows = np.zeros((batch, self.spec.n, self.spec.d))
        b = np.repeat(np.arange(batch), self.spec.n)
        dims = np.tile(np.arange(self.spec.n), batch)
        rows[b, dims, true_states.astype(np.int64).reshape(-1)] = 1.0
        return rows


def predict_batch(beliefs: np.ndarray, deltas: np.ndarray) -> np.ndarray:
    """Clamped-shift prediction for a (B, n, d) block of beliefs."""
    B, n, d = beliefs.shape
    targets = shift_indices(np.broadcast_to(np.arange(d), (B, n, d)), deltas[:, :, None], d)
    out = np.zeros_like(beliefs)
    ei = np.broadcast_to(np.arange(B)[:, None, None], (B, n, d))
    di = np.broadcast_to(np.arange(n)[None, :, None], (B, n, d))
    np.add.at(out, (ei, di, targets), beliefs)
    return out


def update_batch(beliefs: np.ndarray, likelihood: np.ndarray) -> tuple[np.ndarray, int]:
    """Row-wise multiply-normalize; collapsed rows reset to uniform.
    Returns the updated block and the number of reset rows."""
    prod = beliefs * likelihood
    sums = prod.sum(axis=2, keepdims=True)
    dead = sums[:, :, 0] < 1e-300
    n_dead = int(dead.sum())
    if n_dead:
        prod[dead] = 1.0 / beliefs.shape[2]
        sums = prod.sum(axis=2, keepdims=True)
    return prod / sums, n_dead


@dataclass
class EpisodeOutcome:
    success: bool
    length: int
    start: np.ndarray
    goal: np.ndarray | None
    object_id: int
    env_index: int = -1

    @property
    def oracle_steps(self) -> int | None:
        if self.goal is None:
            return None
        return shortest_path_steps(self.start, self.goal)


class BatchedEpisodes:
    """Vectorized episode bookkeeping with the scalar env's exact semantics:
    the same clamped shift, uniform resets (reaching goals resampled until
    they differ from the start), sparse rewards, and termination rule.
    Signature tensors are stacked per env so one einsum observes every env.
    """

    def __init__(self, task: TaskConfig, n_envs: int, rng: np.random.Generator):
        self.task = task
        self.E = n_envs
        self.rng = rng
        spec = task.spec
        obj0 = task.objects[0]
        m, F = obj0.feature_dim, obj0.amplitudes.shape[2]
        self.m = m
        self.obj_idx = np.zeros(n_envs, dtype=np.int64)
        self.states = np.zeros((n_envs, spec.n), dtype=np.int64)
        self.starts = np.zeros((n_envs, spec.n), dtype=np.int64)
        self.goals = np.zeros((n_envs, spec.n), dtype=np.int64) if task.task == TASK_REACHING else None
        self.step_counts = np.zeros(n_envs, dtype=np.int64)
        self._amp = np.zeros((n_envs, 2, m, F))
        self._freq = np.zeros((n_envs, 2, m, F, spec.n))
        self._phase = np.zeros((n_envs, 2, m, F))

    def begin(self, env_ids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Reset the given envs and return their initial observations."""
        spec = self.task.spec
        for e in env_ids:
            obj_index = int(self.rng.integers(0, len(self.task.objects)))
            obj = self.task.objects[obj_index]
            self.obj_idx[e] = obj_index
            self._amp[e], self._freq[e], self._phase[e] = obj.amplitudes, obj.frequencies, obj.phases
            start = self.rng.integers(0, spec.d, size=spec.n)
            self.states[e] = start
            self.starts[e] = start
            if self.goals is not None:
                goal = self.rng.integers(0, spec.d, size=spec.n)
                while np.array_equal(goal, start):
                    goal = self.rng.integers(0, spec.d, size=spec.n)
                self.goals[e] = goal
            self.step_counts[e] = 0
        return self.observe(env_ids)

    def observe(self, env_ids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        spec = self.task.spec
        x = self.states[env_ids].astype(np.float64) / (spec.d - 1)
        freq = self._freq[env_ids]
        n_sel = env_ids.shape[0]
        theta = (freq.reshape(n_sel, -1, spec.n) @ x[:, :, None]).reshape(freq.shape[:4])
        theta *= 2.0 * np.pi
        theta += self._phase[env_ids]
        feats = (self._amp[env_ids] * np.cos(theta)).sum(axis=3)
        if self.task.noise_sigma > 0:
            feats = feats + self.rng.normal(0.0, self.task.noise_sigma, size=feats.shape)
        return feats[:, 0], feats[:, 1]

    def step(self, deltas: np.ndarray, estimates: np.ndarray | None) -> tuple[np.ndarray, np.ndarray]:
        """Move every env; returns (rewards, dones)."""
        task = self.task
        self.states = shift_indices(self.states, deltas, task.spec.d)
        self.step_counts += 1
        if task.task == TASK_ACTIVE:
            if estimates is None:
                raise ValueError("active pose estimation requires estimates each step")
            rewards = np.all(estimates == self.states, axis=1).astype(np.float64)
        else:
            rewards = np.all(self.states == self.goals, axis=1).astype(np.float64)
        dones = (rewards == 1.0) | (self.step_counts >= task.horizon)
        return rewards, dones

    def outcome(self, e: int, reward: float) -> EpisodeOutcome:
        return EpisodeOutcome(
            success=reward == 1.0,
            length=int(self.step_counts[e]),
            start=self.starts[e].copy(),
            goal=None if self.goals is None else self.goals[e].copy(),
            object_id=self.task.objects[self.obj_idx[e]].object_id,
            env_index=int(e),
        )


class VectorBeliefEnv:
    """A batch of episodes plus their filtered beliefs."""

    def __init__(self, task: TaskConfig, n_envs: int, likelihood, rng: np.random.Generator):
        self.task = task
        self.n_envs = n_envs
        self.likelihood = likelihood
        self.spec = task.spec
        self.eps = BatchedEpisodes(task, n_envs, rng)
        self.beliefs = np.zeros((n_envs, self.spec.n, self.spec.d))
        self.goal_onehots = np.zeros((n_envs, self.spec.n, self.spec.d))
        self.filter_resets = 0

    def reset_all(self) -> None:
        env_ids = np.arange(self.n_envs)
        obs_l, obs_r = self.eps.begin(env_ids)
        self._refresh_goal_channels(env_ids)
        self._initial_update(env_ids, obs_l, obs_r)

    def _refresh_goal_channels(self, env_ids: np.ndarray) -> None:
        self.goal_onehots[env_ids] = 0.0
        if self.eps.goals is not None:
            for e in env_ids:
                self.goal_onehots[e, np.arange(self.spec.n), self.eps.goals[e]] = 1.0

    def _initial_update(self, env_ids: np.ndarray, obs_l: np.ndarray, obs_r: np.ndarray) -> None:
        lik = self.likelihood(obs_l, obs_r, self.eps.states[env_ids])
        uniform = np.full((env_ids.shape[0], self.spec.n, self.spec.d), 1.0 / self.spec.d)
        updated, resets = update_batch(uniform, lik)
        self.beliefs[env_ids] = updated
        self.filter_resets += resets

    def policy_inputs(self) -> np.ndarray:
        """(E, n, 2, d) stack of belief and goal channels."""
        return np.stack([self.beliefs, self.goal_onehots], axis=2)

    def step(self, categories: np.ndarray) -> tuple[np.ndarray, np.ndarray, list[EpisodeOutcome]]:
        """Advance every env one step and auto-reset finished episodes.

        For the active task the MAP of each env's current belief is submitted
        as the estimate.  Returns (rewards, dones, finished episode records).
        """
        deltas = categories_to_deltas(categories, 5)
        estimates = np.argmax(self.beliefs, axis=2) if self.task.task == TASK_ACTIVE else None
        rewards, dones = self.eps.step(deltas, estimates)
        obs_l, obs_r = self.eps.observe(np.arange(self.n_envs))

        lik = self.likelihood(obs_l, obs_r, self.eps.states)
        self.beliefs = predict_batch(self.beliefs, deltas)
        self.beliefs, resets = update_batch(self.beliefs, lik)
        self.filter_resets += resets

        finished: list[EpisodeOutcome] = []
        done_ids = np.nonzero(dones)[0]
        if done_ids.size:
            for e in done_ids:
                finished.append(self.eps.outcome(int(e), rewards[e]))
            new_l, new_r = self.eps.begin(done_ids)
            self._refresh_goal_channels(done_ids)
            self._initial_update(done_ids, new_l, new_r)
        return rewards, dones, finished


def _policy_categories(
    inputs: np.ndarray,
    params: nn.ModelParameters,
    net_cfg: PolicyNetConfig,
    rng: np.random.Generator,
    greedy: bool = False,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Sample (or argmax) actions for a batch of inputs; returns
    (categories, log-probs, values)."""
    with nn.no_grad():
        logits, values = policy_value_forward(inputs, params, net_cfg)
        probs = nn.segment_softmax(logits, [net_cfg.action_bins] * net_cfg.n)
    probs3 = probs.data.reshape(inputs.shape[0], net_cfg.n, net_cfg.action_bins)
    if greedy:
        cats = greedy_categories(probs3)
        picked = np.take_along_axis(probs3, cats[..., None], axis=-1)[..., 0]
        logp = np.log(np.maximum(picked, 1e-300)).sum(axis=-1)
    else:
        cats, logp = sample_categories(probs3, rng)
    return cats, logp, values.data


def collect_rollout_belief(
    params: nn.ModelParameters,
    net_cfg: PolicyNetConfig,
    venv: VectorBeliefEnv,
    cfg: PPOConfig,
    rng: np.random.Generator,
) -> tuple[TrajectoryBatch, list[EpisodeOutcome]]:
    """Collect one on-policy rollout for the belief agent.

    All environments restart fresh episodes at the rollout start; the final
    partial episodes are bootstrapped through the value function.
    """
    T, E = cfg.steps_per_env, cfg.n_envs
    spec = venv.spec
    venv.reset_all()
    inputs = np.empty((T, E, spec.n, 2, spec.d))
    actions = np.empty((T, E, spec.n), dtype=np.int64)
    log_probs = np.empty((T, E))
    rewards = np.empty((T, E))
    values = np.empty((T, E))
    dones = np.empty((T, E), dtype=bool)
    outcomes: list[EpisodeOutcome] = []
    for t in range(T):
        inp = venv.policy_inputs()
        cats, logp, vals = _policy_categories(inp, params, net_cfg, rng)
        r, d, finished = venv.step(cats)
        inputs[t], actions[t], log_probs[t] = inp, cats, logp
        rewards[t], values[t], dones[t] = r, vals, d
        outcomes.extend(finished)
    with nn.no_grad():
        _, boot = policy_value_forward(venv.policy_inputs(), params, net_cfg)
    batch = TrajectoryBatch((inputs,), actions, log_probs, rewards, values, dones, boot.data)
    return batch, outcomes


def evaluate_belief_policy(
    params: nn.ModelParameters,
    net_cfg: PolicyNetConfig,
    task: TaskConfig,
    likelihood,
    episodes: int,
    rng: np.random.Generator,
    greedy: bool = True,
) -> dict:
    """Run ``episodes`` complete episodes in one vectorized batch.

    Each env slot contributes exactly its first episode (auto-reset episodes
    are discarded), so the statistics are unbiased by episode length.
    """
    venv = VectorBeliefEnv(task, episodes, likelihood, rng)
    venv.reset_all()
    first: list[EpisodeOutcome | None] = [None] * episodes
    for _ in range(task.horizon):
        cats, _, _ = _policy_categories(venv.policy_inputs(), params, net_cfg, rng, greedy=greedy)
        _, _, finished = venv.step(cats)
        for rec in finished:
            if first[rec.env_index] is None:
                first[rec.env_index] = rec
        if all(rec is not None for rec in first):
            break
    return summarize_outcomes([rec for rec in first if rec is not None])


def summarize_outcomes(outcomes: list[EpisodeOutcome]) -> dict:
    if not outcomes:
        return {"episodes": 0, "success_rate": 0.0, "mean_length": float("nan"),
                "mean_success_length": float("nan"), "mean_oracle_steps": float("nan")}
    succ = np.array([o.success for o in outcomes])
    lens = np.array([o.length for o in outcomes], dtype=np.float64)
    oracle = np.array([o.oracle_steps for o in outcomes if o.oracle_steps is not None], dtype=np.float64)
    succ_lens = lens[succ]
    succ_oracle = np.array(
        [o.oracle_steps for o in outcomes if o.success and o.oracle_steps is not None], dtype=np.float64
    )
    return {
        "episodes": len(outcomes),
        "success_rate": float(succ.mean()),
        "mean_length": float(lens.mean()),
        "mean_success_length": float(succ_lens.mean()) if succ_lens.size else float("nan"),
        "mean_oracle_steps": float(oracle.mean()) if oracle.size else float("nan"),
        "mean_success_oracle_steps": float(succ_oracle.mean()) if succ_oracle.size else float("nan"),
    }


def train_belief_agent(
    train_task: TaskConfig,
    eval_task: TaskConfig,
    likelihood,
    ppo_cfg: PPOConfig,
    net_cfg: PolicyNetConfig,
    seed: int,
    progress=None,
    stop_at_success: float | None = None,
) -> tuple[nn.ModelParameters, list[dict]]:
    """Full PPO training run for the belief agent; returns parameters and one
    metrics row per update (evaluation runs after every update).

    ``stop_at_success`` ends the run early once an evaluation reaches the
    given success rate.
    """
    params = build_policy_params(net_cfg, seed)
    adam = nn.AdamState(params, learning_rate=ppo_cfg.learning_rate)
    rng = np.random.default_rng(seed)
    venv = VectorBeliefEnv(train_task, ppo_cfg.n_envs, likelihood, np.random.default_rng((seed, 1)))
    metrics: list[dict] = []
    env_steps = 0
    update = 0
    while env_steps < ppo_cfg.total_steps:
        batch, outcomes = collect_rollout_belief(params, net_cfg, venv, ppo_cfg, rng)
        env_steps += ppo_cfg.rollout_steps
        compute_gae(batch, ppo_cfg.gamma, ppo_cfg.gae_lambda)
        diag = ppo_update(batch, params, adam, ppo_cfg, net_cfg, rng)
        rollout_stats = summarize_outcomes(outcomes)
        eval_rng = np.random.default_rng((seed, 2, update))
        eval_stats = evaluate_belief_policy(
            params, net_cfg, eval_task, likelihood, ppo_cfg.eval_episodes, eval_rng, ppo_cfg.eval_greedy
        )
        row = {
            "update": update,
            "env_steps": env_steps,
            "success_rate": eval_stats["success_rate"],
            "mean_episode_length": eval_stats["mean_length"],
            "mean_success_length": eval_stats["mean_success_length"],
            "mean_success_oracle_steps": eval_stats.get("mean_success_oracle_steps", float("nan")),
            "rollout_success_rate": rollout_stats["success_rate"],
            **{k: diag[k] for k in ("policy_loss", "value_loss", "entropy", "clip_fraction", "approx_kl")},
        }
        metrics.append(row)
        if progress is not None:
            progress(row)
        update += 1
        if stop_at_success is not None and row["success_rate"] >= stop_at_success:
            break
    return params, metrics


def _train_one_seed(job: tuple) -> tuple[bytes, list[dict]]:
    kind, train_task, eval_task, likelihood, ppo_cfg, net_cfg, seed, stop = job
    if kind == "belief":
        params, metrics = train_belief_agent(
            train_task, eval_task, likelihood, ppo_cfg, net_cfg, seed, stop_at_success=stop
        )
    else:
        params, metrics = train_recurrent_agent(
            train_task, eval_task, ppo_cfg, net_cfg, seed, stop_at_success=stop
        )
    return params.to_bytes(), metrics


def train_seeds_parallel(
    kind: str,
    train_task: TaskConfig,
    eval_task: TaskConfig,
    likelihood,
    ppo_cfg: PPOConfig,
    net_cfg,
    seeds,
    stop_at_success: float | None = None,
    max_workers: int | None = None,
) -> list[tuple[nn.ModelParameters, list[dict]]]:
    """Run independent seeded training runs in parallel processes.

    Results are returned in seed order and are identical to sequential runs
    (each seed owns its own rng streams).
    """
    import concurrent.futures
    import os

    jobs = [(kind, train_task, eval_task, likelihood, ppo_cfg, net_cfg, s, stop_at_success) for s in seeds]
    workers = max_workers or min(len(jobs), os.cpu_count() or 1)
    if workers <= 1 or len(jobs) == 1:
        results = [_train_one_seed(job) for job in jobs]
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_train_one_seed, jobs))
    return [(nn.ModelParameters.from_bytes(blob), metrics) for blob, metrics in results]


# ---------------------------------------------------------------------------
# recurrent baseline


class VectorRawObsEnv:
    """Vectorized episodes exposing raw finger features (reaching only; the
    active task's reward needs a belief MAP estimate the baseline lacks)."""

    def __init__(self, task: TaskConfig, n_envs: int, rng: np.random.Generator):
        if task.task != TASK_REACHING:
            raise ValueError("the recurrent baseline supports the reaching task only")
        self.task = task
        self.n_envs = n_envs
        self.spec = task.spec
        self.eps = BatchedEpisodes(task, n_envs, rng)
        m = task.objects[0].feature_dim
        self.obs = np.zeros((n_envs, 2 * m))
        self.goal_flat = np.zeros((n_envs, self.spec.n * self.spec.d))

    def reset_all(self) -> None:
        env_ids = np.arange(self.n_envs)
        obs_l, obs_r = self.eps.begin(env_ids)
        self.obs[env_ids] = np.concatenate([obs_l, obs_r], axis=1)
        self._refresh_goals(env_ids)

    def _refresh_goals(self, env_ids: np.ndarray) -> None:
        for e in env_ids:
            onehot = np.zeros((self.spec.n, self.spec.d))
            onehot[np.arange(self.spec.n), self.eps.goals[e]] = 1.0
            self.goal_flat[e] = onehot.reshape(-1)

    def step(self, categories: np.ndarray) -> tuple[np.ndarray, np.ndarray, list[EpisodeOutcome]]:
        deltas = categories_to_deltas(categories, 5)
        rewards, dones = self.eps.step(deltas, None)
        obs_l, obs_r = self.eps.observe(np.arange(self.n_envs))
        self.obs = np.concatenate([obs_l, obs_r], axis=1)
        finished: list[EpisodeOutcome] = []
        done_ids = np.nonzero(dones)[0]
        if done_ids.size:
            for e in done_ids:
                finished.append(self.eps.outcome(int(e), rewards[e]))
            new_l, new_r = self.eps.begin(done_ids)
            self.obs[done_ids] = np.concatenate([new_l, new_r], axis=1)
            self._refresh_goals(done_ids)
        return rewards, dones, finished


def _recurrent_categories(
    obs: np.ndarray,
    goal: np.ndarray,
    hidden: np.ndarray,
    params: nn.ModelParameters,
    net_cfg: RecurrentNetConfig,
    rng: np.random.Generator,
    greedy: bool = False,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    with nn.no_grad():
        logits, values, new_h = recurrent_forward(obs, goal, hidden, params, net_cfg)
        probs = nn.segment_softmax(logits, [net_cfg.action_bins] * net_cfg.n)
    probs3 = probs.data.reshape(obs.shape[0], net_cfg.n, net_cfg.action_bins)
    if greedy:
        cats = greedy_categories(probs3)
        picked = np.take_along_axis(probs3, cats[..., None], axis=-1)[..., 0]
        logp = np.log(np.maximum(picked, 1e-300)).sum(axis=-1)
    else:
        cats, logp = sample_categories(probs3, rng)
    return cats, logp, values.data, new_h.data


def collect_rollout_recurrent(
    params: nn.ModelParameters,
    net_cfg: RecurrentNetConfig,
    venv: VectorRawObsEnv,
    cfg: PPOConfig,
    rng: np.random.Generator,
) -> tuple[TrajectoryBatch, list[EpisodeOutcome]]:
    T, E = cfg.steps_per_env, cfg.n_envs
    venv.reset_all()
    hidden = np.zeros((E, net_cfg.hidden))
    obs_seq = np.empty((T, E, venv.obs.shape[1]))
    goal_seq = np.empty((T, E, venv.goal_flat.shape[1]))
    actions = np.empty((T, E, net_cfg.n), dtype=np.int64)
    log_probs = np.empty((T, E))
    rewards = np.empty((T, E))
    values = np.empty((T, E))
    dones = np.empty((T, E), dtype=bool)
    outcomes: list[EpisodeOutcome] = []
    for t in range(T):
        obs_seq[t], goal_seq[t] = venv.obs, venv.goal_flat
        cats, logp, vals, hidden = _recurrent_categories(venv.obs, venv.goal_flat, hidden, params, net_cfg, rng)
        r, d, finished = venv.step(cats)
        hidden[d] = 0.0  # hidden resets at episode start
        actions[t], log_probs[t], rewards[t], values[t], dones[t] = cats, logp, r, vals, d
        outcomes.extend(finished)
    with nn.no_grad():
        _, boot, _ = recurrent_forward(venv.obs, venv.goal_flat, hidden, params, net_cfg)
    batch = TrajectoryBatch((obs_seq, goal_seq), actions, log_probs, rewards, values, dones, boot.data)
    return batch, outcomes


def evaluate_recurrent_policy(
    params: nn.ModelParameters,
    net_cfg: RecurrentNetConfig,
    task: TaskConfig,
    episodes: int,
    rng: np.random.Generator,
    greedy: bool = True,
) -> dict:
    venv = VectorRawObsEnv(task, episodes, rng)
    venv.reset_all()
    hidden = np.zeros((episodes, net_cfg.hidden))
    first: list[EpisodeOutcome | None] = [None] * episodes
    for _ in range(task.horizon):
        cats, _, _, hidden = _recurrent_categories(
            venv.obs, venv.goal_flat, hidden, params, net_cfg, rng, greedy=greedy
        )
        _, d, finished = venv.step(cats)
        hidden[d] = 0.0
        for rec in finished:
            if first[rec.env_index] is None:
                first[rec.env_index] = rec
        if all(rec is not None for rec in first):
            break
    return summarize_outcomes([rec for rec in first if rec is not None])


def train_recurrent_agent(
    train_task: TaskConfig,
    eval_task: TaskConfig,
    ppo_cfg: PPOConfig,
    net_cfg: RecurrentNetConfig,
    seed: int,
    progress=None,
    stop_at_success: float | None = None,
) -> tuple[nn.ModelParameters, list[dict]]:
    params = build_recurrent_params(net_cfg, seed)
    adam = nn.AdamState(params, learning_rate=ppo_cfg.learning_rate)
    rng = np.random.default_rng(seed)
    venv = VectorRawObsEnv(train_task, ppo_cfg.n_envs, np.random.default_rng((seed, 1)))
    metrics: list[dict] = []
    env_steps = 0
    update = 0
    while env_steps < ppo_cfg.total_steps:
        batch, outcomes = collect_rollout_recurrent(params, net_cfg, venv, ppo_cfg, rng)
        env_steps += ppo_cfg.rollout_steps
        compute_gae(batch, ppo_cfg.gamma, ppo_cfg.gae_lambda)
        diag = ppo_update_recurrent(batch, params, adam, ppo_cfg, net_cfg, rng)
        rollout_stats = summarize_outcomes(outcomes)
        eval_rng = np.random.default_rng((seed, 2, update))
        eval_stats = evaluate_recurrent_policy(
            params, net_cfg, eval_task, ppo_cfg.eval_episodes, eval_rng, ppo_cfg.eval_greedy
        )
        row = {
            "update": update,
            "env_steps": env_steps,
            "success_rate": eval_stats["success_rate"],
            "mean_episode_length": eval_stats["mean_length"],
            "mean_success_length": eval_stats["mean_success_length"],
            "mean_success_oracle_steps": eval_stats.get("mean_success_oracle_steps", float("nan")),
            "rollout_success_rate": rollout_stats["success_rate"],
            **{k: diag[k] for k in ("policy_loss", "value_loss", "entropy", "clip_fraction", "approx_kl")},
        }
        metrics.append(row)
        if progress is not None:
            progress(row)
        update += 1
        if stop_at_success is not None and row["success_rate"] >= stop_at_success:
            break
    return params, metrics


# ---------------------------------------------------------------------------
# single-episode runner and filter diagnostics


@dataclass
class EpisodeRecord:
    success: bool
    length: int
    object_id: int
    start: tuple[int, ...]
    goal: tuple[int, ...] | None
    rewards: list[float]
    actions: list[tuple[int, ...]]
    true_states: list[tuple[int, ...]]
    map_correct: np.ndarray  # (steps+1, n) bool, index 0 = after first update
    entropies: np.ndarray  # (steps+1, n)
    filter_resets: int
    beliefs: list[np.ndarray] = field(default_factory=list)
    likelihoods: list[np.ndarray] = field(default_factory=list)

    @property
    def oracle_steps(self) -> int | None:
        if self.goal is None:
            return None
        return shortest_path_steps(np.asarray(self.start), np.asarray(self.goal))


def run_agent_episode(
    policy_params: nn.ModelParameters | None,
    task: TaskConfig,
    likelihood,
    rng: np.random.Generator,
    net_cfg: PolicyNetConfig | None = None,
    policy_fn=None,
    object_index: int | None = None,
    greedy: bool = False,
    record: bool = False,
) -> EpisodeRecord:
    """Run one full episode: observe, filter, act, repeat until done.

    The policy is either the trained network (``policy_params`` +
    ``net_cfg``) or a callable ``policy_fn(belief, goal, rng) -> DeltaAction``.
    For the active task the MAP estimate of the current belief is submitted
    with every step.  ``likelihood`` maps batched observations to rows (the
    learned model or an oracle).
    """
    spec = task.spec
    if object_index is None:
        object_index = int(rng.integers(0, len(task.objects)))
    ep, obs = reset(task, object_index, rng)
    start = tuple(int(i) for i in ep.true_state)
    goal = None if ep.goal is None else tuple(int(i) for i in ep.goal)

    lik0 = likelihood(obs.left[None], obs.right[None], ep.true_state[None])[0]
    bel = belief_update(uniform_belief(spec), lik0)
    resets = len(bel.reset_dims)

    map_correct = [map_estimate(bel).as_array() == ep.true_state]
    entropies = [belief_entropy(bel)]
    rewards: list[float] = []
    actions: list[tuple[int, ...]] = []
    true_states = [start]
    beliefs = [bel.rows.copy()] if record else []
    likelihoods = [lik0.copy()] if record else []

    done = False
    while not done:
        if policy_fn is not None:
            action = policy_fn(bel, ep.goal, rng)
        else:
            inp = np.stack([bel.rows, _goal_onehot(ep.goal, spec)], axis=1)
            cats, _, _ = _policy_categories(inp[None], policy_params, net_cfg, rng, greedy=greedy)
            action = DeltaAction(tuple(int(x) for x in categories_to_deltas(cats[0], net_cfg.action_bins)))
        estimate = map_estimate(bel) if task.task == TASK_ACTIVE else None
        obs, reward, done = env_step(ep, action, estimate)
        lik = likelihood(obs.left[None], obs.right[None], ep.true_state[None])[0]
        bel = belief_step(bel, action, lik)
        resets += len(bel.reset_dims)
        rewards.append(float(reward))
        actions.append(action.deltas)
        true_states.append(tuple(int(i) for i in ep.true_state))
        map_correct.append(map_estimate(bel).as_array() == ep.true_state)
        entropies.append(belief_entropy(bel))
        if record:
            beliefs.append(bel.rows.copy())
            likelihoods.append(lik.copy())

    return EpisodeRecord(
        success=bool(rewards and rewards[-1] == 1.0),
        length=ep.step_count,
        object_id=ep.object_id,
        start=start,
        goal=goal,
        rewards=rewards,
        actions=actions,
        true_states=true_states,
        map_correct=np.asarray(map_correct),
        entropies=np.asarray(entropies),
        filter_resets=resets,
        beliefs=beliefs,
        likelihoods=likelihoods,
    )


def _goal_onehot(goal: np.ndarray | None, spec) -> np.ndarray:
    onehot = np.zeros((spec.n, spec.d))
    if goal is not None:
        onehot[np.arange(spec.n), np.asarray(goal, dtype=np.int64)] = 1.0
    return onehot


def greedy_reach_policy(bel: FactoredBelief, goal: np.ndarray, rng: np.random.Generator) -> DeltaAction:
    """Scripted shortest-path policy: move the MAP estimate toward the goal by
    up to 2 bins per dimension."""
    est = map_estimate(bel).as_array()
    deltas = np.clip(np.asarray(goal) - est, -2, 2)
    return DeltaAction(tuple(int(x) for x in deltas))


def filter_trajectory_stats(
    objects: tuple[ObjectSignature, ...],
    spec,
    noise_sigma: float,
    likelihood,
    episodes: int,
    steps: int,
    rng: np.random.Generator,
) -> dict:
    """Filter quality under random motion, vectorized over episodes.

    Runs ``episodes`` trajectories of ``steps`` random actions (no task, no
    termination) and reports per-step per-dimension MAP accuracy and belief
    entropy, plus the step-0 single-observation argmax accuracy.
    """
    from ..env.signatures import observe  # local import to avoid cycle at module load

    E, n, d = episodes, spec.n, spec.d
    obj_idx = rng.integers(0, len(objects), size=E)
    states = rng.integers(0, d, size=(E, n))
    beliefs = np.full((E, n, d), 1.0 / d)

    def observe_all(states_now):
        m = objects[0].feature_dim
        left = np.empty((E, m))
        right = np.empty((E, m))
        for e in range(E):
            obs = observe(objects[obj_idx[e]], states_now[e], spec, noise_sigma, rng)
            left[e], right[e] = obs.left, obs.right
        return left, right

    left, right = observe_all(states)
    lik = likelihood(left, right, states)
    single_shot = np.argmax(lik, axis=2) == states
    beliefs, _ = update_batch(beliefs, lik)

    map_correct = np.empty((steps + 1, E, n), dtype=bool)
    entropy = np.empty((steps + 1, E, n))
    map_correct[0] = np.argmax(beliefs, axis=2) == states
    entropy[0] = _entropy_batch(beliefs)

    for t in range(1, steps + 1):
        deltas = rng.integers(-2, 3, size=(E, n))
        states = shift_indices(states, deltas, d)
        left, right = observe_all(states)
        lik = likelihood(left, right, states)
        beliefs = predict_batch(beliefs, deltas)
        beliefs, _ = update_batch(beliefs, lik)
        map_correct[t] = np.argmax(beliefs, axis=2) == states
        entropy[t] = _entropy_batch(beliefs)

    return {
        "map_accuracy": map_correct.mean(axis=1),  # (steps+1, n)
        "entropy": entropy.mean(axis=1),
        "single_shot_accuracy": single_shot.mean(axis=0),  # (n,)
    }


def _entropy_batch(beliefs: np.ndarray) -> np.ndarray:
    terms = np.where(beliefs > 0, beliefs * np.log(np.where(beliefs > 0, beliefs, 1.0)), 0.0)
    return -terms.sum(axis=2)
