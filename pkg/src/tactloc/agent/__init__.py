"""Belief-space PPO agents: factored-action policy nets, PPO machinery,
rollout collection, and the recurrent baseline."""

from .networks import (
    FactoredPolicyOutput,
    PolicyNetConfig,
    RecurrentNetConfig,
    build_policy_input,
    build_policy_params,
    build_recurrent_params,
    categories_to_deltas,
    policy_output,
    policy_value_forward,
    recurrent_forward,
    sample_joint_action,
)
from .ppo import PPOConfig, TrajectoryBatch, compute_gae, normalize_advantages, ppo_update, ppo_update_recurrent
from .rollout import (
    EpisodeOutcome,
    EpisodeRecord,
    LearnedLikelihood,
    OracleLikelihood,
    VectorBeliefEnv,
    VectorRawObsEnv,
    collect_rollout_belief,
    collect_rollout_recurrent,
    evaluate_belief_policy,
    evaluate_recurrent_policy,
    filter_trajectory_stats,
    greedy_reach_policy,
    run_agent_episode,
    summarize_outcomes,
    train_belief_agent,
    train_recurrent_agent,
    train_seeds_parallel,
)

__all__ = [
    "EpisodeOutcome",
    "EpisodeRecord",
    "FactoredPolicyOutput",
    "LearnedLikelihood",
    "OracleLikelihood",
    "PPOConfig",
    "PolicyNetConfig",
    "RecurrentNetConfig",
    "TrajectoryBatch",
    "VectorBeliefEnv",
    "VectorRawObsEnv",
    "build_policy_input",
    "build_policy_params",
    "build_recurrent_params",
    "categories_to_deltas",
    "collect_rollout_belief",
    "collect_rollout_recurrent",
    "compute_gae",
    "evaluate_belief_policy",
    "evaluate_recurrent_policy",
    "filter_trajectory_stats",
    "greedy_reach_policy",
    "normalize_advantages",
    "policy_output",
    "policy_value_forward",
    "ppo_update",
    "ppo_update_recurrent",
    "recurrent_forward",
    "run_agent_episode",
    "sample_joint_action",
    "summarize_outcomes",
    "train_belief_agent",
    "train_recurrent_agent",
    "train_seeds_parallel",
]
