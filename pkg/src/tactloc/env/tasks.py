"""Episodic tasks: active pose estimation and goal reaching.

Both tasks share the same dynamics: delta moves clamped at the grid edges
(the same shift the belief filter uses for prediction) and a fresh noisy
observation after every move.  Rewards are sparse {0, 1}; an episode ends on
reward 1 or when the horizon is exhausted.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..belief import DeltaAction, FactoredState, StateSpaceSpec, shift_indices
from ..exceptions import EpisodeStateError
from .signatures import ObjectSignature, TactileObservation, observe

TASK_ACTIVE = "active"
TASK_REACHING = "reaching"


@dataclass(frozen=True)
class TaskConfig:
    task: str
    spec: StateSpaceSpec
    objects: tuple[ObjectSignature, ...]
    horizon: int = 16
    noise_sigma: float = 0.1

    def __post_init__(self):
        if self.task not in (TASK_ACTIVE, TASK_REACHING):
            raise ValueError(f"unknown task {self.task!r}")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if not self.objects:
            raise ValueError("task needs at least one object")
        object.__setattr__(self, "objects", tuple(self.objects))


@dataclass
class EpisodeState:
    """Mutable per-episode state, owned by exactly one rollout."""

    config: TaskConfig
    object_index: int
    true_state: np.ndarray
    goal: np.ndarray | None
    rng: np.random.Generator
    step_count: int = 0
    done: bool = False
    reset_events: int = field(default=0)

    @property
    def object_id(self) -> int:
        return self.config.objects[self.object_index].object_id

    @property
    def obj(self) -> ObjectSignature:
        return self.config.objects[self.object_index]

    def goal_state(self) -> FactoredState | None:
        return None if self.goal is None else FactoredState.from_array(self.goal)


def reset(
    config: TaskConfig,
    object_index: int,
    rng: np.random.Generator,
) -> tuple[EpisodeState, TactileObservation]:
    """Start an episode: uniform random pose, fresh goal for reaching (the
    goal always differs from the start in at least one dimension), and the
    initial observation at the start pose."""
    spec = config.spec
    if not 0 <= object_index < len(config.objects):
        raise ValueError(f"object_index {object_index} out of range")
    true_state = rng.integers(0, spec.d, size=spec.n)
    goal = None
    if config.task == TASK_REACHING:
        goal = rng.integers(0, spec.d, size=spec.n)
        while np.array_equal(goal, true_state):
            goal = rng.integers(0, spec.d, size=spec.n)
    ep = EpisodeState(config, object_index, true_state, goal, rng)
    obs = observe(ep.obj, true_state, spec, config.noise_sigma, rng)
    return ep, obs


def env_step(
    ep: EpisodeState,
    action: DeltaAction,
    estimate: FactoredState | None = None,
) -> tuple[TactileObservation, float, bool]:
    """Advance one timestep.

    Moves the true pose by the clamped deltas, draws a new observation, and
    scores the sparse reward: for active pose estimation the submitted
    ``estimate`` must match the (post-move) true pose in every dimension; for
    reaching the true pose must match the goal.
    """
    if ep.done:
        raise EpisodeStateError("env_step called on a finished episode")
    cfg = ep.config
    ep.true_state = shift_indices(ep.true_state, action.as_array(), cfg.spec.d)
    obs = observe(ep.obj, ep.true_state, cfg.spec, cfg.noise_sigma, ep.rng)
    ep.step_count += 1

    if cfg.task == TASK_ACTIVE:
        if estimate is None:
            raise ValueError("active pose estimation requires an estimate each step")
        reward = 1.0 if np.array_equal(estimate.as_array(), ep.true_state) else 0.0
    else:
        reward = 1.0 if np.array_equal(ep.true_state, ep.goal) else 0.0

    ep.done = reward == 1.0 or ep.step_count >= cfg.horizon
    return obs, reward, ep.done


def shortest_path_steps(start: np.ndarray, goal: np.ndarray) -> int:
    """Minimum steps to move start onto goal with per-dimension deltas in
    {-2..2}: the max over dimensions of ceil(distance / 2)."""
    dist = np.abs(np.asarray(goal, dtype=np.int64) - np.asarray(start, dtype=np.int64))
    return int(np.max((dist + 1) // 2))
