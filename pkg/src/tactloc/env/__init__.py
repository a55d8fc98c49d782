"""Desk-scale environment: procedural signatures, episodic tasks, datasets."""

from .dataset import Dataset, build_dataset, load_dataset, save_dataset, state_grid
from .signatures import (
    ObjectSignature,
    SignatureParams,
    TactileObservation,
    generate_objects,
    normalized_pose,
    observe,
    split_pool,
)
from .tasks import (
    TASK_ACTIVE,
    TASK_REACHING,
    EpisodeState,
    TaskConfig,
    env_step,
    reset,
    shortest_path_steps,
)

__all__ = [
    "Dataset",
    "EpisodeState",
    "ObjectSignature",
    "SignatureParams",
    "TASK_ACTIVE",
    "TASK_REACHING",
    "TactileObservation",
    "TaskConfig",
    "build_dataset",
    "env_step",
    "generate_objects",
    "load_dataset",
    "normalized_pose",
    "observe",
    "reset",
    "save_dataset",
    "shortest_path_steps",
    "split_pool",
    "state_grid",
]
