"""Tactile gripper-pose estimation on a discrete grid: a factored histogram
filter with a learned observation model, and belief-space PPO agents on top."""

__version__ = "0.1.0"
