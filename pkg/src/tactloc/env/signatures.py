"""Procedural object signatures and noisy two-finger observations.

Each object carries one signature function per finger mapping the normalized
pose x in [0,1]^n to an m-vector of features.  A signature is a sum of random
cosine components; amplitudes are normalized so every feature stays in
[-1, 1], which makes the observation noise scale directly comparable across
objects.

A pool of objects behaves like one category: the component frequencies and
base phases are drawn once from the generator seed, and every object draws
its own amplitude mixture and phase offsets around them.  Held-out objects
from the same seed are therefore novel instances of a familiar category, not
arbitrary functions, and the spread knobs control how far apart instances
sit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..belief import FactoredState, StateSpaceSpec


@dataclass(frozen=True)
class SignatureParams:
    """Generator knobs.

    feature_dim/components size each signature; f_max bounds the frequency
    magnitude (cycles across the workspace, controls aliasing);
    amplitude_spread and phase_jitter control how far objects in one pool
    deviate from their shared category basis.
    """

    feature_dim: int = 32
    components: int = 8
    f_max: float = 1.5
    amplitude_spread: float = 0.25
    phase_jitter: float = 0.12

    def __post_init__(self):
        if self.feature_dim < 1 or self.components < 1:
            raise ValueError("feature_dim and components must be >= 1")
        if self.f_max < 0 or self.amplitude_spread < 0 or self.phase_jitter < 0:
            raise ValueError("f_max, amplitude_spread, phase_jitter must be >= 0")

    def to_dict(self) -> dict:
        return {
            "feature_dim": self.feature_dim,
            "components": self.components,
            "f_max": self.f_max,
            "amplitude_spread": self.amplitude_spread,
            "phase_jitter": self.phase_jitter,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SignatureParams":
        return cls(**d)


@dataclass(frozen=True)
class ObjectSignature:
    """Cosine-mixture feature maps for the two fingers of one object.

    Arrays are (m, F) for amplitudes/phases and (m, F, n) for frequency
    vectors; index 0 is the left finger, 1 the right.
    """

    object_id: int
    amplitudes: np.ndarray  # (2, m, F), non-negative, rows sum to 1 over F
    frequencies: np.ndarray  # (2, m, F, n), |freq vector| <= f_max
    phases: np.ndarray  # (2, m, F)

    @property
    def feature_dim(self) -> int:
        return self.amplitudes.shape[1]

    @property
    def state_dims(self) -> int:
        return self.frequencies.shape[3]

    def features(self, x: np.ndarray, finger: int) -> np.ndarray:
        """Evaluate one finger's signature at normalized poses x (.., n)."""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        theta = 2.0 * np.pi * np.einsum("mfn,bn->bmf", self.frequencies[finger], x)
        theta += self.phases[finger][None, :, :]
        out = (self.amplitudes[finger][None, :, :] * np.cos(theta)).sum(axis=2)
        return out[0] if single else out


@dataclass(frozen=True)
class TactileObservation:
    """One noisy feature vector per finger, drawn at the same pose."""

    left: np.ndarray
    right: np.ndarray
    noise_sigma: float

    def stacked(self) -> np.ndarray:
        return np.stack([self.left, self.right])


def generate_objects(
    count: int,
    seed: int,
    params: SignatureParams = SignatureParams(),
    state_dims: int = 4,
) -> list[ObjectSignature]:
    """Deterministically generate a pool of ``count`` object signatures.

    One category basis (frequency vectors uniform in the n-ball of radius
    f_max, base phases, base amplitudes) is drawn from the seed; every object
    then perturbs it: amplitudes are remixed by log-normal factors of scale
    ``amplitude_spread`` and phases shifted by Gaussian ``phase_jitter``.
    Amplitudes are normalized per feature so |features| <= 1.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(seed)
    m, f, n = params.feature_dim, params.components, state_dims

    direction = rng.normal(size=(2, m, f, n))
    norms = np.linalg.norm(direction, axis=3, keepdims=True)
    norms[norms == 0] = 1.0
    radius = params.f_max * rng.uniform(0.0, 1.0, size=(2, m, f, 1)) ** (1.0 / n)
    freq = direction / norms * radius
    base_phase = rng.uniform(0.0, 2.0 * np.pi, size=(2, m, f))
    base_amp = rng.uniform(0.5, 1.0, size=(2, m, f))

    objects = []
    for obj_id in range(count):
        raw_amp = base_amp * np.exp(params.amplitude_spread * rng.normal(size=(2, m, f)))
        amp = raw_amp / raw_amp.sum(axis=2, keepdims=True)
        phase = base_phase + params.phase_jitter * rng.normal(size=(2, m, f))
        objects.append(ObjectSignature(obj_id, amp, freq, phase))
    return objects


def split_pool(objects: list[ObjectSignature], train_count: int) -> tuple[list, list]:
    """Split a pool into train and holdout lists (disjoint by construction)."""
    if not 0 < train_count <= len(objects):
        raise ValueError(f"train_count {train_count} out of range for {len(objects)} objects")
    return objects[:train_count], objects[train_count:]


def normalized_pose(state: np.ndarray, spec: StateSpaceSpec) -> np.ndarray:
    """Map bin indices to [0,1]^n coordinates."""
    return np.asarray(state, dtype=np.float64) / (spec.d - 1)


def observe(
    obj: ObjectSignature,
    state: FactoredState | np.ndarray,
    spec: StateSpaceSpec,
    noise_sigma: float,
    rng: np.random.Generator,
) -> TactileObservation:
    """Draw a two-finger observation at a grid state.

    Noise is Gaussian with std ``noise_sigma``, independent per finger, per
    feature, and per call.
    """
    idx = state.as_array() if isinstance(state, FactoredState) else np.asarray(state)
    if np.any(idx < 0) or np.any(idx >= spec.d):
        raise ValueError(f"state {idx} outside grid with d={spec.d}")
    x = normalized_pose(idx, spec)
    left = obj.features(x, 0)
    right = obj.features(x, 1)
    if noise_sigma > 0:
        left = left + rng.normal(0.0, noise_sigma, size=left.shape)
        right = right + rng.normal(0.0, noise_sigma, size=right.shape)
    return TactileObservation(left, right, noise_sigma)
