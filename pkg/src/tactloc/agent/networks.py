"""Policy/value networks for the belief agent and the recurrent baseline.

The belief agent stacks, for every state dimension, the belief row and the
goal one-hot row as a 2-channel vector.  A two-layer 1-d conv trunk (kernel 3,
tanh, weights tied across dimensions and shared between policy and value)
produces per-dimension features; separate fully connected heads emit the
factored action logits and the scalar value.

The recurrent baseline never sees the belief: raw two-finger features and the
goal are encoded, passed through a gated recurrent cell, and read out by the
same kind of heads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import nn
from ..belief import DeltaAction


@dataclass(frozen=True)
class PolicyNetConfig:
    n: int = 4
    d: int = 11
    conv_channels: tuple[int, int] = (1, 1)
    action_bins: int = 5

    def __post_init__(self):
        object.__setattr__(self, "conv_channels", tuple(int(c) for c in self.conv_channels))
        if len(self.conv_channels) != 2 or min(self.conv_channels) < 1:
            raise ValueError("conv_channels must be two positive ints")
        if self.action_bins % 2 == 0:
            raise ValueError("action_bins must be odd (centered on stay-still)")

    @property
    def num_actions(self) -> int:
        return self.n * self.action_bins

    @property
    def feature_dim(self) -> int:
        return self.n * self.conv_channels[1] * self.d


@dataclass(frozen=True)
class FactoredPolicyOutput:
    """Logits split into n equal segments, one softmax distribution each."""

    logits: np.ndarray
    probs: np.ndarray
    action_bins: int

    def __post_init__(self):
        if self.logits.shape != self.probs.shape or self.logits.ndim != 1:
            raise ValueError("logits/probs must be matching 1-d arrays")
        if self.logits.shape[0] % self.action_bins != 0:
            raise ValueError("logit count must be a multiple of action_bins")

    @property
    def segments(self) -> int:
        return self.logits.shape[0] // self.action_bins

    def segment_probs(self) -> np.ndarray:
        return self.probs.reshape(self.segments, self.action_bins)


def build_policy_params(cfg: PolicyNetConfig, seed: int) -> nn.ModelParameters:
    """Conv trunk gets fan-in init; both heads start at zero, so the initial
    policy is exactly uniform and the initial value exactly zero.  With sparse
    rewards this matters: failure transitions then carry exactly-zero
    advantages and rollouts without a single success leave the policy
    untouched instead of injecting amplified value noise."""
    c1, c2 = cfg.conv_channels
    params = nn.ModelParameters(seed)
    params.add("pi/conv0_w", (c1, 2, 3), fan_in=2 * 3)
    params.add("pi/conv0_b", (c1,), init="zeros")
    params.add("pi/conv1_w", (c2, c1, 3), fan_in=c1 * 3)
    params.add("pi/conv1_b", (c2,), init="zeros")
    params.add("pi/policy_w", (cfg.feature_dim, cfg.num_actions), init="zeros")
    params.add("pi/policy_b", (cfg.num_actions,), init="zeros")
    params.add("pi/value_w", (cfg.feature_dim, 1), init="zeros")
    params.add("pi/value_b", (1,), init="zeros")
    return params


def build_policy_input(belief_rows: np.ndarray, goal: np.ndarray | None, d: int) -> np.ndarray:
    """Stack belief and goal one-hot as the 2-channel per-dimension input;
    the goal channel is all-zero for goalless tasks."""
    rows = np.asarray(belief_rows, dtype=np.float64)
    n = rows.shape[0]
    out = np.zeros((n, 2, d))
    out[:, 0, :] = rows
    if goal is not None:
        out[np.arange(n), 1, np.asarray(goal, dtype=np.int64)] = 1.0
    return out


def policy_value_forward(
    inputs: np.ndarray,
    params: nn.ModelParameters,
    cfg: PolicyNetConfig,
) -> tuple[nn.Tensor, nn.Tensor]:
    """Logits (B, n*bins) and values (B,) for a batch of policy inputs.

    ``inputs`` is (B, n, 2, d); a single (n, 2, d) input is promoted to a
    batch of one.
    """
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim == 3:
        x = x[None]
    if x.shape[1:] != (cfg.n, 2, cfg.d):
        raise ValueError(f"policy input shape {x.shape} != (B, {cfg.n}, 2, {cfg.d})")
    batch = x.shape[0]
    folded = nn.Tensor(x.reshape(batch * cfg.n, 2, cfg.d))
    h = nn.tanh(nn.conv1d(folded, params["pi/conv0_w"], params["pi/conv0_b"]))
    h = nn.tanh(nn.conv1d(h, params["pi/conv1_w"], params["pi/conv1_b"]))
    feats = nn.reshape(h, (batch, cfg.feature_dim))
    logits = nn.linear(feats, params["pi/policy_w"], params["pi/policy_b"])
    value = nn.reshape(nn.linear(feats, params["pi/value_w"], params["pi/value_b"]), (batch,))
    return logits, value


def policy_output(
    policy_input: np.ndarray,
    params: nn.ModelParameters,
    cfg: PolicyNetConfig,
) -> tuple[FactoredPolicyOutput, float]:
    """Single-input wrapper returning the factored distribution and value."""
    with nn.no_grad():
        logits, value = policy_value_forward(policy_input, params, cfg)
        probs = nn.segment_softmax(logits, [cfg.action_bins] * cfg.n)
    out = FactoredPolicyOutput(logits.data[0], probs.data[0], cfg.action_bins)
    return out, float(value.data[0])


def categories_to_deltas(categories: np.ndarray, action_bins: int) -> np.ndarray:
    return np.asarray(categories, dtype=np.int64) - action_bins // 2


def sample_categories(probs: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Sample one category per segment from (..., segments, bins) probs;
    returns (categories, joint log-prob summed over segments)."""
    cum = np.cumsum(probs, axis=-1)
    u = rng.random(probs.shape[:-1] + (1,))
    cats = np.minimum((u > cum).sum(axis=-1), probs.shape[-1] - 1)
    picked = np.take_along_axis(probs, cats[..., None], axis=-1)[..., 0]
    logp = np.log(np.maximum(picked, 1e-300)).sum(axis=-1)
    return cats, logp


def sample_joint_action(
    output: FactoredPolicyOutput,
    rng: np.random.Generator,
) -> tuple[DeltaAction, float]:
    """Draw one delta per dimension; the joint log-prob is the sum of the
    per-segment log-probs."""
    cats, logp = sample_categories(output.segment_probs(), rng)
    deltas = categories_to_deltas(cats, output.action_bins)
    return DeltaAction(tuple(int(x) for x in deltas)), float(logp)


def greedy_categories(probs: np.ndarray) -> np.ndarray:
    return np.argmax(probs, axis=-1)


# ---------------------------------------------------------------------------
# recurrent baseline


@dataclass(frozen=True)
class RecurrentNetConfig:
    obs_dim: int
    goal_dim: int
    n: int = 4
    action_bins: int = 5
    obs_embed: int = 64
    goal_embed: int = 32
    hidden: int = 128
    trunk: int = 64

    @property
    def num_actions(self) -> int:
        return self.n * self.action_bins

    @property
    def gru_input(self) -> int:
        return self.obs_embed + self.goal_embed


def build_recurrent_params(cfg: RecurrentNetConfig, seed: int) -> nn.ModelParameters:
    params = nn.ModelParameters(seed)
    params.add("rnn/obs_w", (cfg.obs_dim, cfg.obs_embed), fan_in=cfg.obs_dim)
    params.add("rnn/obs_b", (cfg.obs_embed,), init="zeros")
    params.add("rnn/goal_w", (cfg.goal_dim, cfg.goal_embed), fan_in=cfg.goal_dim)
    params.add("rnn/goal_b", (cfg.goal_embed,), init="zeros")
    for gate in ("z", "r", "n"):
        params.add(f"rnn/gru_wx{gate}", (cfg.gru_input, cfg.hidden), fan_in=cfg.gru_input)
        params.add(f"rnn/gru_wh{gate}", (cfg.hidden, cfg.hidden), fan_in=cfg.hidden)
        params.add(f"rnn/gru_bx{gate}", (cfg.hidden,), init="zeros")
    params.add("rnn/gru_bhn", (cfg.hidden,), init="zeros")
    params.add("rnn/trunk_w", (cfg.hidden, cfg.trunk), fan_in=cfg.hidden)
    params.add("rnn/trunk_b", (cfg.trunk,), init="zeros")
    # heads start at zero for the same sparse-reward reasons as the belief agent
    params.add("rnn/policy_w", (cfg.trunk, cfg.num_actions), init="zeros")
    params.add("rnn/policy_b", (cfg.num_actions,), init="zeros")
    params.add("rnn/value_w", (cfg.trunk, 1), init="zeros")
    params.add("rnn/value_b", (1,), init="zeros")
    return params


def recurrent_forward(
    obs_features,
    goal_features,
    hidden,
    params: nn.ModelParameters,
    cfg: RecurrentNetConfig,
) -> tuple[nn.Tensor, nn.Tensor, nn.Tensor]:
    """One recurrent step: returns (logits (B, n*bins), value (B,), new hidden).

    The hidden state must be zeroed at every episode start; inputs may be
    numpy arrays or tensors (the hidden is a Tensor inside BPTT graphs).
    """
    obs = nn.as_tensor(np.asarray(obs_features, dtype=np.float64))
    goal = nn.as_tensor(np.asarray(goal_features, dtype=np.float64))
    h = nn.as_tensor(hidden)
    if h.shape != (obs.shape[0], cfg.hidden):
        raise ValueError(f"hidden shape {h.shape} != ({obs.shape[0]}, {cfg.hidden})")
    eo = nn.relu(nn.linear(obs, params["rnn/obs_w"], params["rnn/obs_b"]))
    eg = nn.relu(nn.linear(goal, params["rnn/goal_w"], params["rnn/goal_b"]))
    x = nn.concat([eo, eg], axis=1)

    z = nn.sigmoid(nn.matmul(x, params["rnn/gru_wxz"]) + nn.matmul(h, params["rnn/gru_whz"]) + params["rnn/gru_bxz"])
    r = nn.sigmoid(nn.matmul(x, params["rnn/gru_wxr"]) + nn.matmul(h, params["rnn/gru_whr"]) + params["rnn/gru_bxr"])
    cand = nn.tanh(
        nn.matmul(x, params["rnn/gru_wxn"]) + params["rnn/gru_bxn"]
        + r * (nn.matmul(h, params["rnn/gru_whn"]) + params["rnn/gru_bhn"])
    )
    new_h = (1.0 - z) * cand + z * h

    trunk = nn.relu(nn.linear(new_h, params["rnn/trunk_w"], params["rnn/trunk_b"]))
    logits = nn.linear(trunk, params["rnn/policy_w"], params["rnn/policy_b"])
    value = nn.reshape(nn.linear(trunk, params["rnn/value_w"], params["rnn/value_b"]), (obs.shape[0],))
    return logits, value, new_h
