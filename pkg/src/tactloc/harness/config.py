"""Experiment configuration: one JSON document, validated up front.

The config is the single source of truth for a run; every command writes a
copy into its output directory so artifacts are self-describing.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from ..agent.networks import PolicyNetConfig, RecurrentNetConfig
from ..agent.ppo import PPOConfig
from ..belief import StateSpaceSpec
from ..env.signatures import SignatureParams
from ..env.tasks import TASK_ACTIVE, TASK_REACHING
from ..exceptions import ConfigurationError
from ..obsmodel import FUSE_MEAN, FUSE_PRODUCT, ObsModelConfig

BASELINE_TPN = "tpn"
BASELINE_RECURRENT = "recurrent"


@dataclass(frozen=True)
class EnvSection:
    feature_dim: int = 32
    components: int = 8
    f_max: float = 1.5
    amplitude_spread: float = 0.25
    phase_jitter: float = 0.12
    noise_sigma: float = 0.35
    object_count: int = 60
    train_objects: int = 50
    object_seed: int = 2024
    samples_per_state: int = 1
    include_noiseless: bool = True
    dataset_seed: int = 7


@dataclass(frozen=True)
class ObsSection:
    hidden: tuple[int, ...] = (256, 128)
    learning_rate: float = 5e-4
    batch_size: int = 64
    epochs: int = 20
    fusion: str = FUSE_PRODUCT
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))


@dataclass(frozen=True)
class AgentSection:
    clip_ratio: float = 0.2
    gamma: float = 0.95
    gae_lambda: float = 0.9
    learning_rate: float = 3e-3
    n_envs: int = 32
    rollout_steps: int = 16384
    minibatches: int = 16
    update_epochs: int = 10
    entropy_coef: float = 0.005
    value_coef: float = 0.1
    total_steps: int = 500_000
    eval_episodes: int = 100
    eval_greedy: bool = True
    conv_channels: tuple[int, int] = (4, 2)
    recurrent_hidden: int = 128

    def __post_init__(self):
        object.__setattr__(self, "conv_channels", tuple(int(c) for c in self.conv_channels))


@dataclass(frozen=True)
class RunSection:
    task: str = TASK_REACHING
    baseline: str = BASELINE_TPN
    seeds: tuple[int, ...] = (0, 1, 2, 3)
    horizon: int = 16
    eval_seed: int = 99

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))


@dataclass(frozen=True)
class ExperimentConfig:
    n: int = 4
    d: int = 11
    env: EnvSection = field(default_factory=EnvSection)
    obsmodel: ObsSection = field(default_factory=ObsSection)
    agent: AgentSection = field(default_factory=AgentSection)
    run: RunSection = field(default_factory=RunSection)

    # -- derived views ------------------------------------------------------

    def spec(self) -> StateSpaceSpec:
        return StateSpaceSpec(n=self.n, d=self.d)

    def signature_params(self) -> SignatureParams:
        return SignatureParams(
            feature_dim=self.env.feature_dim,
            components=self.env.components,
            f_max=self.env.f_max,
            amplitude_spread=self.env.amplitude_spread,
            phase_jitter=self.env.phase_jitter,
        )

    def obs_config(self) -> ObsModelConfig:
        return ObsModelConfig(
            feature_dim=self.env.feature_dim,
            hidden=self.obsmodel.hidden,
            learning_rate=self.obsmodel.learning_rate,
            batch_size=self.obsmodel.batch_size,
            epochs=self.obsmodel.epochs,
            train_noise_sigma=self.env.noise_sigma,
            fusion=self.obsmodel.fusion,
        )

    def ppo_config(self) -> PPOConfig:
        a = self.agent
        return PPOConfig(
            clip_ratio=a.clip_ratio,
            gamma=a.gamma,
            gae_lambda=a.gae_lambda,
            learning_rate=a.learning_rate,
            n_envs=a.n_envs,
            rollout_steps=a.rollout_steps,
            minibatches=a.minibatches,
            update_epochs=a.update_epochs,
            entropy_coef=a.entropy_coef,
            value_coef=a.value_coef,
            total_steps=a.total_steps,
            eval_episodes=a.eval_episodes,
            eval_greedy=a.eval_greedy,
        )

    def policy_net_config(self) -> PolicyNetConfig:
        return PolicyNetConfig(n=self.n, d=self.d, conv_channels=self.agent.conv_channels)

    def recurrent_net_config(self) -> RecurrentNetConfig:
        return RecurrentNetConfig(
            obs_dim=2 * self.env.feature_dim,
            goal_dim=self.n * self.d,
            n=self.n,
            hidden=self.agent.recurrent_hidden,
        )

    # -- validation & serialization -----------------------------------------

    def validate(self) -> None:
        errors = []
        if self.n < 1 or self.d < 3 or self.d % 2 == 0:
            errors.append(f"state space needs n >= 1 and odd d >= 3, got n={self.n}, d={self.d}")
        e = self.env
        if not 0 < e.train_objects < e.object_count:
            errors.append(f"train_objects must split the pool, got {e.train_objects}/{e.object_count}")
        if e.noise_sigma < 0 or e.f_max < 0:
            errors.append("noise_sigma and f_max must be non-negative")
        if e.samples_per_state < 0 or (e.samples_per_state == 0 and not e.include_noiseless):
            errors.append("dataset needs at least one pass per state")
        if self.obsmodel.fusion not in (FUSE_PRODUCT, FUSE_MEAN):
            errors.append(f"unknown fusion rule {self.obsmodel.fusion!r}")
        if self.run.task not in (TASK_ACTIVE, TASK_REACHING):
            errors.append(f"unknown task {self.run.task!r}")
        if self.run.baseline not in (BASELINE_TPN, BASELINE_RECURRENT):
            errors.append(f"unknown baseline {self.run.baseline!r}")
        if self.run.baseline == BASELINE_RECURRENT and self.run.task != TASK_REACHING:
            errors.append("the recurrent baseline supports the reaching task only")
        if not self.run.seeds:
            errors.append("run.seeds must not be empty")
        if self.run.horizon < 1:
            errors.append("horizon must be >= 1")
        try:
            self.ppo_config()
            self.policy_net_config()
        except (ValueError, ConfigurationError) as exc:
            errors.append(str(exc))
        if errors:
            raise ConfigurationError("; ".join(errors))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        known = {"n", "d", "env", "obsmodel", "agent", "run"}
        unknown = set(raw) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        sections = {}
        for key, section_cls in (("env", EnvSection), ("obsmodel", ObsSection),
                                 ("agent", AgentSection), ("run", RunSection)):
            if key in raw:
                try:
                    sections[key] = section_cls(**raw[key])
                except TypeError as exc:
                    raise ConfigurationError(f"bad {key} section: {exc}") from exc
        try:
            return cls(n=raw.get("n", 4), d=raw.get("d", 11), **sections)
        except TypeError as exc:
            raise ConfigurationError(str(exc)) from exc

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()


def load_config(path: str | Path | None) -> ExperimentConfig:
    """Load and validate a config file; defaults when no path is given."""
    if path is None:
        cfg = ExperimentConfig()
    else:
        try:
            raw = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config {path} is not valid JSON: {exc}") from exc
        cfg = ExperimentConfig.from_dict(raw)
    cfg.validate()
    return cfg
