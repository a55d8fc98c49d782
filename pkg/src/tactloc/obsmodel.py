"""Learned observation model: finger features -> per-dimension state likelihoods.

A small fully connected network maps one finger's feature vector to n
independent d-way distributions (softmax per state dimension).  Training
follows the two-pass protocol: for every batch the forward/backward runs once
on the left finger and once on the right, gradients accumulate, and a single
Adam step consumes them.  At filter time the two fingers' outputs are fused
(product rule by default, arithmetic mean as the alternative).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nn
from .belief import StateSpaceSpec
from .env.dataset import Dataset
from .env.signatures import TactileObservation
from .exceptions import TrainingDivergedError

FUSE_PRODUCT = "product"
FUSE_MEAN = "mean"

_VAL_SAMPLE_CAP = 20000


@dataclass(frozen=True)
class ObsModelConfig:
    feature_dim: int = 32
    hidden: tuple[int, ...] = (256, 128)
    learning_rate: float = 5e-4
    batch_size: int = 64
    epochs: int = 20
    train_noise_sigma: float = 0.1
    fusion: str = FUSE_PRODUCT

    def __post_init__(self):
        if self.fusion not in (FUSE_PRODUCT, FUSE_MEAN):
            raise ValueError(f"unknown fusion rule {self.fusion!r}")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))


@dataclass(frozen=True)
class LikelihoodOutput:
    """Row-stochastic n x d likelihood matrix; ``uniform_dims`` marks rows
    that fell back to uniform during fusion."""

    rows: np.ndarray
    uniform_dims: tuple[int, ...] = field(default=())

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.float64)
        sums = rows.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > 1e-6):
            raise ValueError(f"likelihood rows must sum to 1, got {sums}")
        rows = rows / sums[:, None]
        rows.flags.writeable = False
        object.__setattr__(self, "rows", rows)


def build_obs_params(config: ObsModelConfig, spec: StateSpaceSpec, seed: int) -> nn.ModelParameters:
    params = nn.ModelParameters(seed)
    sizes = (config.feature_dim,) + config.hidden + (spec.n * spec.d,)
    for i in range(len(sizes) - 1):
        prefix = f"obs/fc{i}" if i < len(sizes) - 2 else "obs/head"
        params.add(f"{prefix}_w", (sizes[i], sizes[i + 1]), fan_in=sizes[i])
        params.add(f"{prefix}_b", (sizes[i + 1],), init="zeros")
    return params


def _forward_logits(x: nn.Tensor, params: nn.ModelParameters, n_hidden: int) -> nn.Tensor:
    h = x
    for i in range(n_hidden):
        h = nn.relu(nn.linear(h, params[f"obs/fc{i}_w"], params[f"obs/fc{i}_b"]))
    return nn.linear(h, params["obs/head_w"], params["obs/head_b"])


def forward_batch(
    features: np.ndarray,
    params: nn.ModelParameters,
    spec: StateSpaceSpec,
    config: ObsModelConfig,
) -> nn.Tensor:
    """Probabilities for a batch of single-finger features, shape (B, n, d)."""
    x = nn.Tensor(features)
    logits = _forward_logits(x, params, len(config.hidden))
    probs = nn.segment_softmax(logits, [spec.d] * spec.n)
    return nn.reshape(probs, (features.shape[0], spec.n, spec.d))


def forward_single(
    finger_features: np.ndarray,
    params: nn.ModelParameters,
    spec: StateSpaceSpec,
    config: ObsModelConfig,
) -> LikelihoodOutput:
    """Likelihood rows for one finger's feature vector."""
    feats = np.asarray(finger_features, dtype=np.float64)
    if not np.all(np.isfinite(feats)):
        raise ValueError("forward_single requires finite input features")
    if feats.shape != (config.feature_dim,):
        raise ValueError(f"expected {config.feature_dim} features, got shape {feats.shape}")
    with nn.no_grad():
        probs = forward_batch(feats[None, :], params, spec, config)
    return LikelihoodOutput(probs.data[0])


def fuse_rows(left: np.ndarray, right: np.ndarray, rule: str = FUSE_PRODUCT) -> tuple[np.ndarray, np.ndarray]:
    """Fuse two stacks of likelihood rows (..., n, d); returns rows plus a
    boolean mask of rows that fell back to uniform (product collapse)."""
    if rule == FUSE_MEAN:
        rows = 0.5 * (left + right)
        fell_back = np.zeros(rows.shape[:-1], dtype=bool)
    else:
        rows = left * right
        sums = rows.sum(axis=-1, keepdims=True)
        fell_back = sums[..., 0] < 1e-300
        if np.any(fell_back):
            rows = rows.copy()
            rows[fell_back] = 1.0
        sums = rows.sum(axis=-1, keepdims=True)
        rows = rows / sums
        return rows, fell_back
    return rows / rows.sum(axis=-1, keepdims=True), fell_back


def fuse_fingers(
    left_out: LikelihoodOutput,
    right_out: LikelihoodOutput,
    rule: str = FUSE_PRODUCT,
) -> LikelihoodOutput:
    """Combine per-finger likelihoods into one; product-and-renormalize treats
    the fingers as independent evidence."""
    if left_out.rows.shape != right_out.rows.shape:
        raise ValueError("finger outputs must have matching shapes")
    rows, fell_back = fuse_rows(left_out.rows, right_out.rows, rule)
    return LikelihoodOutput(rows, uniform_dims=tuple(int(i) for i in np.nonzero(fell_back)[0]))


def likelihood_for_observation(
    obs: TactileObservation,
    params: nn.ModelParameters,
    spec: StateSpaceSpec,
    config: ObsModelConfig,
) -> LikelihoodOutput:
    left = forward_single(obs.left, params, spec, config)
    right = forward_single(obs.right, params, spec, config)
    return fuse_fingers(left, right, config.fusion)


def _one_hot(states: np.ndarray, n: int, d: int) -> np.ndarray:
    batch = states.shape[0]
    labels = np.zeros((batch, n, d), dtype=np.float64)
    b = np.repeat(np.arange(batch), n)
    dims = np.tile(np.arange(n), batch)
    labels[b, dims, states.astype(np.int64).reshape(-1)] = 1.0
    return labels


def train(
    dataset: Dataset,
    config: ObsModelConfig,
    seed: int,
) -> tuple[nn.ModelParameters, list[dict]]:
    """Train the observation model; returns parameters and a per-epoch log.

    One Adam step per batch after accumulating both fingers' gradients.  The
    logged loss is the mean cross-entropy per finger pass, so a random init
    starts near n*ln(d).  On a non-finite loss the last epoch-end parameters
    are restored and training stops with a 'diverged' entry in the log.
    """
    if len(dataset) == 0:
        raise ValueError("train requires a non-empty dataset")
    spec = dataset.spec
    rng = np.random.default_rng(seed)
    params = build_obs_params(config, spec, seed)
    adam = nn.AdamState(params, learning_rate=config.learning_rate)

    train_idx = dataset.train_indices
    left = dataset.left
    right = dataset.right
    states = dataset.states
    history: list[dict] = []
    last_good = params.copy()

    for epoch in range(config.epochs):
        order = rng.permutation(train_idx.shape[0])
        total_loss = 0.0
        total_batches = 0
        saturations = 0
        for start in range(0, order.shape[0], config.batch_size):
            idx = train_idx[order[start:start + config.batch_size]]
            labels = _one_hot(states[idx], spec.n, spec.d)
            batch_loss = 0.0
            for finger in (left, right):
                x = finger[idx].astype(np.float64)
                if config.train_noise_sigma > 0:
                    x += rng.normal(0.0, config.train_noise_sigma, size=x.shape)
                probs = forward_batch(x, params, spec, config)
                if not np.all(np.isfinite(probs.data)):
                    params.load_values(last_good)
                    history.append({"epoch": epoch, "diverged": True})
                    raise TrainingDivergedError(
                        f"non-finite forward output at epoch {epoch}", last_good_params=params
                    )
                loss, saturated = nn.factored_cross_entropy(probs, labels)
                if not np.isfinite(loss.item()):
                    params.load_values(last_good)
                    history.append({"epoch": epoch, "diverged": True})
                    raise TrainingDivergedError(
                        f"non-finite loss at epoch {epoch}", last_good_params=params
                    )
                nn.backward(loss)
                batch_loss += loss.item()
                saturations += int(saturated)
            nn.adam_step(params, adam)
            total_loss += batch_loss / 2.0
            total_batches += 1
        val_top1 = _val_top1(params, dataset, config)
        history.append(
            {
                "epoch": epoch,
                "train_loss": total_loss / max(total_batches, 1),
                "val_top1_mean": val_top1,
                "saturations": saturations,
            }
        )
        last_good = params.copy()
    return params, history


def _val_top1(params: nn.ModelParameters, dataset: Dataset, config: ObsModelConfig) -> float:
    idx = dataset.val_indices
    if idx.shape[0] == 0:
        return float("nan")
    if idx.shape[0] > _VAL_SAMPLE_CAP:
        stride = idx.shape[0] // _VAL_SAMPLE_CAP + 1
        idx = idx[::stride]
    acc = evaluate_topk(params, dataset, idx, config, k_max=1)
    return float(acc[:, 0].mean())


def fused_probabilities(
    params: nn.ModelParameters,
    dataset: Dataset,
    indices: np.ndarray,
    config: ObsModelConfig,
    chunk: int = 8192,
) -> np.ndarray:
    """Fused per-dimension probabilities for the given records, (N, n, d)."""
    spec = dataset.spec
    out = np.empty((indices.shape[0], spec.n, spec.d))
    with nn.no_grad():
        for start in range(0, indices.shape[0], chunk):
            idx = indices[start:start + chunk]
            pl = forward_batch(dataset.left[idx].astype(np.float64), params, spec, config).data
            pr = forward_batch(dataset.right[idx].astype(np.float64), params, spec, config).data
            out[start:start + idx.shape[0]], _ = fuse_rows(pl, pr, config.fusion)
    return out


def evaluate_topk(
    params: nn.ModelParameters,
    dataset: Dataset,
    indices: np.ndarray,
    config: ObsModelConfig,
    k_max: int = 5,
) -> np.ndarray:
    """Per-dimension top-1..top-k accuracy of the fused output, (n, k_max).

    An example counts for top-k in a dimension when its true bin is among the
    k highest fused probabilities for that dimension.
    """
    spec = dataset.spec
    probs = fused_probabilities(params, dataset, indices, config)
    truth = dataset.states[indices].astype(np.int64)
    return topk_from_probs(probs, truth, k_max=min(k_max, spec.d))


def topk_from_probs(probs: np.ndarray, truth: np.ndarray, k_max: int) -> np.ndarray:
    """Top-k accuracy table from (N, n, d) probabilities and (N, n) truths.

    Ties rank by bin index (stable sort), matching the filter's argmax tie
    rule: uniform rows score at chance, not 100%.
    """
    order = np.argsort(-probs, axis=2, kind="stable")
    ranks = np.argmax(order == truth[:, :, None], axis=2)
    acc = np.empty((probs.shape[1], k_max))
    for k in range(1, k_max + 1):
        acc[:, k - 1] = (ranks < k).mean(axis=0)
    return acc


def topk_table(
    sections: dict[str, tuple[nn.ModelParameters, Dataset, np.ndarray]],
    config: ObsModelConfig,
    k_max: int = 5,
) -> list[dict]:
    """Accuracy table rows across named splits, ready for CSV emission."""
    rows = []
    for split, (params, dataset, indices) in sections.items():
        acc = evaluate_topk(params, dataset, indices, config, k_max=k_max)
        for dim in range(dataset.spec.n):
            for k in range(1, acc.shape[1] + 1):
                rows.append(
                    {
                        "split": split,
                        "dimension": dataset.spec.labels[dim],
                        "k": k,
                        "accuracy": float(acc[dim, k - 1]),
                    }
                )
    return rows
