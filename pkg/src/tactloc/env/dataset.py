"""Labeled observation datasets: exhaustive state sweeps over object pools.

Every object is "placed" in every grid state; each visit emits the pair of
finger feature vectors plus the state label.  Records go to a flat binary
file (object_id u32, state indices n x u8, left/right features 2m x f32,
little-endian) described by a JSON sidecar.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..belief import StateSpaceSpec
from ..exceptions import DatasetError
from .signatures import ObjectSignature, SignatureParams

SIDECAR_SCHEMA_VERSION = 1
VAL_FRACTION = 0.1


def state_grid(spec: StateSpaceSpec) -> np.ndarray:
    """All d^n states in row-major order, shape (d^n, n)."""
    axes = [np.arange(spec.d)] * spec.n
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh], axis=1)


@dataclass
class Dataset:
    """In-memory dataset with a deterministic per-object 90/10 split."""

    spec: StateSpaceSpec
    params: SignatureParams
    noise_sigma: float
    seed: int
    object_ids: np.ndarray  # (N,) u32
    states: np.ndarray  # (N, n) u8
    left: np.ndarray  # (N, m) f32
    right: np.ndarray  # (N, m) f32
    train_indices: np.ndarray
    val_indices: np.ndarray

    def __len__(self) -> int:
        return self.object_ids.shape[0]

    def one_hot_labels(self, indices: np.ndarray) -> np.ndarray:
        """One-hot n x d label matrices for the given record indices."""
        states = self.states[indices].astype(np.int64)
        batch = states.shape[0]
        labels = np.zeros((batch, self.spec.n, self.spec.d), dtype=np.float64)
        b = np.repeat(np.arange(batch), self.spec.n)
        n = np.tile(np.arange(self.spec.n), batch)
        labels[b, n, states.reshape(-1)] = 1.0
        return labels


def _split_indices(object_ids: np.ndarray, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-object shuffle, 10% (rounded) of each object's records to validation."""
    rng = np.random.default_rng(seed)
    train, val = [], []
    for obj_id in np.unique(object_ids):
        idx = np.nonzero(object_ids == obj_id)[0]
        perm = rng.permutation(idx.shape[0])
        n_val = int(round(VAL_FRACTION * idx.shape[0]))
        val.append(idx[perm[:n_val]])
        train.append(idx[perm[n_val:]])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(val))


def build_dataset(
    objects: list[ObjectSignature],
    spec: StateSpaceSpec,
    samples_per_state: int,
    noise_sigma: float,
    seed: int,
    params: SignatureParams = SignatureParams(),
    include_noiseless: bool = False,
) -> Dataset:
    """Enumerate every state of every object and emit labeled tuples.

    ``samples_per_state`` noisy passes are drawn per state; with
    ``include_noiseless`` one extra pass records the exact signature values.
    Total size is len(objects) * d^n * passes.
    """
    if not objects:
        raise ValueError("build_dataset needs at least one object")
    if samples_per_state < 0 or (samples_per_state == 0 and not include_noiseless):
        raise ValueError("need at least one pass per state")
    rng = np.random.default_rng(seed)
    grid = state_grid(spec)
    x = grid.astype(np.float64) / (spec.d - 1)
    passes = samples_per_state + (1 if include_noiseless else 0)
    n_states = grid.shape[0]
    m = objects[0].feature_dim

    obj_ids = np.empty(len(objects) * n_states * passes, dtype=np.uint32)
    states = np.empty((obj_ids.shape[0], spec.n), dtype=np.uint8)
    left = np.empty((obj_ids.shape[0], m), dtype=np.float32)
    right = np.empty((obj_ids.shape[0], m), dtype=np.float32)

    pos = 0
    for obj in objects:
        mu_l = obj.features(x, 0)
        mu_r = obj.features(x, 1)
        if include_noiseless:
            sl = slice(pos, pos + n_states)
            obj_ids[sl] = obj.object_id
            states[sl] = grid
            left[sl] = mu_l
            right[sl] = mu_r
            pos += n_states
        for _ in range(samples_per_state):
            sl = slice(pos, pos + n_states)
            obj_ids[sl] = obj.object_id
            states[sl] = grid
            if noise_sigma > 0:
                left[sl] = mu_l + rng.normal(0.0, noise_sigma, size=mu_l.shape)
                right[sl] = mu_r + rng.normal(0.0, noise_sigma, size=mu_r.shape)
            else:
                left[sl] = mu_l
                right[sl] = mu_r
            pos += n_states

    train_idx, val_idx = _split_indices(obj_ids, seed)
    return Dataset(spec, params, noise_sigma, seed, obj_ids, states, left, right, train_idx, val_idx)


def _record_dtype(n: int, m: int) -> np.dtype:
    return np.dtype([
        ("object_id", "<u4"),
        ("state", "u1", (n,)),
        ("left", "<f4", (m,)),
        ("right", "<f4", (m,)),
    ])


def save_dataset(ds: Dataset, bin_path: Path, sidecar_path: Path) -> None:
    n, m = ds.spec.n, ds.left.shape[1]
    records = np.empty(len(ds), dtype=_record_dtype(n, m))
    records["object_id"] = ds.object_ids
    records["state"] = ds.states
    records["left"] = ds.left
    records["right"] = ds.right
    bin_path = Path(bin_path)
    bin_path.write_bytes(records.tobytes())
    sidecar = {
        "schema_version": SIDECAR_SCHEMA_VERSION,
        "spec": {"n": ds.spec.n, "d": ds.spec.d},
        "signature_params": ds.params.to_dict(),
        "noise_sigma": ds.noise_sigma,
        "seed": ds.seed,
        "record_count": len(ds),
        "feature_dim": m,
        "object_ids": sorted(int(i) for i in np.unique(ds.object_ids)),
    }
    Path(sidecar_path).write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")


def load_dataset(bin_path: Path, sidecar_path: Path) -> Dataset:
    try:
        sidecar = json.loads(Path(sidecar_path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DatasetError(f"cannot read sidecar {sidecar_path}: {exc}") from exc
    if sidecar.get("schema_version") != SIDECAR_SCHEMA_VERSION:
        raise DatasetError(f"unsupported dataset schema {sidecar.get('schema_version')}")
    spec = StateSpaceSpec(n=sidecar["spec"]["n"], d=sidecar["spec"]["d"])
    params = SignatureParams.from_dict(sidecar["signature_params"])
    dtype = _record_dtype(spec.n, sidecar["feature_dim"])
    try:
        records = np.frombuffer(Path(bin_path).read_bytes(), dtype=dtype)
    except (OSError, ValueError) as exc:
        raise DatasetError(f"cannot read dataset {bin_path}: {exc}") from exc
    if records.shape[0] != sidecar["record_count"]:
        raise DatasetError(
            f"dataset has {records.shape[0]} records, sidecar says {sidecar['record_count']}"
        )
    object_ids = records["object_id"].copy()
    train_idx, val_idx = _split_indices(object_ids, sidecar["seed"])
    return Dataset(
        spec,
        params,
        sidecar["noise_sigma"],
        sidecar["seed"],
        object_ids,
        records["state"].copy(),
        records["left"].copy(),
        records["right"].copy(),
        train_idx,
        val_idx,
    )
