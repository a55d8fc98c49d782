"""Factored state space and the discrete Bayes filter over it.

The state is n independent dimensions of d bins each; the belief is an n x d
matrix whose rows are probability mass functions.  The transition is a
deterministic shift clamped at the workspace edges, so prediction moves mass
bin-to-bin and piles it up at the boundaries, exactly mirroring how the
environment clamps the true pose.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

ROW_SUM_TOL = 1e-6
RESET_ROW_SUM = 1e-300
DELTA_RANGE = (-2, -1, 0, 1, 2)


def _default_labels(n: int) -> tuple[str, ...]:
    if n == 4:
        return ("position_y", "position_z", "rotation_x", "rotation_y")
    return tuple(f"dim_{i}" for i in range(n))


def _default_resolutions(n: int) -> tuple[str, ...]:
    if n == 4:
        return ("2mm", "2mm", "1deg", "1deg")
    return tuple("1unit" for _ in range(n))


@dataclass(frozen=True)
class StateSpaceSpec:
    """Grid shape: n dimensions, d odd bins each, middle bin = origin pose."""

    n: int = 4
    d: int = 11
    labels: tuple[str, ...] = ()
    resolutions: tuple[str, ...] = ()

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if self.d < 3 or self.d % 2 == 0:
            raise ValueError(f"d must be odd and >= 3, got {self.d}")
        if not self.labels:
            object.__setattr__(self, "labels", _default_labels(self.n))
        if not self.resolutions:
            object.__setattr__(self, "resolutions", _default_resolutions(self.n))
        if len(self.labels) != self.n or len(self.resolutions) != self.n:
            raise ValueError("labels/resolutions must have one entry per dimension")

    @property
    def origin_bin(self) -> int:
        return self.d // 2

    @property
    def num_states(self) -> int:
        return self.d ** self.n


@dataclass(frozen=True)
class FactoredState:
    """One grid cell: an index per dimension."""

    indices: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "indices", tuple(int(i) for i in self.indices))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.indices, dtype=np.int64)

    @classmethod
    def from_array(cls, arr) -> "FactoredState":
        return cls(tuple(int(i) for i in arr))


@dataclass(frozen=True)
class DeltaAction:
    """Per-dimension move of -2..+2 bins (0 = stay)."""

    deltas: tuple[int, ...]

    def __post_init__(self):
        deltas = tuple(int(x) for x in self.deltas)
        for x in deltas:
            if x not in DELTA_RANGE:
                raise ValueError(f"delta {x} outside {DELTA_RANGE}")
        object.__setattr__(self, "deltas", deltas)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.deltas, dtype=np.int64)


@dataclass(frozen=True)
class FactoredBelief:
    """Row-stochastic n x d matrix; treated as an immutable value.

    ``reset_dims`` records which rows were reset to uniform by the most
    recent observation update (filter divergence recovery).
    """

    rows: np.ndarray
    reset_dims: tuple[int, ...] = field(default=())

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.float64)
        if rows.ndim != 2:
            raise ValueError(f"belief must be 2-d, got shape {rows.shape}")
        if np.any(rows < 0):
            raise ValueError("belief rows must be non-negative")
        sums = rows.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > ROW_SUM_TOL):
            raise ValueError(f"belief rows must sum to 1 within {ROW_SUM_TOL}, got {sums}")
        rows = rows / sums[:, None]
        rows.flags.writeable = False
        object.__setattr__(self, "rows", rows)

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @property
    def d(self) -> int:
        return self.rows.shape[1]

    def to_json(self) -> str:
        return json.dumps({"n": self.n, "d": self.d, "rows": self.rows.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "FactoredBelief":
        obj = json.loads(text)
        rows = np.asarray(obj["rows"], dtype=np.float64)
        if rows.shape != (obj["n"], obj["d"]):
            raise ValueError("belief JSON shape mismatch")
        return cls(rows)


def shift_indices(indices: np.ndarray, deltas: np.ndarray, d: int) -> np.ndarray:
    """The deterministic clamped transition shared by filter and environment."""
    return np.clip(np.asarray(indices) + np.asarray(deltas), 0, d - 1)


def uniform_belief(spec: StateSpaceSpec) -> FactoredBelief:
    return FactoredBelief(np.full((spec.n, spec.d), 1.0 / spec.d))


def predict(bel: FactoredBelief, action: DeltaAction) -> FactoredBelief:
    """Prediction update: push each row through the clamped shift.

    Mass moved past a workspace edge accumulates in the boundary bin, so the
    total mass per row is preserved exactly.
    """
    n, d = bel.rows.shape
    deltas = action.as_array()
    if deltas.shape != (n,):
        raise ValueError(f"action has {deltas.shape[0]} deltas for {n} dimensions")
    src = np.arange(d)
    out = np.zeros_like(bel.rows)
    for i in range(n):
        tgt = shift_indices(src, deltas[i], d)
        np.add.at(out[i], tgt, bel.rows[i])
    return FactoredBelief(out)


def update(bel: FactoredBelief, likelihood: np.ndarray) -> FactoredBelief:
    """Observation update: row-wise product with the likelihood, renormalized.

    A row whose product mass collapses below 1e-300 is reset to uniform and
    reported through the returned belief's ``reset_dims``.
    """
    lik = np.asarray(likelihood, dtype=np.float64)
    if lik.shape != bel.rows.shape:
        raise ValueError(f"likelihood shape {lik.shape} != belief shape {bel.rows.shape}")
    if np.any(lik < 0):
        raise ValueError("likelihood must be non-negative")
    prod = bel.rows * lik
    sums = prod.sum(axis=1)
    dead = sums < RESET_ROW_SUM
    resets = tuple(int(i) for i in np.nonzero(dead)[0])
    if resets:
        prod = prod.copy()
        prod[dead] = 1.0 / bel.d
        sums = prod.sum(axis=1)
    return FactoredBelief(prod / sums[:, None], reset_dims=resets)


def step(bel: FactoredBelief, action: DeltaAction, likelihood: np.ndarray) -> FactoredBelief:
    """One full filter step: predict with the action, then fold in the
    observation likelihood."""
    return update(predict(bel, action), likelihood)


def map_estimate(bel: FactoredBelief) -> FactoredState:
    """Per-dimension argmax; ties break toward the lowest index."""
    return FactoredState(tuple(int(i) for i in np.argmax(bel.rows, axis=1)))


def belief_entropy(bel: FactoredBelief) -> np.ndarray:
    """Per-row Shannon entropy in nats, with 0 ln 0 = 0."""
    p = bel.rows
    terms = np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0)), 0.0)
    return -terms.sum(axis=1)
