"""Named parameter store with seeded initialization and binary checkpoints.

Checkpoint layout (little-endian throughout):
    magic    8 bytes  b"TLOCCKPT"
    version  u32      currently 1
    seed     i64      rng seed recorded at initialization
    count    u32      number of tensors
    then per tensor, in insertion order:
        name_len u16, name utf-8, ndim u8, dims u32 each, payload float64

Round-tripping a checkpoint through load/save reproduces identical bytes.
"""

from __future__ import annotations

import struct
from typing import Iterator

import numpy as np

from ..exceptions import ConfigurationError
from .autograd import Tensor

CHECKPOINT_MAGIC = b"TLOCCKPT"
CHECKPOINT_VERSION = 1


class ModelParameters:
    """Ordered map from parameter name to a trainable Tensor."""

    def __init__(self, rng_seed: int):
        self.rng_seed = int(rng_seed)
        self.entries: dict[str, Tensor] = {}
        self._rng = np.random.default_rng(self.rng_seed)

    def add(self, name: str, shape, init: str = "fan_in", fan_in: int | None = None) -> Tensor:
        """Create a parameter.

        init is "fan_in" (uniform on +-1/sqrt(fan_in), fan_in defaulting to
        the first axis) or "zeros".
        """
        if name in self.entries:
            raise ConfigurationError(f"duplicate parameter name {name!r}")
        shape = tuple(int(s) for s in shape)
        if init == "zeros":
            data = np.zeros(shape, dtype=np.float64)
        elif init == "fan_in":
            fi = int(fan_in) if fan_in is not None else int(shape[0]) if shape else 1
            bound = 1.0 / np.sqrt(max(fi, 1))
            data = self._rng.uniform(-bound, bound, size=shape)
        else:
            raise ConfigurationError(f"unknown init {init!r}")
        t = Tensor(data, requires_grad=True)
        t.zero_grad()
        self.entries[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self.entries[name]

    def __contains__(self, name: str) -> bool:
        return name in self.entries

    def __iter__(self) -> Iterator[str]:
        return iter(self.entries)

    def names(self) -> list[str]:
        return list(self.entries)

    def tensors(self) -> list[Tensor]:
        return list(self.entries.values())

    def zero_grad(self) -> None:
        for t in self.entries.values():
            t.zero_grad()

    def num_values(self) -> int:
        return sum(t.size for t in self.entries.values())

    def copy(self) -> "ModelParameters":
        """Deep copy of values (gradients reset to zero)."""
        dup = ModelParameters.__new__(ModelParameters)
        dup.rng_seed = self.rng_seed
        dup._rng = np.random.default_rng(self.rng_seed)
        dup.entries = {}
        for name, t in self.entries.items():
            nt = Tensor(t.data.copy(), requires_grad=True)
            nt.zero_grad()
            dup.entries[name] = nt
        return dup

    def load_values(self, other: "ModelParameters") -> None:
        """Overwrite values in place from a same-shaped parameter set."""
        for name, t in self.entries.items():
            t.data[...] = other.entries[name].data

    # -- checkpoint io ------------------------------------------------------

    def to_bytes(self) -> bytes:
        parts = [CHECKPOINT_MAGIC, struct.pack("<Iq", CHECKPOINT_VERSION, self.rng_seed)]
        parts.append(struct.pack("<I", len(self.entries)))
        for name, t in self.entries.items():
            raw = name.encode("utf-8")
            parts.append(struct.pack("<H", len(raw)))
            parts.append(raw)
            parts.append(struct.pack("<B", t.data.ndim))
            parts.append(struct.pack(f"<{t.data.ndim}I", *t.data.shape))
            parts.append(t.data.astype("<f8").tobytes())
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, blob: bytes) -> "ModelParameters":
        if blob[:8] != CHECKPOINT_MAGIC:
            raise ConfigurationError("not a checkpoint: bad magic")
        version, seed = struct.unpack_from("<Iq", blob, 8)
        if version != CHECKPOINT_VERSION:
            raise ConfigurationError(f"unsupported checkpoint version {version}")
        (count,) = struct.unpack_from("<I", blob, 20)
        pos = 24
        params = cls(seed)
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", blob, pos)
            pos += 2
            name = blob[pos:pos + name_len].decode("utf-8")
            pos += name_len
            (ndim,) = struct.unpack_from("<B", blob, pos)
            pos += 1
            shape = struct.unpack_from(f"<{ndim}I", blob, pos)
            pos += 4 * ndim
            n = int(np.prod(shape)) if ndim else 1
            data = np.frombuffer(blob, dtype="<f8", count=n, offset=pos).reshape(shape)
            pos += 8 * n
            t = Tensor(data.copy(), requires_grad=True)
            t.zero_grad()
            params.entries[name] = t
        return params

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "ModelParameters":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())
