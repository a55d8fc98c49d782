"""Run manifests, checksums, and atomic file writes.

Every command writes its outputs with write-temp-then-rename and records a
manifest of sha256 checksums, so identical configs can be verified to
reproduce identical artifacts.  Wall-clock time lives only in the manifest;
checkpoints and metric files stay byte-reproducible.
"""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path

from .. import __version__

CSV_SCHEMA_VERSION = 1


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def atomic_write_bytes(path: Path, data: bytes) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def atomic_write_text(path: Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def format_cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path: Path, rows: list[dict], columns: list[str]) -> None:
    """CSV with a schema_version column so readers can detect layout changes."""
    lines = [",".join(["schema_version"] + columns)]
    for row in rows:
        lines.append(",".join([str(CSV_SCHEMA_VERSION)] + [format_cell(row.get(c, "")) for c in columns]))
    atomic_write_text(path, "\n".join(lines) + "\n")


class RunManifest:
    """Checksums and provenance for one command's outputs."""

    def __init__(self, command: str, config_hash: str):
        self.command = command
        self.config_hash = config_hash
        self.tool_version = __version__
        self.wall_clock_seconds = 0.0
        self.files: dict[str, str] = {}

    def record(self, path: Path, root: Path) -> None:
        rel = str(Path(path).relative_to(root))
        self.files[rel] = sha256_file(path)

    def write(self, path: Path) -> None:
        doc = {
            "command": self.command,
            "config_hash": self.config_hash,
            "tool_version": self.tool_version,
            "wall_clock_seconds": self.wall_clock_seconds,
            "files": dict(sorted(self.files.items())),
        }
        atomic_write_text(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")
