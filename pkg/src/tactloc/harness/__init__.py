"""Experiment orchestration: configuration, manifests, and the CLI."""

from .config import (
    AgentSection,
    BASELINE_RECURRENT,
    BASELINE_TPN,
    EnvSection,
    ExperimentConfig,
    ObsSection,
    RunSection,
    load_config,
)
from .manifest import (
    CSV_SCHEMA_VERSION,
    RunManifest,
    atomic_write_bytes,
    atomic_write_text,
    sha256_bytes,
    sha256_file,
    write_csv,
)

__all__ = [
    "AgentSection",
    "BASELINE_RECURRENT",
    "BASELINE_TPN",
    "CSV_SCHEMA_VERSION",
    "EnvSection",
    "ExperimentConfig",
    "ObsSection",
    "RunManifest",
    "RunSection",
    "atomic_write_bytes",
    "atomic_write_text",
    "load_config",
    "sha256_bytes",
    "sha256_file",
    "write_csv",
]
