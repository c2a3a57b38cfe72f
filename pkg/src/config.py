# src/config.py
from __future__ import annotations

import os
import uuid
from dataclasses import dataclass, field
from pathlib import Path


def _env_int(name: str, default: int) -> int:
    try:
        return int(os.getenv(name, str(default)))
    except Exception:
        return default


def _env_float(name: str, default: float) -> float:
    try:
        return float(os.getenv(name, str(default)))
    except Exception:
        return default


def _env_bool(name: str, default: bool) -> bool:
    v = os.getenv(name)
    if v is None:
        return default
    return v.strip().lower() in ("1", "true", "yes", "y", "on")


@dataclass(frozen=True)
class RuntimeConfig:
    """
    Process-level settings that are not part of an experiment's identity.
    Nothing here enters the config hash.
    """

    # Identity
    run_id: str = field(default_factory=lambda: os.getenv("RUN_ID", uuid.uuid4().hex[:10]))

    # Data
    data_root: Path = field(default_factory=lambda: Path(os.getenv("DULL_DATA_ROOT", "data/raw")))
    artifact_dir: Path = field(
        default_factory=lambda: Path(os.getenv("ARTIFACT_DIR", "data/artifacts"))
    )

    # Compute
    device: str = field(default_factory=lambda: os.getenv("DEVICE", "cpu"))
    torch_threads: int = field(default_factory=lambda: _env_int("TORCH_THREADS", 0))  # 0 = torch default
    deterministic: bool = field(default_factory=lambda: _env_bool("DETERMINISTIC", True))

    # Observability
    log_json: bool = field(default_factory=lambda: _env_bool("LOG_JSON", True))
    log_level: str = field(default_factory=lambda: os.getenv("LOG_LEVEL", "INFO"))
    show_progress: bool = field(default_factory=lambda: _env_bool("SHOW_PROGRESS", False))

    # Divergence guard: abort when a batch loss exceeds this value
    max_loss: float = field(default_factory=lambda: _env_float("MAX_LOSS", 1e6))
