from __future__ import annotations

from pathlib import Path
from typing import Dict, Optional


class DatasetFormatError(ValueError):
    """Malformed CIFAR binaries, unknown variants, manifest or checksum problems."""


class NonFiniteLossError(RuntimeError):
    def __init__(self, component: str, components: Dict[str, float]) -> None:
        self.component = component
        self.components = dict(components)
        detail = ", ".join(f"{k}={v}" for k, v in self.components.items())
        super().__init__(f"non-finite loss in component '{component}' ({detail})")


class TrainingDivergedError(RuntimeError):
    def __init__(
        self, stage: str, epoch: int, reason: str, last_checkpoint: Optional[Path] = None
    ) -> None:
        self.stage = stage
        self.epoch = epoch
        self.reason = reason
        self.last_checkpoint = last_checkpoint
        super().__init__(
            f"{stage} diverged at epoch {epoch}: {reason} "
            f"(last checkpoint: {last_checkpoint or 'none'})"
        )
