from __future__ import annotations

from pathlib import Path
from typing import Optional

import torch

from src.nets.bundle import ModelBundle
from src.schemas.experiment import BackboneConfig

CHECKPOINT_NAME = "bundle.pt"


def _resolve(path: str | Path) -> Path:
    p = Path(path)
    return p / CHECKPOINT_NAME if p.suffix != ".pt" else p


def save_bundle(
    bundle: ModelBundle,
    path: str | Path,
    *,
    backbone: BackboneConfig,
    config_hash: str = "",
) -> Path:
    """One file: weights, G, stage tag, backbone config and the run's config hash."""
    p = _resolve(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    torch.save(
        {
            "state_dict": bundle.state_dict(),
            "stage": bundle.stage,
            "backbone": backbone.model_dump(mode="json"),
            "feature_dim": bundle.feature_dim,
            "class_count": bundle.class_count,
            "config_hash": config_hash,
        },
        p,
    )
    return p


def load_bundle(
    path: str | Path,
    *,
    expect_feature_dim: Optional[int] = None,
    expect_class_count: Optional[int] = None,
) -> tuple[ModelBundle, dict]:
    """Rebuild a bundle; refuses a checkpoint whose K or C differs from what the caller expects."""
    p = _resolve(path)
    blob = torch.load(p, map_location="cpu", weights_only=True)

    k, c = int(blob["feature_dim"]), int(blob["class_count"])
    if expect_feature_dim is not None and k != expect_feature_dim:
        raise ValueError(f"{p}: checkpoint has K={k}, expected {expect_feature_dim}")
    if expect_class_count is not None and c != expect_class_count:
        raise ValueError(f"{p}: checkpoint has C={c}, expected {expect_class_count}")

    backbone = BackboneConfig.model_validate(blob["backbone"])
    bundle = ModelBundle.build(backbone, c)
    bundle.load_state_dict(blob["state_dict"])
    bundle.stage = blob["stage"]
    meta = {k_: blob[k_] for k_ in ("stage", "config_hash", "feature_dim", "class_count")}
    meta["backbone"] = backbone
    return bundle, meta
