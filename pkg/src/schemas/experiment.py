from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any, Literal, Optional, Type, TypeVar

import yaml
from pydantic import BaseModel, ConfigDict, Field, model_validator

SourceKind = Literal["blobs", "cifar10", "cifar100"]
Selection = Literal["uniform", "per_class"]
LambdaMode = Literal["fixed", "beta"]

M = TypeVar("M", bound=BaseModel)


class DatasetSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    source: SourceKind = "blobs"
    data_root: Optional[str] = Field(
        default=None, description="CIFAR root; falls back to DULL_DATA_ROOT."
    )
    class_count: int = Field(default=10, ge=2, description="Only used by the blobs source.")
    per_class: Optional[int] = Field(
        default=600, ge=1, description="Balanced cap per class before the long-tail cut."
    )
    test_per_class: Optional[int] = Field(default=100, ge=1)
    imbalance_factor: float = Field(default=10.0, ge=1.0)
    noise_ratio: float = Field(default=0.4, ge=0.0, lt=1.0)
    selection: Selection = "uniform"
    seed: int = 1

    # blobs only
    image_size: int = Field(default=16, ge=8)
    blob_noise_std: float = Field(default=0.5, ge=0.0)


class BackboneConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    arch: Literal["conv4", "resnet18"] = "conv4"
    channels: int = Field(default=64, ge=1, description="K, width of the pooled feature.")
    width: int = Field(default=32, ge=4)
    seed: int = 0

    @model_validator(mode="after")
    def _resnet_width(self) -> "BackboneConfig":
        if self.arch == "resnet18" and self.channels != 512:
            raise ValueError("resnet18 produces 512 channels; set channels=512")
        return self


class IfdConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    beta: float = Field(default=0.01, gt=0.0)
    sparsity_norm: Literal[1, 2] = 1
    epochs: int = Field(default=40, ge=1)
    batch_size: int = Field(default=128, ge=1)
    lr: float = Field(default=0.1, gt=0.0)
    momentum: float = Field(default=0.9, ge=0.0)
    weight_decay: float = Field(default=5e-4, ge=0.0)
    lr_milestones: list[float] = Field(
        default_factory=lambda: [0.5, 0.75],
        description="Fractions of the epoch budget where the LR is multiplied by lr_gamma.",
    )
    lr_gamma: float = Field(default=0.1, gt=0.0)
    g_lr: float = Field(default=0.5, gt=0.0, description="Learning rate of G (no momentum).")
    g_max_step: float = Field(
        default=0.01, gt=0.0, le=1.0, description="Largest change of any G entry per step."
    )
    augment: bool = True
    seed: int = 0


class RelabelConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    gamma: float = Field(default=0.5, ge=0.0, le=1.0)
    dual_view: bool = True
    crop_padding: int = Field(default=2, ge=0)
    jitter: float = Field(default=0.4, ge=0.0)
    cutout_scale: tuple[float, float] = (0.02, 0.2)
    batch_size: int = Field(default=256, ge=1)


class MixerConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    alpha: float = Field(default=0.1, ge=0.0, le=1.0)
    lambda_mode: LambdaMode = "fixed"
    lam: float = Field(default=0.5, ge=0.0, le=1.0)
    beta_a: float = Field(default=1.0, gt=0.0)
    pairs_per_batch: Optional[int] = Field(
        default=None, ge=0, description="None means batch_size // 4."
    )


class IfpuConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    epochs: int = Field(default=15, ge=1)
    batch_size: int = Field(default=128, ge=1)
    lr: float = Field(default=0.1, gt=0.0)
    momentum: float = Field(default=0.9, ge=0.0)
    weight_decay: float = Field(default=5e-4, ge=0.0)
    lr_milestones: list[float] = Field(default_factory=lambda: [1 / 6, 1 / 3])
    lr_gamma: float = Field(default=0.1, gt=0.0)
    ce_weight: float = Field(default=1.0, ge=0.0)
    ifpu_weight: float = Field(default=1.0, ge=0.0)
    mask_eps: float = Field(default=1e-8, ge=0.0)
    use_ifpu: bool = True
    use_mixup: bool = True
    augment: bool = True
    seed: int = 0


class IfdStageConfig(BaseModel):
    """What `train_ifd --config` reads."""

    model_config = ConfigDict(extra="forbid")

    ifd: IfdConfig = Field(default_factory=IfdConfig)
    backbone: BackboneConfig = Field(default_factory=BackboneConfig)


class UnlearnStageConfig(BaseModel):
    """Everything the fine-tune stage reads; `unlearn --config` takes this shape."""

    model_config = ConfigDict(extra="forbid")

    ifpu: IfpuConfig = Field(default_factory=IfpuConfig)
    relabel: RelabelConfig = Field(default_factory=RelabelConfig)
    mixer: MixerConfig = Field(default_factory=MixerConfig)


class EvalSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    batch_size: int = Field(default=512, ge=1)


class OutputSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    out_dir: str = "data/artifacts/experiments"
    save_checkpoints: bool = True
    summary_csv: str = "summary.csv"


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str = "t2h"
    dataset: DatasetSpec = Field(default_factory=DatasetSpec)
    backbone: BackboneConfig = Field(default_factory=BackboneConfig)
    ifd: IfdConfig = Field(default_factory=IfdConfig)
    relabel: RelabelConfig = Field(default_factory=RelabelConfig)
    ifpu: IfpuConfig = Field(default_factory=IfpuConfig)
    mixer: MixerConfig = Field(default_factory=MixerConfig)
    eval: EvalSpec = Field(default_factory=EvalSpec)
    output: OutputSpec = Field(default_factory=OutputSpec)

    def hashed_payload(self) -> dict[str, Any]:
        # name and output paths do not change results
        return self.model_dump(mode="json", exclude={"name", "output"})

    def config_hash(self) -> str:
        return canonical_hash(self.hashed_payload())

    def stage_config(self) -> UnlearnStageConfig:
        return UnlearnStageConfig(ifpu=self.ifpu, relabel=self.relabel, mixer=self.mixer)


def canonical_hash(payload: Any) -> str:
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=True)
    return hashlib.sha1(text.encode("utf-8")).hexdigest()[:10]


def load_config(path: str | Path, model: Type[M]) -> M:
    """Read a JSON or YAML file into `model`."""
    p = Path(path)
    text = p.read_text(encoding="utf-8")
    if p.suffix.lower() in (".yaml", ".yml"):
        data = yaml.safe_load(text) or {}
    else:
        data = json.loads(text)
    return model.model_validate(data)
