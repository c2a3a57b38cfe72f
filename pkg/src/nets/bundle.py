from __future__ import annotations

import copy
from typing import Literal

import numpy as np
import torch
import torch.nn as nn

from src.nets.backbone import build_backbone
from src.schemas.experiment import BackboneConfig

Stage = Literal["original", "unlearned"]


def project_G(G: torch.Tensor | np.ndarray) -> torch.Tensor | np.ndarray:
    """Clamp every entry of the correlation matrix into [0, 1]."""
    if isinstance(G, np.ndarray):
        return np.clip(G, 0.0, 1.0)
    return G.clamp(0.0, 1.0)


class ModelBundle(nn.Module):
    """
    Extractor f, classifier theta and the K x C channel-class matrix G.

    Class y's channel mask is the column G[:, y]. The "original" bundle is
    trained by IFD; `spawn_unlearned` copies it for partial unlearning.
    """

    def __init__(
        self,
        extractor: nn.Module,
        classifier: nn.Linear,
        G: torch.Tensor,
        stage: Stage = "original",
    ) -> None:
        super().__init__()
        if G.dim() != 2:
            raise ValueError(f"G must be K x C, got shape {tuple(G.shape)}")
        if classifier.in_features != G.shape[0] or classifier.out_features != G.shape[1]:
            raise ValueError(
                f"classifier {classifier.in_features}->{classifier.out_features} "
                f"does not match G {tuple(G.shape)}"
            )
        self.extractor = extractor
        self.classifier = classifier
        self.G = nn.Parameter(G.detach().clone())
        self.stage: Stage = stage
        self.frozen = False

    @classmethod
    def build(cls, config: BackboneConfig, class_count: int) -> "ModelBundle":
        torch.manual_seed(config.seed)
        extractor = build_backbone(config)
        k = int(getattr(extractor, "out_channels", config.channels))
        classifier = nn.Linear(k, class_count)
        gen = torch.Generator().manual_seed(config.seed)
        G = torch.rand(k, class_count, generator=gen)
        return cls(extractor, classifier, G)

    @property
    def feature_dim(self) -> int:
        return int(self.G.shape[0])

    @property
    def class_count(self) -> int:
        return int(self.G.shape[1])

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        features = self.extractor(x)
        if features.shape[-1] != self.feature_dim:
            raise ValueError(
                f"extractor produced {features.shape[-1]} channels, expected {self.feature_dim}"
            )
        return features, self.classifier(features)

    def masked_forward(self, features: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        """Logits of features with channels gated by `mask` (K or B x K)."""
        if mask.shape[-1] != self.feature_dim:
            raise ValueError(f"mask length {mask.shape[-1]} != K={self.feature_dim}")
        return self.classifier(features * mask)

    def class_mask(self, y: torch.Tensor) -> torch.Tensor:
        """Rows G[:, y_i]^T, one per label; shape (B, K)."""
        return self.G[:, y].t()

    def project_(self) -> None:
        with torch.no_grad():
            self.G.clamp_(0.0, 1.0)

    def network_parameters(self) -> list[nn.Parameter]:
        """Extractor and classifier weights, without G."""
        return list(self.extractor.parameters()) + list(self.classifier.parameters())

    def freeze(self) -> "ModelBundle":
        for p in self.parameters():
            p.requires_grad_(False)
        self.eval()
        self.frozen = True
        return self

    def spawn_unlearned(self) -> "ModelBundle":
        if self.stage != "original":
            raise ValueError(f"can only spawn from an original bundle, got stage={self.stage!r}")
        clone = copy.deepcopy(self)
        clone.stage = "unlearned"
        clone.frozen = False
        for p in clone.network_parameters():
            p.requires_grad_(True)
        # masks come from the frozen original's G
        clone.G.requires_grad_(False)
        clone.train()
        return clone

    def parameter_snapshot(self) -> dict[str, torch.Tensor]:
        return {k: v.detach().clone() for k, v in self.state_dict().items()}
