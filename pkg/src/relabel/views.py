from __future__ import annotations

from typing import Optional

import numpy as np
import torch
from torchvision.transforms import v2
from torchvision.transforms.v2 import functional as TF

from src.schemas.experiment import RelabelConfig


class DualViewAugmenter:
    """
    Weak view: padded random crop + horizontal flip.
    Strong view: weak + colour jitter + cutout (random erasing).

    Views are drawn per sample and returned as float images in [0, 1] with
    the input's shape. Passing `seed` makes a call reproducible without
    touching the caller's global RNG stream.
    """

    def __init__(self, config: Optional[RelabelConfig] = None) -> None:
        cfg = config or RelabelConfig()
        self.config = cfg
        self._photometric = v2.Compose(
            [
                v2.ColorJitter(brightness=cfg.jitter, contrast=cfg.jitter, saturation=cfg.jitter),
                v2.RandomErasing(p=1.0, scale=tuple(cfg.cutout_scale), value=0.0),
            ]
        )

    def _weak_pipeline(self, size: tuple[int, int]) -> v2.Compose:
        return v2.Compose(
            [
                v2.RandomCrop(size, padding=self.config.crop_padding, padding_mode="reflect"),
                v2.RandomHorizontalFlip(p=0.5),
            ]
        )

    def _apply(
        self, images: torch.Tensor | np.ndarray, strong: bool, seed: Optional[int]
    ) -> torch.Tensor:
        x = TF.to_dtype(torch.as_tensor(images), torch.float32, scale=True)
        if x.dim() != 4:
            raise ValueError(f"expected a batch shaped (B, C, H, W), got {tuple(x.shape)}")
        if len(x) == 0:
            return x
        weak = self._weak_pipeline((x.shape[-2], x.shape[-1]))

        def one(img: torch.Tensor) -> torch.Tensor:
            out = weak(img)
            return self._photometric(out) if strong else out

        if seed is None:
            return torch.stack([one(img) for img in x])
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(seed)
            return torch.stack([one(img) for img in x])

    def weak(self, images: torch.Tensor | np.ndarray, seed: Optional[int] = None) -> torch.Tensor:
        return self._apply(images, strong=False, seed=seed)

    def strong(self, images: torch.Tensor | np.ndarray, seed: Optional[int] = None) -> torch.Tensor:
        return self._apply(images, strong=True, seed=seed)
