from __future__ import annotations

import torch
import torch.nn as nn

from src.schemas.experiment import BackboneConfig


def _block(c_in: int, c_out: int, pool: bool) -> nn.Sequential:
    layers: list[nn.Module] = [
        nn.Conv2d(c_in, c_out, kernel_size=3, padding=1, bias=False),
        nn.BatchNorm2d(c_out),
        nn.ReLU(inplace=True),
    ]
    if pool:
        layers.append(nn.MaxPool2d(2))
    return nn.Sequential(*layers)


class ConvBackbone(nn.Module):
    """Four conv-BN-ReLU blocks, global average pooling, K-channel output."""

    def __init__(self, channels: int = 64, width: int = 32, in_channels: int = 3) -> None:
        super().__init__()
        self.out_channels = channels
        self.body = nn.Sequential(
            _block(in_channels, width, pool=True),
            _block(width, 2 * width, pool=True),
            _block(2 * width, 2 * width, pool=True),
            _block(2 * width, channels, pool=False),
        )
        self.pool = nn.AdaptiveAvgPool2d(1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return torch.flatten(self.pool(self.body(x)), 1)


def _resnet18() -> nn.Module:
    from torchvision.models import resnet18

    m = resnet18(weights=None)
    # 32x32 inputs: 3x3 stem, no stem pooling
    m.conv1 = nn.Conv2d(3, 64, kernel_size=3, stride=1, padding=1, bias=False)
    m.maxpool = nn.Identity()
    m.fc = nn.Identity()
    m.out_channels = 512
    return m


def build_backbone(config: BackboneConfig) -> nn.Module:
    if config.arch == "conv4":
        return ConvBackbone(channels=config.channels, width=config.width)
    if config.arch == "resnet18":
        return _resnet18()
    raise ValueError(f"unknown backbone arch: {config.arch}")
