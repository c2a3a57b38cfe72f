from __future__ import annotations

import math
import random
from typing import Iterable, Optional, Sequence

import numpy as np
import torch
import torch.nn.functional as F
from tqdm import tqdm

from src.config import RuntimeConfig
from src.errors import NonFiniteLossError
from src.nets.bundle import ModelBundle

# uint8 pixels -> roughly zero-centred floats
PIXEL_MEAN = 0.5
PIXEL_STD = 0.25


def seed_everything(seed: int, runtime: Optional[RuntimeConfig] = None) -> None:
    random.seed(seed)
    np.random.seed(seed % (2**32))
    torch.manual_seed(seed)
    if runtime is not None:
        if runtime.torch_threads > 0:
            torch.set_num_threads(runtime.torch_threads)
        if runtime.deterministic:
            torch.use_deterministic_algorithms(True, warn_only=True)


def to_model_input(images: torch.Tensor | np.ndarray) -> torch.Tensor:
    x = torch.as_tensor(images)
    if x.dtype == torch.uint8:
        x = x.float() / 255.0
    return (x.float() - PIXEL_MEAN) / PIXEL_STD


def minibatches(n: int, batch_size: int, generator: torch.Generator) -> list[torch.Tensor]:
    """Shuffled index batches; a trailing batch of one is folded into its predecessor."""
    batches = list(torch.randperm(n, generator=generator).split(batch_size))
    if len(batches) > 1 and batches[-1].numel() == 1:
        tail = batches.pop()
        batches[-1] = torch.cat([batches[-1], tail])
    return batches


def milestone_epochs(epochs: int, fractions: Sequence[float]) -> list[int]:
    return sorted({max(1, math.ceil(epochs * f - 1e-9)) for f in fractions})


def build_sgd(
    bundle: ModelBundle,
    *,
    lr: float,
    momentum: float,
    weight_decay: float,
    train_G: bool,
    g_lr: Optional[float] = None,
) -> torch.optim.SGD:
    """Network group first; with `train_G`, a second group for G at `g_lr` without momentum."""
    groups = [{"params": bundle.network_parameters(), "weight_decay": weight_decay}]
    if train_G:
        # range of G is held by projection, not by decay
        groups.append(
            {
                "params": [bundle.G],
                "lr": lr if g_lr is None else g_lr,
                "momentum": 0.0,
                "weight_decay": 0.0,
            }
        )
    return torch.optim.SGD(groups, lr=lr, momentum=momentum)


@torch.no_grad()
def bound_step_(param: torch.Tensor, before: torch.Tensor, max_step: float) -> None:
    """Pull every entry of `param` back to within `max_step` of `before`."""
    param.copy_(torch.minimum(torch.maximum(param, before - max_step), before + max_step))


def build_scheduler(
    optimizer: torch.optim.Optimizer, epochs: int, fractions: Sequence[float], gamma: float
) -> torch.optim.lr_scheduler.MultiStepLR:
    return torch.optim.lr_scheduler.MultiStepLR(
        optimizer, milestones=milestone_epochs(epochs, fractions), gamma=gamma
    )


def soft_cross_entropy(logits: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    """Mean over rows of -sum(target * log_softmax(logits))."""
    return -(targets * F.log_softmax(logits, dim=1)).sum(dim=1).mean()


def check_finite(components: dict[str, torch.Tensor]) -> None:
    for name, value in components.items():
        if not torch.isfinite(value).all():
            raise NonFiniteLossError(
                name, {k: float(v.detach().reshape(-1)[0]) for k, v in components.items()}
            )


@torch.no_grad()
def predict(
    bundle: ModelBundle,
    images: np.ndarray | torch.Tensor,
    *,
    batch_size: int = 512,
    device: str = "cpu",
) -> tuple[torch.Tensor, torch.Tensor]:
    """(features, logits) for every image, eval mode, on CPU."""
    was_training = bundle.training
    bundle.eval()
    feats: list[torch.Tensor] = []
    logits: list[torch.Tensor] = []
    n = len(images)
    for start in range(0, n, batch_size):
        x = to_model_input(images[start : start + batch_size]).to(device)
        f, z = bundle(x)
        feats.append(f.cpu())
        logits.append(z.cpu())
    bundle.train(was_training)
    if not logits:
        k, c = bundle.feature_dim, bundle.class_count
        return torch.empty(0, k), torch.empty(0, c)
    return torch.cat(feats), torch.cat(logits)


def accuracy(logits: torch.Tensor, labels: torch.Tensor | np.ndarray) -> float:
    y = torch.as_tensor(labels, dtype=torch.long)
    if y.numel() == 0:
        return 0.0
    return 100.0 * float((logits.argmax(dim=1) == y).float().mean())


def epoch_means(sums: dict[str, float], count: int) -> dict[str, float]:
    return {k: v / max(count, 1) for k, v in sums.items()}


def iter_progress(batches: Iterable, *, desc: str, runtime: RuntimeConfig):
    return tqdm(batches, desc=desc, leave=False, disable=not runtime.show_progress)
