from __future__ import annotations

from pathlib import Path
from typing import Callable, Optional

import torch
import torch.nn.functional as F

from src.config import RuntimeConfig
from src.errors import NonFiniteLossError, TrainingDivergedError
from src.forge.datasets import TrainingSet
from src.nets.bundle import ModelBundle
from src.nets.checkpoint import save_bundle
from src.observability.events import EventLogger, JsonlLog, NullLogger
from src.relabel.views import DualViewAugmenter
from src.schemas.experiment import BackboneConfig, IfdConfig
from src.training.loop import (
    build_scheduler,
    build_sgd,
    check_finite,
    iter_progress,
    minibatches,
    seed_everything,
    to_model_input,
)


def train_ce(
    train_set: TrainingSet,
    config: IfdConfig,
    backbone: BackboneConfig,
    *,
    epochs: int,
    runtime: Optional[RuntimeConfig] = None,
    logger: Optional[EventLogger] = None,
    log_path: Optional[str | Path] = None,
    checkpoint_dir: Optional[str | Path] = None,
    config_hash: str = "",
    eval_fn: Optional[Callable[[ModelBundle], float]] = None,
) -> tuple[ModelBundle, list[dict]]:
    """Plain cross-entropy on observed labels with the IFD backbone, optimizer and schedule."""
    runtime = runtime or RuntimeConfig()
    logger = logger or NullLogger()
    device = runtime.device

    seed_everything(config.seed, runtime)
    bundle = ModelBundle.build(backbone, train_set.class_count).to(device)
    optimizer = build_sgd(
        bundle,
        lr=config.lr,
        momentum=config.momentum,
        weight_decay=config.weight_decay,
        train_G=False,
    )
    scheduler = build_scheduler(optimizer, epochs, config.lr_milestones, config.lr_gamma)
    gen = torch.Generator().manual_seed(config.seed)
    augmenter = DualViewAugmenter() if config.augment else None
    images = torch.as_tensor(train_set.images)
    labels = torch.as_tensor(train_set.labels, dtype=torch.long)
    table = JsonlLog(log_path)
    rows: list[dict] = []
    last_checkpoint: Optional[Path] = None

    for epoch in range(1, epochs + 1):
        bundle.train()
        total, correct = 0.0, 0
        for idx in iter_progress(
            minibatches(len(train_set), config.batch_size, gen), desc=f"ce {epoch}", runtime=runtime
        ):
            xb = images[idx]
            if augmenter is not None:
                xb = augmenter.weak(xb)
            x = to_model_input(xb).to(device)
            y = labels[idx].to(device)
            _, logits = bundle(x)
            loss = F.cross_entropy(logits, y)
            try:
                check_finite({"ce": loss})
            except NonFiniteLossError as e:
                raise TrainingDivergedError("ce", epoch, str(e), last_checkpoint) from e

            optimizer.zero_grad(set_to_none=True)
            loss.backward()
            optimizer.step()
            total += float(loss.detach()) * len(idx)
            correct += int((logits.detach().argmax(dim=1) == y).sum())
        scheduler.step()

        row = {
            "epoch": epoch,
            "ce": total / len(train_set),
            "train_acc": 100.0 * correct / len(train_set),
            "lr": optimizer.param_groups[0]["lr"],
        }
        if eval_fn is not None:
            row["val_acc"] = float(eval_fn(bundle))
        rows.append(row)
        table.append(row)
        logger.info("ce_epoch", **row)
        if checkpoint_dir is not None:
            last_checkpoint = save_bundle(
                bundle, checkpoint_dir, backbone=backbone, config_hash=config_hash
            )

    bundle.eval()
    return bundle, rows
