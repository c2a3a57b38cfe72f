from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

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
    bound_step_,
    build_scheduler,
    build_sgd,
    check_finite,
    epoch_means,
    iter_progress,
    minibatches,
    seed_everything,
    to_model_input,
)
from src.training.penalties import lsm_metric, om_metric, orthogonality_penalty, sparsity_penalty


@dataclass
class IfdLoss:
    total: torch.Tensor
    l0: torch.Tensor
    l1: torch.Tensor
    sparsity: torch.Tensor
    logits: Optional[torch.Tensor] = None

    def to_dict(self) -> dict[str, float]:
        return {
            "total": float(self.total.detach()),
            "L0": float(self.l0.detach()),
            "L1": float(self.l1.detach()),
            "sparsity": float(self.sparsity.detach()),
        }


@dataclass
class DisentangleReport:
    initial_om: float
    initial_lsm: float
    om: list[float] = field(default_factory=list)
    lsm: list[float] = field(default_factory=list)
    rows: list[dict] = field(default_factory=list)

    @property
    def final_om(self) -> float:
        return self.om[-1] if self.om else self.initial_om

    @property
    def final_lsm(self) -> float:
        return self.lsm[-1] if self.lsm else self.initial_lsm

    def to_dict(self) -> dict:
        d = asdict(self)
        d["final_om"] = self.final_om
        d["final_lsm"] = self.final_lsm
        return d


def ifd_loss(
    bundle: ModelBundle,
    x: torch.Tensor,
    y: torch.Tensor,
    *,
    beta: float,
    p: int = 1,
) -> IfdLoss:
    """
    L0 = CE(theta(f(x))) + CE(theta(f(x) * G[:, y]))
    L1 = beta * ||G^T G - I_C||_F^2
    sparsity = ||G||_p / (K * C)
    """
    if bundle.stage != "original":
        raise ValueError(f"ifd_loss needs an original bundle, got stage={bundle.stage!r}")
    features, logits = bundle(x)
    masked = bundle.masked_forward(features, bundle.class_mask(y))
    l0 = F.cross_entropy(logits, y) + F.cross_entropy(masked, y)
    l1 = orthogonality_penalty(bundle.G, beta)
    sp = sparsity_penalty(bundle.G, p) / bundle.G.numel()
    check_finite({"L0": l0, "L1": l1, "sparsity": sp})
    return IfdLoss(total=l0 + l1 + sp, l0=l0, l1=l1, sparsity=sp, logits=logits)


def epochs_to_threshold(trajectory: Sequence[float], threshold: float) -> Optional[int]:
    """First 1-based epoch whose value is <= threshold, or None."""
    for i, v in enumerate(trajectory, start=1):
        if v <= threshold:
            return i
    return None


def train_ifd(
    train_set: TrainingSet,
    config: IfdConfig,
    backbone: BackboneConfig,
    *,
    runtime: Optional[RuntimeConfig] = None,
    logger: Optional[EventLogger] = None,
    log_path: Optional[str | Path] = None,
    checkpoint_dir: Optional[str | Path] = None,
    config_hash: str = "",
    eval_fn: Optional[Callable[[ModelBundle], float]] = None,
) -> tuple[ModelBundle, DisentangleReport]:
    """
    Train the original bundle with the IFD objective (SGD + step decay).

    Only observed labels are visible here. `eval_fn` may return a held-out
    accuracy for the epoch log; it never feeds back into training.
    """
    if len(train_set) == 0:
        raise ValueError("train_ifd needs a non-empty training set")
    runtime = runtime or RuntimeConfig()
    logger = logger or NullLogger()
    device = runtime.device

    seed_everything(config.seed, runtime)
    bundle = ModelBundle.build(backbone, train_set.class_count).to(device)
    bundle.train()

    optimizer = build_sgd(
        bundle,
        lr=config.lr,
        momentum=config.momentum,
        weight_decay=config.weight_decay,
        train_G=True,
        g_lr=config.g_lr,
    )
    scheduler = build_scheduler(optimizer, config.epochs, config.lr_milestones, config.lr_gamma)
    gen = torch.Generator().manual_seed(config.seed)
    augmenter = DualViewAugmenter() if config.augment else None
    images = torch.as_tensor(train_set.images)
    labels = torch.as_tensor(train_set.labels, dtype=torch.long)
    table = JsonlLog(log_path)

    report = DisentangleReport(initial_om=om_metric(bundle.G), initial_lsm=lsm_metric(bundle.G))
    last_checkpoint: Optional[Path] = None
    logger.info(
        "ifd_start",
        n=len(train_set),
        classes=train_set.class_count,
        K=bundle.feature_dim,
        epochs=config.epochs,
        beta=config.beta,
        om=report.initial_om,
        lsm=report.initial_lsm,
    )

    for epoch in range(1, config.epochs + 1):
        bundle.train()
        sums = {"L0": 0.0, "L1": 0.0, "sparsity": 0.0, "total": 0.0}
        correct = 0
        batches = minibatches(len(train_set), config.batch_size, gen)
        for idx in iter_progress(batches, desc=f"ifd {epoch}", runtime=runtime):
            xb = images[idx]
            if augmenter is not None:
                xb = augmenter.weak(xb)
            x = to_model_input(xb).to(device)
            y = labels[idx].to(device)

            try:
                loss = ifd_loss(bundle, x, y, beta=config.beta, p=config.sparsity_norm)
            except NonFiniteLossError as e:
                raise TrainingDivergedError("ifd", epoch, str(e), last_checkpoint) from e
            if float(loss.total.detach()) > runtime.max_loss:
                reason = f"loss {float(loss.total):.3g} > {runtime.max_loss}"
                raise TrainingDivergedError("ifd", epoch, reason, last_checkpoint)

            optimizer.zero_grad(set_to_none=True)
            loss.total.backward()
            g_before = bundle.G.detach().clone()
            optimizer.step()
            bound_step_(bundle.G, g_before, config.g_max_step)
            bundle.project_()

            parts = loss.to_dict()
            for k in sums:
                sums[k] += parts[k] * len(idx)
            correct += int((loss.logits.detach().argmax(dim=1) == y).sum())
        scheduler.step()

        om, lsm = om_metric(bundle.G), lsm_metric(bundle.G)
        report.om.append(om)
        report.lsm.append(lsm)
        row = {
            "epoch": epoch,
            **epoch_means(sums, len(train_set)),
            "OM": om,
            "LSM": lsm,
            "train_acc": 100.0 * correct / len(train_set),
            "lr": optimizer.param_groups[0]["lr"],
            "g_lr": optimizer.param_groups[1]["lr"],
        }
        if eval_fn is not None:
            row["val_acc"] = float(eval_fn(bundle))
        report.rows.append(row)
        table.append(row)
        logger.info("ifd_epoch", **row)

        if checkpoint_dir is not None:
            last_checkpoint = save_bundle(
                bundle, checkpoint_dir, backbone=backbone, config_hash=config_hash
            )

    bundle.eval()
    logger.info("ifd_done", om=report.final_om, lsm=report.final_lsm)
    return bundle, report
