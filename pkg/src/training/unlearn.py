from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
import torch
import torch.nn.functional as F

from src.config import RuntimeConfig
from src.errors import NonFiniteLossError, TrainingDivergedError
from src.forge.datasets import TrainingSet
from src.forge.diagnostics import class_rank
from src.mixing.h2t import normalize_label_sets, smooth_labels, synthesize
from src.nets.bundle import ModelBundle
from src.nets.checkpoint import save_bundle
from src.observability.events import EventLogger, JsonlLog, NullLogger
from src.relabel.relabeler import RelabelResult, relabel_dataset
from src.relabel.views import DualViewAugmenter
from src.schemas.experiment import BackboneConfig, UnlearnStageConfig
from src.training.loop import (
    build_scheduler,
    build_sgd,
    check_finite,
    epoch_means,
    iter_progress,
    minibatches,
    seed_everything,
    soft_cross_entropy,
    to_model_input,
)

DEFAULT_MASK_EPS = 1e-8


def instance_mask(
    label_set: Sequence[int], G: torch.Tensor, eps: float = DEFAULT_MASK_EPS
) -> torch.Tensor:
    """M[k] = 1 iff sum over j in the label set of G[k, j] > eps."""
    labels = [int(j) for j in label_set]
    if not labels:
        raise ValueError("label set must not be empty")
    c = G.shape[1]
    bad = [j for j in labels if j < 0 or j >= c]
    if bad:
        raise ValueError(f"class indices {bad} outside [0, {c})")
    return (G.detach()[:, labels].sum(dim=1) > eps).to(G.dtype)


def instance_masks(
    membership: torch.Tensor | np.ndarray, G: torch.Tensor, eps: float = DEFAULT_MASK_EPS
) -> torch.Tensor:
    """Row-wise `instance_mask` for an (N, C) membership matrix; returns (N, K)."""
    m = torch.as_tensor(np.asarray(membership), dtype=G.dtype, device=G.device)
    if m.dim() != 2 or m.shape[1] != G.shape[1]:
        raise ValueError(f"membership must be (N, {G.shape[1]}), got {tuple(m.shape)}")
    return ((m @ G.detach().t()) > eps).to(G.dtype)


def _check_pair(original: ModelBundle, unlearned: ModelBundle) -> None:
    if original.stage != "original" or unlearned.stage != "unlearned":
        raise ValueError(
            f"expected (original, unlearned) bundles, got ({original.stage}, {unlearned.stage})"
        )
    if (original.feature_dim, original.class_count) != (
        unlearned.feature_dim,
        unlearned.class_count,
    ):
        raise ValueError("original and unlearned bundles differ in K or C")


def _ifpu_term(
    unlearned: ModelBundle, features: torch.Tensor, logits: torch.Tensor, masks: torch.Tensor
) -> torch.Tensor:
    return F.mse_loss(logits, unlearned.masked_forward(features, masks))


def ifpu_loss(
    original: ModelBundle, unlearned: ModelBundle, x: torch.Tensor, masks: torch.Tensor
) -> torch.Tensor:
    """
    MSE between Theta(Psi(x)) and Theta(Psi(x) * M), averaged over batch and classes.

    Gradients reach the unlearned network only; the masks come from the
    original's G and carry none.
    """
    _check_pair(original, unlearned)
    features, logits = unlearned(x)
    return _ifpu_term(unlearned, features, logits, masks.detach())


@dataclass
class UnlearnReport:
    rows: list[dict] = field(default_factory=list)
    relabel: Optional[RelabelResult] = None

    @property
    def hit_rates(self) -> list[Optional[float]]:
        return [r.get("hit_rate") for r in self.rows]


def unlearn_finetune(
    original: ModelBundle,
    train_set: TrainingSet,
    config: UnlearnStageConfig,
    *,
    backbone: BackboneConfig,
    initial_membership: Optional[np.ndarray] = None,
    runtime: Optional[RuntimeConfig] = None,
    logger: Optional[EventLogger] = None,
    log_path: Optional[str | Path] = None,
    checkpoint_dir: Optional[str | Path] = None,
    config_hash: str = "",
    hit_rate_fn: Optional[Callable[[RelabelResult], dict]] = None,
    val_fn: Optional[Callable[[ModelBundle], float]] = None,
) -> tuple[ModelBundle, UnlearnReport]:
    """
    Partial unlearning fine-tune of a copy of `original`.

    Each epoch re-scores the training set with the current unlearned model,
    rebuilds label sets and channel masks, then minimises
    soft CE(batch + head-to-tail mixes) + L_IFPU. `initial_membership`
    (e.g. from a relabel dump) replaces the first epoch's label sets.
    `original` is frozen and left bit-identical.
    """
    if original.stage != "original":
        raise ValueError(f"unlearn_finetune needs an original bundle, got {original.stage!r}")
    cfg = config.ifpu
    runtime = runtime or RuntimeConfig()
    logger = logger or NullLogger()
    device = runtime.device
    c = train_set.class_count

    original.freeze()
    seed_everything(cfg.seed, runtime)
    unlearned = original.spawn_unlearned().to(device)

    optimizer = build_sgd(
        unlearned,
        lr=cfg.lr,
        momentum=cfg.momentum,
        weight_decay=cfg.weight_decay,
        train_G=False,
    )
    scheduler = build_scheduler(optimizer, cfg.epochs, cfg.lr_milestones, cfg.lr_gamma)
    gen = torch.Generator().manual_seed(cfg.seed)
    mix_rng = np.random.default_rng(cfg.seed)
    augmenter = DualViewAugmenter(config.relabel) if cfg.augment else None

    images = torch.as_tensor(train_set.images)
    observed = torch.as_tensor(train_set.labels, dtype=torch.long)
    onehot = F.one_hot(observed, c).double()
    rank = torch.as_tensor(class_rank(train_set.class_sizes), dtype=torch.long)
    G = original.G.detach().to(device)
    table = JsonlLog(log_path)
    report = UnlearnReport()
    last_checkpoint: Optional[Path] = None

    logger.info(
        "ifpu_start",
        n=len(train_set),
        epochs=cfg.epochs,
        use_ifpu=cfg.use_ifpu,
        use_mixup=cfg.use_mixup,
        dual_view=config.relabel.dual_view,
    )

    for epoch in range(1, cfg.epochs + 1):
        relabel = relabel_dataset(
            unlearned,
            train_set.images,
            train_set.labels,
            train_set.ids,
            config.relabel,
            seed=cfg.seed * 1000 + epoch,
            device=device,
        )
        if epoch == 1 and initial_membership is not None:
            relabel = relabel.with_membership(initial_membership)
        membership = relabel.membership
        report.relabel = relabel

        masks = instance_masks(membership, G, cfg.mask_eps)
        targets = smooth_labels(onehot, normalize_label_sets(membership), config.mixer.alpha)
        targets = targets.float()

        unlearned.train()
        sums = {"ce": 0.0, "ifpu": 0.0, "loss": 0.0}
        synthetic = 0
        batches = minibatches(len(train_set), cfg.batch_size, gen)
        for idx in iter_progress(batches, desc=f"ifpu {epoch}", runtime=runtime):
            xb = images[idx]
            if augmenter is not None:
                xb = augmenter.weak(xb)
            x = to_model_input(xb).to(device)
            t = targets[idx].to(device)
            m = masks[idx]

            features, logits = unlearned(x)
            all_logits, all_targets = logits, t
            if cfg.use_mixup:
                x_mix, t_mix, _ = synthesize(
                    x, (features * m).detach(), observed[idx], t, rank, config.mixer, mix_rng
                )
                if len(x_mix):
                    _, mix_logits = unlearned(x_mix)
                    all_logits = torch.cat([logits, mix_logits])
                    all_targets = torch.cat([t, t_mix])
                    synthetic += len(x_mix)
            ce = soft_cross_entropy(all_logits, all_targets)
            ifpu = _ifpu_term(unlearned, features, logits, m) if cfg.use_ifpu else ce.new_zeros(())
            loss = cfg.ce_weight * ce + cfg.ifpu_weight * ifpu

            try:
                check_finite({"ce": ce, "ifpu": ifpu})
            except NonFiniteLossError as e:
                raise TrainingDivergedError("ifpu", epoch, str(e), last_checkpoint) from e
            if float(loss.detach()) > runtime.max_loss:
                reason = f"loss {float(loss):.3g} > {runtime.max_loss}"
                raise TrainingDivergedError("ifpu", epoch, reason, last_checkpoint)

            optimizer.zero_grad(set_to_none=True)
            loss.backward()
            optimizer.step()

            n = len(idx)
            sums["ce"] += float(ce.detach()) * n
            sums["ifpu"] += float(ifpu.detach()) * n
            sums["loss"] += float(loss.detach()) * n
        scheduler.step()

        row = {
            "epoch": epoch,
            **epoch_means(sums, len(train_set)),
            "clean_fraction": relabel.n_clean / max(len(relabel), 1),
            "tau": relabel.tau,
            "synthetic": synthetic,
            "lr": optimizer.param_groups[0]["lr"],
        }
        if hit_rate_fn is not None:
            row.update(hit_rate_fn(relabel))
        if val_fn is not None:
            row["val_acc"] = float(val_fn(unlearned))
        report.rows.append(row)
        table.append(row)
        logger.info("ifpu_epoch", **row)

        if checkpoint_dir is not None:
            last_checkpoint = save_bundle(
                unlearned, checkpoint_dir, backbone=backbone, config_hash=config_hash
            )

    unlearned.eval()
    logger.info("ifpu_done", epochs=cfg.epochs)
    return unlearned, report
