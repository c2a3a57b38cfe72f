from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np
import torch
import torch.nn.functional as F

from src.nets.bundle import ModelBundle
from src.observability.events import JsonlLog
from src.relabel.multilabel import (
    build_multilabels,
    fused_confidence,
    jsd,
    label_counts,
    split_clean_noisy,
)
from src.relabel.views import DualViewAugmenter
from src.schemas.experiment import RelabelConfig
from src.schemas.records import MultiLabelRecord
from src.training.loop import to_model_input


@dataclass(frozen=True, eq=False)
class RelabelResult:
    ids: np.ndarray
    observed: np.ndarray
    p_ws: np.ndarray
    d: np.ndarray
    tau: float
    clean: np.ndarray
    q: np.ndarray
    membership: np.ndarray
    label_lists: tuple[tuple[int, ...], ...]

    def __len__(self) -> int:
        return int(self.ids.size)

    @property
    def n_clean(self) -> int:
        return int(self.clean.sum())

    def with_membership(self, membership: np.ndarray) -> "RelabelResult":
        """Same scores and split, label sets taken from `membership` (ascending class order)."""
        m = np.array(membership, dtype=bool)
        if m.shape != self.membership.shape:
            raise ValueError(f"membership must be {self.membership.shape}, got {m.shape}")
        if not m.any(axis=1).all():
            raise ValueError("every label set must hold at least one class")
        lists = tuple(tuple(int(j) for j in np.flatnonzero(row)) for row in m)
        return replace(
            self,
            membership=m,
            q=m.sum(axis=1).astype(np.int64),
            label_lists=lists,
        )

    def records(self) -> list[MultiLabelRecord]:
        return [
            MultiLabelRecord(
                id=int(self.ids[i]),
                d=float(self.d[i]),
                clean=bool(self.clean[i]),
                q=len(self.label_lists[i]),
                labels=list(self.label_lists[i]),
                observed=int(self.observed[i]),
            )
            for i in range(len(self))
        ]


def _probs(bundle: ModelBundle, x: torch.Tensor, device: str) -> torch.Tensor:
    _, logits = bundle(to_model_input(x).to(device))
    return F.softmax(logits.double(), dim=1).cpu()


@torch.no_grad()
def predict_fused(
    bundle: ModelBundle,
    images: np.ndarray,
    config: RelabelConfig,
    *,
    seed: int = 0,
    device: str = "cpu",
) -> np.ndarray:
    """Fused dual-view confidence p_ws for every image (single clean view when dual_view is off)."""
    augmenter = DualViewAugmenter(config)
    was_training = bundle.training
    bundle.eval()
    out: list[torch.Tensor] = []
    for b, start in enumerate(range(0, len(images), config.batch_size)):
        xb = torch.as_tensor(images[start : start + config.batch_size])
        if config.dual_view:
            p_w = _probs(bundle, augmenter.weak(xb, seed=seed * 7919 + 2 * b), device)
            p_s = _probs(bundle, augmenter.strong(xb, seed=seed * 7919 + 2 * b + 1), device)
            out.append(fused_confidence(p_w, p_s, config.gamma))
        else:
            out.append(_probs(bundle, xb, device))
    bundle.train(was_training)
    if not out:
        return np.empty((0, bundle.class_count))
    return torch.cat(out).numpy()


def relabel_from_scores(
    p_ws: np.ndarray, observed: np.ndarray, ids: np.ndarray, class_count: int
) -> RelabelResult:
    """JSD scores, mean-threshold split and adaptive label sets from fused confidences."""
    onehot = np.eye(class_count)[np.asarray(observed, dtype=np.int64)]
    d = jsd(onehot, p_ws).numpy()
    split = split_clean_noisy(d)
    q = label_counts(d, class_count).numpy()
    membership, lists = build_multilabels(p_ws, observed, q, split.clean)
    return RelabelResult(
        ids=np.asarray(ids, dtype=np.int64),
        observed=np.asarray(observed, dtype=np.int64),
        p_ws=np.asarray(p_ws, dtype=np.float64),
        d=d,
        tau=split.tau,
        clean=split.clean,
        q=np.array([len(x) for x in lists], dtype=np.int64),
        membership=membership,
        label_lists=tuple(tuple(x) for x in lists),
    )


def relabel_dataset(
    bundle: ModelBundle,
    images: np.ndarray,
    observed: np.ndarray,
    ids: np.ndarray,
    config: RelabelConfig,
    *,
    seed: int = 0,
    device: str = "cpu",
) -> RelabelResult:
    p_ws = predict_fused(bundle, images, config, seed=seed, device=device)
    return relabel_from_scores(p_ws, observed, ids, bundle.class_count)


def write_relabel_dump(path: str | Path, result: RelabelResult) -> Path:
    log = JsonlLog(path)
    for rec in result.records():
        log.append(rec.model_dump(mode="json"))
    return Path(path)


def read_relabel_dump(path: str | Path) -> list[MultiLabelRecord]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [MultiLabelRecord.model_validate(json.loads(line)) for line in lines if line.strip()]


def membership_from_records(
    records: list[MultiLabelRecord], ids: np.ndarray, class_count: int
) -> np.ndarray:
    """(N, C) boolean membership aligned to `ids`; every id must have a record."""
    by_id = {r.id: r for r in records}
    out = np.zeros((len(ids), class_count), dtype=bool)
    for row, i in enumerate(np.asarray(ids)):
        rec: Optional[MultiLabelRecord] = by_id.get(int(i))
        if rec is None:
            raise ValueError(f"relabel dump has no record for id {int(i)}")
        if max(rec.labels) >= class_count:
            raise ValueError(f"record {rec.id} holds a label outside [0, {class_count})")
        out[row, rec.labels] = True
    return out
