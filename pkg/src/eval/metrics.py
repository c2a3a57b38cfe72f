from __future__ import annotations

from typing import Dict, List

import numpy as np

from src.forge.diagnostics import class_rank
from src.nets.bundle import ModelBundle
from src.schemas.records import EvalMetrics
from src.training.loop import predict

TERCILES = ("head", "middle", "tail")


def tercile_partition(observed_sizes: np.ndarray) -> Dict[str, List[int]]:
    """
    Head / middle / tail by rank of observed training size.

    C // 3 classes each for head and middle, the remainder for tail
    (C=100 -> 33/33/34, C=10 -> 3/3/4).
    """
    sizes = np.asarray(observed_sizes)
    c = sizes.size
    rank = class_rank(sizes)
    third = c // 3
    bounds = {"head": (0, third), "middle": (third, 2 * third), "tail": (2 * third, c)}
    return {
        name: sorted(int(k) for k in np.flatnonzero((rank >= lo) & (rank < hi)))
        for name, (lo, hi) in bounds.items()
    }


def _pct(hits: np.ndarray) -> float | None:
    return 100.0 * float(hits.mean()) if hits.size else None


def accuracy_from_predictions(
    predictions: np.ndarray, true_labels: np.ndarray, observed_sizes: np.ndarray
) -> EvalMetrics:
    """
    Top-1 accuracy overall, per class and per tercile.

    Tercile accuracy is over test instances, so the three tercile values
    weighted by their instance counts give back the overall accuracy. Classes
    with no test instance are left out of their tercile and listed in
    `missing_classes`.
    """
    pred = np.asarray(predictions, dtype=np.int64)
    true = np.asarray(true_labels, dtype=np.int64)
    if pred.shape != true.shape:
        raise ValueError(f"predictions {pred.shape} and labels {true.shape} differ")
    c = int(np.asarray(observed_sizes).size)
    hits = pred == true

    per_class = [_pct(hits[true == k]) for k in range(c)]
    missing = [k for k in range(c) if per_class[k] is None]
    terciles = tercile_partition(observed_sizes)

    parts: Dict[str, float | None] = {}
    counts: Dict[str, int] = {}
    for name in TERCILES:
        in_tercile = np.isin(true, terciles[name])
        parts[name] = _pct(hits[in_tercile])
        counts[name] = int(in_tercile.sum())

    return EvalMetrics(
        overall=_pct(hits) or 0.0,
        head=parts["head"],
        middle=parts["middle"],
        tail=parts["tail"],
        per_class=per_class,
        terciles=terciles,
        tercile_counts=counts,
        missing_classes=missing,
        n=int(true.size),
    )


def evaluate(
    bundle: ModelBundle,
    images: np.ndarray,
    true_labels: np.ndarray,
    observed_sizes: np.ndarray,
    *,
    batch_size: int = 512,
    device: str = "cpu",
) -> EvalMetrics:
    _, logits = predict(bundle, images, batch_size=batch_size, device=device)
    return accuracy_from_predictions(logits.argmax(dim=1).numpy(), true_labels, observed_sizes)
