from __future__ import annotations

import math

import numpy as np

from src.forge.datasets import LabeledDataset


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def longtail_profile(head_size: int, class_count: int, imbalance_factor: float) -> list[int]:
    """
    Exponential class-size profile n_k = n_1 * IF^(-k/(C-1)), rounded half-up.

    Raises when IF < 1 or when the smallest class would round to zero.
    """
    if imbalance_factor < 1:
        raise ValueError(f"imbalance_factor must be >= 1, got {imbalance_factor}")
    if head_size < 1:
        raise ValueError(f"head class size must be >= 1, got {head_size}")
    if class_count == 1:
        return [head_size]

    sizes = [
        _round_half_up(head_size * imbalance_factor ** (-k / (class_count - 1)))
        for k in range(class_count)
    ]
    if sizes[-1] < 1:
        raise ValueError(
            f"imbalance_factor={imbalance_factor} leaves the smallest class empty "
            f"(head size {head_size}); the largest feasible imbalance factor is {2 * head_size}"
        )
    return sizes


def _require_balanced(source: LabeledDataset) -> int:
    sizes = source.class_sizes
    if sizes.size == 0 or sizes.min() != sizes.max():
        raise ValueError(f"source must be balanced, got class sizes {sizes.tolist()}")
    return int(sizes[0])


def build_longtail(source: LabeledDataset, imbalance_factor: float, seed: int) -> LabeledDataset:
    """
    Cut a balanced source down to a long-tailed one.

    Class k keeps n_k instances drawn without replacement; instance order follows
    the source so IF=1 returns the source unchanged (apart from the tag).
    """
    per_class = _require_balanced(source)
    sizes = longtail_profile(per_class, source.class_count, imbalance_factor)

    rng = np.random.default_rng(seed)
    keep: list[np.ndarray] = []
    for k, n_k in enumerate(sizes):
        members = np.flatnonzero(source.labels == k)
        keep.append(rng.permutation(members)[:n_k])
    idx = np.sort(np.concatenate(keep))

    out = source.take(idx)
    return LabeledDataset(
        labels=out.labels,
        class_count=out.class_count,
        ids=out.ids,
        refs=out.refs,
        split=out.split,
        long_tailed=True,
        images=out.images,
    )


def balanced_subset(source: LabeledDataset, per_class: int, seed: int) -> LabeledDataset:
    """Keep `per_class` instances of every class (desk-scale subsampling)."""
    if per_class < 1:
        raise ValueError(f"per_class must be >= 1, got {per_class}")
    sizes = source.class_sizes
    if sizes.min() < per_class:
        raise ValueError(
            f"per_class={per_class} exceeds the smallest source class ({int(sizes.min())})"
        )
    rng = np.random.default_rng(seed)
    keep = [
        rng.permutation(np.flatnonzero(source.labels == k))[:per_class]
        for k in range(source.class_count)
    ]
    return source.take(np.sort(np.concatenate(keep)))
