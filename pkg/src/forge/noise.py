from __future__ import annotations

import math

import numpy as np

from src.forge.datasets import LabeledDataset, NoisyDataset

SELECTIONS = ("uniform", "per_class")


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def _check_descending(dataset: LabeledDataset) -> None:
    if not dataset.long_tailed:
        raise ValueError("dataset is not tagged long-tailed; build it with build_longtail first")
    sizes = dataset.class_sizes
    if np.any(np.diff(sizes) > 0):
        raise ValueError(
            f"class sizes must be non-increasing in class index, got {sizes.tolist()}; "
            "re-index classes by descending size"
        )


def inject_t2h_noise(
    dataset: LabeledDataset,
    noise_ratio: float,
    seed: int,
    selection: str = "uniform",
) -> NoisyDataset:
    """
    Tail-to-head label noise.

    Class 0 is never touched. From the remaining (transferable) instances,
    round(|S| * r) are chosen, and each chosen label y is replaced by a uniform
    draw from [0, y-1]. `selection="per_class"` picks round(n_k * r) from every
    transferable class instead of one shuffle over all of them.
    """
    if not 0.0 <= noise_ratio < 1.0:
        raise ValueError(f"noise_ratio must lie in [0, 1), got {noise_ratio}")
    if selection not in SELECTIONS:
        raise ValueError(f"selection must be one of {SELECTIONS}, got {selection!r}")
    _check_descending(dataset)

    rng = np.random.default_rng(seed)
    labels = dataset.labels
    observed = labels.copy()

    if selection == "uniform":
        transferable = np.flatnonzero(labels != 0)
        n_flip = _round_half_up(transferable.size * noise_ratio)
        chosen = rng.permutation(transferable)[:n_flip]
    else:
        parts = []
        for k in range(1, dataset.class_count):
            members = np.flatnonzero(labels == k)
            parts.append(rng.permutation(members)[: _round_half_up(members.size * noise_ratio)])
        chosen = np.concatenate(parts) if parts else np.empty(0, dtype=np.int64)

    if chosen.size:
        observed[chosen] = rng.integers(0, labels[chosen])

    return NoisyDataset(
        base=dataset,
        observed_labels=observed,
        noise_ratio=float(noise_ratio),
        seed=int(seed),
        selection=selection,
    )
