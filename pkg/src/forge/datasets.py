from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np


@dataclass(frozen=True)
class ImageRef:
    """Where an instance's pixels live: a CIFAR binary + byte offset, or a synthetic spec."""

    file: str
    offset: int


def _same_array(a: Optional[np.ndarray], b: Optional[np.ndarray]) -> bool:
    if a is None or b is None:
        return a is None and b is None
    return a.dtype == b.dtype and a.shape == b.shape and bool(np.array_equal(a, b))


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """
    Instances with their true labels.

    `images` is optional so label-only statistics can run at full CIFAR scale
    without pixels; `refs` is empty for label-only sources.
    """

    labels: np.ndarray
    class_count: int
    ids: np.ndarray
    refs: tuple[ImageRef, ...] = ()
    split: str = "train"
    long_tailed: bool = False
    images: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        labels = np.asarray(self.labels, dtype=np.int64)
        ids = np.asarray(self.ids, dtype=np.int64)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "refs", tuple(self.refs))

        if labels.ndim != 1:
            raise ValueError(f"labels must be 1-D, got shape {labels.shape}")
        if self.class_count < 1:
            raise ValueError(f"class_count must be >= 1, got {self.class_count}")
        if labels.size and (labels.min() < 0 or labels.max() >= self.class_count):
            raise ValueError(f"labels must lie in [0, {self.class_count})")
        if ids.shape != labels.shape:
            raise ValueError("ids and labels differ in length")
        if self.refs and len(self.refs) != labels.size:
            raise ValueError("refs and labels differ in length")
        if self.images is not None and len(self.images) != labels.size:
            raise ValueError("images and labels differ in length")

    def __len__(self) -> int:
        return int(self.labels.size)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LabeledDataset):
            return NotImplemented
        return (
            self.class_count == other.class_count
            and self.split == other.split
            and self.long_tailed == other.long_tailed
            and self.refs == other.refs
            and _same_array(self.labels, other.labels)
            and _same_array(self.ids, other.ids)
            and _same_array(self.images, other.images)
        )

    __hash__ = None  # type: ignore[assignment]

    @property
    def class_sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.class_count)

    def take(self, indices: Sequence[int] | np.ndarray) -> "LabeledDataset":
        idx = np.asarray(indices, dtype=np.int64)
        return replace(
            self,
            labels=self.labels[idx],
            ids=self.ids[idx],
            refs=tuple(self.refs[i] for i in idx) if self.refs else (),
            images=self.images[idx] if self.images is not None else None,
        )

    def with_images(self, images: Optional[np.ndarray]) -> "LabeledDataset":
        return replace(self, images=images)

    def without_images(self) -> "LabeledDataset":
        return replace(self, images=None)


@dataclass(frozen=True, eq=False)
class TrainingSet:
    """What trainers see: pixels and observed labels only."""

    images: np.ndarray
    labels: np.ndarray
    ids: np.ndarray
    class_count: int

    def __len__(self) -> int:
        return int(self.labels.size)

    @property
    def class_sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.class_count)


@dataclass(frozen=True, eq=False)
class NoisyDataset:
    """A long-tailed dataset after T2H injection. True labels stay for evaluation only."""

    base: LabeledDataset
    observed_labels: np.ndarray
    noise_ratio: float
    seed: int
    selection: str = "uniform"

    def __post_init__(self) -> None:
        observed = np.asarray(self.observed_labels, dtype=np.int64)
        object.__setattr__(self, "observed_labels", observed)
        if observed.shape != self.base.labels.shape:
            raise ValueError("observed_labels and true labels differ in length")
        if observed.size and (observed.min() < 0 or observed.max() >= self.base.class_count):
            raise ValueError(f"observed labels must lie in [0, {self.base.class_count})")

    def __len__(self) -> int:
        return len(self.base)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, NoisyDataset):
            return NotImplemented
        return (
            self.base == other.base
            and _same_array(self.observed_labels, other.observed_labels)
            and self.noise_ratio == other.noise_ratio
            and self.seed == other.seed
            and self.selection == other.selection
        )

    __hash__ = None  # type: ignore[assignment]

    @property
    def class_count(self) -> int:
        return self.base.class_count

    @property
    def true_labels(self) -> np.ndarray:
        return self.base.labels

    @property
    def flipped(self) -> np.ndarray:
        return self.observed_labels != self.base.labels

    @property
    def observed_sizes_by_class(self) -> np.ndarray:
        return np.bincount(self.observed_labels, minlength=self.class_count)

    def with_images(self, images: Optional[np.ndarray]) -> "NoisyDataset":
        return replace(self, base=self.base.with_images(images))

    def without_images(self) -> "NoisyDataset":
        return replace(self, base=self.base.without_images())

    def training_view(self) -> TrainingSet:
        if self.base.images is None:
            raise ValueError("dataset has no pixels loaded; call load_images first")
        return TrainingSet(
            images=self.base.images,
            labels=self.observed_labels.copy(),
            ids=self.base.ids.copy(),
            class_count=self.class_count,
        )
