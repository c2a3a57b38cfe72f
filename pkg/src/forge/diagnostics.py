from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from src.forge.datasets import LabeledDataset, NoisyDataset


@dataclass(frozen=True, eq=False)
class TransitionMatrix:
    """Row-stochastic P(observed=h | true=t). Empty true classes get an identity row."""

    matrix: np.ndarray
    empty_rows: tuple[int, ...] = ()

    @property
    def class_count(self) -> int:
        return int(self.matrix.shape[0])

    def to_dict(self) -> dict:
        return {"matrix": self.matrix.tolist(), "empty_rows": list(self.empty_rows)}


def _pair_counts(true: np.ndarray, observed: np.ndarray, class_count: int) -> np.ndarray:
    counts = np.zeros((class_count, class_count), dtype=np.int64)
    np.add.at(counts, (true, observed), 1)
    return counts


def empirical_transition_matrix(noisy: NoisyDataset) -> TransitionMatrix:
    c = noisy.class_count
    counts = _pair_counts(noisy.true_labels, noisy.observed_labels, c)
    rows = counts.sum(axis=1)

    matrix = np.eye(c, dtype=np.float64)
    filled = rows > 0
    matrix[filled] = counts[filled] / rows[filled, None]
    empty = tuple(int(k) for k in np.flatnonzero(~filled))
    return TransitionMatrix(matrix=matrix, empty_rows=empty)


def flip_count_matrix(noisy: NoisyDataset) -> np.ndarray:
    """C x C counts of (true, observed) for flipped instances only; the diagonal is zero."""
    counts = _pair_counts(noisy.true_labels, noisy.observed_labels, noisy.class_count)
    np.fill_diagonal(counts, 0)
    return counts


def _sizes_of(data: LabeledDataset | NoisyDataset | np.ndarray) -> np.ndarray:
    if isinstance(data, NoisyDataset):
        return data.observed_sizes_by_class
    if isinstance(data, LabeledDataset):
        return data.class_sizes
    return np.asarray(data, dtype=np.int64)


def observed_class_sizes(noisy: NoisyDataset | LabeledDataset | np.ndarray) -> np.ndarray:
    """Class sizes sorted descending (N_1 >= ... >= N_C). Noise may reorder classes."""
    sizes = _sizes_of(noisy)
    if sizes.size == 0 or sizes.min() == 0:
        empty = np.flatnonzero(sizes == 0).tolist()
        raise ValueError(f"empty classes {empty}; class sizes are undefined for them")
    return np.sort(sizes)[::-1].copy()


def imbalance_factor(data: LabeledDataset | NoisyDataset | np.ndarray) -> float:
    """Largest class size / smallest class size (observed labels for a NoisyDataset)."""
    sizes = observed_class_sizes(data)
    return float(sizes[0] / sizes[-1])


def class_rank(sizes: np.ndarray) -> np.ndarray:
    """rank[c] = position of class c in descending-size order; ties go to the lower index."""
    sizes = np.asarray(sizes)
    order = np.argsort(-sizes, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(order.size)
    return rank
