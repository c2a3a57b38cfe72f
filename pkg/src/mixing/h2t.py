from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import torch

from src.schemas.experiment import MixerConfig


@dataclass(frozen=True)
class Pair:
    i: int
    j: int
    similarity: float


@dataclass(frozen=True)
class PairSelection:
    pairs: tuple[Pair, ...] = ()

    def __len__(self) -> int:
        return len(self.pairs)

    @property
    def i(self) -> list[int]:
        return [p.i for p in self.pairs]

    @property
    def j(self) -> list[int]:
        return [p.j for p in self.pairs]


def similarity_matrix(
    masked_features: torch.Tensor,
    labels: torch.Tensor | np.ndarray,
    class_rank: torch.Tensor | np.ndarray,
) -> torch.Tensor:
    """
    Row-normalised inner products between masked features.

    Entry (i, j) survives only when j's observed class ranks strictly below
    i's (rank 0 = largest class), so mixing never flows toward a larger
    class. Negative products are dropped; rows with no mass stay zero.
    """
    f = masked_features.detach()
    y = torch.as_tensor(labels, dtype=torch.long, device=f.device)
    rank = torch.as_tensor(class_rank, dtype=torch.long, device=f.device)[y]

    sim = (f @ f.t()).clamp(min=0.0)
    allowed = rank[None, :] > rank[:, None]
    sim = sim * allowed
    sim.fill_diagonal_(0.0)

    totals = sim.sum(dim=1, keepdim=True)
    return torch.where(totals > 0, sim / totals.clamp(min=torch.finfo(sim.dtype).tiny), sim)


def select_pairs(matrix: torch.Tensor | np.ndarray, pairs_per_batch: int) -> PairSelection:
    """Largest positive entries first; ties broken by (i, j)."""
    if pairs_per_batch <= 0:
        return PairSelection()
    m = np.asarray(matrix.detach().cpu() if isinstance(matrix, torch.Tensor) else matrix)
    ii, jj = np.nonzero(m > 0)
    if ii.size == 0:
        return PairSelection()
    vals = m[ii, jj]
    order = np.lexsort((jj, ii, -vals))[:pairs_per_batch]
    return PairSelection(
        tuple(Pair(int(ii[k]), int(jj[k]), float(vals[k])) for k in order)
    )


def smooth_labels(onehot: torch.Tensor, yhat: torch.Tensor, alpha: float) -> torch.Tensor:
    """(1 - alpha) * y + alpha * yhat."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    return (1.0 - alpha) * onehot + alpha * yhat


def normalize_label_sets(membership: torch.Tensor | np.ndarray) -> torch.Tensor:
    m = torch.as_tensor(np.asarray(membership), dtype=torch.float64)
    sizes = m.sum(dim=1, keepdim=True)
    if (sizes == 0).any():
        raise ValueError("every label set must hold at least one class")
    return m / sizes


def mixup(
    x_i: torch.Tensor,
    x_j: torch.Tensor,
    y_i: torch.Tensor,
    y_j: torch.Tensor,
    lam: float | torch.Tensor,
) -> tuple[torch.Tensor, torch.Tensor]:
    """x = lam * x_i + (1 - lam) * x_j and the same for the soft labels."""
    if x_i.shape != x_j.shape:
        raise ValueError(f"input shapes differ: {tuple(x_i.shape)} vs {tuple(x_j.shape)}")
    if y_i.shape != y_j.shape:
        raise ValueError(f"label shapes differ: {tuple(y_i.shape)} vs {tuple(y_j.shape)}")
    lam_t = torch.as_tensor(lam, dtype=x_i.dtype, device=x_i.device)
    if ((lam_t < 0) | (lam_t > 1)).any():
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")

    def expand(t: torch.Tensor, ref: torch.Tensor) -> torch.Tensor:
        return t.reshape(t.shape + (1,) * (ref.dim() - t.dim())) if t.dim() else t

    lx = expand(lam_t, x_i)
    ly = expand(lam_t.to(y_i.dtype), y_i)
    return lx * x_i + (1 - lx) * x_j, ly * y_i + (1 - ly) * y_j


def sample_lambda(config: MixerConfig, rng: np.random.Generator, n: int) -> np.ndarray:
    if config.lambda_mode == "fixed":
        return np.full(n, config.lam, dtype=np.float64)
    return rng.beta(config.beta_a, config.beta_a, size=n)


def synthesize(
    x: torch.Tensor,
    masked_features: torch.Tensor,
    labels: torch.Tensor,
    targets: torch.Tensor,
    class_rank: torch.Tensor | np.ndarray,
    config: MixerConfig,
    rng: np.random.Generator,
    pairs_per_batch: Optional[int] = None,
) -> tuple[torch.Tensor, torch.Tensor, PairSelection]:
    """
    Tail-supplementing samples for one batch: similarity -> pair selection -> mixup.

    Returns the synthetic inputs and soft targets (possibly empty) to append
    to the batch, plus the pairs used.
    """
    n_pairs = config.pairs_per_batch if pairs_per_batch is None else pairs_per_batch
    if n_pairs is None:
        n_pairs = len(x) // 4
    sim = similarity_matrix(masked_features, labels, class_rank)
    selection = select_pairs(sim, n_pairs)
    if not len(selection):
        return x[:0], targets[:0], selection

    ii = torch.as_tensor(selection.i, dtype=torch.long, device=x.device)
    jj = torch.as_tensor(selection.j, dtype=torch.long, device=x.device)
    lam = torch.as_tensor(sample_lambda(config, rng, len(selection)), device=x.device)
    x_mix, y_mix = mixup(x[ii], x[jj], targets[ii], targets[jj], lam.to(x.dtype))
    return x_mix, y_mix, selection
