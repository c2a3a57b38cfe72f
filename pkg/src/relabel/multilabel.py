from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import torch

SIMPLEX_TOL = 1e-6
_LN2 = math.log(2.0)


def _as_prob(p: torch.Tensor | np.ndarray | Sequence[float]) -> torch.Tensor:
    if isinstance(p, torch.Tensor):
        return p.detach().to(torch.float64)
    return torch.as_tensor(np.asarray(p, dtype=np.float64))


def _check_simplex(p: torch.Tensor, name: str) -> None:
    if p.numel() == 0:
        return
    if (p < -1e-12).any() or ((p.sum(dim=-1) - 1.0).abs() > SIMPLEX_TOL).any():
        raise ValueError(f"{name} is not a probability vector (sum {p.sum(dim=-1).tolist()})")


def fused_confidence(
    p_w: torch.Tensor | np.ndarray, p_s: torch.Tensor | np.ndarray, gamma: float
) -> torch.Tensor:
    """gamma * p_w + (1 - gamma) * p_s over the last dimension."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must lie in [0, 1], got {gamma}")
    pw, ps = _as_prob(p_w), _as_prob(p_s)
    _check_simplex(pw, "p_w")
    _check_simplex(ps, "p_s")
    return gamma * pw + (1.0 - gamma) * ps


def _kl_bits(a: torch.Tensor, m: torch.Tensor) -> torch.Tensor:
    return (torch.special.xlogy(a, a) - torch.special.xlogy(a, m)).sum(dim=-1) / _LN2


def jsd(y: torch.Tensor | np.ndarray, p: torch.Tensor | np.ndarray) -> torch.Tensor:
    """Base-2 Jensen-Shannon divergence along the last dimension; values in [0, 1]."""
    a, b = _as_prob(y), _as_prob(p)
    m = 0.5 * (a + b)
    return (0.5 * (_kl_bits(a, m) + _kl_bits(b, m))).clamp(0.0, 1.0)


def label_count(d: float, class_count: int) -> int:
    """q = max(1, floor(d * C)), capped at C."""
    # 1e-9 keeps e.g. 0.35 * 100 from flooring to 34
    return int(min(class_count, max(1, math.floor(d * class_count + 1e-9))))


def label_counts(d: torch.Tensor | np.ndarray, class_count: int) -> torch.Tensor:
    dd = _as_prob(d)
    q = torch.floor(dd * class_count + 1e-9).to(torch.long)
    return q.clamp(min=1, max=class_count)


@dataclass(frozen=True)
class CleanNoisySplit:
    clean: np.ndarray
    tau: float

    @property
    def n_clean(self) -> int:
        return int(self.clean.sum())

    @property
    def n_noisy(self) -> int:
        return int((~self.clean).sum())


def split_clean_noisy(d: torch.Tensor | np.ndarray) -> CleanNoisySplit:
    """clean <=> d <= tau with tau the dataset mean of d."""
    dd = _as_prob(d).reshape(-1)
    if dd.numel() == 0:
        raise ValueError("split_clean_noisy needs at least one score")
    tau = float(dd.mean())
    clean = (dd <= tau + 1e-12).numpy()
    return CleanNoisySplit(clean=clean, tau=tau)


def build_multilabels(
    p_ws: torch.Tensor | np.ndarray,
    observed: torch.Tensor | np.ndarray,
    q: torch.Tensor | np.ndarray,
    clean: torch.Tensor | np.ndarray,
) -> tuple[np.ndarray, list[list[int]]]:
    """
    Per-instance label sets: top-q classes of p_ws, with the observed class
    removed for noisy instances. Ties go to the lower class index.

    Returns the (N, C) membership matrix and the ordered label lists.
    """
    scores = _as_prob(p_ws).clone()
    if scores.dim() != 2:
        raise ValueError(f"p_ws must be (N, C), got shape {tuple(scores.shape)}")
    n, c = scores.shape
    y = torch.as_tensor(np.asarray(observed), dtype=torch.long).reshape(-1)
    qq = torch.as_tensor(np.asarray(q), dtype=torch.long).reshape(-1)
    is_clean = torch.as_tensor(np.asarray(clean), dtype=torch.bool).reshape(-1)
    if not (len(y) == len(qq) == len(is_clean) == n):
        raise ValueError("p_ws, observed, q and clean differ in length")
    if (qq < 1).any():
        raise ValueError("every q must be >= 1")
    noisy = ~is_clean
    if noisy.any() and c < 2:
        raise ValueError("noisy instances need at least two classes")

    rows = torch.nonzero(noisy).reshape(-1)
    scores[rows, y[rows]] = float("-inf")
    limit = torch.where(noisy, torch.full_like(qq, c - 1), torch.full_like(qq, c))
    q_eff = torch.minimum(qq, limit)

    order = torch.sort(scores, dim=1, descending=True, stable=True).indices
    ranks = torch.empty_like(order)
    ranks.scatter_(1, order, torch.arange(c).expand(n, c).contiguous())
    membership = (ranks < q_eff[:, None]).numpy()
    lists = [order[i, : int(q_eff[i])].tolist() for i in range(n)]
    return membership, lists


def build_multilabel(
    p_ws: torch.Tensor | np.ndarray | Sequence[float], observed: int, q: int, clean: bool
) -> list[int]:
    _, lists = build_multilabels(_as_prob(p_ws).reshape(1, -1), [observed], [q], [clean])
    return lists[0]


def hit_rate(
    membership: np.ndarray, true_labels: np.ndarray, subset: Optional[np.ndarray] = None
) -> Optional[float]:
    """Fraction of instances whose true label is in their set (None on an empty subset)."""
    member = np.asarray(membership, dtype=bool)
    hits = member[np.arange(len(member)), np.asarray(true_labels, dtype=np.int64)]
    if subset is not None:
        hits = hits[np.asarray(subset, dtype=bool)]
    return float(hits.mean()) if hits.size else None


def top1_hit_rate(
    p_ws: torch.Tensor | np.ndarray, true_labels: np.ndarray, subset: Optional[np.ndarray] = None
) -> Optional[float]:
    """Single pseudo-label baseline: argmax of p_ws equals the true label."""
    pred = _as_prob(p_ws).argmax(dim=1).numpy()
    hits = pred == np.asarray(true_labels, dtype=np.int64)
    if subset is not None:
        hits = hits[np.asarray(subset, dtype=bool)]
    return float(hits.mean()) if hits.size else None
