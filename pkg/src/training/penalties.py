from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F


def _as_tensor(G: torch.Tensor | np.ndarray) -> torch.Tensor:
    return G if isinstance(G, torch.Tensor) else torch.as_tensor(G, dtype=torch.float64)


def orthogonality_penalty(G: torch.Tensor, beta: float) -> torch.Tensor:
    """beta * ||G^T G - I_C||_F^2 for a K x C matrix."""
    gram = G.t() @ G
    eye = torch.eye(G.shape[1], dtype=G.dtype, device=G.device)
    return beta * (gram - eye).pow(2).sum()


def sparsity_penalty(G: torch.Tensor, p: int = 1) -> torch.Tensor:
    """Raw entrywise p-norm ||G||_p."""
    if p not in (1, 2):
        raise ValueError(f"sparsity norm must be 1 or 2, got {p}")
    return torch.linalg.vector_norm(G.reshape(-1), ord=p)


def om_metric(G: torch.Tensor | np.ndarray) -> float:
    """Sum over class pairs i < j of |cos(G[:, i], G[:, j])|; zero columns contribute 0."""
    g = _as_tensor(G).detach().to(torch.float64)
    unit = F.normalize(g, dim=0)
    cos = (unit.t() @ unit).abs()
    return float(torch.triu(cos, diagonal=1).sum())


def lsm_metric(G: torch.Tensor | np.ndarray) -> float:
    """||G||_1 / (K * C)."""
    g = _as_tensor(G).detach().to(torch.float64)
    return float(g.abs().sum() / g.numel())
