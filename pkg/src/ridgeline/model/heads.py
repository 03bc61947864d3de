"""Heads attached to the frozen or training encoder.

ProjectionHead and PairClassifier implement the verification probe;
SSLProjector/SSLPredictor are the small MLPs the contrastive and
self-distillation methods train on top of the same encoder.
"""

from __future__ import annotations

import torch
from torch import nn

from ..errors import ContractError

FEATURE_DIM = 4096
EMBED_DIM = 512


def _check_last_dim(x: torch.Tensor, dim: int, what: str) -> None:
    if x.ndim != 2 or x.shape[-1] != dim:
        raise ContractError(f"{what}: expected (batch, {dim}), got {tuple(x.shape)}")


class ProjectionHead(nn.Module):
    """Three affine layers 4096 -> 1024 -> 512 -> 512 with ReLU between."""

    def __init__(self, in_dim: int = FEATURE_DIM, out_dim: int = EMBED_DIM):
        super().__init__()
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.body = nn.Sequential(
            nn.Linear(in_dim, 1024),
            nn.ReLU(inplace=True),
            nn.Linear(1024, out_dim),
            nn.ReLU(inplace=True),
            nn.Linear(out_dim, out_dim),
        )

    def forward(self, feat: torch.Tensor) -> torch.Tensor:
        _check_last_dim(feat, self.in_dim, "projection input")
        return self.body(feat)


class PairClassifier(nn.Module):
    """Single-logit verifier over [u; v; |u - v|] (1536-d for 512-d inputs).

    The concatenation is order-sensitive; training mitigates that with a
    random pair swap per step (see the probe stage).
    """

    def __init__(self, embed_dim: int = EMBED_DIM, hidden: int = 256):
        super().__init__()
        self.embed_dim = embed_dim
        self.body = nn.Sequential(
            nn.Linear(3 * embed_dim, hidden),
            nn.ReLU(inplace=True),
            nn.Linear(hidden, 1),
        )

    def forward(self, u: torch.Tensor, v: torch.Tensor) -> torch.Tensor:
        _check_last_dim(u, self.embed_dim, "pair embedding u")
        _check_last_dim(v, self.embed_dim, "pair embedding v")
        if u.shape[0] != v.shape[0]:
            raise ContractError(
                f"pair batches differ: {u.shape[0]} vs {v.shape[0]}"
            )
        stacked = torch.cat([u, v, torch.abs(u - v)], dim=1)
        return self.body(stacked).squeeze(1)


class SSLProjector(nn.Module):
    """Two-layer projector 4096 -> 512 -> 512 used by every SSL baseline."""

    def __init__(self, in_dim: int = FEATURE_DIM, out_dim: int = EMBED_DIM):
        super().__init__()
        self.in_dim = in_dim
        self.body = nn.Sequential(
            nn.Linear(in_dim, out_dim),
            nn.ReLU(inplace=True),
            nn.Linear(out_dim, out_dim),
        )

    def forward(self, feat: torch.Tensor) -> torch.Tensor:
        _check_last_dim(feat, self.in_dim, "ssl projector input")
        return self.body(feat)


class SSLPredictor(nn.Module):
    """Two-layer predictor 512 -> 512 -> 512 (the online-branch head of the
    self-distillation methods)."""

    def __init__(self, dim: int = EMBED_DIM):
        super().__init__()
        self.dim = dim
        self.body = nn.Sequential(
            nn.Linear(dim, dim),
            nn.ReLU(inplace=True),
            nn.Linear(dim, dim),
        )

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        _check_last_dim(z, self.dim, "ssl predictor input")
        return self.body(z)
