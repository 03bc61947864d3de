"""The five pretraining losses.

Each has a brute-force or closed-form twin in the test suite; implementations
here must match those to tight tolerances, so all reductions are written in
the plainest possible form and normalization happens inside the loss.
"""

from __future__ import annotations

import torch
from torch import nn

from ..errors import ConfigError, ContractError, DegenerateInputError


def loss_l2(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Mean squared error over all batch elements and pixels."""
    if pred.shape != target.shape:
        raise ContractError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(target.shape)}")
    diff = pred - target
    return (diff * diff).mean()


def _normalize_rows(z: torch.Tensor, what: str) -> torch.Tensor:
    if z.ndim != 2:
        raise ContractError(f"{what}: expected a (batch, dim) tensor, got {tuple(z.shape)}")
    norms = torch.linalg.vector_norm(z, dim=1)
    if bool((norms < 1e-12).any()):
        raise DegenerateInputError(f"{what}: zero-norm row cannot be direction-normalized")
    return z / norms.unsqueeze(1)


def default_pairing(n_views: int) -> torch.Tensor:
    """Partner indices for the [first-views; second-views] stacking: row i
    pairs with row i+N and vice versa."""
    if n_views % 2 != 0:
        raise ContractError(f"need an even view count, got {n_views}")
    half = n_views // 2
    return torch.cat([torch.arange(half, n_views), torch.arange(0, half)])


def loss_ntxent(
    z: torch.Tensor, pairing: torch.Tensor | None = None, temperature: float = 0.2
) -> torch.Tensor:
    """Temperature-scaled contrastive loss over every ordered positive pair.

    For each row i with partner j: -log softmax of cos(z_i, z_j)/t against
    all cos(z_i, z_k)/t with k != i.  Rows are length-normalized here, so
    inputs may arrive at any scale.
    """
    if temperature <= 0:
        raise ConfigError(f"temperature must be positive, got {temperature}")
    zn = _normalize_rows(z, "ntxent embeddings")
    n = zn.shape[0]
    if n < 4:
        raise ContractError(f"need at least 4 views (2 pairs), got {n}")
    if pairing is None:
        pairing = default_pairing(n)
    pairing = torch.as_tensor(pairing, dtype=torch.long)
    if pairing.shape != (n,):
        raise ContractError(f"pairing must have shape ({n},), got {tuple(pairing.shape)}")
    if bool((pairing == torch.arange(n)).any()):
        raise ContractError("pairing maps a row to itself")
    if not bool((pairing[pairing] == torch.arange(n)).all()):
        raise ContractError("pairing is not an involution")
    sim = (zn @ zn.T) / temperature
    eye = torch.eye(n, dtype=torch.bool)
    sim = sim.masked_fill(eye, float("-inf"))
    log_denominator = torch.logsumexp(sim, dim=1)
    positives = sim[torch.arange(n), pairing]
    return (log_denominator - positives).mean()


def loss_infonce_queue(
    q: torch.Tensor,
    k_pos: torch.Tensor,
    queue: torch.Tensor,
    temperature: float = 0.2,
) -> torch.Tensor:
    """InfoNCE with one positive key per query and a shared negative queue:
    softmax cross-entropy over [cos(q,k+)/t, cos(q,queue_0)/t, ...] with the
    positive in slot zero."""
    if temperature <= 0:
        raise ConfigError(f"temperature must be positive, got {temperature}")
    qn = _normalize_rows(q, "queries")
    kn = _normalize_rows(k_pos, "positive keys")
    if qn.shape != kn.shape:
        raise ContractError(
            f"query/key shape mismatch: {tuple(q.shape)} vs {tuple(k_pos.shape)}"
        )
    if queue.ndim != 2 or queue.shape[1] != qn.shape[1]:
        raise ContractError(f"queue must be (K, {qn.shape[1]}), got {tuple(queue.shape)}")
    queue_n = _normalize_rows(queue, "queue")
    l_pos = (qn * kn).sum(dim=1, keepdim=True) / temperature
    l_neg = (qn @ queue_n.T) / temperature
    logits = torch.cat([l_pos, l_neg], dim=1)
    labels = torch.zeros(logits.shape[0], dtype=torch.long)
    return nn.functional.cross_entropy(logits, labels)


def loss_byol(p_online: torch.Tensor, z_target: torch.Tensor) -> torch.Tensor:
    """Mean over rows of 2 - 2*cos(p, z), with the target branch detached
    inside the loss, so no gradient ever reaches the target network.  Callers
    stack both view orders into the batch to get the symmetric form."""
    if p_online.shape != z_target.shape:
        raise ContractError(
            f"prediction/target shape mismatch: {tuple(p_online.shape)} vs {tuple(z_target.shape)}"
        )
    pn = _normalize_rows(p_online, "predictions")
    zn = _normalize_rows(z_target.detach(), "target projections")
    return (2.0 - 2.0 * (pn * zn).sum(dim=1)).mean()


def loss_simsiam(
    p1: torch.Tensor, p2: torch.Tensor, z1: torch.Tensor, z2: torch.Tensor
) -> torch.Tensor:
    """Symmetric negative cosine with stop-gradient on the projection side:
    0.5*D(p1, z2) + 0.5*D(p2, z1), D = -cos, z detached."""
    for name, a, b in (("p1/z2", p1, z2), ("p2/z1", p2, z1)):
        if a.shape != b.shape:
            raise ContractError(f"{name} shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")

    def neg_cos(p: torch.Tensor, z: torch.Tensor) -> torch.Tensor:
        pn = _normalize_rows(p, "predictions")
        zn = _normalize_rows(z.detach(), "projections")
        return -(pn * zn).sum(dim=1).mean()

    return 0.5 * neg_cos(p1, z2) + 0.5 * neg_cos(p2, z1)


@torch.no_grad()
def byol_ema_update(online: nn.Module, target: nn.Module, momentum: float) -> None:
    """Exponential moving average of the online parameters into the target:
    target <- m*target + (1-m)*online.  m=0 copies, m=1 freezes."""
    if not 0.0 <= momentum <= 1.0:
        raise ConfigError(f"momentum must lie in [0, 1], got {momentum}")
    online_state = dict(online.named_parameters())
    for name, param in target.named_parameters():
        if name not in online_state:
            raise ContractError(f"target parameter {name!r} has no online twin")
        if momentum == 0.0:
            param.copy_(online_state[name])
        else:
            param.mul_(momentum).add_(online_state[name], alpha=1.0 - momentum)
