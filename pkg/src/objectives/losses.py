"""
Training losses
L1: cross-entropy of Part C's next token. L2: significant-word vector
regression on Part B's sigmoid head, with the GT-ones term scaled by sc.
L3: cross-entropy of Part A's next token at significant-word positions only.
"""
import math
from typing import Optional

import torch
import torch.nn.functional as F

from src.models.schemas import LossWeights

PROB_FLOOR = 1e-7
_LOG_FLOOR = math.log(PROB_FLOOR)


def _token_nll(logits: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    """Per-position -log p(target) with probabilities floored at 1e-7"""
    log_probs = F.log_softmax(logits, dim=-1).clamp(min=_LOG_FLOOR)
    return -log_probs.gather(-1, targets.unsqueeze(-1)).squeeze(-1)


def loss_l1(logits_c: torch.Tensor, targets: torch.Tensor, pad_id: Optional[int] = None,
            mask: Optional[torch.Tensor] = None) -> torch.Tensor:
    """
    Mean next-token cross-entropy over unmasked positions

    Args:
        logits_c: [.., L, V]
        targets: [.., L] next-token ids
        pad_id: positions whose target is pad are ignored
        mask: optional explicit [.., L] mask (1 = counted)

    Raises:
        ValueError: if every position is masked out
    """
    keep = torch.ones_like(targets, dtype=torch.bool) if mask is None else mask.bool()
    if pad_id is not None:
        keep = keep & (targets != pad_id)
    if not bool(keep.any()):
        raise ValueError('All target positions are masked; cross-entropy is undefined')
    safe_targets = targets.masked_fill(~keep, 0)
    nll = _token_nll(logits_c, safe_targets)
    return nll[keep].mean()


def loss_l2(y_pred: torch.Tensor, y_gt: torch.Tensor, sc: float = 20.0) -> torch.Tensor:
    """
    MSE(pred, gt) + sc * MSE(pred * gt, gt), both means over the full vector

    Batched inputs [B, n] average the per-clip losses.
    """
    if y_pred.shape != y_gt.shape:
        raise ValueError(f"Shape mismatch: y_pred {tuple(y_pred.shape)} vs y_gt {tuple(y_gt.shape)}")
    if sc <= 0:
        raise ValueError(f"Scaling factor must be positive, got {sc}")
    if bool(((y_pred < 0) | (y_pred > 1)).any()):
        raise ValueError('y_pred values must lie in [0, 1]')
    if bool(((y_gt != 0) & (y_gt != 1)).any()):
        raise ValueError('y_gt must be a binary vector')
    first = torch.mean((y_pred - y_gt) ** 2)
    second = torch.mean((y_pred * y_gt - y_gt) ** 2)
    return first + sc * second


def loss_l3(logits_a: torch.Tensor, targets: torch.Tensor, sw_mask: torch.Tensor) -> torch.Tensor:
    """
    Cross-entropy averaged over significant-word positions of the whole batch

    Returns a zero that stays attached to the graph when no position is active.
    """
    active = sw_mask.bool()
    if not bool(active.any()):
        return logits_a.sum() * 0.0
    safe_targets = targets.masked_fill(~active, 0)
    nll = _token_nll(logits_a, safe_targets)
    return nll[active].mean()


def total_loss(l1: torch.Tensor, l2: torch.Tensor, l3: torch.Tensor, weights: LossWeights) -> torch.Tensor:
    """Weighted average (w1*l1 + w2*l2 + w3*l3) / (w1 + w2 + w3)"""
    norm = weights.w1 + weights.w2 + weights.w3
    return (weights.w1 * l1 + weights.w2 * l2 + weights.w3 * l3) / norm
