"""Training objectives.

InfoNCE similarities are raw dot products divided by the temperature. The
sigmoid-bounded similarity is only used inside the dynamic intent loss.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import torch
import torch.nn.functional as F


@dataclass(frozen=True)
class LossWeights:
    lambda_d: float = 0.3
    lambda_cl1: float = 0.5
    lambda_cl2: float = 0.1
    tau: float = 1.0

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if min(self.lambda_d, self.lambda_cl1, self.lambda_cl2) < 0:
            raise ValueError("loss weights must be nonnegative")


def dynamic_loss(I: torch.Tensor, valid: torch.Tensor) -> torch.Tensor:
    """Mean of ``1 - sigmoid(i_t . i_{t+1})`` over consecutive valid pairs.

    ``I`` is (B, N, d) and ``valid`` (B, N). Each sequence averages its own
    pairs; sequences with fewer than two valid steps are left out of the
    batch mean. Returns 0 when no sequence has a pair.
    """
    pair = (valid[..., 1:] & valid[..., :-1]).to(I.dtype)
    terms = 1.0 - torch.sigmoid((I[..., 1:, :] * I[..., :-1, :]).sum(-1))
    counts = pair.sum(-1)
    has = counts > 0
    if not bool(has.any()):
        return I.sum() * 0.0
    per_seq = (terms * pair).sum(-1)[has] / counts[has]
    return per_seq.mean()


def info_nce(anchor, positive, negatives, tau: float = 1.0) -> torch.Tensor:
    """``-log(exp(a.p/tau) / (exp(a.p/tau) + sum_n exp(a.n/tau)))`` for one anchor."""
    pos = (anchor * positive).sum(-1) / tau
    if negatives is None or len(negatives) == 0:
        return pos * 0.0
    neg = negatives @ anchor / tau
    return torch.logsumexp(torch.cat([pos.reshape(1), neg]), 0) - pos


def _masked_info_nce(anchors, positives, candidates, neg_mask, tau):
    """Vectorised InfoNCE; ``neg_mask[a, c]`` marks candidate ``c`` as a negative of ``a``."""
    pos = (anchors * positives).sum(-1, keepdim=True) / tau
    neg = (anchors @ candidates.T / tau).masked_fill(~neg_mask, float("-inf"))
    return torch.logsumexp(torch.cat([pos, neg], dim=-1), dim=-1) - pos.squeeze(-1)


def cl1_loss(
    orig: torch.Tensor,
    aug: torch.Tensor,
    targets: torch.Tensor,
    tau: float = 1.0,
) -> torch.Tensor:
    """Symmetric intent-intent InfoNCE with false-negative removal.

    The candidate pool is the joint batch of 2B intent vectors. Anchor ``k``
    uses its partner in the other view as the positive; every other vector is a
    negative unless its instance shares the anchor's target.
    """
    B = orig.shape[0]
    joint = torch.cat([orig, aug], 0)
    joint_targets = torch.cat([targets, targets], 0)
    idx = torch.arange(B, device=orig.device)
    not_self = torch.ones(2 * B, 2 * B, dtype=torch.bool, device=orig.device)
    not_self[idx, idx] = False
    not_self[idx, idx + B] = False
    not_self[idx + B, idx] = False
    not_self[idx + B, idx + B] = False
    different_target = joint_targets.unsqueeze(1) != joint_targets.unsqueeze(0)
    neg_mask = not_self & different_target
    positives = torch.cat([aug, orig], 0)
    per_anchor = _masked_info_nce(joint, positives, joint, neg_mask, tau)
    return per_anchor.view(2, B).sum(0).mean()


def item_centroid(items: torch.Tensor, mask: torch.Tensor, item_embedding: torch.Tensor) -> torch.Tensor:
    """Mean embedding of the items at the selected steps; batch dims allowed."""
    emb = item_embedding[items]
    m = mask.to(emb.dtype).unsqueeze(-1)
    return (emb * m).sum(-2) / m.sum(-2)


def _cl2_view(intents, centroids, tau):
    B = intents.shape[0]
    pool = torch.cat([intents, centroids], 0)
    owner = torch.cat([torch.arange(B), torch.arange(B)]).to(intents.device)
    neg_mask = owner.unsqueeze(0) != owner[:B].unsqueeze(1)
    a = _masked_info_nce(intents, centroids, pool, neg_mask, tau)
    b = _masked_info_nce(centroids, intents, pool, neg_mask, tau)
    return a + b


def cl2_loss(orig_intent, orig_centroid, aug_intent, aug_centroid, tau: float = 1.0) -> torch.Tensor:
    """Intent-item InfoNCE, four terms per instance, each view contrasted on its own.

    Negatives for an anchor are the other B-1 intents and the other B-1
    centroids of the same view; no false-negative removal.
    """
    per = _cl2_view(orig_intent, orig_centroid, tau) + _cl2_view(aug_intent, aug_centroid, tau)
    return per.mean()


def scores(h: torch.Tensor, item_embedding: torch.Tensor) -> torch.Tensor:
    """Preference scores over real items 1..|V| (column ``j`` is item ``j + 1``)."""
    return h @ item_embedding[1:].T


def rec_loss(h: torch.Tensor, targets: torch.Tensor, item_embedding: torch.Tensor) -> torch.Tensor:
    """Full-softmax cross entropy, padding item excluded; mean over the batch."""
    targets = torch.as_tensor(targets, device=h.device)
    if bool((targets < 1).any()) or bool((targets >= item_embedding.shape[0]).any()):
        raise ValueError("targets must lie in [1, |V|]; 0 is the padding item")
    return F.cross_entropy(scores(h, item_embedding), targets - 1)


PART_NAMES = ("rec", "d", "cl1", "cl2")


def total_loss(parts: Mapping[str, torch.Tensor | float], weights: LossWeights) -> torch.Tensor | float:
    """``rec + lambda_d*d + lambda_cl1*cl1 + lambda_cl2*cl2``; a zero weight drops its term."""
    for name in PART_NAMES:
        v = parts[name]
        if not math.isfinite(float(v.detach() if torch.is_tensor(v) else v)):
            raise FloatingPointError(f"{name} non-finite")
    total = parts["rec"]
    for name, lam in (("d", weights.lambda_d), ("cl1", weights.lambda_cl1), ("cl2", weights.lambda_cl2)):
        if lam != 0.0:
            total = total + lam * parts[name]
    return total
