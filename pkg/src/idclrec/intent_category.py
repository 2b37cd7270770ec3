"""Categorical intent by importance-weighted attention over similar intents.

Two code paths compute the same thing. The per-sequence functions
(``select_similar`` ... ``categorical_intent``) work on gathered rows and are
the readable reference. ``categorical_intent_batched`` keeps all N rows and
masks unselected ones, which is what training uses.

Timestep indices are 0-based here; the most recent step is ``N - 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import nn

from .encoder import trunc_normal_


@dataclass
class IntentSelection:
    indices: list[int]  # ascending, always ends with N - 1
    reprs: torch.Tensor  # (m, d)


def similarity(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Bounded similarity: sigmoid of the dot product over the last axis."""
    return torch.sigmoid((a * b).sum(-1))


def select_similar(I: torch.Tensor, valid_len: int, delta: float) -> IntentSelection:
    """Valid earlier steps whose similarity to the last intent is >= ``delta``, plus the last."""
    if not 0.0 <= delta <= 1.0:
        raise ValueError(f"delta must lie in [0, 1], got {delta}")
    n = I.shape[0]
    if not 1 <= valid_len <= n:
        raise ValueError(f"valid_len {valid_len} outside [1, {n}]")
    with torch.no_grad():
        sims = similarity(I[-1], I[:-1])
    first_valid = n - valid_len
    idx = [t for t in range(first_valid, n - 1) if float(sims[t]) >= delta]
    idx.append(n - 1)
    return IntentSelection(idx, I[idx])


def relevance_scores(reprs: torch.Tensor, W_q: torch.Tensor, W_k: torch.Tensor) -> torch.Tensor:
    d = reprs.shape[-1]
    return torch.sigmoid((reprs @ W_q) @ (reprs @ W_k).transpose(-1, -2) / math.sqrt(d))


def importance_weights(S: torch.Tensor) -> torch.Tensor:
    """Softmax over each row's relevance sum with the diagonal left out."""
    m = S.shape[-1]
    off = ~torch.eye(m, dtype=torch.bool, device=S.device)
    return torch.softmax((S * off).sum(-1), dim=-1)


def categorical_intent(selection: IntentSelection | torch.Tensor, beta: torch.Tensor) -> torch.Tensor:
    reprs = selection.reprs if isinstance(selection, IntentSelection) else selection
    if beta.shape[-1] != reprs.shape[-2]:
        raise ValueError(f"{beta.shape[-1]} weights for {reprs.shape[-2]} selected intents")
    return (beta.unsqueeze(-1) * reprs).sum(-2)


# ---------------------------------------------------------------- batched path

def selection_mask(I: torch.Tensor, valid: torch.Tensor, delta: float) -> torch.Tensor:
    """Boolean (B, N) mask of selected steps; a hard, non-differentiable gate."""
    with torch.no_grad():
        sims = similarity(I[..., -1:, :], I)
        mask = valid & (sims >= delta)
        mask[..., -1] = True
    return mask


def categorical_intent_batched(
    I: torch.Tensor,
    mask: torch.Tensor,
    W_q: torch.Tensor | None = None,
    W_k: torch.Tensor | None = None,
    mode: str = "attention",
) -> tuple[torch.Tensor, torch.Tensor]:
    """Return ``(i_u, beta)`` with ``beta`` (B, N) zero on unselected steps.

    ``mode`` is ``"attention"`` (importance weights), ``"mean"`` (uniform over
    the selection) or ``"last"`` (most recent intent only).
    """
    if mode == "last":
        beta = torch.zeros(mask.shape, dtype=I.dtype, device=I.device)
        beta[..., -1] = 1.0
    elif mode == "mean":
        m = mask.to(I.dtype)
        beta = m / m.sum(-1, keepdim=True)
    elif mode == "attention":
        n = I.shape[-2]
        S = relevance_scores(I, W_q, W_k)
        pair = mask.unsqueeze(-2) & ~torch.eye(n, dtype=torch.bool, device=I.device)
        logits = (S * pair).sum(-1).masked_fill(~mask, float("-inf"))
        beta = torch.softmax(logits, dim=-1)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return (beta.unsqueeze(-1) * I).sum(-2), beta


class ImportanceAttention(nn.Module):
    def __init__(self, d: int):
        super().__init__()
        self.W_q2 = nn.Parameter(torch.empty(d, d))
        self.W_k2 = nn.Parameter(torch.empty(d, d))

    def reset_parameters(self, generator=None) -> None:
        with torch.no_grad():
            trunc_normal_(self.W_q2, generator)
            trunc_normal_(self.W_k2, generator)

    def forward(self, I: torch.Tensor, mask: torch.Tensor, mode: str = "attention"):
        return categorical_intent_batched(I, mask, self.W_q2, self.W_k2, mode)
