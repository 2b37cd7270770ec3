"""Interest extraction by causal cross-attention and the intent residual."""

from __future__ import annotations

import math

import torch
from torch import nn

from .encoder import LN_EPS, causal_mask, layer_norm, trunc_normal_


def shift_pad(H: torch.Tensor) -> torch.Tensor:
    """Previous-step view of ``H``: zero row first, then rows 1..N-1."""
    return torch.cat([torch.zeros_like(H[..., :1, :]), H[..., :-1, :]], dim=-2)


def cross_attention_weights(
    H_cur: torch.Tensor,
    H_pre: torch.Tensor,
    W_q: torch.Tensor,
    b_q: torch.Tensor,
    W_k: torch.Tensor,
    b_k: torch.Tensor,
) -> torch.Tensor:
    d = H_cur.shape[-1]
    q = H_cur @ W_q + b_q
    k = H_pre @ W_k + b_k
    logits = q @ k.transpose(-1, -2) / math.sqrt(d)
    return torch.softmax(logits + causal_mask(H_cur.shape[-2], H_cur.device, H_cur.dtype), dim=-1)


def causal_cross_attention(H_cur, H_pre, W_q, b_q, W_k, b_k, W_v, b_v) -> torch.Tensor:
    """Queries from the current steps, keys/values from the shifted (previous) steps."""
    attn = cross_attention_weights(H_cur, H_pre, W_q, b_q, W_k, b_k)
    return attn @ (H_pre @ W_v + b_v)


def interest(H: torch.Tensor, R_hat: torch.Tensor, gain: torch.Tensor, bias: torch.Tensor) -> torch.Tensor:
    return layer_norm(R_hat + H, gain, bias, LN_EPS)


def intent_residual(H: torch.Tensor, R: torch.Tensor) -> torch.Tensor:
    return H - R


class Disentangler(nn.Module):
    """Split behaviour representations ``H`` into interest ``R`` and intent ``I = H - R``."""

    def __init__(self, d: int):
        super().__init__()
        self.W_q1 = nn.Parameter(torch.empty(d, d))
        self.W_k1 = nn.Parameter(torch.empty(d, d))
        self.W_v1 = nn.Parameter(torch.empty(d, d))
        self.b_q1 = nn.Parameter(torch.zeros(d))
        self.b_k1 = nn.Parameter(torch.zeros(d))
        self.b_v1 = nn.Parameter(torch.zeros(d))
        self.ln_g = nn.Parameter(torch.ones(d))
        self.ln_b = nn.Parameter(torch.zeros(d))

    def reset_parameters(self, generator=None) -> None:
        with torch.no_grad():
            for w in (self.W_q1, self.W_k1, self.W_v1):
                trunc_normal_(w, generator)
            for b in (self.b_q1, self.b_k1, self.b_v1, self.ln_b):
                b.zero_()
            self.ln_g.fill_(1.0)

    def cross_attend(self, H: torch.Tensor) -> torch.Tensor:
        return causal_cross_attention(
            H, shift_pad(H), self.W_q1, self.b_q1, self.W_k1, self.b_k1, self.W_v1, self.b_v1
        )

    def forward(self, H: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        R = interest(H, self.cross_attend(H), self.ln_g, self.ln_b)
        return R, intent_residual(H, R)
