"""Item/position embedding and the SASRec-style causal self-attention encoder."""

from __future__ import annotations

import math
from typing import Callable, Sequence

import torch
from torch import nn
import torch.nn.functional as F

LN_EPS = 1e-8
INIT_STD = 0.02


class NumericalError(FloatingPointError):
    pass


def trunc_normal_(t: torch.Tensor, generator: torch.Generator | None = None) -> torch.Tensor:
    return nn.init.trunc_normal_(t, std=INIT_STD, a=-2 * INIT_STD, b=2 * INIT_STD, generator=generator)


def layer_norm(x: torch.Tensor, gain: torch.Tensor, bias: torch.Tensor, eps: float = LN_EPS) -> torch.Tensor:
    mu = x.mean(-1, keepdim=True)
    var = ((x - mu) ** 2).mean(-1, keepdim=True)
    return (x - mu) / torch.sqrt(var + eps) * gain + bias


def dropout(x: torch.Tensor, p: float, active: bool, generator: torch.Generator | None) -> torch.Tensor:
    """Inverted dropout driven by an explicit generator so runs replay exactly."""
    if not active or p == 0.0:
        return x
    keep = torch.rand(x.shape, generator=generator, dtype=x.dtype, device=x.device) >= p
    return x * keep / (1.0 - p)


def causal_mask(n: int, device=None, dtype: torch.dtype | None = None) -> torch.Tensor:
    """Additive mask: 0 where key index <= query index, -inf above the diagonal."""
    m = torch.full((n, n), float("-inf"), device=device, dtype=dtype)
    return torch.triu(m, diagonal=1)


def embed(items: torch.Tensor, item_embedding: torch.Tensor, position_embedding: torch.Tensor) -> torch.Tensor:
    """Row ``t`` is ``item_embedding[items[t]] + position_embedding[t]``; batch dims allowed."""
    n = items.shape[-1]
    if n != position_embedding.shape[0]:
        raise ValueError(f"sequence length {n} != N={position_embedding.shape[0]}")
    if items.numel() and (int(items.min()) < 0 or int(items.max()) >= item_embedding.shape[0]):
        raise IndexError(f"item index outside [0, {item_embedding.shape[0] - 1}]")
    return item_embedding[items] + position_embedding


class EncoderBlock(nn.Module):
    def __init__(self, d: int, heads: int, d_ff: int | None = None):
        super().__init__()
        if d % heads:
            raise ValueError(f"d={d} not divisible by heads={heads}")
        self.d, self.heads = d, heads
        d_ff = d_ff or 4 * d
        self.W_q = nn.Parameter(torch.empty(d, d))
        self.W_k = nn.Parameter(torch.empty(d, d))
        self.W_v = nn.Parameter(torch.empty(d, d))
        self.W_o = nn.Parameter(torch.empty(d, d))
        self.ln1_g = nn.Parameter(torch.ones(d))
        self.ln1_b = nn.Parameter(torch.zeros(d))
        self.W_ff1 = nn.Parameter(torch.empty(d, d_ff))
        self.b_ff1 = nn.Parameter(torch.zeros(d_ff))
        self.W_ff2 = nn.Parameter(torch.empty(d_ff, d))
        self.b_ff2 = nn.Parameter(torch.zeros(d))
        self.ln2_g = nn.Parameter(torch.ones(d))
        self.ln2_b = nn.Parameter(torch.zeros(d))

    def reset_parameters(self, generator: torch.Generator | None = None) -> None:
        with torch.no_grad():
            for w in (self.W_q, self.W_k, self.W_v, self.W_o, self.W_ff1, self.W_ff2):
                trunc_normal_(w, generator)
            for b in (self.b_ff1, self.b_ff2, self.ln1_b, self.ln2_b):
                b.zero_()
            self.ln1_g.fill_(1.0)
            self.ln2_g.fill_(1.0)

    def attention(self, x: torch.Tensor) -> torch.Tensor:
        *lead, n, d = x.shape
        hd = d // self.heads

        def split(t):
            return t.reshape(*lead, n, self.heads, hd).transpose(-3, -2)

        q, k, v = split(x @ self.W_q), split(x @ self.W_k), split(x @ self.W_v)
        logits = q @ k.transpose(-1, -2) / math.sqrt(hd) + causal_mask(n, x.device, x.dtype)
        out = torch.softmax(logits, dim=-1) @ v
        return out.transpose(-3, -2).reshape(*lead, n, d) @ self.W_o

    def feed_forward(self, x: torch.Tensor) -> torch.Tensor:
        return F.gelu(x @ self.W_ff1 + self.b_ff1) @ self.W_ff2 + self.b_ff2

    def forward(self, x, p: float = 0.0, dropout_on: bool = False, generator=None):
        x = layer_norm(x + dropout(self.attention(x), p, dropout_on, generator), self.ln1_g, self.ln1_b)
        return layer_norm(x + dropout(self.feed_forward(x), p, dropout_on, generator), self.ln2_g, self.ln2_b)


class SequenceEncoder(nn.Module):
    """Stack of post-LN causal transformer blocks mapping E (.., N, d) to H."""

    def __init__(self, d: int, blocks: int, heads: int, dropout: float = 0.0, d_ff: int | None = None):
        super().__init__()
        self.p = dropout
        self.blocks = nn.ModuleList(EncoderBlock(d, heads, d_ff) for _ in range(blocks))

    def reset_parameters(self, generator=None) -> None:
        for b in self.blocks:
            b.reset_parameters(generator)

    def forward(self, E: torch.Tensor, dropout_on: bool = False, generator=None) -> torch.Tensor:
        x = E
        for block in self.blocks:
            x = block(x, self.p, dropout_on, generator)
        if not torch.isfinite(x).all():
            raise NumericalError("non-finite values in encoder output")
        return x


def encode(E: torch.Tensor, encoder: SequenceEncoder, dropout_on: bool = False, generator=None) -> torch.Tensor:
    return encoder(E, dropout_on, generator)


def grad_check(
    loss_fn: Callable[[], torch.Tensor],
    params: Sequence[torch.Tensor],
    epsilon: float = 1e-6,
    n_samples: int = 200,
    seed: int = 0,
    floor: float = 1e-6,
) -> float:
    """Max relative error between autograd and central differences.

    ``n_samples`` coordinates are drawn uniformly over all entries of ``params``.
    The relative error is ``|a - n| / max(|a|, |n|, floor)``; ``floor`` keeps
    vanishing gradients from turning rounding noise into huge ratios.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    params = list(params)
    for p in params:
        p.grad = None
    loss = loss_fn()
    grads = torch.autograd.grad(loss, params, allow_unused=True)
    grads = [torch.zeros_like(p) if g is None else g for p, g in zip(params, grads)]

    sizes = torch.tensor([p.numel() for p in params])
    offsets = torch.cumsum(sizes, 0) - sizes
    gen = torch.Generator().manual_seed(seed)
    flat_idx = torch.randint(int(sizes.sum()), (n_samples,), generator=gen)

    worst = 0.0
    with torch.no_grad():
        for fi in flat_idx.tolist():
            pi = int(torch.searchsorted(offsets, fi, right=True)) - 1
            p, local = params[pi], fi - int(offsets[pi])
            flat = p.view(-1)
            orig = flat[local].item()
            flat[local] = orig + epsilon
            up = float(loss_fn())
            flat[local] = orig - epsilon
            down = float(loss_fn())
            flat[local] = orig
            numeric = (up - down) / (2 * epsilon)
            analytic = float(grads[pi].view(-1)[local])
            err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)
            worst = max(worst, err)
    return worst
