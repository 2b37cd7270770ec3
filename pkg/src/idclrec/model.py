"""The full IDCLRec forward pass and per-batch loss computation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .config import AblationVariant, TrainConfig
from .disentangler import Disentangler
from .encoder import SequenceEncoder, embed, trunc_normal_
from .intent_category import ImportanceAttention, selection_mask
from .objectives import LossWeights, cl1_loss, cl2_loss, dynamic_loss, item_centroid, rec_loss, total_loss

DTYPES = {"float32": torch.float32, "float64": torch.float64}


@dataclass
class UserOutput:
    h: torch.Tensor  # (B, d) user representation
    intent: torch.Tensor  # (B, d) categorical intent i^u
    interest_last: torch.Tensor  # (B, d) r_N
    H: torch.Tensor
    R: torch.Tensor
    I: torch.Tensor
    valid: torch.Tensor  # (B, N) non-pad steps
    selection: torch.Tensor  # (B, N) selected steps
    beta: torch.Tensor  # (B, N)


class IDCLRec(nn.Module):
    def __init__(self, num_items: int, d: int = 64, N: int = 50, blocks: int = 2, heads: int = 2,
                 dropout: float = 0.5, d_ff: int | None = None):
        super().__init__()
        self.num_items, self.d, self.N = num_items, d, N
        self.item_embedding = nn.Parameter(torch.empty(num_items + 1, d))
        self.position_embedding = nn.Parameter(torch.empty(N, d))
        self.encoder = SequenceEncoder(d, blocks, heads, dropout, d_ff)
        self.disentangler = Disentangler(d)
        self.importance = ImportanceAttention(d)

    @classmethod
    def from_config(cls, config: TrainConfig, num_items: int, seed: int | None = None) -> "IDCLRec":
        # build and initialise in the configured dtype so the random draws do not
        # depend on torch's global default
        previous = torch.get_default_dtype()
        torch.set_default_dtype(DTYPES[config.dtype])
        try:
            model = cls(num_items, config.d, config.N, config.blocks, config.heads, config.dropout)
            model.reset_parameters(seed if seed is not None else config.seeds[0])
        finally:
            torch.set_default_dtype(previous)
        return model

    def reset_parameters(self, seed: int = 0) -> None:
        g = torch.Generator().manual_seed(int(seed))
        with torch.no_grad():
            trunc_normal_(self.item_embedding, g)
            trunc_normal_(self.position_embedding, g)
        self.encoder.reset_parameters(g)
        self.disentangler.reset_parameters(g)
        self.importance.reset_parameters(g)

    def forward(
        self,
        items: torch.Tensor,
        delta: float = 0.7,
        variant: AblationVariant = AblationVariant.FULL,
        dropout_on: bool = False,
        generator: torch.Generator | None = None,
    ) -> UserOutput:
        items = torch.as_tensor(items, dtype=torch.long)
        valid = items > 0
        H = self.encoder(embed(items, self.item_embedding, self.position_embedding), dropout_on, generator)
        if variant.disentangle:
            R, I = self.disentangler(H)
        else:
            # whole behaviour treated as intent; cross-attention is never evaluated
            R, I = torch.zeros_like(H), H
        if variant is AblationVariant.F_MOST_RECENT_INTENT:
            sel = torch.zeros_like(valid)
            sel[:, -1] = True
            mode = "last"
        else:
            sel = selection_mask(I, valid, delta)
            mode = "mean" if variant is AblationVariant.G_AVERAGE_POOLING else "attention"
        i_u, beta = self.importance(I, sel, mode)
        r_last = R[:, -1]
        h = r_last + i_u if variant.disentangle else i_u
        return UserOutput(h, i_u, r_last, H, R, I, valid, sel, beta)

    @torch.no_grad()
    def score(self, items, delta: float = 0.7, variant=AblationVariant.FULL, batch_size: int = 1024) -> torch.Tensor:
        """Scores over items 1..|V| for every row of ``items`` (dropout off)."""
        items = torch.as_tensor(np.asarray(items), dtype=torch.long)
        out = []
        for start in range(0, len(items), batch_size):
            o = self(items[start:start + batch_size], delta, variant)
            out.append(o.h @ self.item_embedding[1:].T)
        if not out:
            return torch.zeros(0, self.num_items, dtype=self.item_embedding.dtype)
        return torch.cat(out)


def batch_losses(
    model: IDCLRec,
    inputs,
    aug_inputs,
    targets,
    config: TrainConfig,
    dropout_on: bool = False,
    generator: torch.Generator | None = None,
) -> dict[str, torch.Tensor]:
    """All loss parts plus ``total`` for one batch of (original, augmented) pairs.

    Both views go through the model as one stacked batch; the recommendation
    loss uses the original view, ``L_d`` averages both views.
    """
    inputs = torch.as_tensor(np.asarray(inputs), dtype=torch.long)
    aug_inputs = torch.as_tensor(np.asarray(aug_inputs), dtype=torch.long)
    targets = torch.as_tensor(np.asarray(targets), dtype=torch.long)
    B = inputs.shape[0]
    out = model(torch.cat([inputs, aug_inputs]), config.delta, config.variant, dropout_on, generator)

    l_rec = rec_loss(out.h[:B], targets, model.item_embedding)
    l_d = 0.5 * (dynamic_loss(out.I[:B], out.valid[:B]) + dynamic_loss(out.I[B:], out.valid[B:]))
    intents = out.intent
    l_cl1 = cl1_loss(intents[:B], intents[B:], targets, config.tau)
    both = torch.cat([inputs, aug_inputs])
    centroids = item_centroid(both, out.selection, model.item_embedding)
    l_cl2 = cl2_loss(intents[:B], centroids[:B], intents[B:], centroids[B:], config.tau)

    ld, l1, l2 = config.loss_weights()
    parts = {"rec": l_rec, "d": l_d, "cl1": l_cl1, "cl2": l_cl2}
    parts["total"] = total_loss(parts, LossWeights(ld, l1, l2, config.tau))
    return parts
