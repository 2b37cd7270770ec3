"""Full-ranking HR@k / NDCG@k over the whole item set."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import torch

KS = (5, 10, 20)


def rank_of_target(scores, target: int) -> int:
    """1-based rank of ``target`` (item ``j`` lives at ``scores[j - 1]``); ties count against it."""
    s = np.asarray(scores)
    if not 1 <= target <= len(s):
        raise ValueError(f"target {target} outside [1, {len(s)}]")
    return int(np.count_nonzero(s >= s[target - 1]))


def ranks(scores: torch.Tensor, targets) -> torch.Tensor:
    """Vectorised ``rank_of_target`` for a (B, |V|) score matrix."""
    targets = torch.as_tensor(np.asarray(targets), dtype=torch.long)
    t = scores.gather(1, (targets - 1).unsqueeze(1))
    return (scores >= t).sum(1)


def hr_at_k(rank: int, k: int) -> float:
    return 1.0 if rank <= k else 0.0


def ndcg_at_k(rank: int, k: int) -> float:
    return 1.0 / math.log2(rank + 1) if rank <= k else 0.0


@dataclass
class MetricsReport:
    hr: dict[int, float]
    ndcg: dict[int, float]
    num_users_evaluated: int
    split: str = "test"
    seed: int | None = None
    epoch: int | None = None
    dataset: str | None = None
    extra: dict = field(default_factory=dict)

    @classmethod
    def from_ranks(cls, rank_values, split: str = "test", ks=KS, **meta) -> "MetricsReport":
        r = np.asarray(rank_values, dtype=np.float64)
        n = len(r)
        hr, ndcg = {}, {}
        for k in ks:
            hit = r <= k
            hr[k] = float(hit.mean()) if n else 0.0
            ndcg[k] = float(np.where(hit, 1.0 / np.log2(r + 1.0), 0.0).mean()) if n else 0.0
        return cls(hr, ndcg, n, split, **meta)

    @classmethod
    def mean(cls, reports: list["MetricsReport"], **meta) -> "MetricsReport":
        if not reports:
            raise ValueError("no reports to average")
        ks = list(reports[0].hr)
        return cls(
            {k: float(np.mean([r.hr[k] for r in reports])) for k in ks},
            {k: float(np.mean([r.ndcg[k] for r in reports])) for k in ks},
            reports[0].num_users_evaluated,
            reports[0].split,
            **meta,
        )

    def to_dict(self) -> dict:
        return {
            "split": self.split,
            "hr": {str(k): v for k, v in self.hr.items()},
            "ndcg": {str(k): v for k, v in self.ndcg.items()},
            "n_users": self.num_users_evaluated,
            "seed": self.seed,
            "epoch": self.epoch,
            "dataset": self.dataset,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def csv_header(self) -> list[str]:
        return ["split", "seed", *[f"HR@{k}" for k in self.hr], *[f"NDCG@{k}" for k in self.ndcg], "n_users"]

    def csv_row(self) -> list:
        return [self.split, self.seed, *self.hr.values(), *self.ndcg.values(), self.num_users_evaluated]


def evaluate_scores(scores: torch.Tensor, targets, split: str = "test", **meta) -> MetricsReport:
    return MetricsReport.from_ranks(ranks(scores, targets).numpy(), split, **meta)


def evaluate(model, inputs, targets, config, split: str = "test", batch_size: int = 1024, **meta) -> MetricsReport:
    """Forward every row with dropout off, rank all items, average per-user metrics."""
    was_training = model.training
    model.eval()
    try:
        r = []
        inputs = np.asarray(inputs)
        for start in range(0, len(inputs), batch_size):
            s = model.score(inputs[start:start + batch_size], config.delta, config.variant, batch_size)
            r.append(ranks(s, targets[start:start + batch_size]))
        rank_values = torch.cat(r).numpy() if r else np.zeros(0)
    finally:
        model.train(was_training)
    return MetricsReport.from_ranks(rank_values, split, **meta)


def evaluate_dataset(model, dataset, split: str, config, **meta) -> MetricsReport:
    inputs, targets, _ = dataset.eval_arrays(split)
    return evaluate(model, inputs, targets, config, split, **meta)
