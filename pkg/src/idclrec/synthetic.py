"""Synthetic interaction logs with known structure, and a popularity baseline."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import InteractionRecord, PreparedDataset
from .metrics import MetricsReport


def records_from_sequences(sequences, prefix: str = "u") -> list[InteractionRecord]:
    """Raw records with increasing timestamps for lists of item ids."""
    out = []
    for u, seq in enumerate(sequences):
        for t, item in enumerate(seq):
            out.append(InteractionRecord(f"{prefix}{u}", f"i{item}", 1000 * u + t))
    return out


def random_sequences(num_users: int, num_items: int, length: int, seed: int = 0) -> list[list[int]]:
    rng = np.random.default_rng(seed)
    return [list(rng.integers(1, num_items + 1, size=length)) for _ in range(num_users)]


@dataclass
class PlantedSpec:
    num_users: int = 400
    interests: int = 4  # stable per-user taste groups
    intents: int = 4  # switching purposes
    items_per_cell: int = 6
    min_len: int = 12
    max_len: int = 20
    stay_prob: float = 0.75  # chance the intent regime persists to the next step
    noise: float = 0.05  # chance an item ignores the user's interest group


def planted_sequences(spec: PlantedSpec, seed: int = 0) -> tuple[list[list[int]], np.ndarray]:
    """Sequences where item (g, c, m) is drawn from the user's fixed interest ``g``
    and the current intent regime ``c``, which persists with ``stay_prob``.

    Returns the sequences (1-based item ids) and each user's interest group.
    """
    rng = np.random.default_rng(seed)
    G, C, M = spec.interests, spec.intents, spec.items_per_cell

    def item(g, c, m):
        return 1 + (g * C + c) * M + m

    seqs, groups = [], rng.integers(G, size=spec.num_users)
    for u in range(spec.num_users):
        n = int(rng.integers(spec.min_len, spec.max_len + 1))
        c = int(rng.integers(C))
        seq = []
        for _ in range(n):
            if rng.random() > spec.stay_prob:
                c = int(rng.integers(C))
            g = int(groups[u]) if rng.random() >= spec.noise else int(rng.integers(G))
            seq.append(item(g, c, int(rng.integers(M))))
        seqs.append(seq)
    return seqs, groups


def planted_dataset(spec: PlantedSpec, N: int = 20, seed: int = 0) -> PreparedDataset:
    seqs, _ = planted_sequences(spec, seed)
    num_items = spec.interests * spec.intents * spec.items_per_cell
    return PreparedDataset([tuple(s) for s in seqs], num_items, N, 1, seed)


def popularity_report(dataset: PreparedDataset, split: str = "test") -> MetricsReport:
    """Rank every item by its count in the training portions of all users."""
    counts = np.zeros(dataset.num_items + 1)
    for _, train, valid, _ in dataset.splits():
        np.add.at(counts, train, 1)
        if split == "test":
            counts[valid] += 1
    _, targets, _ = dataset.eval_arrays(split)
    pop = counts[1:]
    ranks = [int(np.count_nonzero(pop >= pop[t - 1])) for t in targets]
    return MetricsReport.from_ranks(ranks, split)
