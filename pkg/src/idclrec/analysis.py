"""Intent analyses over representation dumps, plus export of model representations.

Similarities here are ``sigmoid(x . y)``, the same bounded score the model
uses to select similar intents. Analyses consume any dump, not just ours.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch


@dataclass
class ReprDump:
    ids: list[str]
    matrix: np.ndarray
    kind: str = "intent"  # intent | interest | item_onehot

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        if self.matrix.ndim != 2 or len(self.ids) != len(self.matrix):
            raise ValueError("ids and matrix rows must align")
        if self.kind == "item_onehot" and not np.isin(self.matrix, (0.0, 1.0)).all():
            raise ValueError("item_onehot entries must be 0 or 1")

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for i, row in zip(self.ids, self.matrix):
                fh.write(f"{i}\t{' '.join(repr(float(x)) for x in row)}\n")

    @classmethod
    def load(cls, path: str | Path, kind: str = "intent") -> "ReprDump":
        ids, rows = [], []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if not line:
                    continue
                head, sep, body = line.partition("\t")
                if not sep:
                    raise ValueError(f"{path}: line {lineno}: expected id<TAB>values")
                ids.append(head)
                rows.append([float(x) for x in body.split()])
        if len({len(r) for r in rows}) > 1:
            raise ValueError(f"{path}: ragged rows")
        return cls(ids, np.array(rows).reshape(len(rows), -1), kind)


@dataclass
class Clustering:
    assignments: np.ndarray
    centroids: np.ndarray
    inertia_history: list[float] = field(default_factory=list)
    empty_reseeds: int = 0

    @property
    def K(self) -> int:
        return len(self.centroids)

    @property
    def inertia(self) -> float:
        return self.inertia_history[-1]


def _sq_dists(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    return np.maximum((X * X).sum(1)[:, None] - 2 * X @ C.T + (C * C).sum(1)[None, :], 0.0)


def kmeans_pp_init(X: np.ndarray, K: int, rng: np.random.Generator) -> np.ndarray:
    n = len(X)
    centers = [X[rng.integers(n)]]
    d2 = _sq_dists(X, np.array(centers)).min(1)
    for _ in range(1, K):
        total = d2.sum()
        idx = rng.choice(n, p=d2 / total) if total > 0 else rng.integers(n)
        centers.append(X[idx])
        d2 = np.minimum(d2, _sq_dists(X, X[idx:idx + 1])[:, 0])
    return np.array(centers)


def kmeans(X, K: int, max_iters: int = 100, seed: int = 0) -> Clustering:
    """Lloyd's algorithm from k-means++ seeds; an emptied cluster is moved to the farthest point."""
    X = np.asarray(X, dtype=np.float64)
    n = len(X)
    if K < 1 or n < K:
        raise ValueError(f"need 1 <= K <= n, got K={K}, n={n}")
    rng = np.random.default_rng(seed)
    C = kmeans_pp_init(X, K, rng)
    assign = _sq_dists(X, C).argmin(1)
    history: list[float] = []
    reseeds = 0
    for _ in range(max_iters):
        for k in range(K):
            members = assign == k
            if members.any():
                C[k] = X[members].mean(0)
        d = _sq_dists(X, C)
        new = d.argmin(1)
        for k in range(K):
            if not (new == k).any():
                far = int(d[np.arange(n), new].argmax())
                C[k] = X[far]
                new[far] = k
                reseeds += 1
                d = _sq_dists(X, C)
        history.append(float(d[np.arange(n), new].sum()))
        if np.array_equal(new, assign):
            break
        assign = new
    return Clustering(assign, C, history, reseeds)


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def sim_histogram(values, bins: int = 20) -> list[tuple[float, float, int]]:
    counts, edges = np.histogram(np.asarray(values), bins=bins, range=(0.0, 1.0))
    return [(float(edges[i]), float(edges[i + 1]), int(c)) for i, c in enumerate(counts)]


def write_histogram(values, path: str | Path, bins: int = 20) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write("bin_lo,bin_hi,count\n")
        for lo, hi, c in sim_histogram(values, bins):
            fh.write(f"{lo!r},{hi!r},{c}\n")


def centroid_similarity_dist(X, clustering: Clustering) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    return _sigmoid((X * clustering.centroids[clustering.assignments]).sum(1))


@dataclass
class SimilarityDist:
    values: np.ndarray
    skipped: int = 0


def min_intra_similarity_dist(X, clustering: Clustering) -> SimilarityDist:
    """Per row, the lowest similarity to another member of its cluster; singletons are skipped."""
    X = np.asarray(X, dtype=np.float64)
    S = _sigmoid(X @ X.T)
    a = clustering.assignments
    out, skipped = [], 0
    for i in range(len(X)):
        others = (a == a[i])
        others[i] = False
        if not others.any():
            skipped += 1
            continue
        out.append(S[i, others].min())
    return SimilarityDist(np.array(out), skipped)


def max_avg_inter_similarity_dist(X, clustering: Clustering) -> np.ndarray:
    """Per row, the highest mean similarity to any cluster other than its own."""
    X = np.asarray(X, dtype=np.float64)
    a = clustering.assignments
    clusters = [k for k in range(clustering.K) if (a == k).any()]
    if len(clusters) < 2:
        raise ValueError("need at least two non-empty clusters")
    S = _sigmoid(X @ X.T)
    means = np.stack([S[:, a == k].mean(1) for k in clusters], 1)
    own = np.array(clusters)[:, None] == a[None, :]
    means[own.T] = -np.inf
    return means.max(1)


def item_overlap_similarity(onehots, clustering: Clustering) -> tuple[float, float]:
    """Mean shared-item count over same-cluster pairs and over cross-cluster pairs."""
    X = np.asarray(onehots, dtype=np.float64)
    G = X @ X.T
    a = clustering.assignments
    same = a[:, None] == a[None, :]
    upper = np.triu(np.ones_like(same), k=1)
    intra, inter = same & upper, ~same & upper
    if not intra.any() or not inter.any():
        raise ValueError("need both same-cluster and cross-cluster pairs")
    return float(G[intra].mean()), float(G[inter].mean())


def onehot_sequences(sequences: Sequence[Sequence[int]], num_items: int) -> np.ndarray:
    """Binary user x item matrix; column ``j`` is item ``j + 1``."""
    M = np.zeros((len(sequences), num_items))
    for u, seq in enumerate(sequences):
        idx = np.asarray(list(seq), dtype=np.int64) - 1
        M[u, idx] = 1.0
    return M


@torch.no_grad()
def export_representations(model, dataset, config, which: str = "both", split: str = "test") -> dict[str, ReprDump]:
    """Per-user categorical intent ``i^u`` and last-step interest ``r_N`` at the most recent step."""
    if which not in ("intent", "interest", "both"):
        raise ValueError(f"unknown kind {which!r}")
    inputs, _, users = dataset.eval_arrays(split)
    model.eval()
    intents, interests = [], []
    for start in range(0, len(inputs), 1024):
        o = model(torch.as_tensor(inputs[start:start + 1024]), config.delta, config.variant)
        intents.append(o.intent.double().numpy())
        interests.append(o.interest_last.double().numpy())
    d = model.d
    ids = [dataset.user_ids[u] if dataset.user_ids else str(u) for u in users]
    out = {}
    if which in ("intent", "both"):
        out["intent"] = ReprDump(ids, np.concatenate(intents) if intents else np.zeros((0, d)), "intent")
    if which in ("interest", "both"):
        out["interest"] = ReprDump(ids, np.concatenate(interests) if interests else np.zeros((0, d)), "interest")
    return out
