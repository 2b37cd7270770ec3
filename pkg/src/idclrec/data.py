"""Interaction ingestion, 5-core filtering, leave-one-out splits and batching.

Item indices are dense and 1-based; index 0 is the padding item. Sequences are
left padded, so the most recent item always sits in the last column.
"""

from __future__ import annotations

import json
import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, NamedTuple, Sequence

import numpy as np

log = logging.getLogger(__name__)

CORE = 5


class DataError(ValueError):
    pass


class InteractionRecord(NamedTuple):
    user: str
    item: str
    timestamp: int


@dataclass(frozen=True)
class UserSequence:
    user_index: int
    items: tuple[int, ...]


@dataclass(frozen=True)
class TrainingInstance:
    input: np.ndarray  # (N,) left padded
    target: int
    source_user: int

    @property
    def valid_len(self) -> int:
        return int(np.count_nonzero(self.input))


# ---------------------------------------------------------------- ingestion

def load_interactions(path: str | Path, format: str = "tsv") -> list[InteractionRecord]:
    """Parse header-less ``user<sep>item<sep>timestamp`` lines.

    A 4-field line is read as ``user, item, rating, timestamp`` (the raw Amazon
    ratings layout); the rating is discarded since all feedback is implicit.
    """
    if format not in ("tsv", "csv"):
        raise DataError(f"unsupported format {format!r}")
    sep = "\t" if format == "tsv" else ","
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            parts = [p.strip() for p in line.split(sep)]
            if len(parts) == 4:
                parts = [parts[0], parts[1], parts[3]]
            if len(parts) != 3 or not parts[0] or not parts[1]:
                raise DataError(
                    f"{path}: line {lineno}: expected user{sep!r}item{sep!r}timestamp, got {line!r}"
                )
            try:
                ts = int(parts[2])
            except ValueError:
                raise DataError(f"{path}: line {lineno}: timestamp {parts[2]!r} is not an integer") from None
            records.append(InteractionRecord(parts[0], parts[1], ts))
    return records


def five_core_filter(records: Sequence[InteractionRecord], core: int = CORE) -> list[InteractionRecord]:
    """Drop users and items with fewer than ``core`` records, iterating until stable."""
    kept = list(records)
    while True:
        users = Counter(r.user for r in kept)
        items = Counter(r.item for r in kept)
        nxt = [r for r in kept if users[r.user] >= core and items[r.item] >= core]
        if len(nxt) == len(kept):
            return nxt
        kept = nxt


def build_sequences(
    records: Sequence[InteractionRecord],
) -> tuple[list[UserSequence], dict[str, int], dict[str, int]]:
    """Group by user and sort chronologically (stable for equal timestamps).

    Users get dense indices from 0 and items from 1, both in order of first
    appearance in ``records``.
    """
    user_map: dict[str, int] = {}
    item_map: dict[str, int] = {}
    events: dict[int, list[tuple[int, int]]] = defaultdict(list)
    for r in records:
        u = user_map.setdefault(r.user, len(user_map))
        i = item_map.setdefault(r.item, len(item_map) + 1)
        events[u].append((r.timestamp, i))
    seqs = []
    for u in range(len(user_map)):
        ordered = sorted(events[u], key=lambda e: e[0])
        seqs.append(UserSequence(u, tuple(i for _, i in ordered)))
    return seqs, user_map, item_map


def split_leave_one_out(seq: UserSequence | Sequence[int]) -> tuple[list[int], int, int] | None:
    """Return ``(train_items, valid_target, test_target)`` or None when too short."""
    items = list(seq.items if isinstance(seq, UserSequence) else seq)
    if len(items) < 3:
        return None
    return items[:-2], items[-2], items[-1]


def pad_sequence(items: Sequence[int], N: int) -> np.ndarray:
    """Keep the most recent ``N`` items and left pad with 0."""
    out = np.zeros(N, dtype=np.int64)
    tail = list(items)[-N:]
    if tail:
        out[N - len(tail):] = tail
    return out


def augment_subsequences(
    train_items: Sequence[int],
    N: int,
    min_len: int = 1,
    source_user: int = -1,
) -> list[TrainingInstance]:
    """Every prefix of length ``t >= min_len`` paired with the item right after it."""
    if min_len < 1:
        raise DataError("min_len must be >= 1")
    items = list(train_items)
    return [
        TrainingInstance(pad_sequence(items[:t], N), items[t], source_user)
        for t in range(min_len, len(items))
    ]


# ---------------------------------------------------------------- instance table

@dataclass
class InstanceTable:
    """Columnar storage of training instances."""

    inputs: np.ndarray  # (M, N) int64
    targets: np.ndarray  # (M,)
    users: np.ndarray  # (M,)
    _by_target: dict[int, np.ndarray] | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.targets)

    def __getitem__(self, i: int) -> TrainingInstance:
        return TrainingInstance(self.inputs[i], int(self.targets[i]), int(self.users[i]))

    @classmethod
    def from_instances(cls, instances: Sequence[TrainingInstance], N: int) -> "InstanceTable":
        if not instances:
            return cls(np.zeros((0, N), np.int64), np.zeros(0, np.int64), np.zeros(0, np.int64))
        return cls(
            np.stack([x.input for x in instances]).astype(np.int64),
            np.array([x.target for x in instances], dtype=np.int64),
            np.array([x.source_user for x in instances], dtype=np.int64),
        )

    def target_index(self) -> dict[int, np.ndarray]:
        """Map each target item to the (sorted) instance rows carrying it."""
        if self._by_target is None:
            order = np.argsort(self.targets, kind="stable")
            uniq, starts = np.unique(self.targets[order], return_index=True)
            groups = np.split(order, starts[1:])
            self._by_target = {int(t): g for t, g in zip(uniq, groups)}
        return self._by_target


def sample_same_target(
    row: int,
    target: int,
    index: dict[int, np.ndarray],
    rng: np.random.Generator,
) -> int:
    """Pick uniformly among the other rows sharing ``target``; fall back to ``row``."""
    try:
        group = index[target]
    except KeyError:
        raise KeyError(f"target {target} missing from same-target index") from None
    if len(group) == 1:
        return int(group[0])
    k = int(rng.integers(len(group) - 1))
    pos = int(np.searchsorted(group, row))
    if pos < len(group) and group[pos] == row and k >= pos:
        k += 1
    return int(group[k])


@dataclass
class Batch:
    original_rows: np.ndarray
    augmented_rows: np.ndarray
    inputs: np.ndarray  # (B, N)
    aug_inputs: np.ndarray  # (B, N)
    targets: np.ndarray  # (B,) shared by both views

    def __len__(self) -> int:
        return len(self.targets)


def make_batches(table: InstanceTable, batch_size: int, rng: np.random.Generator) -> Iterator[Batch]:
    """Shuffle once, then yield batches pairing each row with a same-target partner."""
    if len(table) == 0:
        raise DataError("no training instances")
    index = table.target_index()
    order = rng.permutation(len(table))
    for start in range(0, len(order), batch_size):
        rows = order[start:start + batch_size]
        aug = np.array(
            [sample_same_target(int(r), int(table.targets[r]), index, rng) for r in rows],
            dtype=np.int64,
        )
        yield Batch(rows, aug, table.inputs[rows], table.inputs[aug], table.targets[rows])


# ---------------------------------------------------------------- prepared dataset

@dataclass
class PreparedDataset:
    sequences: list[tuple[int, ...]]  # per user, post-filter, chronological
    num_items: int
    N: int
    min_len: int = 1
    seed: int = 0
    user_ids: list[str] | None = None
    item_ids: list[str] | None = None

    @property
    def num_users(self) -> int:
        return len(self.sequences)

    def splits(self) -> list[tuple[int, list[int], int, int]]:
        """``(user, train_items, valid_target, test_target)`` for every splittable user."""
        out = []
        for u, seq in enumerate(self.sequences):
            s = split_leave_one_out(seq)
            if s is None:
                log.info("user %d excluded from splits (length %d < 3)", u, len(seq))
                continue
            out.append((u, *s))
        return out

    def train_table(self, min_len: int | None = None) -> InstanceTable:
        min_len = self.min_len if min_len is None else min_len
        instances: list[TrainingInstance] = []
        for u, train, _, _ in self.splits():
            instances.extend(augment_subsequences(train, self.N, min_len, u))
        return InstanceTable.from_instances(instances, self.N)

    def eval_arrays(self, split: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Padded inputs, targets and user ids for the ``valid`` or ``test`` split."""
        if split not in ("valid", "test"):
            raise DataError(f"unknown split {split!r}")
        inputs, targets, users = [], [], []
        for u, train, valid, test in self.splits():
            if split == "valid":
                inputs.append(pad_sequence(train, self.N))
                targets.append(valid)
            else:
                inputs.append(pad_sequence(train + [valid], self.N))
                targets.append(test)
            users.append(u)
        if not inputs:
            return np.zeros((0, self.N), np.int64), np.zeros(0, np.int64), np.zeros(0, np.int64)
        return np.stack(inputs), np.array(targets, np.int64), np.array(users, np.int64)

    def stats(self) -> dict[str, float]:
        n_inter = sum(len(s) for s in self.sequences)
        n_users = self.num_users
        return {
            "users": n_users,
            "items": self.num_items,
            "interactions": n_inter,
            "avg_length": n_inter / n_users if n_users else 0.0,
            "sparsity": 1.0 - n_inter / (n_users * self.num_items) if n_users and self.num_items else 1.0,
        }

    def manifest(self) -> dict:
        return {
            "num_users": self.num_users,
            "num_items": self.num_items,
            "N": self.N,
            "min_len": self.min_len,
            "seed": self.seed,
        }

    def save(self, directory: str | Path) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        with open(d / "sequences.tsv", "w", encoding="utf-8", newline="\n") as fh:
            for u, seq in enumerate(self.sequences):
                fh.write(f"{u}\t{' '.join(map(str, seq))}\n")
        (d / "manifest.json").write_text(json.dumps(self.manifest(), indent=2, sort_keys=True) + "\n")
        if self.user_ids is not None:
            (d / "users.tsv").write_text("".join(f"{i}\t{u}\n" for i, u in enumerate(self.user_ids)))
        if self.item_ids is not None:
            (d / "items.tsv").write_text("".join(f"{i}\t{v}\n" for i, v in enumerate(self.item_ids, 1)))

    @classmethod
    def load(cls, directory: str | Path) -> "PreparedDataset":
        d = Path(directory)
        try:
            manifest = json.loads((d / "manifest.json").read_text())
        except FileNotFoundError:
            raise DataError(f"{d}: no manifest.json (run `prep` first)") from None
        seqs: list[tuple[int, ...]] = []
        with open(d / "sequences.tsv", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if not line:
                    continue
                head, _, body = line.partition("\t")
                if int(head) != len(seqs):
                    raise DataError(f"{d / 'sequences.tsv'}: line {lineno}: user index out of order")
                seqs.append(tuple(int(x) for x in body.split()))
        if len(seqs) != manifest["num_users"]:
            raise DataError(f"{d}: manifest says {manifest['num_users']} users, found {len(seqs)}")
        if any(i < 1 or i > manifest["num_items"] for s in seqs for i in s):
            raise DataError(f"{d}: item index outside [1, {manifest['num_items']}]")

        def _ids(name: str) -> list[str] | None:
            p = d / name
            if not p.exists():
                return None
            return [line.split("\t", 1)[1] for line in p.read_text().splitlines() if line]

        return cls(
            seqs,
            manifest["num_items"],
            manifest["N"],
            manifest.get("min_len", 1),
            manifest.get("seed", 0),
            _ids("users.tsv"),
            _ids("items.tsv"),
        )


def prepare(
    records: Sequence[InteractionRecord],
    N: int = 50,
    min_len: int = 1,
    seed: int = 0,
) -> PreparedDataset:
    """5-core filter then build per-user chronological sequences."""
    filtered = five_core_filter(records)
    seqs, user_map, item_map = build_sequences(filtered)
    return PreparedDataset(
        [s.items for s in seqs],
        len(item_map),
        N,
        min_len,
        seed,
        list(user_map),
        list(item_map),
    )
