from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from idclrec.data import (
    DataError,
    InstanceTable,
    InteractionRecord,
    PreparedDataset,
    UserSequence,
    augment_subsequences,
    build_sequences,
    five_core_filter,
    load_interactions,
    make_batches,
    pad_sequence,
    prepare,
    sample_same_target,
    split_leave_one_out,
)


def brute_force_core(records, core=5):
    """Delete one offending record group at a time until nothing changes."""
    recs = list(records)
    changed = True
    while changed:
        changed = False
        users = Counter(r.user for r in recs)
        for u, c in users.items():
            if c < core:
                recs = [r for r in recs if r.user != u]
                changed = True
                break
        if changed:
            continue
        items = Counter(r.item for r in recs)
        for i, c in items.items():
            if c < core:
                recs = [r for r in recs if r.item != i]
                changed = True
                break
    return recs


def rec(u, i, t):
    return InteractionRecord(f"u{u}", f"i{i}", t)


# ---------------------------------------------------------------- loading

def test_load_tsv(tmp_path):
    p = tmp_path / "x.tsv"
    p.write_text("u1\ti1\t10\nu1\ti2\t20\nu2\ti1\t5\n")
    assert load_interactions(p, "tsv") == [rec(1, 1, 10), rec(1, 2, 20), rec(2, 1, 5)]


def test_load_csv_missing_timestamp_names_line(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("u1,i1,3\nu1,i1\n")
    with pytest.raises(DataError, match="line 2"):
        load_interactions(p, "csv")


def test_load_keeps_duplicates(tmp_path):
    p = tmp_path / "x.tsv"
    p.write_text("u1\ti1\t10\nu1\ti1\t10\n")
    assert len(load_interactions(p)) == 2


def test_load_empty_file(tmp_path):
    p = tmp_path / "x.tsv"
    p.write_text("")
    assert load_interactions(p) == []


def test_load_four_field_rating_layout(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("A1,B1,5.0,1300000000\n")
    assert load_interactions(p, "csv") == [InteractionRecord("A1", "B1", 1300000000)]


# ---------------------------------------------------------------- 5-core

def test_five_core_grid_unchanged():
    records = [rec(u, i, u * 10 + i) for u in range(5) for i in range(5)]
    assert five_core_filter(records) == records


def test_five_core_cascade_matches_brute_force():
    records = [rec(u, i, u * 10 + i) for u in range(5) for i in range(5)]
    # u9 has five interactions, one of them on an item seen nowhere else 4 times
    records += [rec(9, i, 100 + i) for i in range(4)] + [rec(9, 77, 200)]
    records += [rec(u, 77, 300 + u) for u in range(3)]
    out = five_core_filter(records)
    assert out == brute_force_core(records)
    assert all(r.user != "u9" for r in out)
    assert all(r.item != "i77" for r in out)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 8), st.integers(0, 8)), max_size=120))
def test_five_core_fixpoint_property(pairs):
    records = [rec(u, i, t) for t, (u, i) in enumerate(pairs)]
    out = five_core_filter(records)
    assert out == brute_force_core(records)
    assert five_core_filter(out) == out
    if out:
        assert min(Counter(r.user for r in out).values()) >= 5
        assert min(Counter(r.item for r in out).values()) >= 5


# ---------------------------------------------------------------- sequences

def test_build_sequences_sorts_and_indexes():
    records = [rec(1, "a", 30), rec(1, "b", 10), rec(2, "c", 1), rec(1, "c", 20)]
    seqs, users, items = build_sequences(records)
    assert users == {"u1": 0, "u2": 1}
    assert items == {"ia": 1, "ib": 2, "ic": 3}
    assert seqs[0] == UserSequence(0, (2, 3, 1))
    assert seqs[1] == UserSequence(1, (3,))


def test_build_sequences_ties_keep_file_order():
    records = [rec(1, "x", 5), rec(1, "y", 5), rec(1, "z", 1)]
    seqs, _, items = build_sequences(records)
    assert seqs[0].items == (items["iz"], items["ix"], items["iy"])


@pytest.mark.parametrize(
    "items, expected",
    [
        ([1, 2, 3, 4, 5], ([1, 2, 3], 4, 5)),
        ([1, 2, 3], ([1], 2, 3)),
        ([1, 2], None),
    ],
)
def test_split_leave_one_out(items, expected):
    assert split_leave_one_out(items) == expected


def test_pad_sequence_left_pads_and_truncates():
    assert pad_sequence([3, 4], 4).tolist() == [0, 0, 3, 4]
    assert pad_sequence(range(1, 8), 4).tolist() == [4, 5, 6, 7]


def test_augment_subsequences():
    out = augment_subsequences([1, 2, 3, 4], N=3, min_len=1)
    assert [(x.input.tolist(), x.target) for x in out] == [
        ([0, 0, 1], 2),
        ([0, 1, 2], 3),
        ([1, 2, 3], 4),
    ]
    assert augment_subsequences([1, 2], N=3, min_len=2) == []


def test_augment_truncates_to_most_recent():
    train = list(range(1, 61))
    last = augment_subsequences(train, N=50)[-1]
    assert last.input.tolist() == list(range(10, 60))
    assert last.target == 60


@given(st.lists(st.integers(1, 50), min_size=0, max_size=30), st.integers(1, 12), st.integers(1, 5))
def test_padding_invariant(items, N, min_len):
    for inst in augment_subsequences(items, N, min_len):
        k = inst.valid_len
        assert 1 <= k <= N
        assert (inst.input[: N - k] == 0).all() and (inst.input[N - k:] > 0).all()


# ---------------------------------------------------------------- same-target sampling

def _table(targets):
    n = len(targets)
    return InstanceTable(np.arange(1, n + 1)[:, None], np.array(targets), np.zeros(n, np.int64))


def test_sample_same_target_uniform_over_others():
    table = _table([7, 7, 3, 7])
    index = table.target_index()
    rng = np.random.default_rng(0)
    draws = Counter(sample_same_target(0, 7, index, rng) for _ in range(100_000))
    assert set(draws) == {1, 3}
    assert abs(draws[1] / 100_000 - 0.5) < 0.02


def test_sample_same_target_fallback_and_missing():
    table = _table([9, 7, 7])
    index = table.target_index()
    assert sample_same_target(0, 9, index, np.random.default_rng(1)) == 0
    with pytest.raises(KeyError):
        sample_same_target(0, 42, index, np.random.default_rng(1))


def test_sample_same_target_reproducible():
    table = _table([5] * 10)
    index = table.target_index()
    a = [sample_same_target(3, 5, index, np.random.default_rng(11)) for _ in range(5)]
    b = [sample_same_target(3, 5, index, np.random.default_rng(11)) for _ in range(5)]
    assert a == b


# ---------------------------------------------------------------- batching

def test_make_batches_sizes_and_pairing():
    rng = np.random.default_rng(0)
    table = _table(list(rng.integers(1, 40, size=600)))
    batches = list(make_batches(table, 256, np.random.default_rng(3)))
    assert [len(b) for b in batches] == [256, 256, 88]
    for b in batches:
        assert len(b.aug_inputs) == len(b.inputs)
        assert (table.targets[b.augmented_rows] == b.targets).all()
        assert (table.targets[b.original_rows] == b.targets).all()
    assert sorted(np.concatenate([b.original_rows for b in batches]).tolist()) == list(range(600))


def test_make_batches_deterministic():
    table = _table([1, 2, 3, 1, 2, 3, 4] * 20)
    a = [b.augmented_rows.tolist() for b in make_batches(table, 16, np.random.default_rng(5))]
    b = [b.augmented_rows.tolist() for b in make_batches(table, 16, np.random.default_rng(5))]
    assert a == b


# ---------------------------------------------------------------- prepared dataset

def test_prepared_dataset_roundtrip(tmp_path):
    records = [rec(u, i, 10 * u + i) for u in range(6) for i in range(6)]
    ds = prepare(records, N=4, min_len=1, seed=7)
    ds.save(tmp_path)
    manifest = (tmp_path / "manifest.json").read_text()
    assert '"num_users": 6' in manifest and '"seed": 7' in manifest
    back = PreparedDataset.load(tmp_path)
    assert back.sequences == ds.sequences and back.num_items == 6
    assert back.user_ids == ds.user_ids and back.item_ids == ds.item_ids


def test_split_disjointness():
    ds = PreparedDataset([(1, 2, 3, 4, 5, 6)], 6, N=5)
    table = ds.train_table()
    # valid target 5 sits at position 4, test target 6 at position 5: neither is a training target
    assert set(table.targets.tolist()) == {2, 3, 4}
    inputs, targets, _ = ds.eval_arrays("valid")
    assert inputs[0].tolist() == [0, 1, 2, 3, 4] and targets[0] == 5
    inputs, targets, _ = ds.eval_arrays("test")
    assert inputs[0].tolist() == [1, 2, 3, 4, 5] and targets[0] == 6


def test_stats():
    ds = PreparedDataset([(1, 2, 3), (1, 2, 3, 4, 5)], 5, N=5)
    s = ds.stats()
    assert s["users"] == 2 and s["interactions"] == 8 and s["avg_length"] == 4.0
    assert s["sparsity"] == pytest.approx(1 - 8 / 10)
