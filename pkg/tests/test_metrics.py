import json
import math

import numpy as np
import pytest
import torch
from hypothesis import given, strategies as st

from idclrec.config import TrainConfig
from idclrec.metrics import (
    MetricsReport,
    evaluate,
    evaluate_scores,
    hr_at_k,
    ndcg_at_k,
    rank_of_target,
    ranks,
)
from idclrec.model import IDCLRec


def sort_rank(scores, target):
    """Position of ``target`` after a full descending sort that places it last among ties."""
    order = sorted(range(len(scores)), key=lambda j: (-scores[j], j == target - 1))
    return order.index(target - 1) + 1


def test_rank_examples():
    assert rank_of_target([0.1, 0.9, 0.3], 2) == 1
    assert rank_of_target([0.9, 0.9, 0.3], 2) == 2
    assert rank_of_target([0.9, 0.9, 0.3], 1) == 2
    with pytest.raises(ValueError):
        rank_of_target([0.1, 0.2], 0)


def test_hr_ndcg_examples():
    assert hr_at_k(1, 5) == 1.0 and ndcg_at_k(1, 5) == 1.0
    assert ndcg_at_k(3, 5) == 0.5
    assert hr_at_k(11, 10) == 0.0 and ndcg_at_k(11, 10) == 0.0


def test_full_sort_oracle_1000_vectors():
    rng = np.random.default_rng(0)
    S = rng.normal(size=(1000, 100))
    # roughly a third of the vectors get coarse values so ties are common
    S[::3] = np.round(S[::3])
    targets = rng.integers(1, 101, size=1000)
    vec = ranks(torch.from_numpy(S), targets).numpy()
    for s, t, r in zip(S, targets, vec):
        ref = sort_rank(list(s), int(t))
        assert rank_of_target(s, int(t)) == ref == r
    report = evaluate_scores(torch.from_numpy(S), targets)
    for k in (5, 10, 20):
        ref_r = [sort_rank(list(s), int(t)) for s, t in zip(S, targets)]
        assert report.hr[k] == np.mean([hr_at_k(r, k) for r in ref_r])
        assert report.ndcg[k] == pytest.approx(np.mean([ndcg_at_k(r, k) for r in ref_r]), abs=1e-15)


@given(st.lists(st.integers(1, 200), min_size=1, max_size=50))
def test_metric_ordering_invariant(rank_values):
    rep = MetricsReport.from_ranks(rank_values)
    assert rep.ndcg[5] <= rep.hr[5] <= rep.hr[10] <= rep.hr[20]
    for r in rank_values:
        assert ndcg_at_k(r, 10) <= hr_at_k(r, 10)


def test_report_single_user_and_mean():
    one = MetricsReport.from_ranks([3])
    assert one.hr == {5: 1.0, 10: 1.0, 20: 1.0} and one.ndcg[5] == 0.5
    a, b = MetricsReport.from_ranks([1]), MetricsReport.from_ranks([30])
    m = MetricsReport.mean([a, b])
    assert m.hr[20] == 0.5
    d = json.loads(one.to_json())
    assert d["hr"]["5"] == 1.0 and d["n_users"] == 1


def test_evaluate_order_invariant_and_top1():
    scores = torch.eye(4)
    report = evaluate_scores(scores, [1, 2, 3, 4])
    assert all(v == 1.0 for v in report.hr.values())
    rng = np.random.default_rng(1)
    S = torch.from_numpy(rng.normal(size=(20, 30)))
    t = rng.integers(1, 31, size=20)
    perm = rng.permutation(20)
    assert evaluate_scores(S, t).to_dict() == evaluate_scores(S[perm], t[perm]).to_dict()


def test_null_model_calibration():
    """Untrained model, targets independent of inputs: HR@20 follows Binomial(n, 20/|V|)."""
    V, n, N = 1000, 4000, 10
    cfg = TrainConfig(d=16, N=N, blocks=1, heads=1, dtype="float64")
    model = IDCLRec.from_config(cfg, V, seed=0)
    rng = np.random.default_rng(0)
    inputs = rng.integers(1, V + 1, size=(n, N))
    targets = rng.integers(1, V + 1, size=n)
    report = evaluate(model, inputs, targets, cfg)
    p = 20 / V
    sigma = math.sqrt(p * (1 - p) / n)
    assert abs(report.hr[20] - p) < 3 * sigma
