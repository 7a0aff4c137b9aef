import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tsguard.detectors import DetectorConfig
from tsguard.evaluation import (
    ConfusionCounts,
    benchmark_run,
    confusion,
    precision_recall_f1,
    roc_auc,
    soft_labels,
    vus_pr,
    vus_roc,
)
from tsguard.exceptions import DegenerateLabels, MisalignedInputs

from conftest import spike_series


def brute_auc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y]
    neg = [s for s, y in zip(scores, labels) if not y]
    total = sum(1.0 if p > q else 0.5 if p == q else 0.0 for p in pos for q in neg)
    return total / (len(pos) * len(neg))


def step_sum_ap(scores, labels):
    """Average precision: sum over distinct thresholds of precision x recall gain."""
    total_pos = sum(labels)
    ap, prev_recall = 0.0, 0.0
    for thr in sorted(set(scores), reverse=True):
        flagged = [y for s, y in zip(scores, labels) if s >= thr]
        tp = sum(flagged)
        recall = tp / total_pos
        ap += (recall - prev_recall) * tp / len(flagged)
        prev_recall = recall
    return ap


def random_instance(seed, max_n=200, ties=False):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, max_n + 1))
    y = rng.random(n) < rng.uniform(0.05, 0.5)
    y[0], y[1] = True, False
    s = rng.integers(0, 5, n).astype(float) if ties else rng.normal(size=n)
    return s, y.astype(int)


def test_confusion_examples():
    assert confusion([1, 0, 1], [1, 0, 1]) == ConfusionCounts(tp=2, fp=0, tn=1, fn=0)
    assert confusion([0, 0, 0, 0], [1, 1, 0, 1]).fn == 3
    with pytest.raises(MisalignedInputs):
        confusion([1], [1, 0])
    with pytest.raises(ValueError):
        confusion([2], [1])


def test_confusion_exhaustive_n4():
    for v in itertools.product([0, 1], repeat=4):
        for y in itertools.product([0, 1], repeat=4):
            c = confusion(v, y)
            pairs = list(zip(v, y))
            assert (c.tp, c.fp, c.tn, c.fn) == (pairs.count((1, 1)), pairs.count((1, 0)),
                                                pairs.count((0, 0)), pairs.count((0, 1)))


def test_prf_examples():
    assert precision_recall_f1(ConfusionCounts(1, 0, 0, 0)) == (1.0, 1.0, 1.0)
    assert precision_recall_f1(ConfusionCounts(0, 0, 10, 5)) == (0.0, 0.0, 0.0)
    p, r, f = precision_recall_f1(ConfusionCounts(3, 1, 0, 2))
    assert (p, r) == (0.75, 0.6) and f == pytest.approx(2 / 3)


@given(st.integers(0, 20), st.integers(0, 20), st.integers(0, 20))
def test_f1_extremes(tp, fp, fn):
    _, _, f = precision_recall_f1(ConfusionCounts(tp, fp, 0, fn))
    if tp == 0:
        assert f == 0
    assert (f == 1.0) == (tp > 0 and fp == 0 and fn == 0)


def test_auc_examples():
    assert roc_auc([0.1, 0.2, 0.9, 0.8], [0, 0, 1, 1]) == 1.0
    assert roc_auc([0.5] * 6, [0, 1, 0, 1, 0, 0]) == 0.5
    with pytest.raises(DegenerateLabels):
        roc_auc([1, 2], [1, 1])


@pytest.mark.parametrize("seed", range(30))
def test_auc_matches_pairwise_oracle(seed):
    s, y = random_instance(seed, ties=seed % 2 == 0)
    assert abs(roc_auc(s, y) - brute_auc(s, y)) < 1e-9


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_auc_rank_properties(seed):
    s, y = random_instance(seed, max_n=60)
    a = roc_auc(s, y)
    assert abs(a - roc_auc(np.exp(3 * s) + 1, y)) < 1e-12
    assert abs(a + roc_auc(-s, y) - 1.0) < 1e-12


@pytest.mark.parametrize("seed", range(20))
def test_vus_degenerates_to_auc(seed):
    s, y = random_instance(seed, ties=seed % 3 == 0)
    assert vus_roc(s, y, 0) == roc_auc(s, y)


@pytest.mark.parametrize("seed", range(20))
def test_vus_pr_zero_buffer_is_step_sum_ap(seed):
    s, y = random_instance(seed, max_n=80, ties=seed % 2 == 0)
    assert abs(vus_pr(s, y, 0) - step_sum_ap(list(s), list(y))) < 1e-9


def test_vus_examples():
    y = np.zeros(50, int)
    y[20:23] = 1
    for L in (0, 1, 5):
        assert vus_roc(np.ones(50), y, L) == 0.5
    assert vus_pr(y.astype(float), y, 0) == 1.0
    with pytest.raises(DegenerateLabels):
        vus_pr(np.arange(5.0), np.ones(5), 2)


@pytest.mark.parametrize("L,widen", [(L, w) for L in (1, 2, 3, 5) for w in range(1, min(L, 3) + 1)])
def test_widening_inside_buffer_does_not_hurt(L, widen):
    y = np.zeros(100, int)
    y[50] = 1
    exact = np.zeros(100)
    exact[50] = 1.0
    wide = np.zeros(100)
    wide[50 - widen:51 + widen] = 1.0
    assert vus_roc(wide, y, L) >= vus_roc(exact, y, L) - 1e-9


def test_soft_label_shape():
    y = np.zeros(11, int)
    y[5] = 1
    w = soft_labels(y, 3)
    assert w[5] == 1.0
    assert w[4] == w[6] == 0.75 and w[2] == w[8] == 0.25
    assert w[1] == 0.0 and w[9] == 0.0


def _write(path, values, labels, start=0):
    with open(path, "w") as fh:
        fh.write("timestamp,value,label\n")
        for i, (v, l) in enumerate(zip(values, labels)):
            fh.write(f"{start + i * 1000},{float(v)!r},{int(l)}\n")


def test_benchmark_single_spike(tmp_path):
    s, at = spike_series(0, n=200)
    labels = np.zeros(200, int)
    labels[at] = 1
    ds = tmp_path / "synthetic"
    ds.mkdir()
    _write(ds / "spike.csv", s.values, labels)
    _write(ds / "quiet.csv", np.random.default_rng(1).normal(size=100), np.zeros(100, int))
    cfg = DetectorConfig("zscore", tau=3.0, train_fraction=0.9)
    rep = benchmark_run(tmp_path, cfg)
    rows = {r.series_id: r for r in rep.rows}
    assert rows["spike"].f1 == 1.0 and rows["spike"].status == "ok"
    assert rows["spike"].dataset == "synthetic"
    assert rows["quiet"].status == "degenerate"
    again = benchmark_run(tmp_path, cfg, workers=4)
    assert again.to_csv(include_runtime=False) == rep.to_csv(include_runtime=False)
    assert rep.aggregate()["synthetic"]["scored"] == 1


def test_benchmark_empty_dir(tmp_path):
    rep = benchmark_run(tmp_path, DetectorConfig("zscore"))
    assert rep.rows == []
    assert rep.to_csv().strip().split(",")[0] == "dataset"


def test_benchmark_unreadable_file(tmp_path):
    (tmp_path / "bad.csv").write_text("a,b\n1,2\n")
    rep = benchmark_run(tmp_path, DetectorConfig("zscore"))
    assert rep.rows[0].status.startswith("unreadable")
