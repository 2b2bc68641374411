import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from birads_ssdl.evaluation import (ConfusionCounts, MetricsReport, UndefinedMetricError,
                                    aggregate_runs, confusion, evaluate, metrics_from_confusion,
                                    roc_auc, stratified_split)

from oracles import metrics_formula, pairwise_auc

FIELDS = ("sen", "spe", "ppv", "npv", "acc", "auc_paper", "mcc")


def test_confusion_all_correct():
    labels = ["benign"] * 5 + ["malignant"] * 5
    assert confusion(labels, labels) == ConfusionCounts(tp=5, fn=0, tn=5, fp=0)


def test_confusion_all_malignant():
    labels = ["benign"] * 5 + ["malignant"] * 5
    assert confusion(labels, ["malignant"] * 10) == ConfusionCounts(tp=5, fn=0, tn=0, fp=5)


def test_confusion_matches_tally(rng):
    y = rng.integers(0, 2, 200)
    p = rng.integers(0, 2, 200)
    tally = {"tp": 0, "fn": 0, "tn": 0, "fp": 0}
    for a, b in zip(y, p):
        key = ("t" if a == b else "f") + ("p" if b == 1 else "n")
        tally[key] += 1
    assert confusion(y, p) == ConfusionCounts(**tally)


def test_confusion_errors():
    with pytest.raises(ValueError):
        confusion([0, 1], [0])
    with pytest.raises(ValueError):
        confusion([], [])
    with pytest.raises(ValueError):
        confusion(["Benign"], ["benign"])


def test_perfect_classifier_metrics():
    r = metrics_from_confusion(ConfusionCounts(tp=5, fn=0, tn=5, fp=0))
    assert all(getattr(r, f) == 1.0 for f in FIELDS)
    assert r.degenerate == ()


def test_degenerate_column():
    r = metrics_from_confusion(ConfusionCounts(tp=5, fn=0, tn=0, fp=5))
    assert (r.sen, r.spe, r.auc_paper, r.mcc) == (1.0, 0.0, 0.5, 0.0)
    assert "mcc" in r.degenerate and "npv" in r.degenerate


def test_worked_case():
    r = metrics_from_confusion(ConfusionCounts(tp=3, fn=1, tn=4, fp=2))
    assert r.sen == 0.75 and r.ppv == 0.6 and r.npv == 0.8 and r.acc == 0.7
    assert abs(r.spe - 0.6667) < 1e-4
    # 0.70835 is the average of the rounded SEN and SPE; exact value is 0.708333...
    assert abs(r.auc_paper - 0.70835) < 1e-4
    assert abs(r.mcc - 10 / math.sqrt(600)) < 1e-12
    assert abs(r.mcc - 0.40825) < 1e-5
    oracle = metrics_formula(3, 1, 4, 2)
    assert all(abs(getattr(r, f) - oracle[f]) < 1e-12 for f in FIELDS)


def test_metrics_against_formula_oracle(rng):
    for _ in range(2000):
        tp, fn, tn, fp = (int(v) for v in rng.integers(0, 20, 4))
        if tp + fn + tn + fp == 0:
            continue
        r = metrics_from_confusion(ConfusionCounts(tp, fn, tn, fp))
        oracle = metrics_formula(tp, fn, tn, fp)
        for f in FIELDS:
            assert abs(getattr(r, f) - oracle[f]) < 1e-12
        assert r.auc_paper == (r.sen + r.spe) / 2
        assert -1.0 <= r.mcc <= 1.0


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 50), st.integers(0, 50), st.integers(0, 50), st.integers(0, 50))
def test_mcc_is_one_only_for_perfect(tp, fn, tn, fp):
    if tp + fn + tn + fp == 0:
        return
    r = metrics_from_confusion(ConfusionCounts(tp, fn, tn, fp))
    perfect = fp == 0 and fn == 0 and tp > 0 and tn > 0
    assert (abs(r.mcc - 1.0) < 1e-12) == perfect


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 1), st.integers(0, 1)), min_size=1, max_size=60))
def test_label_swap_symmetry(pairs):
    y = [a for a, _ in pairs]
    p = [b for _, b in pairs]
    r = metrics_from_confusion(confusion(y, p))
    s = metrics_from_confusion(confusion([1 - a for a in y], [1 - b for b in p]))
    assert (r.sen, r.ppv) == (s.spe, s.npv)
    assert (r.spe, r.npv) == (s.sen, s.ppv)
    assert r.acc == s.acc
    assert abs(abs(r.mcc) - abs(s.mcc)) < 1e-12


def test_roc_examples():
    assert roc_auc([1, 1, 0, 0], [0.9, 0.8, 0.7, 0.1]) == 1.0
    assert roc_auc([1, 1, 0, 0], [0.6, 0.2, 0.5, 0.4]) == 0.5
    assert roc_auc([1, 1, 0, 0], [0.1, 0.2, 0.5, 0.4]) == 0.0
    with pytest.raises(UndefinedMetricError):
        roc_auc([1, 1], [0.2, 0.3])


def test_roc_matches_pairwise_oracle_with_ties(rng):
    for _ in range(30):
        y = rng.integers(0, 2, 40)
        y[:2] = [0, 1]
        s = np.round(rng.random(40), 1)
        assert abs(roc_auc(y, s) - pairwise_auc(y, s)) < 1e-12


def test_roc_flip_symmetry(rng):
    y = rng.integers(0, 2, 50)
    y[:2] = [0, 1]
    s = rng.random(50)
    assert abs(roc_auc(y, s) - roc_auc(1 - y, 1 - s)) < 1e-12


def test_evaluate_uses_argmax():
    probs = np.array([[0.9, 0.1], [0.2, 0.8], [0.6, 0.4], [0.3, 0.7]])
    r = evaluate([0, 1, 1, 0], probs)
    assert (r.acc, r.sen, r.spe) == (0.5, 0.5, 0.5)
    assert r.roc_auc == 0.75


def test_as_row_uses_table_columns():
    r = metrics_from_confusion(ConfusionCounts(3, 1, 4, 2))
    row = r.as_row()
    assert list(row)[:7] == ["ACC", "AUC", "MCC", "SEN", "SPE", "PPV", "NPV"]
    assert row["ACC"] == pytest.approx(70.0)


# ------------------------------------------------------------------- splits
def test_split_small_balanced():
    y = np.array([0] * 10 + [1] * 10)
    tr, te = stratified_split(y, 0.8, 0)
    assert (np.sum(y[tr] == 0), np.sum(y[tr] == 1)) == (8, 8)
    assert (np.sum(y[te] == 0), np.sum(y[te] == 1)) == (2, 2)


def test_split_floor_rule_83_45():
    y = np.array([0] * 83 + [1] * 45)
    tr, te = stratified_split(y, 0.8, 3)
    assert (np.sum(y[tr] == 0), np.sum(y[tr] == 1)) == (66, 36)
    assert (np.sum(y[te] == 0), np.sum(y[te] == 1)) == (17, 9)
    assert len(set(tr) & set(te)) == 0 and len(tr) + len(te) == 128


def test_split_is_seeded():
    y = np.array([0] * 30 + [1] * 20)
    a, b = stratified_split(y, 0.8, 11), stratified_split(y, 0.8, 11)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
    assert not np.array_equal(a[0], stratified_split(y, 0.8, 12)[0])


def test_split_empty_class():
    with pytest.raises(ValueError):
        stratified_split(np.zeros(10, int), 0.8, 0)


# -------------------------------------------------------------- aggregation
def _report(acc, **kw):
    base = dict(sen=0.5, spe=0.5, ppv=0.5, npv=0.5, acc=acc, auc_paper=0.5, mcc=0.0, roc_auc=0.5)
    base.update(kw)
    return MetricsReport(**base)


def test_aggregate_single_run_has_zero_std():
    assert aggregate_runs([_report(0.9)])["ACC"] == (pytest.approx(90.0), 0.0)


def test_aggregate_two_runs():
    mean, std = aggregate_runs([_report(0.9), _report(0.8)])["ACC"]
    assert mean == pytest.approx(85.0)
    assert std == pytest.approx(7.0710678, abs=1e-6)


def test_aggregate_matches_two_pass_oracle(rng):
    reports = [_report(float(rng.random()), mcc=float(rng.uniform(-1, 1))) for _ in range(10)]
    agg = aggregate_runs(reports)
    for col, field in (("ACC", "acc"), ("MCC", "mcc")):
        vals = [getattr(r, field) * 100 for r in reports]
        mean = sum(vals) / len(vals)
        var = sum((v - mean) ** 2 for v in vals) / (len(vals) - 1)
        assert abs(agg[col][0] - mean) / abs(mean) < 1e-10
        assert abs(agg[col][1] - math.sqrt(var)) / math.sqrt(var) < 1e-10


def test_aggregate_empty():
    with pytest.raises(ValueError):
        aggregate_runs([])
