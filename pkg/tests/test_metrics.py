import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from c2ae.metrics import AGGREGATE_KEYS, confusion, evaluate, report


def brute_counts(pred, truth):
    m, n = pred.shape
    tp, fp, fn, tn = [0] * m, [0] * m, [0] * m, [0] * m
    for j in range(m):
        for i in range(n):
            p, t = pred[j][i], truth[j][i]
            if p and t:
                tp[j] += 1
            elif p and not t:
                fp[j] += 1
            elif t:
                fn[j] += 1
            else:
                tn[j] += 1
    return tp, fp, fn, tn


def test_identity_and_complement():
    rng = np.random.default_rng(0)
    truth = (rng.random((4, 10)) < 0.5).astype(int)
    c = confusion(truth, truth)
    assert not c.fp.any() and not c.fn.any()
    c = confusion(1 - truth, truth)
    assert not c.tp.any() and not c.tn.any()


def test_confusion_matches_brute_counter():
    rng = np.random.default_rng(1)
    pred = (rng.random((5, 20)) < 0.4).astype(int)
    truth = (rng.random((5, 20)) < 0.4).astype(int)
    c = confusion(pred, truth)
    tp, fp, fn, tn = brute_counts(pred, truth)
    assert list(c.tp) == tp and list(c.fp) == fp and list(c.fn) == fn and list(c.tn) == tn
    assert np.all(c.tp + c.fp + c.fn + c.tn == 20)


def test_shape_mismatch():
    with pytest.raises(ValueError):
        confusion(np.zeros((2, 3)), np.zeros((3, 2)))


def test_perfect_predictions():
    truth = np.array([[1, 0, 1], [0, 1, 1]])
    rep = evaluate(truth, truth)
    assert all(getattr(rep, k) == 1.0 for k in AGGREGATE_KEYS)


def test_worked_two_by_two():
    pred = np.array([[1, 1], [0, 1]])
    truth = np.array([[1, 0], [1, 1]])
    rep = evaluate(pred, truth)
    assert rep.f1 == [2 / 3, 2 / 3]
    assert rep.c_f1 == pytest.approx(2 / 3, abs=1e-15)
    assert rep.o_f1 == pytest.approx(2 / 3, abs=1e-15)


def test_zero_denominator_rule():
    pred = np.array([[0, 0], [1, 0]])
    truth = np.array([[0, 0], [1, 0]])
    rep = evaluate(pred, truth)
    assert rep.precision[0] == rep.recall[0] == rep.f1[0] == 0.0
    assert rep.f1[1] == 1.0
    assert rep.c_f1 == 0.5


def test_mask_excludes_entries():
    pred = np.array([[1, 1]])
    truth = np.array([[1, 0]])
    rep = evaluate(pred, truth, mask=np.array([[True, False]]))
    assert rep.o_p == 1.0


@given(st.integers(0, 100_000))
@settings(max_examples=100, deadline=None)
def test_metrics_in_unit_interval_and_harmonic(seed):
    rng = np.random.default_rng(seed)
    m, n = rng.integers(1, 8), rng.integers(1, 15)
    rep = evaluate((rng.random((m, n)) < 0.5).astype(int), (rng.random((m, n)) < 0.5).astype(int))
    for k in AGGREGATE_KEYS:
        assert 0.0 <= getattr(rep, k) <= 1.0
    if rep.o_p + rep.o_r:
        assert rep.o_f1 == pytest.approx(2 * rep.o_p * rep.o_r / (rep.o_p + rep.o_r))
    else:
        assert rep.o_f1 == 0.0


@given(st.integers(0, 100_000))
@settings(max_examples=60, deadline=None)
def test_micro_f1_invariant_under_label_permutation(seed):
    rng = np.random.default_rng(seed)
    pred = (rng.random((6, 9)) < 0.5).astype(int)
    truth = (rng.random((6, 9)) < 0.5).astype(int)
    perm = rng.permutation(6)
    assert evaluate(pred[perm], truth[perm]).o_f1 == evaluate(pred, truth).o_f1


def test_identical_counts_macro_equals_micro():
    block = np.array([[1, 1, 0, 0]])
    truth_block = np.array([[1, 0, 1, 0]])
    rep = evaluate(np.repeat(block, 4, axis=0), np.repeat(truth_block, 4, axis=0))
    assert rep.c_f1 == pytest.approx(rep.o_f1, abs=1e-15)


def test_report_json_fields():
    rep = evaluate(np.array([[1, 0]]), np.array([[1, 1]]))
    doc = json.loads(rep.to_json())
    assert set(AGGREGATE_KEYS) <= set(doc)
    assert doc["per_label_f1"] == rep.f1
    assert report(confusion(np.array([[1, 0]]), np.array([[1, 1]]))).to_json() == rep.to_json()
