import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dlam.errors import ArgumentError, InputError
from dlam.metrics import (CSV_HEADER, ConfusionCounts, aggregate, compute_metrics, confusion,
                          write_report)
from dlam.pipeline import Mask


def oracle(tp, tn, fp, fn):
    """Independent re-derivation of the seven metrics, 0/0 taken as 0."""
    def div(a, b):
        return a / b if b else 0.0
    dr = div(tp, tp + fn)
    prec = div(tp, tp + fp)
    return {
        "detection_rate": dr,
        "specificity": div(tn, tn + fp),
        "fpr": div(fp, fp + tn),
        "fnr": div(fn, tp + fn),
        "pwc": div(100.0 * (fn + fp), tp + fn + fp + tn),
        "precision": prec,
        "f_measure": div(2 * dr * prec, dr + prec),
    }


def test_confusion_perfect_and_inverted():
    truth = Mask(np.random.default_rng(0).random((8, 8)) > 0.5)
    c = confusion(truth, truth)
    assert c.fp == c.fn == 0
    c = confusion(Mask(~truth.bits), truth)
    assert c.tp == c.tn == 0


def test_confusion_matches_pixel_loop():
    rng = np.random.default_rng(1)
    m, t = rng.random((16, 16)) > 0.6, rng.random((16, 16)) > 0.7
    counts = dict(tp=0, tn=0, fp=0, fn=0)
    for i in range(16):
        for j in range(16):
            key = ("t" if m[i, j] == t[i, j] else "f") + ("p" if m[i, j] else "n")
            counts[key] += 1
    assert confusion(Mask(m), Mask(t)) == ConfusionCounts(**counts)


def test_confusion_shape_mismatch():
    with pytest.raises(InputError):
        confusion(Mask(np.zeros((2, 2))), Mask(np.zeros((2, 3))))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_confusion_swap_and_permutation(seed):
    rng = np.random.default_rng(seed)
    m, t = rng.random((5, 6)) > 0.5, rng.random((5, 6)) > 0.5
    c = confusion(Mask(m), Mask(t))
    swapped = confusion(Mask(t), Mask(m))
    assert (swapped.tp, swapped.tn, swapped.fp, swapped.fn) == (c.tp, c.tn, c.fn, c.fp)
    perm = rng.permutation(30)
    pm, pt = m.ravel()[perm].reshape(5, 6), t.ravel()[perm].reshape(5, 6)
    assert confusion(Mask(pm), Mask(pt)) == c
    assert c.total == 30


def test_metrics_worked_example():
    r = compute_metrics(ConfusionCounts(tp=50, tn=100, fp=0, fn=50))
    assert r.detection_rate == 0.5 and r.precision == 1.0
    assert r.f_measure == pytest.approx(2 / 3, abs=1e-15)
    assert r.pwc == 25.0
    assert not r.degenerate


def test_metrics_perfect():
    r = compute_metrics(ConfusionCounts(tp=10, tn=90, fp=0, fn=0))
    assert r.detection_rate == r.precision == r.f_measure == 1.0
    assert r.pwc == 0.0


def test_metrics_degenerate_flags():
    r = compute_metrics(ConfusionCounts(tp=0, tn=25, fp=0, fn=0))
    assert r.detection_rate == r.precision == r.f_measure == r.fnr == 0.0
    assert {"detection_rate", "fnr", "precision", "f_measure"} <= r.degenerate
    r = compute_metrics(ConfusionCounts())
    assert r.pwc == 0.0 and "pwc" in r.degenerate


def test_metrics_match_oracle_on_random_counts():
    rng = np.random.default_rng(2)
    for tp, tn, fp, fn in rng.integers(0, 10_000, size=(1000, 4)):
        r = compute_metrics(ConfusionCounts(tp, tn, fp, fn))
        for name, value in oracle(int(tp), int(tn), int(fp), int(fn)).items():
            assert abs(getattr(r, name) - value) <= 1e-12


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 500), st.integers(0, 500), st.integers(0, 500), st.integers(0, 500))
def test_metric_identities(tp, tn, fp, fn):
    r = compute_metrics(ConfusionCounts(tp, tn, fp, fn))
    if tp + fn:
        assert abs(r.detection_rate + r.fnr - 1) <= 1e-12
    if tn + fp:
        assert abs(r.specificity + r.fpr - 1) <= 1e-12
    if r.detection_rate > 0 and r.precision > 0:
        lo, hi = sorted((r.detection_rate, r.precision))
        assert lo - 1e-12 <= r.f_measure <= hi + 1e-12
    for name in ("detection_rate", "specificity", "fpr", "fnr", "precision", "f_measure"):
        assert 0 <= getattr(r, name) <= 1
    assert 0 <= r.pwc <= 100


def test_counts_validation():
    with pytest.raises(InputError):
        ConfusionCounts(tp=-1)
    with pytest.raises(InputError):
        ConfusionCounts(tp=1.5)


def test_aggregate_singleton():
    c = ConfusionCounts(3, 10, 2, 1)
    r = compute_metrics(c)
    agg = aggregate([r], [c])
    assert agg.f_measure == r.f_measure and agg.pwc == r.pwc
    assert agg.macro_f_measure == r.f_measure


def test_aggregate_swapped_errors():
    a, b = ConfusionCounts(5, 80, 10, 5), ConfusionCounts(5, 80, 5, 10)
    ra, rb = compute_metrics(a), compute_metrics(b)
    assert aggregate([ra, rb], [a, b]).pwc == ra.pwc == rb.pwc


def test_aggregate_is_pooled():
    rng = np.random.default_rng(3)
    counts = [ConfusionCounts(*map(int, rng.integers(0, 200, 4))) for _ in range(10)]
    reports = [compute_metrics(c) for c in counts]
    tp = sum(c.tp for c in counts)
    tn = sum(c.tn for c in counts)
    fp = sum(c.fp for c in counts)
    fn = sum(c.fn for c in counts)
    agg = aggregate(reports, counts)
    for name, value in oracle(tp, tn, fp, fn).items():
        assert abs(getattr(agg, name) - value) <= 1e-12
    assert agg.macro_f_measure == pytest.approx(np.mean([r.f_measure for r in reports]))


def test_aggregate_errors():
    with pytest.raises(ArgumentError):
        aggregate([], [])
    c = ConfusionCounts(1, 1, 1, 1)
    with pytest.raises(ArgumentError):
        aggregate([compute_metrics(c)], [c, c])


def test_write_report(tmp_path):
    path = tmp_path / "r.csv"
    videos = {"b": [ConfusionCounts(50, 100, 0, 50)],
              "a": [ConfusionCounts(10, 90, 0, 0), ConfusionCounts(0, 100, 0, 0)]}
    write_report(path, videos)
    rows = list(csv.reader(path.open()))
    assert tuple(rows[0]) == CSV_HEADER
    assert [r[0] for r in rows[1:]] == ["a", "b", "AVERAGE"]
    assert rows[2] == ["b", "1", "50", "100", "0", "50", "0.500000", "1.000000", "0.000000",
                       "0.500000", "25.000000", "1.000000", "0.666667"]
    assert rows[3][1:6] == ["3", "60", "290", "0", "50"]
    with pytest.raises(ArgumentError):
        write_report(path, {})
