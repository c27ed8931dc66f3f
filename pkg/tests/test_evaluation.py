"""Metric definitions against brute-force oracles and published figures."""

import math
import statistics
import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cogscreen.evaluation import (
    SeverityClass,
    classification_metrics,
    ensemble,
    metrics_csv,
    regression_metrics,
    severity_agreement,
    severity_class,
    severity_report,
)


# ---------------------------------------------------------------------------
# classification metrics
# ---------------------------------------------------------------------------


def test_all_correct_is_perfect():
    preds = [True, False, True, False]
    m = classification_metrics(preds, preds)
    assert m.accuracy == 1.0
    assert m.ad.f1 == 1.0 and m.non_ad.f1 == 1.0
    assert m.macro_f1 == 1.0


def test_published_ensemble_confusion_is_reproduced():
    # 24 non-AD and 24 AD test dialogues; 22 of 24 non-AD correctly kept
    # (recall 22/24) while 7 AD cases leak into the non-AD prediction
    # (precision 22/29); the complement fixes the AD row and the accuracy.
    truths = [False] * 24 + [True] * 24
    preds = [False] * 22 + [True] * 2 + [False] * 7 + [True] * 17
    m = classification_metrics(preds, truths)
    assert m.non_ad.precision == pytest.approx(0.7586, abs=5e-5)
    assert m.non_ad.recall == pytest.approx(0.9167, abs=5e-5)
    assert m.ad.precision == pytest.approx(0.8947, abs=5e-5)
    assert m.ad.recall == pytest.approx(0.7083, abs=5e-5)
    assert m.accuracy == pytest.approx(0.8125, abs=1e-12)


def test_constant_positive_predictor_on_balanced_data():
    truths = [True] * 10 + [False] * 10
    preds = [True] * 20
    m = classification_metrics(preds, truths)
    assert m.accuracy == 0.5
    assert m.ad.recall == 1.0
    assert m.non_ad.recall == 0.0
    assert m.non_ad.precision == 0.0  # nothing predicted non-AD


def test_empty_and_mismatched_inputs_rejected():
    with pytest.raises(ValueError, match="no predictions"):
        classification_metrics([], [])
    with pytest.raises(ValueError, match="predictions for"):
        classification_metrics([True], [True, False])


def _brute_force_scores(preds, truths, positive):
    tp = sum(p == positive and t == positive for p, t in zip(preds, truths))
    predicted = sum(p == positive for p in preds)
    actual = sum(t == positive for t in truths)
    precision = tp / predicted if predicted else 0.0
    recall = tp / actual if actual else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def test_matches_brute_force_on_random_instances():
    rng = np.random.default_rng(0)
    for _ in range(200):
        n = int(rng.integers(1, 40))
        truths = list(rng.random(n) < 0.5)
        preds = list(rng.random(n) < 0.5)
        m = classification_metrics(preds, truths)
        for positive, scores in ((True, m.ad), (False, m.non_ad)):
            p, r, f = _brute_force_scores(preds, truths, positive)
            assert scores.precision == pytest.approx(p, abs=1e-12)
            assert scores.recall == pytest.approx(r, abs=1e-12)
            assert scores.f1 == pytest.approx(f, abs=1e-12)
        acc = sum(p == t for p, t in zip(preds, truths)) / n
        assert m.accuracy == pytest.approx(acc, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.booleans(), st.booleans()), min_size=1, max_size=30))
def test_macro_f1_between_class_f1s(pairs):
    preds = [p for p, _ in pairs]
    truths = [t for _, t in pairs]
    m = classification_metrics(preds, truths)
    lo, hi = sorted([m.ad.f1, m.non_ad.f1])
    assert lo - 1e-12 <= m.macro_f1 <= hi + 1e-12
    for v in (m.accuracy, m.ad.precision, m.ad.recall, m.ad.f1,
              m.non_ad.precision, m.non_ad.recall, m.non_ad.f1):
        assert 0.0 <= v <= 1.0


# ---------------------------------------------------------------------------
# regression metrics
# ---------------------------------------------------------------------------


def test_perfect_regression():
    r = regression_metrics([10.0, 20.0, 25.0], [10, 20, 25])
    assert r.rmse == 0.0
    assert r.r2 == 1.0
    assert r.r2_pearson == pytest.approx(1.0, abs=1e-12)


def test_predicting_the_mean_gives_zero_r2():
    truths = [10, 20, 30, 0]
    mean = sum(truths) / len(truths)
    r = regression_metrics([mean] * 4, truths)
    assert r.r2 == pytest.approx(0.0, abs=1e-12)
    assert r.r2_pearson == 0.0


def test_hand_computed_rmse():
    r = regression_metrics([10.0, 20.0], [12, 18])
    assert r.rmse == pytest.approx(2.0, abs=1e-12)


def test_constant_truths_warn_and_return_nan():
    with pytest.warns(UserWarning, match="constant ground truths"):
        r = regression_metrics([10.0, 11.0], [15, 15])
    assert math.isnan(r.r2) and math.isnan(r.r2_pearson)
    assert r.rmse > 0


def test_r2_pearson_matches_corrcoef():
    rng = np.random.default_rng(1)
    t = rng.normal(20, 5, size=50)
    p = t + rng.normal(0, 2, size=50)
    r = regression_metrics(p.tolist(), t.tolist())
    want = float(np.corrcoef(p, t)[0, 1]) ** 2
    assert r.r2_pearson == pytest.approx(want, rel=1e-10)


def test_r2_at_most_one_and_rmse_symmetry():
    rng = np.random.default_rng(2)
    for _ in range(50):
        n = int(rng.integers(2, 20))
        t = rng.normal(15, 6, size=n)
        if np.all(t == t[0]):
            continue
        p = rng.normal(15, 6, size=n)
        r = regression_metrics(p.tolist(), t.tolist())
        assert r.r2 <= 1.0 + 1e-12
        flipped = regression_metrics(t.tolist(), p.tolist())
        assert r.rmse == pytest.approx(flipped.rmse, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(
    st.lists(st.tuples(st.floats(0, 30), st.floats(0, 30)), min_size=2, max_size=20),
    st.floats(min_value=-5, max_value=5).filter(lambda a: abs(a) > 1e-3),
)
def test_rmse_scale_consistency(pairs, a):
    preds = [p for p, _ in pairs]
    truths = [t for _, t in pairs]
    import warnings as w

    with w.catch_warnings():
        w.simplefilter("ignore")
        base = regression_metrics(preds, truths).rmse
        scaled = regression_metrics([a * p for p in preds], [a * t for t in truths]).rmse
    assert scaled == pytest.approx(abs(a) * base, rel=1e-9, abs=1e-9)


def test_too_few_samples_rejected():
    with pytest.raises(ValueError, match="two samples"):
        regression_metrics([10.0], [10])


# ---------------------------------------------------------------------------
# ensembling
# ---------------------------------------------------------------------------


def test_strict_majority_vote():
    label, _ = ensemble([(True, 20), (True, 20), (False, 20), (True, 20), (False, 20)])
    assert label is True


def test_odd_median():
    _, mmse = ensemble([(True, 20), (True, 22), (True, 25), (True, 27), (True, 30)])
    assert mmse == 25.0


def test_even_median_averages_middle_two():
    _, mmse = ensemble([(True, 10), (True, 20), (True, 30), (True, 12)])
    assert mmse == 16.0


def test_tie_resolves_to_positive():
    label, _ = ensemble([(True, 15), (False, 15)])
    assert label is True


def test_five_members_never_tie():
    rng = np.random.default_rng(3)
    for _ in range(200):
        votes = rng.random(5) < 0.5
        members = [(bool(v), 15.0) for v in votes]
        label, _ = ensemble(members)
        assert label == bool(votes.sum() > 2.5)


def test_ensemble_is_order_invariant():
    rng = np.random.default_rng(4)
    members = [(bool(rng.random() < 0.5), float(rng.uniform(0, 30))) for _ in range(6)]
    base = ensemble(members)
    for _ in range(10):
        perm = [members[i] for i in rng.permutation(len(members))]
        assert ensemble(perm) == base


def test_ensemble_against_brute_force_enumeration():
    for n in range(1, 7):
        for pattern in range(2**n):
            votes = [(pattern >> i) & 1 == 1 for i in range(n)]
            values = [float(10 + 3 * i) for i in range(n)]
            label, mmse = ensemble(list(zip(votes, values)))
            ayes = sum(votes)
            want_label = ayes > n / 2 or (n % 2 == 0 and ayes == n // 2)
            assert label == want_label
            assert mmse == statistics.median(values)


def test_empty_ensemble_rejected():
    with pytest.raises(ValueError, match="at least one member"):
        ensemble([])


# ---------------------------------------------------------------------------
# severity classes
# ---------------------------------------------------------------------------


def test_bucket_extremes():
    assert severity_class(30) is SeverityClass.NORMAL
    assert severity_class(0) is SeverityClass.SEVERE
    assert severity_class(24) is SeverityClass.NORMAL
    assert severity_class(23) is SeverityClass.MILD
    assert severity_class(19) is SeverityClass.MILD
    assert severity_class(18) is SeverityClass.MODERATE
    assert severity_class(10) is SeverityClass.MODERATE
    assert severity_class(9) is SeverityClass.SEVERE


def test_half_values_round_up():
    assert severity_class(23.5) is SeverityClass.NORMAL
    assert severity_class(23.49) is SeverityClass.MILD
    assert severity_class(9.5) is SeverityClass.MODERATE
    assert severity_class(18.5) is SeverityClass.MILD


def test_out_of_range_rejected():
    for bad in (-0.1, 30.1):
        with pytest.raises(ValueError, match="outside"):
            severity_class(bad)


def test_severity_monotone_in_mmse():
    order = [SeverityClass.SEVERE, SeverityClass.MODERATE,
             SeverityClass.MILD, SeverityClass.NORMAL]
    last = 0
    for v in np.linspace(0, 30, 601):
        rank = order.index(severity_class(float(v)))
        assert rank >= last
        last = rank


def test_integer_ranges_partition_0_to_30():
    seen = [severity_class(v) for v in range(31)]
    assert seen.count(SeverityClass.SEVERE) == 10
    assert seen.count(SeverityClass.MODERATE) == 9
    assert seen.count(SeverityClass.MILD) == 5
    assert seen.count(SeverityClass.NORMAL) == 7


def test_agreement_matches_brute_force_count():
    rng = np.random.default_rng(5)
    preds = rng.uniform(0, 30, size=100)
    truths = rng.integers(0, 31, size=100)
    got = severity_agreement(preds.tolist(), truths.tolist())
    same = sum(
        severity_class(float(p)) is severity_class(float(t))
        for p, t in zip(preds, truths)
    )
    assert got == pytest.approx(same / 100, abs=1e-12)


def test_constant_moderate_predictor_agreement():
    truths = list(range(31))  # one of each integer MMSE
    preds = [15.0] * 31
    want = sum(1 for t in truths if 10 <= t <= 18) / 31
    assert severity_agreement(preds, truths) == pytest.approx(want, abs=1e-12)


# ---------------------------------------------------------------------------
# severity report
# ---------------------------------------------------------------------------


def test_perfect_predictions_give_full_agreement(tmp_path):
    truths = [0, 5, 12, 20, 26, 30]
    path = tmp_path / "severity.svg"
    report = severity_report([float(t) for t in truths], truths, path)
    assert report.agreement == 1.0
    assert path.is_file()


def test_report_svg_is_valid_xml(tmp_path):
    rng = np.random.default_rng(6)
    truths = rng.integers(0, 31, size=40).tolist()
    preds = np.clip(rng.normal(np.asarray(truths, dtype=float), 4), 0, 30).tolist()
    path = tmp_path / "severity.svg"
    report = severity_report(preds, truths, path)
    root = ET.parse(path).getroot()
    assert root.tag.endswith("svg")
    circles = [e for e in root.iter() if e.tag.endswith("circle")]
    assert len(circles) == 40
    assert f"{report.agreement * 100:.2f}%" in report.svg


def test_report_rejects_empty_input():
    with pytest.raises(ValueError):
        severity_report([], [])


# ---------------------------------------------------------------------------
# CSV table
# ---------------------------------------------------------------------------


def test_metrics_csv_layout():
    truths = [False] * 24 + [True] * 24
    preds = [False] * 22 + [True] * 2 + [False] * 7 + [True] * 17
    m = classification_metrics(preds, truths)
    r = regression_metrics([10.0, 20.0], [12, 18])
    text = metrics_csv(m, r)
    lines = text.strip().split("\n")
    assert lines[0] == "class,precision,recall,f1,accuracy,rmse,r2,r2_pearson"
    assert lines[1].startswith("non-AD,0.7586,0.9167,")
    assert lines[2].startswith("AD,0.8947,0.7083,")
    assert lines[-1].startswith("overall,,,,0.8125,2.0000,")
    assert len(lines[0].split(",")) == len(lines[1].split(","))
