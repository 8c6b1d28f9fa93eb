import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from sigver.errors import ConfigError, ReportingError
from sigver.metrics import (EvalReport, UserScores, aggregate, auc, average_error_rate, eer, far_frr_at_threshold,
                            format_percent, roc_curve, user_metrics)

scores = st.lists(st.floats(-10, 10, allow_nan=False), min_size=1, max_size=40)
coarse = st.lists(st.integers(-5, 5).map(float), min_size=1, max_size=30)


def test_far_frr_accepts_at_threshold():
    frr, far = far_frr_at_threshold([0.0, 1.0, -1.0, 2.0], [0.0, -3.0], 0.0)
    assert frr == 0.25  # only -1 rejected; a score equal to t is accepted
    assert far == 0.5
    assert far_frr_at_threshold([1.0], [], 0.0) == (0.0, None)


def test_roc_endpoints_and_order():
    pts = roc_curve([0.9, 0.4], [0.1, 0.5])
    fars = [p.far for p in pts]
    assert fars == sorted(fars)
    assert (pts[0].far, pts[0].frr) == (0.0, 1.0)
    assert (pts[-1].far, pts[-1].frr) == (1.0, 0.0)


def test_eer_examples():
    assert eer([0.9, 0.8], [0.1, 0.2]) == 0.0
    assert eer([0.9, 0.1], [0.8, 0.2]) == 0.5
    assert eer([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == pytest.approx(0.5)


def test_auc_examples():
    assert auc([1.0, 2.0], [0.0]) == 1.0
    assert auc([0.0], [1.0, 2.0]) == 0.0
    assert auc([1.0, 1.0], [1.0]) == 0.5


@settings(max_examples=150, deadline=None)
@given(scores, scores)
def test_auc_equals_pair_count(g, f):
    assert auc(g, f) == float(oracles.auc_pairs(g, f))


@settings(max_examples=150, deadline=None)
@given(st.lists(st.floats(-10, 10, allow_nan=False), min_size=1, max_size=40, unique=True), st.data())
def test_eer_close_to_sweep_for_distinct_scores(pool, data):
    split = data.draw(st.integers(1, len(pool))) if len(pool) > 1 else 1
    g, f = pool[:split], pool[split:] or [min(pool) - 1.0]
    assert abs(eer(g, f) - oracles.eer_sweep(g, f)) <= 1 / (2 * min(len(g), len(f))) + 1e-12


@settings(max_examples=150, deadline=None)
@given(coarse, coarse)
def test_eer_bounded_by_crossing_rates(g, f):
    # with ties FAR and FRR can jump together; the EER still lies between the
    # rates on either side of the crossing and inside [0, 1]
    value = eer(g, f)
    assert 0.0 <= value <= 1.0
    pts = roc_curve(g, f)[::-1]
    for a, b in zip(pts, pts[1:]):
        if a.far - a.frr >= 0 >= b.far - b.frr:
            lo = min(a.far, a.frr, b.far, b.frr)
            hi = max(a.far, a.frr, b.far, b.frr)
            assert lo - 1e-12 <= value <= hi + 1e-12
            break


@settings(max_examples=80, deadline=None)
@given(coarse, coarse, st.integers(1, 9), st.integers(-5, 5))
def test_metrics_invariant_under_increasing_maps(g, f, scale, shift):
    g2 = [scale * v + shift for v in g]
    f2 = [scale * v + shift for v in f]
    assert auc(g, f) == auc(g2, f2)
    assert eer(g, f) == pytest.approx(eer(g2, f2), abs=1e-12)


def test_empty_scores_rejected():
    with pytest.raises(ReportingError):
        eer([], [1.0])
    with pytest.raises(ReportingError):
        auc([1.0], [])


def test_format_percent_rounding():
    assert format_percent(average_error_rate(0.0217, 0.13)) == "7.59"
    assert format_percent(0.07585) == "7.59"
    assert format_percent(0.0) == "0.00"
    assert format_percent(None) == "-"
    assert format_percent(float("nan")) == "-"


def test_four_way_aer_arithmetic():
    assert format_percent(average_error_rate(0.0717, 0.0, 0.0, 0.0867)) == "3.96"
    with pytest.raises(ReportingError):
        average_error_rate(0.1, None)


def test_user_metrics_gpds_and_brazilian():
    s = UserScores(genuine=[1.0, 0.5, -0.2, 2.0], skilled=[-1.0, 0.3], random=[-2.0], simple=[-1.5, 0.1])
    m = user_metrics(3, s)
    assert m.FRR == 0.25 and m.FAR_skilled == 0.5 and m.FAR_random == 0.0 and m.FAR_simple == 0.5
    assert m.AER == pytest.approx((0.25 + 0.0 + 0.5 + 0.5) / 4)
    assert m.AER_genuine_skilled == pytest.approx(0.375)
    assert m.AUC == pytest.approx(7 / 8)


def test_aggregate_means_and_protocol_requirements():
    per_user = {
        1: UserScores([1.0, 1.0], skilled=[-1.0, -1.0]),
        2: UserScores([1.0, -1.0], skilled=[1.0, -1.0]),
    }
    report = aggregate(per_user)
    assert report.aggregate.FRR == 0.25
    assert report.aggregate.FAR_skilled == 0.25
    assert report.mean_eer == pytest.approx(np.mean([eer(s.genuine, s.skilled) for s in per_user.values()]))
    assert report.mean_auc == pytest.approx(np.mean([auc(s.genuine, s.skilled) for s in per_user.values()]))
    with pytest.raises(ReportingError):
        aggregate(per_user, protocol="brazilian")
    with pytest.raises(ConfigError):
        aggregate(per_user, protocol="other")


def test_report_csv_and_summary():
    report = aggregate({7: UserScores([1.0, -1.0], skilled=[-2.0, 0.5])})
    csv_text = report.to_csv("SGEV 1 config=abc")
    lines = csv_text.splitlines()
    assert lines[0] == "# SGEV 1 config=abc"
    assert lines[1].startswith("scope,user,FRR")
    assert lines[2].startswith("user,7,0.5,")
    assert lines[3].startswith("mean,,0.5,")
    summary = report.summary()
    assert "Mean AUC" in summary and "50.00" in summary and "(1 users" in summary


def test_report_needs_users():
    with pytest.raises(ReportingError):
        EvalReport([])
    with pytest.raises(ConfigError):
        UserScores([])
