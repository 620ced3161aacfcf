import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_trace
from dgmbench.metrics import (
    compute_report,
    cost_composition,
    cost_of_convergence,
    divergence_selection_correlation,
    malicious_selection_rate,
    metrics_csv,
    payment_gini,
    per_seller_selection_rate,
    selection_diversity,
    selection_stability,
    summarize_reports,
)


def test_coc_example():
    assert cost_of_convergence([0.5, 0.72, 0.8], [5, 4, 6], 0.7) == (9, 2)
    assert cost_of_convergence([0.5, 0.72, 0.8], [5, 4, 6], 0.9) is None
    with pytest.raises(ValueError):
        cost_of_convergence([0.5], [1, 2], 0.1)


def test_msr_two_thirds():
    trace = make_trace([[0, 1], [1]], malicious=[1], num_sellers=2)
    assert malicious_selection_rate(trace) == pytest.approx(2 / 3)
    assert per_seller_selection_rate(trace, [1]) == 1.0
    assert per_seller_selection_rate(trace, [0]) == 0.5


def test_msr_undefined_without_selection():
    assert malicious_selection_rate(make_trace([[], []], sampled=[[0], [0]])) is None


def test_gini_examples():
    assert payment_gini([0, 0, 0, 4]) == pytest.approx(0.75)
    assert payment_gini([3, 3, 3]) == 0.0
    assert payment_gini([0, 0]) == 0.0
    with pytest.raises(ValueError):
        payment_gini([])


def test_entropy_example():
    trace = make_trace([[0, 1], [0, 2]], num_sellers=4)
    h, hn = selection_diversity(trace)
    assert h == pytest.approx(1.5) and hn == pytest.approx(0.75)
    h1, hn1 = selection_diversity(make_trace([[0], [0]], num_sellers=1))
    assert h1 == 0.0 and hn1 == 0.0


def test_jaccard_example():
    trace = make_trace([[0, 1], [1, 2]])
    assert selection_stability(trace) == pytest.approx(1 / 3)
    assert selection_stability(make_trace([[], []], sampled=[[0], [0]])) == 1.0
    assert selection_stability(make_trace([[0]])) is None


def test_pearson_two_points():
    trace = make_trace([[0]], sampled=[[0, 1]], divergence=[{0: 1.0, 1: 2.0}])
    assert divergence_selection_correlation(trace) == pytest.approx(-1.0)


def test_pearson_constant_divergence_is_undefined():
    trace = make_trace([[0]], sampled=[[0, 1]], divergence=[{0: 1.0, 1: 1.0}])
    assert divergence_selection_correlation(trace) is None


def test_pearson_null_is_small():
    rng = random.Random(0)
    sampled, sel, div = [], [], []
    for _ in range(1000):
        samp = list(range(10))
        sampled.append(samp)
        div.append({i: rng.random() for i in samp})
        sel.append([i for i in samp if rng.random() < 0.5])
    trace = make_trace(sel, sampled, div, num_sellers=10)
    assert abs(divergence_selection_correlation(trace)) < 0.05


def test_cost_composition_example():
    trace = make_trace([[0, 1, 2], [0, 2, 1]], malicious=[2], num_sellers=3)
    assert cost_composition(trace) == (2.0, 1.0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 50), min_size=1, max_size=12), st.integers(1, 9))
def test_gini_scale_invariant(values, c):
    assert payment_gini([c * v for v in values]) == pytest.approx(payment_gini(values), abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6))
def test_entropy_relabel_invariant(seed):
    rng = random.Random(seed)
    sel = [[i for i in range(6) if rng.random() < 0.5] for _ in range(5)]
    perm = list(range(6))
    rng.shuffle(perm)
    a = selection_diversity(make_trace(sel))
    b = selection_diversity(make_trace([[perm[i] for i in s] for s in sel]))
    if a is None:
        assert b is None
    else:
        assert a[0] == pytest.approx(b[0], abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.1, 10), st.floats(-5, 5))
def test_pearson_affine_invariant(seed, a, b):
    rng = random.Random(seed)
    sampled = [list(range(5)) for _ in range(4)]
    div = [{i: rng.random() for i in range(5)} for _ in range(4)]
    sel = [[i for i in range(5) if rng.random() < 0.5] for _ in range(4)]
    r1 = divergence_selection_correlation(make_trace(sel, sampled, div, 5))
    div2 = [{i: a * v + b for i, v in d.items()} for d in div]
    r2 = divergence_selection_correlation(make_trace(sel, sampled, div2, 5))
    if r1 is None:
        assert r2 is None
    else:
        assert r1 == pytest.approx(r2, abs=1e-9)


def test_report_and_csv():
    trace = make_trace([[0, 1], [1]], malicious=[1], num_sellers=3, accuracy=[0.75, 0.9])
    rep = compute_report(trace)
    s = rep.summary
    assert s["total_cost"] == 3 and s["coc_0.70"] == 2 and s["tstar_0.85"] == 2
    assert s["bsr"] == pytest.approx(0.25) and s["msr_rate"] == 1.0
    assert rep.payments == {0: 1, 1: 2, 2: 0}
    text = metrics_csv([rep])
    assert text.splitlines()[0] == "repeat,round,cost,accuracy,asr,msr_fraction,selected_ids"
    assert text.splitlines()[1] == "0,1,2,0.75,,0.5,0;1"


def test_summary_skips_missing():
    a = compute_report(make_trace([[0]], accuracy=[0.9]))
    b = compute_report(make_trace([[0]], accuracy=[0.6]))
    mean, std = summarize_reports([a, b], ["coc_0.70", "final_accuracy"])
    assert mean["coc_0.70"] == 1 and std["coc_0.70"] == 0.0
    assert mean["final_accuracy"] == pytest.approx(0.75)
    assert std["final_accuracy"] == pytest.approx(0.15)
