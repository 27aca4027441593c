"""Tests for the conflict metrics and the switching check."""
import numpy as np
import pytest
from numpy.testing import assert_array_equal

from nflindex.conflict import ConflictHistogram, LinearModel, conflict_degrees, conflict_summary, evaluate_switch, fit_linear, \
    scaled_positions, switch_decision, tail_conflict_degree, tail_of_keys
from nflindex.errors import ConflictError, EmptyHistogram


def test_fit_linear_examples():
    assert fit_linear([1.0, 2.0, 3.0], [0.0, 2.0, 4.0]) == LinearModel(slope=2.0, intercept=-2.0)
    assert fit_linear([5.0], [0.0]) == LinearModel(slope=0.0, intercept=0.0)
    assert fit_linear([1.0, 2.0], [0.0, 0.0]) == LinearModel(slope=0.0, intercept=0.0)


def test_fit_linear_without_key_spread():
    assert fit_linear([4.0, 4.0, 4.0], [0.0, 2.0, 4.0]) == LinearModel(slope=0.0, intercept=2.0)


def test_fit_linear_errors():
    with pytest.raises(ConflictError):
        fit_linear([], [])
    with pytest.raises(ConflictError):
        fit_linear([1.0, 2.0], [0.0])


def test_predict_rounds_half_up():
    model = LinearModel(slope=1.0, intercept=0.0)
    assert model.predict(2.5) == 3
    assert model.predict(-0.5) == 0
    assert model.predict(1.49) == 1
    assert_array_equal(model.predict_batch([2.5, -0.5, 1.49]), [3, 0, 1])


def test_predict_is_clamped():
    model = LinearModel(slope=1e300, intercept=0.0)
    assert model.predict(1e300) == 2 ** 62
    assert model.predict(-1e300) == -2 ** 62


def test_conflict_degrees_examples():
    identity = LinearModel(slope=1.0, intercept=0.0)
    assert conflict_degrees([1.2, 1.4, 2.7], identity).degrees == {1: 2, 3: 1}
    assert conflict_degrees([1.0, 2.0, 3.0], identity).degrees == {1: 1, 2: 1, 3: 1}
    flat = conflict_degrees(np.linspace(0.0, 1.0, 17), LinearModel(slope=0.0, intercept=4.0))
    assert flat.degrees == {4: 17}


def test_histogram_total_is_key_count():
    keys = np.sort(np.random.default_rng(0).lognormal(0.0, 2.0, size=5000))
    hist = conflict_degrees(keys, fit_linear(keys, scaled_positions(keys.size, 2.0)))
    assert hist.total == keys.size


def test_tail_conflict_degree_examples():
    assert tail_conflict_degree(ConflictHistogram(degrees={0: 1, 1: 1, 2: 1, 3: 1, 4: 5, 5: 9}), 0.99) == 5
    ranked = ConflictHistogram(degrees={position: position + 1 for position in range(1000)})
    assert tail_conflict_degree(ranked, 0.99) == 990
    assert tail_conflict_degree(ConflictHistogram(degrees={0: 4, 7: 4, 9: 4}), 0.5) == 4
    assert tail_conflict_degree(ConflictHistogram(degrees={3: 6}), 0.99) == 6


def test_tail_conflict_degree_of_empty_histogram():
    with pytest.raises(EmptyHistogram):
        tail_conflict_degree(ConflictHistogram(), 0.99)


def test_conflict_summary():
    summary = conflict_summary(ConflictHistogram(degrees={0: 1, 1: 3, 5: 2}), 0.99)
    assert summary.keys == 6
    assert summary.occupied == 3
    assert summary.mean_degree == 2.0
    assert summary.max_degree == 3
    assert summary.tail_degree == 2
    assert summary.as_dict()['tail_degree'] == 2


def test_uniform_keys_have_a_small_tail():
    keys = np.sort(np.random.default_rng(4).uniform(0.0, 1e12, size=100_000))
    assert tail_of_keys(keys, 0.99, 2.0) <= 3


def test_switch_keeps_flow_that_reduces_the_tail():
    skewed = np.exp(np.linspace(0.0, 20.0, 1000))
    evenly = np.arange(1000, dtype=np.float64)
    report = evaluate_switch(skewed, evenly, 0.99)
    assert report.tail_before > report.tail_after == 1
    assert report.use_flow
    assert report.order_preserved


def test_switch_drops_flow_that_increases_the_tail():
    evenly = np.arange(1000, dtype=np.float64)
    assert not switch_decision(evenly, np.exp(np.linspace(0.0, 20.0, 1000)), 0.99)


def test_switch_keeps_flow_on_ties():
    keys = np.arange(100, dtype=np.float64)
    assert switch_decision(keys, keys * 3.0 + 7.0, 0.99)


def test_switch_drops_flow_that_breaks_the_order():
    keys = np.arange(100, dtype=np.float64)
    report = evaluate_switch(keys, keys[::-1].copy(), 0.99)
    assert not report.order_preserved
    assert not report.use_flow
    collapsed = keys.copy()
    collapsed[10] = collapsed[11]
    assert not switch_decision(keys, collapsed, 0.99)


def test_switch_needs_two_aligned_keys():
    with pytest.raises(ConflictError):
        evaluate_switch([1.0], [1.0], 0.99)
    with pytest.raises(ConflictError):
        evaluate_switch([1.0, 2.0], [1.0, 2.0, 3.0], 0.99)
