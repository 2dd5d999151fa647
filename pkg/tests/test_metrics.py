import itertools
import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from ctbnc.metrics import (
    ConfusionMatrix,
    Curve,
    CurveError,
    accuracy_interval,
    association_matrix,
    basic_measures,
    best_bijection_accuracy,
    brier,
    clustering_external,
    compare_pair,
    comparison_matrices,
    cumulative_response,
    lift_chart,
    macro_average,
    pr_curve,
    roc_curve,
)

# -- confusion measures -----------------------------------------------------


def test_diagonal_matrix():
    m = basic_measures(ConfusionMatrix(("a", "b", "c"), np.diag([3, 4, 5])))
    assert m.accuracy == 1.0
    for v in (m.precision, m.recall, m.f_measure):
        np.testing.assert_array_equal(v, 1.0)


def test_two_class_counts():
    m = basic_measures(ConfusionMatrix(("a", "b"), np.array([[8, 2], [3, 7]])))
    assert m.accuracy == 0.75
    assert m.error == 1 - m.accuracy
    assert m.precision[0] == pytest.approx(8 / 11)
    assert m.recall[0] == pytest.approx(8 / 10)
    assert m.specificity[0] == pytest.approx(7 / 10)
    assert m.f_measure[0] == pytest.approx(2 * (8 / 11) * 0.8 / (8 / 11 + 0.8))


def test_never_predicted_class_is_flagged():
    m = basic_measures(ConfusionMatrix(("a", "b"), np.array([[5, 0], [3, 0]])))
    assert m.precision[1] == 0.0 and m.undefined["precision"][1]
    assert m.recall[1] == 0.0 and not m.undefined["recall"][1]


def test_from_labels():
    cm = ConfusionMatrix.from_labels(("x", "y"), ["x", "y", "y"], ["x", "x", "y"])
    np.testing.assert_array_equal(cm.counts, [[1, 0], [1, 1]])


# -- Wilson interval --------------------------------------------------------


def _wilson(k, n, z):
    p = k / n
    c = (2 * n * p + z * z) / (2 * (n + z * z))
    h = z * math.sqrt(z * z + 4 * n * p * (1 - p)) / (2 * (n + z * z))
    return c - h, c + h


def test_interval_boundaries():
    for n in (1, 9, 40, 333):
        assert accuracy_interval(0, n)[0] == 0.0
        assert accuracy_interval(n, n)[1] == 1.0


def test_interval_closed_form():
    lo, hi = accuracy_interval(75, 100, 95)
    elo, ehi = _wilson(75, 100, 1.96)
    assert lo == pytest.approx(elo, abs=1e-9)
    assert hi == pytest.approx(ehi, abs=1e-9)


def test_interval_accepts_fractional_level():
    assert accuracy_interval(5, 10, 0.9) == accuracy_interval(5, 10, 90)


def test_disallowed_level():
    with pytest.raises(ValueError):
        accuracy_interval(5, 10, 85)


@given(st.integers(1, 500), st.data())
def test_interval_contains_estimate(n, data):
    k = data.draw(st.integers(0, n))
    lo, hi = accuracy_interval(k, n)
    assert 0.0 <= lo <= k / n <= hi <= 1.0


# -- curves -----------------------------------------------------------------


def _pairwise_auc(scores, truth):
    pos = [s for s, t in zip(scores, truth) if t]
    neg = [s for s, t in zip(scores, truth) if not t]
    wins = sum(1.0 if p > q else 0.5 if p == q else 0.0 for p in pos for q in neg)
    return wins / (len(pos) * len(neg))


def test_perfect_ranking():
    assert roc_curve([0.9, 0.8, 0.3, 0.1], [1, 1, 0, 0]).auc() == 1.0


def test_all_tied_scores():
    c = roc_curve([0.5] * 6, [1, 0, 1, 0, 0, 1])
    assert c.auc() == 0.5
    np.testing.assert_array_equal(c.x, [0, 1])


def test_six_instance_hand_case():
    scores = [0.9, 0.7, 0.7, 0.4, 0.3, 0.3]
    truth = [1, 0, 1, 1, 0, 0]
    assert roc_curve(scores, truth).auc() == pytest.approx(_pairwise_auc(scores, truth), abs=1e-12)


@settings(max_examples=200)
@given(st.lists(st.tuples(st.sampled_from([0.0, 0.1, 0.25, 0.5, 0.6, 0.9, 1.0]), st.booleans()),
                min_size=2, max_size=12))
def test_auc_matches_pair_counting(items):
    scores, truth = zip(*items)
    assume(any(truth) and not all(truth))
    assert roc_curve(scores, truth).auc() == pytest.approx(_pairwise_auc(scores, truth), abs=1e-12)


def test_roc_anchors():
    c = roc_curve([0.8, 0.6, 0.2], [1, 0, 1])
    assert (c.x[0], c.y[0]) == (0.0, 0.0)
    assert (c.x[-1], c.y[-1]) == (1.0, 1.0)


def test_pr_curve_extremes():
    c = pr_curve([0.9, 0.8, 0.2, 0.1], [1, 0, 1, 0])
    assert c.x[0] == 0.0 and c.x[-1] == 1.0
    assert c.y[0] == 1.0
    assert c.y[-1] == 0.5


def test_cumulative_response_and_lift():
    scores, truth = [0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0]
    cum = cumulative_response(scores, truth)
    np.testing.assert_allclose(cum.y, [0, 0.5, 1, 1, 1])
    lift = lift_chart(scores, truth)
    # top quarter captures half the positives: lift 2
    assert lift.y[0] == pytest.approx(2.0)
    assert lift.y[-1] == pytest.approx(1.0)


def test_single_class_truth_names_the_class():
    with pytest.raises(CurveError, match="'k'"):
        roc_curve([0.1, 0.2], [1, 1], "k")


def _staircase(rng):
    n = int(rng.integers(4, 12))
    scores = rng.integers(0, 5, size=n) / 4
    truth = np.r_[1, 0, rng.integers(0, 2, size=n - 2)].astype(bool)
    return roc_curve(scores, truth)


def test_identical_folds_have_zero_bars():
    c = roc_curve([0.9, 0.5, 0.4, 0.1], [1, 0, 1, 0])
    avg = macro_average([c, c, c])
    np.testing.assert_array_equal(avg.bar, 0.0)
    np.testing.assert_allclose(avg.y, c.at(avg.x))


def test_two_offset_folds():
    x = np.linspace(0, 1, 5)
    a = Curve(x, 0.2 + 0.5 * x)
    b = Curve(x, 0.4 + 0.5 * x)
    avg = macro_average([a, b], 95)
    assert len(avg.x) == 101
    np.testing.assert_allclose(avg.y, 0.3 + 0.5 * avg.x, atol=1e-12)
    # sample std of {0, 0.2} is 0.2 / sqrt(2)
    np.testing.assert_allclose(avg.bar, 1.96 * (0.2 / math.sqrt(2)) / math.sqrt(2), atol=1e-12)


def _interp_oracle(curve, g):
    # scan segments; at a vertical jump take the highest point
    at_x = [y for x, y in zip(curve.x, curve.y) if x == g]
    if at_x:
        return max(at_x)
    for i in range(len(curve.x) - 1):
        if curve.x[i] < g < curve.x[i + 1]:
            w = (g - curve.x[i]) / (curve.x[i + 1] - curve.x[i])
            return curve.y[i] + w * (curve.y[i + 1] - curve.y[i])
    raise AssertionError("grid point outside curve")


@pytest.mark.parametrize("seed", range(5))
def test_grid_average_matches_pointwise_oracle(seed):
    rng = np.random.default_rng(seed)
    curves = [_staircase(rng) for _ in range(4)]
    avg = macro_average(curves)
    expected = [np.mean([_interp_oracle(c, g) for c in curves]) for g in avg.x]
    np.testing.assert_allclose(avg.y, expected, atol=1e-9)


def test_macro_needs_two_curves():
    with pytest.raises(ValueError):
        macro_average([Curve([0, 1], [0, 1])])


# -- Brier ------------------------------------------------------------------


def test_brier_values():
    assert brier(np.array([[1.0, 0.0], [0.0, 1.0]]), [0, 1]) == 0.0
    assert brier(np.array([[0.0, 1.0], [1.0, 0.0]]), [0, 1]) == 2.0
    assert brier(np.full((3, 2), 0.5), [0, 1, 0]) == 0.5


# -- model comparison -------------------------------------------------------


def test_identical_accuracies():
    acc = [0.7, 0.8, 0.75, 0.9]
    mats = comparison_matrices({"A": acc, "B": acc})
    assert all(m[0][1] == "0" and m[1][0] == "0" for m in mats.values())


def test_constant_improvement_is_up_everywhere():
    rng = np.random.default_rng(0)
    a = rng.uniform(0.3, 0.7, size=10)
    mats = comparison_matrices({"A": a, "B": a + 0.2})
    assert set(mats) == {99.0, 95.0, 90.0, 80.0, 70.0}
    for m in mats.values():
        assert m[0][1] == "UP" and m[1][0] == "LF"
        assert m[0][0] == "" and m[1][1] == ""


_fold_acc = st.lists(st.floats(0, 1), min_size=10, max_size=10)


@given(_fold_acc, _fold_acc, st.sampled_from([99.0, 95.0, 90.0, 80.0, 70.0]))
def test_verdicts_are_antisymmetric(a, b, level):
    flip = {"UP": "LF", "LF": "UP", "0": "0"}
    assert compare_pair(b, a, level) == flip[compare_pair(a, b, level)]


@given(_fold_acc, _fold_acc, st.sampled_from([-0.25, 0.125, 0.5]))
def test_verdicts_ignore_common_shift(a, b, c):
    # dyadic shifts keep the differences exact in floating point
    a, b = np.array(a), np.array(b)
    assert compare_pair(a + c, b + c, 90) == compare_pair(a, b, 90)


def test_t_statistic_against_hand_computation():
    a = [0.70, 0.72, 0.68, 0.71, 0.69]
    b = [0.74, 0.73, 0.71, 0.76, 0.70]
    d = np.subtract(b, a)
    t = d.mean() / (d.std(ddof=1) / math.sqrt(5))
    # t is about 3.21: beyond the 95% critical value 2.776 but not the 99% one 4.604
    assert 2.776 < t < 4.604
    assert compare_pair(a, b, 95) == "UP"
    assert compare_pair(a, b, 99) == "0"


def test_unequal_fold_counts():
    with pytest.raises(ValueError):
        comparison_matrices({"A": [0.1, 0.2], "B": [0.1, 0.2, 0.3]})


# -- clustering measures ----------------------------------------------------


def _brute_pairs(clusters, classes):
    a = b = c = d = 0
    for i, j in itertools.combinations(range(len(clusters)), 2):
        same_k = clusters[i] == clusters[j]
        same_c = classes[i] == classes[j]
        a += same_k and same_c
        b += same_k and not same_c
        c += same_c and not same_k
        d += not same_k and not same_c
    return a, b, c, d


def test_identical_partitions():
    labels = list("aabbbc")
    ext = clustering_external(association_matrix(labels, labels)[0])
    assert ext.rand == ext.jaccard == ext.fowlkes_mallows == 1.0


def test_six_item_example():
    clusters = [1, 1, 1, 2, 2, 2]
    classes = [1, 1, 2, 2, 3, 3]
    a, b, c, d = _brute_pairs(clusters, classes)
    assert a + b + c + d == 15
    ext = clustering_external(association_matrix(clusters, classes)[0])
    assert ext.pair_counts == (a, b, c, d)
    assert ext.rand == pytest.approx((a + d) / 15)
    assert ext.jaccard == pytest.approx(a / (a + b + c))
    assert ext.fowlkes_mallows == pytest.approx(a / math.sqrt((a + b) * (a + c)))


def test_singletons_against_one_class():
    n = 5
    ext = clustering_external(association_matrix(list(range(n)), ["x"] * n)[0])
    assert ext.pair_counts[0] == 0
    assert ext.jaccard == 0.0
    assert "jaccard" not in ext.flags


_partition = st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3)), min_size=2, max_size=15)


@settings(max_examples=100)
@given(_partition, st.permutations(range(4)), st.permutations(range(4)))
def test_indices_ignore_relabeling(items, p1, p2):
    clusters, classes = zip(*items)
    base = clustering_external(association_matrix(clusters, classes)[0])
    moved = clustering_external(association_matrix([p1[k] for k in clusters], [p2[c] for c in classes])[0])
    assert moved.rand == pytest.approx(base.rand)
    assert moved.jaccard == pytest.approx(base.jaccard)
    assert moved.fowlkes_mallows == pytest.approx(base.fowlkes_mallows)
    assert tuple(base.pair_counts) == _brute_pairs(clusters, classes)
    for v in (base.rand, base.jaccard, base.fowlkes_mallows):
        assert 0.0 <= v <= 1.0
    assert base.association.sum() == len(items)


def test_best_bijection():
    counts = np.array([[1, 9], [8, 2]])
    assert best_bijection_accuracy(counts) == pytest.approx(17 / 20)
