import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctbnc.clustering import EmConfig
from ctbnc.data import PartitionSpec
from ctbnc.estimation import learn_parameters
from ctbnc.inference import classify_dataset
from ctbnc.model import ctnb_parents
from ctbnc.synthesis import FactorySpec, new_model, sample_dataset
from ctbnc.validation import (
    ValidationError,
    clustering_in_sample,
    cross_validate,
    hold_out,
    hold_out_split,
    macro_performances,
    make_folds,
    micro_performances,
    run_performances,
)

GEN = new_model(FactorySpec((3, 3, 2, 2), ((0.5, 5.0),), seed=21))
DATA = sample_dataset(GEN, 60, 3.0, seed=22)


def learner(train):
    return learn_parameters(train, GEN.schema, ctnb_parents(len(GEN.schema)))


def test_seventy_thirty_split():
    d = DATA.take(range(10))
    train, test = hold_out_split(d, 0.7, 0)
    assert (len(train), len(test)) == (7, 3)
    assert set(train.identifiers).isdisjoint(test.identifiers)


def test_split_is_seeded():
    a = hold_out_split(DATA, 0.7, 5)
    b = hold_out_split(DATA, 0.7, 5)
    assert a[0].identifiers == b[0].identifiers


def test_explicit_test_set_is_used_whole():
    test = sample_dataset(GEN, 8, 3.0, seed=23)
    run = hold_out(DATA, 0.7, 0, learner, classify_dataset, test=test)
    assert run.train_ids == tuple(DATA.identifiers)
    assert len(run.results) == 8
    assert len(run.inference_times) == 8


def test_degenerate_split():
    with pytest.raises(ValidationError):
        hold_out_split(DATA.take([0, 1]), 0.1, 0)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 60), st.integers(0, 1000))
def test_folds_partition_the_data(k, seed):
    folds = make_folds(DATA, k, seed)
    ids = [i for f in folds.folds for i in f]
    assert len(ids) == len(set(ids))
    assert set(ids) == set(DATA.identifiers)
    sizes = [len(f) for f in folds.folds]
    assert max(sizes) - min(sizes) <= 1


def test_leave_one_out():
    d = DATA.take(range(4))
    cv = cross_validate(d, 4, 0, learner, classify_dataset)
    assert [len(f) for f in cv.partition.folds] == [1, 1, 1, 1]
    assert len(cv.runs) == 4


def test_partition_must_match():
    bad = PartitionSpec((tuple(DATA.identifiers[:30]), tuple(DATA.identifiers[30:-1])))
    with pytest.raises(ValidationError, match="only in data"):
        cross_validate(DATA, 2, 0, learner, classify_dataset, partition=bad)


def test_micro_confusion_is_sum_of_folds():
    cv = cross_validate(DATA, 5, 1, learner, classify_dataset)
    classes = GEN.classes
    per_fold = [run_performances(r, classes, 90) for r in cv.runs]
    micro = micro_performances(cv.runs, classes, 90)
    total = per_fold[0].confusion
    for p in per_fold[1:]:
        total = total + p.confusion
    np.testing.assert_array_equal(micro.confusion.counts, total.counts)
    assert micro.measures.accuracy == micro.confusion.correct / micro.confusion.total
    macro = macro_performances(per_fold, 90)
    assert macro.accuracy == pytest.approx(np.mean([p.measures.accuracy for p in per_fold]))


def test_partition_replay_reproduces_predictions():
    first = cross_validate(DATA, 5, 3, learner, classify_dataset)
    again = cross_validate(DATA, 5, 99, learner, classify_dataset, partition=first.partition)
    for a, b in zip(first.runs, again.runs):
        assert a.test_ids == b.test_ids
        for x, y in zip(a.results, b.results):
            assert x.identifier == y.identifier and x.predicted == y.predicted
            np.testing.assert_array_equal(x.posterior, y.posterior)


def test_parallel_folds_match_serial():
    a = cross_validate(DATA, 4, 2, learner, classify_dataset)
    b = cross_validate(DATA, 4, 2, learner, classify_dataset, jobs=3)
    for x, y in zip(a.runs, b.runs):
        assert [r.predicted for r in x.results] == [r.predicted for r in y.results]


def test_manual_cluster_count_suppresses_performances():
    run = clustering_in_sample(DATA, EmConfig("hard", 6, 0.05, n_clusters=5))
    assert run.manual_clusters
    assert run.external is None
    assert len(run.results) == len(DATA)


def test_default_cluster_count_reports_performances():
    run = clustering_in_sample(DATA, EmConfig(max_iterations=3))
    assert run.external is not None
    assert run.external.association.sum() == len(DATA)
    assert 0.0 <= run.external.rand <= 1.0
