"""Hold-out, cross-validation and in-sample clustering runs, plus their summaries."""

from __future__ import annotations

import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .clustering import EmConfig, EmResult, em_cluster
from .data import Dataset, PartitionSpec
from .estimation import Hyperparameters
from .inference import ClassificationResult, classify_dataset
from .metrics import (
    CURVES,
    BasicMeasures,
    ClusteringExternal,
    ConfusionMatrix,
    Curve,
    CurveError,
    accuracy_interval,
    association_matrix,
    basic_measures,
    brier,
    clustering_external,
    macro_average,
)

Learner = Callable[[Dataset], object]
Classifier = Callable[[object, Dataset], list]


class ValidationError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class RunResult:
    """One train/test round."""

    fold: int
    train_ids: tuple[str, ...]
    test_ids: tuple[str, ...]
    model: object
    results: tuple[ClassificationResult, ...]
    learn_time: float
    inference_times: np.ndarray


def _timed_run(fold, train: Dataset, test: Dataset, learner: Learner, classifier: Classifier) -> RunResult:
    start = time.perf_counter()
    model = learner(train)
    learn_time = time.perf_counter() - start
    results, times = [], []
    for i in range(len(test)):
        one = test.take([i])
        start = time.perf_counter()
        results.extend(classifier(model, one))
        times.append(time.perf_counter() - start)
    return RunResult(fold, tuple(train.identifiers), tuple(test.identifiers), model, tuple(results),
                     learn_time, np.asarray(times))


def split_sizes(n: int, fraction: float) -> int:
    if not 0.0 < fraction < 1.0:
        raise ValidationError(f"the training fraction must lie in (0, 1), got {fraction}")
    n_train = int(math.floor(fraction * n + 0.5))
    if n_train == 0 or n_train == n:
        raise ValidationError(
            f"a {fraction} split of {n} trajectories leaves an empty training or test set")
    return n_train


def hold_out_split(d: Dataset, fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Unstratified seeded split; both parts keep the dataset's order."""
    n_train = split_sizes(len(d), fraction)
    perm = np.random.default_rng(seed).permutation(len(d))
    train = np.sort(perm[:n_train])
    test = np.sort(perm[n_train:])
    return d.take(train), d.take(test)


def hold_out(d: Dataset, fraction: float, seed: int, learner: Learner, classifier: Classifier,
             test: Dataset | None = None) -> RunResult:
    """With ``test`` given, ``d`` is used whole for training and no split happens."""
    if test is None:
        train, test = hold_out_split(d, fraction, seed)
    else:
        train = d
    if len(test) == 0:
        raise ValidationError("the test set is empty")
    return _timed_run(0, train, test, learner, classifier)


def make_folds(d: Dataset, k: int, seed: int) -> PartitionSpec:
    """Seeded shuffle then round-robin, so fold sizes differ by at most one."""
    n = len(d)
    if k < 2:
        raise ValidationError(f"cross-validation needs at least 2 folds, got {k}")
    if k > n:
        raise ValidationError(f"{k} folds for {n} trajectories")
    perm = np.random.default_rng(seed).permutation(n)
    fold_of = np.empty(n, dtype=np.int64)
    fold_of[perm] = np.arange(n) % k
    ids = d.identifiers
    return PartitionSpec(tuple(tuple(ids[i] for i in range(n) if fold_of[i] == f) for f in range(k)))


def check_partition(d: Dataset, partition: PartitionSpec) -> None:
    ids = set(d.identifiers)
    listed = set(partition.membership)
    if ids != listed:
        missing = sorted(ids - listed)
        extra = sorted(listed - ids)
        raise ValidationError(
            f"partition does not match the dataset: only in data {missing}, only in partition {extra}")


@dataclass(frozen=True, eq=False)
class CvResult:
    partition: PartitionSpec
    runs: tuple[RunResult, ...]


def cross_validate(d: Dataset, k: int, seed: int, learner: Learner, classifier: Classifier,
                   partition: PartitionSpec | None = None, jobs: int = 1) -> CvResult:
    if partition is None:
        partition = make_folds(d, k, seed)
    else:
        check_partition(d, partition)
    membership = partition.membership
    order = {ident: i for i, ident in enumerate(d.identifiers)}

    def run(f):
        test_pos = sorted(order[i] for i in partition.folds[f])
        train_pos = [i for i, ident in enumerate(d.identifiers) if membership[ident] != f]
        return _timed_run(f, d.take(train_pos), d.take(test_pos), learner, classifier)

    folds = range(partition.n_folds)
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            runs = list(pool.map(run, folds))
    else:
        runs = [run(f) for f in folds]
    return CvResult(partition, tuple(runs))


# ---------------------------------------------------------------------------
# summaries


@dataclass(frozen=True, eq=False)
class Performances:
    classes: tuple[str, ...]
    confusion: ConfusionMatrix
    measures: BasicMeasures
    accuracy_interval: tuple[float, float]
    roc_auc: np.ndarray
    pr_auc: np.ndarray
    brier: float
    learn_times: np.ndarray
    inference_times: np.ndarray
    curves: dict = field(default_factory=dict)


def class_curves(results: Sequence[ClassificationResult], classes: Sequence[str]) -> dict:
    """``{kind: {class: Curve or None}}`` with the class posterior as score."""
    post = np.array([r.posterior for r in results])
    truth = np.array([r.true_class for r in results])
    out = {kind: {} for kind in CURVES}
    for k, c in enumerate(classes):
        for kind, fn in CURVES.items():
            try:
                out[kind][c] = fn(post[:, k], truth == c, c)
            except CurveError:
                out[kind][c] = None
    return out


def summarize(results: Sequence[ClassificationResult], classes: Sequence[str], confidence: float,
              learn_times=(), inference_times=()) -> Performances:
    classes = tuple(classes)
    for r in results:
        if r.true_class is None:
            raise ValidationError(f"{r.identifier}: performances need labeled test data")
        if r.true_class not in classes:
            raise ValidationError(f"{r.identifier}: class {r.true_class!r} unknown to the model")
    cm = ConfusionMatrix.from_labels(classes, [r.true_class for r in results],
                                     [r.predicted for r in results])
    measures = basic_measures(cm)
    curves = class_curves(results, classes)
    roc = np.array([c.auc() if c is not None else np.nan for c in curves["ROC"].values()])
    pr = np.array([c.auc() if c is not None else np.nan for c in curves["PR"].values()])
    idx = {c: k for k, c in enumerate(classes)}
    b = brier(np.array([r.posterior for r in results]), [idx[r.true_class] for r in results])
    return Performances(classes, cm, measures, accuracy_interval(cm.correct, cm.total, confidence),
                        roc, pr, b, np.asarray(learn_times, dtype=float),
                        np.asarray(inference_times, dtype=float), curves)


def run_performances(run: RunResult, classes, confidence) -> Performances:
    return summarize(run.results, classes, confidence, [run.learn_time], run.inference_times)


def micro_performances(runs: Sequence[RunResult], classes, confidence) -> Performances:
    """Pooled over all test instances of all folds."""
    results = [r for run in runs for r in run.results]
    return summarize(results, classes, confidence, [run.learn_time for run in runs],
                     np.concatenate([run.inference_times for run in runs]))


@dataclass(frozen=True, eq=False)
class MacroPerformances:
    accuracy: float
    accuracy_std: float
    error: float
    precision: np.ndarray
    recall: np.ndarray
    specificity: np.ndarray
    fp_rate: np.ndarray
    f_measure: np.ndarray
    roc_auc: np.ndarray
    pr_auc: np.ndarray
    brier: float
    curves: dict


def _nanmean(rows) -> np.ndarray:
    # classes absent from a fold leave NaN AUCs; all-NaN columns stay NaN
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return np.nanmean(np.array(rows, dtype=float), axis=0)


def macro_performances(per_fold: Sequence[Performances], confidence) -> MacroPerformances:
    """Means of per-fold measures and vertically averaged curves."""
    acc = np.array([p.measures.accuracy for p in per_fold])

    def mean(attr):
        return _nanmean([getattr(p.measures, attr) for p in per_fold])

    curves = {}
    classes = per_fold[0].classes
    for kind in CURVES:
        curves[kind] = {}
        for c in classes:
            fold_curves = [p.curves[kind][c] for p in per_fold if p.curves[kind][c] is not None]
            curves[kind][c] = macro_average(fold_curves, confidence) if len(fold_curves) >= 2 else None
    roc = _nanmean([p.roc_auc for p in per_fold])
    pr = _nanmean([p.pr_auc for p in per_fold])
    return MacroPerformances(float(acc.mean()), float(acc.std(ddof=1)) if len(acc) > 1 else 0.0,
                             float(1.0 - acc.mean()), mean("precision"), mean("recall"),
                             mean("specificity"), mean("fp_rate"), mean("f_measure"), roc, pr,
                             float(np.mean([p.brier for p in per_fold])), curves)


# ---------------------------------------------------------------------------
# clustering


@dataclass(frozen=True, eq=False)
class ClusteringRun:
    em: EmResult
    results: tuple[ClassificationResult, ...]
    external: ClusteringExternal | None
    cluster_order: tuple[str, ...]
    class_order: tuple[str, ...]
    learn_time: float
    inference_times: np.ndarray
    manual_clusters: bool


def clustering_in_sample(d: Dataset, config: EmConfig, h: Hyperparameters = Hyperparameters(),
                         parent_sets=None, name: str = "") -> ClusteringRun:
    """EM on the whole dataset; external measures unless the cluster count was set by hand."""
    start = time.perf_counter()
    em = em_cluster(d, config, parent_sets, h, name)
    learn_time = time.perf_counter() - start
    results, times = [], []
    for i in range(len(d)):
        one = d.take([i])
        t0 = time.perf_counter()
        results.extend(classify_dataset(em.model, one))
        times.append(time.perf_counter() - t0)
    manual = config.n_clusters is not None
    external, clusters, labels = None, em.model.classes, ()
    if not manual:
        truth = [r.true_class for r in results]
        if any(t is None for t in truth):
            raise ValidationError("external clustering measures need labeled data")
        counts, clusters, labels = association_matrix(
            [r.predicted for r in results], truth, cluster_order=em.model.classes)
        external = clustering_external(counts)
    return ClusteringRun(em, tuple(results), external, tuple(clusters), tuple(labels), learn_time,
                         np.asarray(times), manual)
