"""Classification and clustering performance measures."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy import stats
from scipy.optimize import linear_sum_assignment

# two-tailed normal quantiles for the accepted confidence levels (percent)
Z_VALUES = {99.9: 3.29, 99.8: 3.09, 99.0: 2.58, 98.0: 2.33, 95.0: 1.96, 90.0: 1.64, 80.0: 1.28}
COMPARISON_LEVELS = (99.0, 95.0, 90.0, 80.0, 70.0)
GRID_POINTS = 101


class CurveError(ValueError):
    pass


def confidence_level(level: float) -> float:
    """Normalize ``0.9`` or ``90`` to ``90.0`` and check it is an accepted level."""
    level = float(level)
    if level < 1.0:
        level *= 100.0
    level = round(level, 6)
    if level not in Z_VALUES:
        raise ValueError(f"confidence {level} is not one of {sorted(Z_VALUES, reverse=True)}")
    return level


def z_value(level: float) -> float:
    return Z_VALUES[confidence_level(level)]


# ---------------------------------------------------------------------------
# confusion based measures


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    classes: tuple[str, ...]
    counts: np.ndarray  # [true, predicted]

    @classmethod
    def from_labels(cls, classes: Sequence[str], truth: Sequence[str], predicted: Sequence[str]):
        index = {c: k for k, c in enumerate(classes)}
        counts = np.zeros((len(classes), len(classes)), dtype=np.int64)
        for t, p in zip(truth, predicted):
            counts[index[t], index[p]] += 1
        return cls(tuple(classes), counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def correct(self) -> int:
        return int(np.trace(self.counts))

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if self.classes != other.classes:
            raise ValueError("confusion matrices over different classes")
        return ConfusionMatrix(self.classes, self.counts + other.counts)


def _ratio(num: np.ndarray, den: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    undefined = den == 0
    out = np.divide(num, den, out=np.zeros_like(num), where=~undefined)
    return out, undefined


@dataclass(frozen=True, eq=False)
class BasicMeasures:
    classes: tuple[str, ...]
    accuracy: float
    error: float
    precision: np.ndarray
    recall: np.ndarray
    specificity: np.ndarray
    fp_rate: np.ndarray
    f_measure: np.ndarray
    undefined: Mapping[str, np.ndarray]

    @property
    def sensitivity(self) -> np.ndarray:
        return self.recall

    @property
    def tp_rate(self) -> np.ndarray:
        return self.recall


def basic_measures(cm: ConfusionMatrix) -> BasicMeasures:
    if cm.total <= 0:
        raise ValueError("no classified instances")
    c = cm.counts.astype(float)
    tp = np.diag(c)
    fp = c.sum(axis=0) - tp
    fn = c.sum(axis=1) - tp
    tn = cm.total - tp - fp - fn
    precision, p_undef = _ratio(tp, tp + fp)
    recall, r_undef = _ratio(tp, tp + fn)
    specificity, s_undef = _ratio(tn, tn + fp)
    fp_rate = np.where(s_undef, 0.0, 1.0 - specificity)
    f, f_undef = _ratio(2 * precision * recall, precision + recall)
    accuracy = cm.correct / cm.total
    return BasicMeasures(cm.classes, accuracy, 1.0 - accuracy, precision, recall, specificity,
                         fp_rate, f, {"precision": p_undef, "recall": r_undef,
                                      "specificity": s_undef, "f_measure": f_undef})


def accuracy_interval(correct: int, total: int, confidence: float = 90.0) -> tuple[float, float]:
    """Wilson score interval."""
    if total <= 0:
        raise ValueError("the interval needs at least one instance")
    z = z_value(confidence)
    p = correct / total
    denom = 1.0 + z * z / total
    centre = (p + z * z / (2 * total)) / denom
    half = z * math.sqrt(p * (1 - p) / total + z * z / (4 * total * total)) / denom
    # the bounds are exactly 0 and 1 at the extremes; avoid rounding drift there
    low = 0.0 if correct == 0 else max(0.0, centre - half)
    high = 1.0 if correct == total else min(1.0, centre + half)
    return low, high


def brier(posteriors: np.ndarray, truth: Sequence[int]) -> float:
    """Mean squared distance between posteriors and one-hot truth (range [0, 2])."""
    posteriors = np.asarray(posteriors, dtype=float)
    if len(posteriors) == 0:
        raise ValueError("no instances")
    onehot = np.zeros_like(posteriors)
    onehot[np.arange(len(posteriors)), np.asarray(truth)] = 1.0
    return float(np.mean(np.sum((posteriors - onehot) ** 2, axis=1)))


# ---------------------------------------------------------------------------
# curves


@dataclass(frozen=True, eq=False)
class Curve:
    x: np.ndarray
    y: np.ndarray
    bar: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float))
        object.__setattr__(self, "y", np.asarray(self.y, dtype=float))
        if self.x.shape != self.y.shape:
            raise ValueError("x and y must have the same length")
        if np.any(np.diff(self.x) < 0):
            raise ValueError("curve x values must be nondecreasing")

    def auc(self) -> float:
        return float(np.sum(np.diff(self.x) * (self.y[1:] + self.y[:-1]) / 2.0))

    def at(self, grid: np.ndarray) -> np.ndarray:
        """Linear interpolation; on a vertical segment the highest point wins."""
        grid = np.asarray(grid, dtype=float)
        x, y = self.x, self.y
        starts = np.r_[0, np.nonzero(np.diff(x))[0] + 1]
        top = np.maximum.reduceat(y, starts)
        i = np.searchsorted(x, grid, side="right") - 1
        below = i < 0
        i = np.clip(i, 0, len(x) - 1)
        j = np.minimum(i + 1, len(x) - 1)
        span = x[j] - x[i]
        frac = np.divide(grid - x[i], span, out=np.zeros_like(grid), where=span > 0)
        out = y[i] + frac * (y[j] - y[i])
        exact = grid == x[i]
        group = np.searchsorted(starts, i, side="right") - 1
        out[exact] = top[group[exact]]
        out[below] = y[0]
        return out


def _sweep(scores, truth):
    """Cumulative (tp, fp) at the end of each group of tied scores, best first."""
    scores = np.asarray(scores, dtype=float)
    truth = np.asarray(truth, dtype=bool)
    order = np.argsort(-scores, kind="stable")
    s, t = scores[order], truth[order]
    tp = np.cumsum(t)
    fp = np.cumsum(~t)
    ends = np.r_[np.nonzero(np.diff(s))[0], len(s) - 1] if len(s) else np.array([], dtype=int)
    return tp[ends].astype(float), fp[ends].astype(float), int(truth.sum()), int((~truth).sum())


def _require_both(P, N, label):
    if P == 0 or N == 0:
        missing = "positive" if P == 0 else "negative"
        raise CurveError(f"class {label!r}: no {missing} instances, the curve is undefined")


def roc_curve(scores, truth, label: str = "") -> Curve:
    tp, fp, P, N = _sweep(scores, truth)
    _require_both(P, N, label)
    return Curve(np.r_[0.0, fp / N], np.r_[0.0, tp / P])


def pr_curve(scores, truth, label: str = "") -> Curve:
    """Recall on x, precision on y, anchored at recall 0 with the first precision."""
    tp, fp, P, N = _sweep(scores, truth)
    _require_both(P, N, label)
    recall = tp / P
    precision = tp / (tp + fp)
    return Curve(np.r_[0.0, recall], np.r_[precision[0], precision])


def cumulative_response(scores, truth, label: str = "") -> Curve:
    """Fraction of positives captured against the fraction of instances targeted."""
    tp, fp, P, N = _sweep(scores, truth)
    if P == 0:
        raise CurveError(f"class {label!r}: no positive instances, the curve is undefined")
    n = P + N
    return Curve(np.r_[0.0, (tp + fp) / n], np.r_[0.0, tp / P])


def lift_chart(scores, truth, label: str = "") -> Curve:
    cum = cumulative_response(scores, truth, label)
    return Curve(cum.x[1:], cum.y[1:] / cum.x[1:])


CURVES = {"ROC": roc_curve, "PR": pr_curve, "CumulativeResponse": cumulative_response,
          "Lift": lift_chart}


def macro_average(curves: Sequence[Curve], confidence: float = 90.0,
                  n_points: int = GRID_POINTS) -> Curve:
    """Vertical averaging on a fixed grid with z * std / sqrt(k) bars."""
    if len(curves) < 2:
        raise ValueError("vertical averaging needs at least two curves")
    grid = np.linspace(0.0, 1.0, n_points)
    values = np.array([c.at(grid) for c in curves])
    bar = z_value(confidence) * values.std(axis=0, ddof=1) / math.sqrt(len(curves))
    return Curve(grid, values.mean(axis=0), bar)


# ---------------------------------------------------------------------------
# model comparison


def compare_pair(acc_row: Sequence[float], acc_col: Sequence[float], level: float) -> str:
    """``UP`` when the column model is better, ``LF`` when the row model is, else ``0``."""
    a = np.asarray(acc_row, dtype=float)
    b = np.asarray(acc_col, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"unequal fold counts {len(a)} and {len(b)}")
    k = len(a)
    if k < 2:
        raise ValueError("the paired test needs at least two folds")
    d = b - a
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    scale = max(1.0, float(np.max(np.abs(np.r_[a, b]))))
    if sd <= 1e-12 * scale:
        if abs(mean) <= 1e-12 * scale:
            return "0"
        t_stat = math.copysign(math.inf, mean)
    else:
        t_stat = mean / (sd / math.sqrt(k))
    critical = stats.t.ppf(1.0 - (1.0 - level / 100.0) / 2.0, k - 1)
    if abs(t_stat) <= critical:
        return "0"
    return "UP" if t_stat > 0 else "LF"


def comparison_matrices(accuracies: Mapping[str, Sequence[float]],
                        levels: Sequence[float] = COMPARISON_LEVELS) -> dict[float, list[list[str]]]:
    names = list(accuracies)
    if len(names) < 2:
        raise ValueError("comparison needs at least two models")
    sizes = {len(v) for v in accuracies.values()}
    if len(sizes) != 1:
        raise ValueError(f"unequal fold counts {sorted(sizes)}")
    out = {}
    for level in levels:
        out[level] = [["" if a == b else compare_pair(accuracies[a], accuracies[b], level)
                       for b in names] for a in names]
    return out


# ---------------------------------------------------------------------------
# clustering


def association_matrix(clusters: Sequence[str], classes: Sequence[str],
                       cluster_order: Sequence[str] | None = None,
                       class_order: Sequence[str] | None = None):
    cluster_order = list(cluster_order or sorted(set(clusters)))
    class_order = list(class_order or sorted(set(classes)))
    ci = {c: k for k, c in enumerate(cluster_order)}
    li = {c: k for k, c in enumerate(class_order)}
    counts = np.zeros((len(cluster_order), len(class_order)), dtype=np.int64)
    for a, b in zip(clusters, classes):
        counts[ci[a], li[b]] += 1
    return counts, tuple(cluster_order), tuple(class_order)


def _pairs(n):
    n = np.asarray(n, dtype=float)
    return float(np.sum(n * (n - 1) / 2.0))


@dataclass(frozen=True, eq=False)
class ClusteringExternal:
    rand: float
    jaccard: float
    fowlkes_mallows: float
    association: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    f_measure: np.ndarray
    pair_counts: tuple[float, float, float, float]
    flags: tuple[str, ...] = ()


def clustering_external(association: np.ndarray) -> ClusteringExternal:
    n_ij = np.asarray(association, dtype=float)
    n = n_ij.sum()
    if n < 2:
        raise ValueError("pair counting needs at least two instances")
    a = _pairs(n_ij)
    same_cluster = _pairs(n_ij.sum(axis=1))
    same_class = _pairs(n_ij.sum(axis=0))
    b = same_cluster - a
    c = same_class - a
    d = n * (n - 1) / 2.0 - a - b - c
    flags = []
    rand = (a + d) / (a + b + c + d)
    if a + b + c == 0:
        jaccard = 1.0
        flags.append("jaccard")
    else:
        jaccard = a / (a + b + c)
    if same_cluster == 0 or same_class == 0:
        fm = 1.0 if a + b + c == 0 else 0.0
        flags.append("fowlkes_mallows")
    else:
        fm = a / math.sqrt(same_cluster * same_class)
    precision, _ = _ratio(n_ij, n_ij.sum(axis=1, keepdims=True) + np.zeros_like(n_ij))
    recall, _ = _ratio(n_ij, n_ij.sum(axis=0, keepdims=True) + np.zeros_like(n_ij))
    f, _ = _ratio(2 * precision * recall, precision + recall)
    return ClusteringExternal(rand, jaccard, fm, n_ij.astype(np.int64), precision, recall, f,
                              (a, b, c, d), tuple(flags))


def best_bijection_accuracy(association: np.ndarray) -> float:
    """Accuracy under the cluster-to-class matching that maximizes agreement."""
    counts = np.asarray(association, dtype=float)
    rows, cols = linear_sum_assignment(-counts)
    return float(counts[rows, cols].sum() / counts.sum())
