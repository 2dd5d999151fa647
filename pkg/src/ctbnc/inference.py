"""Exact class posteriors for fully observed trajectories.

For each class value the log-score is the log prior plus, for every interval
and every attribute, ``-q * dt`` and, when the attribute jumps at the end of
the interval, the log of the jump intensity. All work is vectorized over the
rows of an encoded dataset.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .data import Dataset, Trajectory
from .estimation import EncodedData, encode
from .model import CtbncModel, OneVsRestEnsemble


class ClassificationError(ValueError):
    pass


@dataclass(frozen=True)
class BinaryDecider:
    """Predict the first (alphabetical) class iff its posterior reaches ``threshold``."""

    threshold: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError(f"threshold must lie in [0, 1], got {self.threshold}")

    def decide(self, posterior) -> int:
        if len(posterior) != 2:
            raise ValueError("the binary threshold applies only to two-class problems")
        return 0 if posterior[0] >= self.threshold else 1


@dataclass(frozen=True, eq=False)
class ClassificationResult:
    identifier: str
    classes: tuple[str, ...]
    predicted: str
    posterior: np.ndarray
    true_class: str | None = None
    track: np.ndarray | None = None

    @property
    def predicted_index(self) -> int:
        return self.classes.index(self.predicted)

    @property
    def probability(self) -> float:
        return float(self.posterior[self.predicted_index])

    @property
    def correct(self) -> bool:
        return self.predicted == self.true_class


def normalize_log(scores: np.ndarray) -> np.ndarray:
    """Softmax along the last axis; rows that are entirely -inf raise."""
    scores = np.asarray(scores, dtype=float)
    norm = logsumexp(scores, axis=-1, keepdims=True)
    if np.any(np.isneginf(norm)):
        raise ClassificationError("every class has zero likelihood")
    return np.exp(scores - norm)


def family_terms(enc: EncodedData, node: int, parents: Sequence[int], parent_cards: Sequence[int],
                 cims: np.ndarray, n_classes: int) -> np.ndarray:
    """``(rows, K)`` log-likelihood contributions of one attribute under given CIMs."""
    base = np.zeros(enc.n_rows, dtype=np.int64)
    radix, class_radix = 1, None
    for p, c in zip(parents, parent_cards):
        if p == 0:
            class_radix = radix
        else:
            base += enc.states[:, p] * radix
        radix *= c
    x = enc.states[:, node]
    x_next = enc.next_states[:, node]
    moved = x != x_next
    out = np.empty((enc.n_rows, n_classes))
    for y in range(n_classes):
        cfg = base if class_radix is None else base + y * class_radix
        term = cims[cfg, x, x] * enc.dt
        rate = cims[cfg[moved], x[moved], x_next[moved]]
        with np.errstate(divide="ignore"):
            term[moved] += np.log(rate)
        out[:, y] = term
        if class_radix is None:
            out[:, 1:] = term[:, None]
            break
    return out


def _node_terms(model: CtbncModel, enc: EncodedData, node: int) -> np.ndarray:
    n = model.nodes[node]
    return family_terms(enc, node, n.parents, model.parent_cards(node), n.cims, len(model.classes))


def row_terms(model: CtbncModel, enc: EncodedData) -> np.ndarray:
    terms = np.zeros((enc.n_rows, len(model.classes)))
    for node in range(1, len(model.nodes)):
        terms += _node_terms(model, enc, node)
    return terms


def _log_prior(model: CtbncModel) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(model.prior)


def trajectory_sums(enc: EncodedData, terms: np.ndarray) -> np.ndarray:
    if enc.n_trajectories == 0:
        return np.zeros((0, terms.shape[1]))
    return np.add.reduceat(terms, enc.starts[:-1], axis=0)


def log_scores(model: CtbncModel, dataset: Dataset) -> np.ndarray:
    """Unnormalized log posteriors, ``(n_trajectories, K)``."""
    enc = encode(dataset, model.schema, strict_labels=False)
    return _log_prior(model) + trajectory_sums(enc, row_terms(model, enc))


def log_posterior(model: CtbncModel, trj: Trajectory) -> np.ndarray:
    return log_scores(model, Dataset((trj,), trj.indexing))[0]


def _tracks(enc: EncodedData, terms: np.ndarray, log_prior: np.ndarray) -> list[np.ndarray]:
    """Row ``k`` is the posterior of the prefix ending at row ``k``."""
    out = []
    for i in range(enc.n_trajectories):
        rows = terms[enc.rows(i)]
        prefix = np.empty_like(rows)
        prefix[0] = log_prior
        prefix[1:] = log_prior + np.cumsum(rows[:-1], axis=0)
        out.append(normalize_log(prefix))
    return out


def _decide(posterior: np.ndarray, decider: BinaryDecider | None) -> int:
    if decider is not None:
        return decider.decide(posterior)
    return int(np.argmax(posterior))


def _check_decider(classes: Sequence[str], decider: BinaryDecider | None):
    if decider is not None and len(classes) != 2:
        raise ValueError(
            f"the binary threshold needs a two-class model, this one has {len(classes)} classes"
        )


def classify_dataset(model: CtbncModel, dataset: Dataset, track: bool = False,
                     decider: BinaryDecider | None = None) -> list[ClassificationResult]:
    _check_decider(model.classes, decider)
    enc = encode(dataset, model.schema, strict_labels=False)
    terms = row_terms(model, enc)
    lp = _log_prior(model)
    scores = lp + trajectory_sums(enc, terms)
    tracks = _tracks(enc, terms, lp) if track else [None] * len(dataset)
    results = []
    for trj, s, tr in zip(dataset, scores, tracks):
        try:
            post = normalize_log(s)
        except ClassificationError:
            raise ClassificationError(f"{trj.identifier}: every class has zero likelihood") from None
        k = _decide(post, decider)
        results.append(ClassificationResult(trj.identifier, model.classes, model.classes[k], post,
                                            trj.true_class, tr))
    return results


def classify(model: CtbncModel, trj: Trajectory, track: bool = False,
             decider: BinaryDecider | None = None) -> ClassificationResult:
    return classify_dataset(model, Dataset((trj,), trj.indexing), track, decider)[0]


def ensemble_scores(ens: OneVsRestEnsemble, dataset: Dataset, track: bool = False):
    """Member ``k``'s posterior of its own target class, per trajectory (and per row)."""
    if len(ens.models) != len(ens.classes):
        raise ValueError(f"{len(ens.models)} members for {len(ens.classes)} classes")
    columns, track_columns = [], []
    for member in ens.models:
        res = classify_dataset(member, dataset, track)
        columns.append([r.posterior[0] for r in res])
        if track:
            track_columns.append([r.track[:, 0] for r in res])
    scores = np.array(columns, dtype=float).T.reshape(len(dataset), len(ens.models))
    tracks = None
    if track:
        tracks = [np.stack([col[i] for col in track_columns], axis=1) for i in range(len(dataset))]
    return scores, tracks


def _normalize_scores(s: np.ndarray, identifier: str) -> np.ndarray:
    total = s.sum(axis=-1, keepdims=True)
    if np.any(total <= 0):
        raise ClassificationError(f"{identifier}: every ensemble member scores zero")
    return s / total


def classify_ensemble_dataset(ens: OneVsRestEnsemble, dataset: Dataset, track: bool = False,
                              decider: BinaryDecider | None = None) -> list[ClassificationResult]:
    _check_decider(ens.classes, decider)
    scores, tracks = ensemble_scores(ens, dataset, track)
    results = []
    for i, trj in enumerate(dataset):
        dist = _normalize_scores(scores[i], trj.identifier)
        tr = _normalize_scores(tracks[i], trj.identifier) if track else None
        k = _decide(dist, decider)
        results.append(ClassificationResult(trj.identifier, ens.classes, ens.classes[k], dist,
                                            trj.true_class, tr))
    return results


def classify_ensemble(ens: OneVsRestEnsemble, trj: Trajectory, track: bool = False,
                      decider: BinaryDecider | None = None) -> ClassificationResult:
    return classify_ensemble_dataset(ens, Dataset((trj,), trj.indexing), track, decider)[0]


def classify_any(model, dataset: Dataset, track: bool = False,
                 decider: BinaryDecider | None = None) -> list[ClassificationResult]:
    if isinstance(model, OneVsRestEnsemble):
        return classify_ensemble_dataset(model, dataset, track, decider)
    return classify_dataset(model, dataset, track, decider)
