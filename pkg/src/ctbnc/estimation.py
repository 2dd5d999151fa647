"""Sufficient statistics and Bayesian parameter estimation.

Statistics are real-valued so that the same containers hold the expected
statistics of the EM expectation step. Supervised statistics are the special
case of one-hot class responsibilities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import Dataset
from .model import CtbncModel, ModelSchema, build_model, cim_from_q_theta


@dataclass(frozen=True)
class Hyperparameters:
    """Imaginary counts: transitions (``alpha_m``), time (``tau``), classes (``alpha_p``)."""

    alpha_m: float = 1.0
    tau: float = 0.005
    alpha_p: float = 1.0

    def __post_init__(self):
        for name in ("alpha_m", "tau", "alpha_p"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive, got {getattr(self, name)}")


class UnknownStateError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class EncodedData:
    """A dataset flattened into integer state codes aligned with a schema.

    Row ``r`` describes the interval that starts at that row: ``dt[r]`` is its
    length (0 for the last row of a trajectory) and ``next_states[r]`` the
    assignment that follows it. Column 0 holds the class code, or -1.
    """

    schema: ModelSchema
    identifiers: tuple[str, ...]
    states: np.ndarray
    next_states: np.ndarray
    dt: np.ndarray
    traj: np.ndarray
    starts: np.ndarray
    labels: np.ndarray

    @property
    def n_trajectories(self) -> int:
        return len(self.identifiers)

    @property
    def n_rows(self) -> int:
        return len(self.dt)

    def changed(self, node: int) -> np.ndarray:
        return self.states[:, node] != self.next_states[:, node]

    def rows(self, i: int) -> slice:
        return slice(int(self.starts[i]), int(self.starts[i + 1]))

    def one_hot(self) -> np.ndarray:
        if np.any(self.labels < 0):
            missing = self.identifiers[int(np.argmax(self.labels < 0))]
            raise ValueError(f"trajectory {missing!r} has no class label")
        out = np.zeros((self.n_trajectories, len(self.schema.classes)))
        out[np.arange(self.n_trajectories), self.labels] = 1.0
        return out


def encode(dataset: Dataset, schema: ModelSchema, strict_labels: bool = True) -> EncodedData:
    """Map text states to codes. With ``strict_labels=False`` class values
    outside the schema are treated as missing (label -1), as needed when a
    model with foreign class names is applied to labeled data."""
    idx = dataset.indexing
    for n in schema.names:
        if n not in idx.names:
            raise UnknownStateError(f"variable {n!r} is missing from the data")
    trjs = dataset.trajectories
    n = len(trjs)
    lengths = np.fromiter((len(t) for t in trjs), dtype=np.int64, count=n)
    starts = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(lengths, out=starts[1:])
    n_rows = int(starts[-1])
    traj = np.repeat(np.arange(n), lengths)
    states = np.zeros((n_rows, len(schema)), dtype=np.int64)

    labels = np.full(n, -1, dtype=np.int64)
    class_code = {c: k for k, c in enumerate(schema.classes)}
    for i, t in enumerate(trjs):
        c = t.true_class
        if c is not None:
            if c not in class_code:
                if not strict_labels:
                    continue
                raise UnknownStateError(f"class value {c!r} of {t.identifier!r} is not in {schema.classes}")
            labels[i] = class_code[c]
    states[:, 0] = labels[traj]

    if n_rows:
        raw = np.concatenate([t.states for t in trjs])
        for v in range(1, len(schema)):
            col = raw[:, idx.index(schema.names[v])]
            uniq, inverse = np.unique(col, return_inverse=True)
            code = {s: k for k, s in enumerate(schema.states[v])}
            lookup = np.empty(len(uniq), dtype=np.int64)
            for u, value in enumerate(uniq.tolist()):
                if value not in code:
                    row = int(np.argmax(col == value))
                    raise UnknownStateError(
                        f"unknown state {value!r} of variable {schema.names[v]!r} "
                        f"in trajectory {trjs[int(traj[row])].identifier!r}"
                    )
                lookup[u] = code[value]
            states[:, v] = lookup[inverse.ravel()]
        times = np.concatenate([t.times for t in trjs])
    else:
        times = np.zeros(0)

    last = np.zeros(n_rows, dtype=bool)
    last[starts[1:] - 1] = True
    next_states = states.copy()
    dt = np.zeros(n_rows)
    if n_rows > 1:
        next_states[:-1] = np.where(last[:-1, None], states[:-1], states[1:])
        dt[:-1] = np.where(last[:-1], 0.0, times[1:] - times[:-1])
    for a in (states, next_states, dt, traj, starts, labels):
        a.setflags(write=False)
    return EncodedData(schema, tuple(t.identifier for t in trjs), states, next_states, dt,
                       traj, starts, labels)


# ---------------------------------------------------------------------------
# statistics


@dataclass(frozen=True, eq=False)
class NodeStatistics:
    """``M[c, x, x']`` transition counts and ``T[c, x]`` sojourn times per parent configuration."""

    parents: tuple[int, ...]
    cards: tuple[int, ...]
    M: np.ndarray
    T: np.ndarray

    @property
    def exits(self) -> np.ndarray:
        return self.M.sum(axis=-1)

    def __add__(self, other: "NodeStatistics") -> "NodeStatistics":
        if self.parents != other.parents:
            raise ValueError("cannot add statistics over different parent sets")
        return NodeStatistics(self.parents, self.cards, self.M + other.M, self.T + other.T)


@dataclass(frozen=True, eq=False)
class SufficientStatistics:
    schema: ModelSchema
    class_counts: np.ndarray
    nodes: tuple[NodeStatistics | None, ...]

    @property
    def parent_sets(self) -> tuple[tuple[int, ...], ...]:
        return ((),) + tuple(s.parents for s in self.nodes[1:])

    def __add__(self, other: "SufficientStatistics") -> "SufficientStatistics":
        if self.schema != other.schema:
            raise ValueError("cannot add statistics over different schemas")
        nodes = (None,) + tuple(a + b for a, b in zip(self.nodes[1:], other.nodes[1:]))
        return SufficientStatistics(self.schema, self.class_counts + other.class_counts, nodes)


def node_statistics(enc: EncodedData, node: int, parents: Sequence[int],
                    weights: np.ndarray | None = None) -> NodeStatistics:
    """Statistics of one node under a candidate parent set.

    ``weights`` is an ``(n_trajectories, K)`` responsibility matrix; the class
    column of the data is ignored and each class value ``y`` contributes the
    trajectory's counts weighted by ``weights[i, y]``.
    """
    if weights is None:
        weights = enc.one_hot()
    parents = tuple(parents)
    schema = enc.schema
    # the class cardinality follows the responsibilities (relabeled members use 2)
    cards = tuple(weights.shape[1] if p == 0 else schema.cards[p] for p in parents)
    card = schema.cards[node]
    n_cfg = math.prod(cards)
    base = np.zeros(enc.n_rows, dtype=np.int64)
    radix, class_radix = 1, None
    for p, c in zip(parents, cards):
        if p == 0:
            class_radix = radix
        else:
            base += enc.states[:, p] * radix
        radix *= c
    x = enc.states[:, node]
    x_next = enc.next_states[:, node]
    moved = x != x_next
    T = np.zeros(n_cfg * card)
    M = np.zeros(n_cfg * card * card)
    if class_radix is None:
        groups = [(base, weights.sum(axis=1)[enc.traj])]
    else:
        groups = [(base + y * class_radix, weights[enc.traj, y]) for y in range(weights.shape[1])]
    for cfg, w in groups:
        T += np.bincount(cfg * card + x, weights=enc.dt * w, minlength=n_cfg * card)
        key = (cfg[moved] * card + x[moved]) * card + x_next[moved]
        M += np.bincount(key, weights=w[moved], minlength=n_cfg * card * card)
    return NodeStatistics(parents, cards, M.reshape(n_cfg, card, card), T.reshape(n_cfg, card))


def collect_statistics(enc: EncodedData, parent_sets, weights: np.ndarray | None = None,
                       schema: ModelSchema | None = None) -> SufficientStatistics:
    """Statistics for every attribute; ``schema`` overrides the class domain."""
    if weights is None:
        weights = enc.one_hot()
    schema = enc.schema if schema is None else schema
    if len(schema.classes) != weights.shape[1]:
        raise ValueError(f"{weights.shape[1]} responsibility columns for {len(schema.classes)} classes")
    nodes = (None,) + tuple(
        node_statistics(enc, v, parent_sets[v], weights) for v in range(1, len(enc.schema))
    )
    return SufficientStatistics(schema, weights.sum(axis=0), nodes)


def statistics_from_dataset(dataset: Dataset, schema: ModelSchema, parent_sets) -> SufficientStatistics:
    return collect_statistics(encode(dataset, schema), parent_sets)


# ---------------------------------------------------------------------------
# estimation


def estimate_q_theta(stats: NodeStatistics, h: Hyperparameters) -> tuple[np.ndarray, np.ndarray]:
    card = stats.M.shape[-1]
    exits = stats.exits
    q = (h.alpha_m + exits) / (h.tau + stats.T)
    if card == 1:
        return np.zeros_like(q), np.zeros_like(stats.M)
    theta = (h.alpha_m / (card - 1) + stats.M) / (h.alpha_m + exits)[..., None]
    idx = np.arange(card)
    theta[..., idx, idx] = 0.0
    return q, theta


def estimate_cims(stats: NodeStatistics, h: Hyperparameters) -> np.ndarray:
    q, theta = estimate_q_theta(stats, h)
    return cim_from_q_theta(q, theta)


def estimate_prior(class_counts, h: Hyperparameters) -> np.ndarray:
    counts = h.alpha_p + np.asarray(class_counts, dtype=float)
    return counts / counts.sum()


def estimate_parameters(ss: SufficientStatistics, h: Hyperparameters, name: str = "") -> CtbncModel:
    cims = [None] + [estimate_cims(s, h) for s in ss.nodes[1:]]
    return build_model(ss.schema, ss.parent_sets, estimate_prior(ss.class_counts, h), cims, name)


def learn_parameters(dataset: Dataset, schema: ModelSchema, parent_sets,
                     h: Hyperparameters = Hyperparameters(), name: str = "") -> CtbncModel:
    return estimate_parameters(statistics_from_dataset(dataset, schema, parent_sets), h, name)
