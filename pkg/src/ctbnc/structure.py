"""Score-based structure learning for CTBN classifiers.

Two scores are supported. The marginal log-likelihood (``LL``) integrates the
parameters out under the Gamma/Dirichlet priors and decomposes per node, so
each attribute's parent set is searched independently. The conditional
log-likelihood (``CLL``) sums ``log P(y | trajectory)`` under Bayesian
parameter estimates; it does not decompose and is searched jointly.

Only attribute-to-attribute edges move. Class edges are taken from the
initial structure (the naive Bayes one by default), and the class node never
gets parents.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import gammaln, logsumexp

from .data import Dataset
from .estimation import (
    EncodedData,
    Hyperparameters,
    NodeStatistics,
    SufficientStatistics,
    collect_statistics,
    encode,
    estimate_cims,
    estimate_parameters,
    estimate_prior,
    node_statistics,
)
from .inference import family_terms, log_scores, normalize_log, trajectory_sums
from .model import CtbncModel, ModelSchema, OneVsRestEnsemble, canonical_parents, ctnb_parents

SCORES = ("LL", "CLL")


@dataclass(frozen=True)
class SearchConfig:
    max_parents: int = 2
    score: str = "LL"
    penalty: bool = False
    hyper: Hyperparameters = field(default_factory=Hyperparameters)
    force_class: bool = False

    def __post_init__(self):
        if self.score not in SCORES:
            raise ValueError(f"unknown score {self.score!r}, expected one of {SCORES}")
        if self.max_parents < 1:
            raise ValueError(f"the parent bound must be at least 1, got {self.max_parents}")
        if self.force_class and self.max_parents < 2:
            raise ValueError(f"the augmented family needs a parent bound of at least 2, got {self.max_parents}")


@dataclass(frozen=True, eq=False)
class ScoredStructure:
    adjacency: np.ndarray
    score: float
    history: tuple[float, ...] = ()

    @property
    def parent_sets(self) -> tuple[tuple[int, ...], ...]:
        return tuple(tuple(int(p) for p in np.nonzero(self.adjacency[:, c])[0])
                     for c in range(self.adjacency.shape[0]))


# ---------------------------------------------------------------------------
# scores


def mll_family_score(stats: NodeStatistics, h: Hyperparameters) -> float:
    """Bayesian marginal log-likelihood of one node's dynamics."""
    card = stats.M.shape[-1]
    if card == 1:
        return 0.0
    a, tau = h.alpha_m, h.tau
    exits = stats.exits
    rate = (gammaln(a + exits + 1) + (a + 1) * math.log(tau) - gammaln(a + 1)
            - (a + exits + 1) * np.log(tau + stats.T))
    a_xx = a / (card - 1)
    off = ~np.eye(card, dtype=bool)
    jumps = (gammaln(a) - gammaln(a + exits)
             + np.sum(np.where(off, gammaln(a_xx + stats.M) - gammaln(a_xx), 0.0), axis=-1))
    return float(rate.sum() + jumps.sum())


def mll_score(ss: SufficientStatistics, h: Hyperparameters) -> float:
    return sum(mll_family_score(s, h) for s in ss.nodes[1:])


def family_dimension(card: int, n_configs: int) -> int:
    return n_configs * card * (card - 1)


def model_dimension(model: CtbncModel) -> int:
    dim = len(model.classes) - 1
    for n in model.nodes[1:]:
        dim += family_dimension(n.card, n.cims.shape[0])
    return dim


def dimension_penalty(model: CtbncModel, n_trajectories: float) -> float:
    if n_trajectories < 1:
        raise ValueError("the penalty needs at least one trajectory")
    return -model_dimension(model) / 2.0 * math.log(n_trajectories)


def cll_score(model: CtbncModel, dataset: Dataset) -> float:
    """Sum over trajectories of the log posterior of the true class."""
    classes = {c: k for k, c in enumerate(model.classes)}
    truth = []
    for trj in dataset:
        if trj.true_class is None:
            raise ValueError(f"trajectory {trj.identifier!r} has no class label")
        truth.append(classes[trj.true_class])
    post = normalize_log(log_scores(model, dataset))
    with np.errstate(divide="ignore"):
        return float(np.log(post[np.arange(len(truth)), truth]).sum())


# ---------------------------------------------------------------------------
# search


def _candidates(node: int, parents: tuple[int, ...], n_nodes: int, k: int):
    """Single-edge neighbours over attribute parents, in edge-index order."""
    for j in range(1, n_nodes):
        if j == node:
            continue
        if j in parents:
            yield canonical_parents(p for p in parents if p != j)
        elif len(parents) < k:
            yield canonical_parents(parents + (j,))


def _check_initial(parent_sets, config: SearchConfig):
    if parent_sets[0]:
        raise ValueError("the class node cannot have parents")
    for v, ps in enumerate(parent_sets[1:], start=1):
        if len(ps) > config.max_parents:
            raise ValueError(f"node {v} starts with {len(ps)} parents, above the bound {config.max_parents}")
        if config.force_class and 0 not in ps:
            raise ValueError(f"node {v} must have the class as a parent")


class _Learner:
    """Shared state for one search: encoded data, responsibilities and schema."""

    def __init__(self, enc: EncodedData, config: SearchConfig, weights=None, schema=None):
        self.enc = enc
        self.config = config
        self.weights = enc.one_hot() if weights is None else weights
        self.schema = enc.schema if schema is None else schema
        self.n = float(self.weights.sum())
        self.K = self.weights.shape[1]

    def cards(self, parents):
        return tuple(self.K if p == 0 else self.schema.cards[p] for p in parents)

    def stats(self, node, parents) -> NodeStatistics:
        return node_statistics(self.enc, node, parents, self.weights)

    def penalty(self, node, parents) -> float:
        if not self.config.penalty:
            return 0.0
        dim = family_dimension(self.schema.cards[node], math.prod(self.cards(parents)))
        return -dim / 2.0 * math.log(max(self.n, 1.0))

    # -- LL ------------------------------------------------------------------
    def family_score(self, node, parents) -> float:
        return mll_family_score(self.stats(node, parents), self.config.hyper) + self.penalty(node, parents)

    def search_ll(self, parent_sets):
        parent_sets = list(parent_sets)
        n_nodes = len(self.schema)
        caches = {v: {parent_sets[v]: self.family_score(v, parent_sets[v])} for v in range(1, n_nodes)}
        total = sum(caches[v][parent_sets[v]] for v in range(1, n_nodes))
        history = [total]
        for node in range(1, n_nodes):
            cache = caches[node]
            current = parent_sets[node]
            while True:
                best, best_score = None, cache[current]
                for cand in _candidates(node, current, n_nodes, self.config.max_parents):
                    if cand not in cache:
                        cache[cand] = self.family_score(node, cand)
                    if cache[cand] > best_score:
                        best, best_score = cand, cache[cand]
                if best is None:
                    break
                total += best_score - cache[current]
                history.append(total)
                current = best
            parent_sets[node] = current
        return tuple(parent_sets), total, history

    # -- CLL -----------------------------------------------------------------
    def terms(self, node, parents) -> np.ndarray:
        cims = estimate_cims(self.stats(node, parents), self.config.hyper)
        return family_terms(self.enc, node, parents, self.cards(parents), cims, self.K)

    def cll(self, total_terms, log_prior) -> float:
        scores = log_prior + trajectory_sums(self.enc, total_terms)
        log_post = scores - logsumexp(scores, axis=1, keepdims=True)
        truth = np.argmax(self.weights, axis=1)
        return float(log_post[np.arange(len(truth)), truth].sum())

    def search_cll(self, parent_sets):
        parent_sets = list(parent_sets)
        n_nodes = len(self.schema)
        log_prior = np.log(estimate_prior(self.weights.sum(axis=0), self.config.hyper))
        contrib = {v: self.terms(v, parent_sets[v]) for v in range(1, n_nodes)}
        pen = {v: self.penalty(v, parent_sets[v]) for v in range(1, n_nodes)}
        total = sum(contrib.values()) if contrib else np.zeros((self.enc.n_rows, self.K))
        score = self.cll(total, log_prior) + sum(pen.values())
        history = [score]
        while True:
            best = None
            for node in range(1, n_nodes):
                for cand in _candidates(node, parent_sets[node], n_nodes, self.config.max_parents):
                    t = self.terms(node, cand)
                    s = (self.cll(total - contrib[node] + t, log_prior)
                         + sum(pen.values()) - pen[node] + self.penalty(node, cand))
                    if s > (best[0] if best else score):
                        best = (s, node, cand, t)
            if best is None:
                break
            score, node, cand, t = best
            total = total - contrib[node] + t
            contrib[node] = t
            pen[node] = self.penalty(node, cand)
            parent_sets[node] = cand
            history.append(score)
        return tuple(parent_sets), score, history


def _adjacency(parent_sets) -> np.ndarray:
    n = len(parent_sets)
    adj = np.zeros((n, n), dtype=bool)
    for c, ps in enumerate(parent_sets):
        adj[list(ps), c] = True
    return adj


def hill_climb_encoded(enc: EncodedData, config: SearchConfig, initial=None, weights=None,
                       schema: ModelSchema | None = None, name: str = ""):
    learner = _Learner(enc, config, weights, schema)
    initial = ctnb_parents(len(learner.schema)) if initial is None else tuple(
        canonical_parents(ps) for ps in initial)
    _check_initial(initial, config)
    if config.score == "LL":
        parent_sets, score, history = learner.search_ll(initial)
    else:
        parent_sets, score, history = learner.search_cll(initial)
    ss = collect_statistics(enc, parent_sets, learner.weights, learner.schema)
    model = estimate_parameters(ss, config.hyper, name)
    return ScoredStructure(_adjacency(parent_sets), score, tuple(history)), model


def hill_climb(d: Dataset, config: SearchConfig, schema: ModelSchema, initial=None, name: str = ""):
    """Learn a structure and its parameters; returns ``(ScoredStructure, model)``."""
    return hill_climb_encoded(encode(d, schema), config, initial, name=name)


def rest_label(classes: Sequence[str]) -> str:
    label = "rest"
    while label in classes:
        label = "_" + label
    return label


def member_weights(enc: EncodedData, k: int) -> np.ndarray:
    target = enc.one_hot()[:, k]
    return np.stack([target, 1.0 - target], axis=1)


def learn_one_vs_rest_encoded(enc: EncodedData, learn, name: str = "") -> OneVsRestEnsemble:
    """``learn(enc, weights, schema)`` returns one binary model."""
    classes = enc.schema.classes
    if len(classes) < 2:
        raise ValueError("one-vs-rest learning needs at least two classes")
    rest = rest_label(classes)
    members = []
    for k, c in enumerate(classes):
        schema = enc.schema.with_classes((c, rest))
        members.append(learn(enc, member_weights(enc, k), schema))
    return OneVsRestEnsemble(classes, tuple(members), name)


def learn_one_vs_rest(d: Dataset, config: SearchConfig | None, schema: ModelSchema,
                      name: str = "") -> OneVsRestEnsemble:
    """One binary classifier per class; ``config=None`` learns naive Bayes members."""
    enc = encode(d, schema)

    def learn(e, w, s):
        if config is None:
            ss = collect_statistics(e, ctnb_parents(len(s)), w, s)
            return estimate_parameters(ss, Hyperparameters())
        return hill_climb_encoded(e, config, weights=w, schema=s)[1]

    return learn_one_vs_rest_encoded(enc, learn, name)
