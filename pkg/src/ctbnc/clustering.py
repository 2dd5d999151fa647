"""EM clustering of unlabeled trajectories with a fixed structure.

The expectation step weights every trajectory's sufficient statistics by its
cluster posterior (soft) or by the one-hot argmax of that posterior (hard).
The maximization step is the ordinary Bayesian estimate on those expected
statistics, i.e. a MAP estimate, so soft EM never decreases the log posterior
tracked in ``objective``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .data import Dataset
from .estimation import (
    EncodedData,
    Hyperparameters,
    SufficientStatistics,
    collect_statistics,
    encode,
    estimate_parameters,
)
from .inference import row_terms, trajectory_sums
from .model import CtbncModel, ModelSchema, ctnb_parents, q_theta_decomposition, schema_from_dataset

ASSIGNMENTS = ("soft", "hard")


@dataclass(frozen=True)
class EmConfig:
    assignment: str = "soft"
    max_iterations: int = 10
    threshold: float = 0.01
    n_clusters: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.assignment not in ASSIGNMENTS:
            raise ValueError(f"assignment must be one of {ASSIGNMENTS}, got {self.assignment!r}")
        if self.max_iterations < 1:
            raise ValueError("at least one EM iteration is required")
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError(f"the change threshold must lie in [0, 1], got {self.threshold}")
        if self.n_clusters is not None and self.n_clusters < 2:
            raise ValueError(f"at least two clusters are required, got {self.n_clusters}")


@dataclass(frozen=True, eq=False)
class EmResult:
    model: CtbncModel
    responsibilities: np.ndarray
    iterations: int
    objective: tuple[float, ...]
    change_fractions: tuple[float, ...]
    encoded: EncodedData


def cluster_names(n: int) -> tuple[str, ...]:
    return tuple(str(k) for k in range(1, n + 1))


def cluster_schema(dataset: Dataset, n_clusters: int) -> ModelSchema:
    return schema_from_dataset(dataset, classes=cluster_names(n_clusters))


def log_joint(model: CtbncModel, enc: EncodedData) -> np.ndarray:
    """``log P(y) + log P(trajectory | y)``, shape ``(n, C)``."""
    with np.errstate(divide="ignore"):
        prior = np.log(model.prior)
    return prior + trajectory_sums(enc, row_terms(model, enc))


def responsibilities(model: CtbncModel, enc: EncodedData, assignment: str = "soft") -> np.ndarray:
    joint = log_joint(model, enc)
    post = np.exp(joint - logsumexp(joint, axis=1, keepdims=True))
    if assignment == "hard":
        hard = np.zeros_like(post)
        hard[np.arange(len(post)), np.argmax(post, axis=1)] = 1.0
        return hard
    return post


def e_step(model: CtbncModel, enc: EncodedData, assignment: str = "soft"
           ) -> tuple[np.ndarray, SufficientStatistics]:
    resp = responsibilities(model, enc, assignment)
    return resp, collect_statistics(enc, model.parent_sets, resp, model.schema)


def m_step(ss: SufficientStatistics, h: Hyperparameters, name: str = "") -> CtbncModel:
    return estimate_parameters(ss, h, name)


def log_parameter_prior(model: CtbncModel, h: Hyperparameters) -> float:
    """Unnormalized log density of the priors whose MAP the estimators are."""
    total = float(h.alpha_p * np.log(model.prior).sum())
    for node in model.nodes[1:]:
        if node.card == 1:
            continue
        a_xx = h.alpha_m / (node.card - 1)
        for cim in node.cims:
            q, theta = q_theta_decomposition(cim)
            off = ~np.eye(node.card, dtype=bool)
            total += float(np.sum(h.alpha_m * np.log(q) - h.tau * q))
            total += float(a_xx * np.log(theta[off]).sum())
    return total


def objective(model: CtbncModel, enc: EncodedData, h: Hyperparameters) -> float:
    joint = log_joint(model, enc)
    return float(logsumexp(joint, axis=1).sum()) + log_parameter_prior(model, h)


def em_cluster_encoded(enc: EncodedData, parent_sets, config: EmConfig,
                       h: Hyperparameters = Hyperparameters(), name: str = "") -> EmResult:
    n_clusters = len(enc.schema.classes)
    if n_clusters < 2:
        raise ValueError("at least two clusters are required")
    n = enc.n_trajectories
    rng = np.random.default_rng(config.seed)
    assigned = rng.integers(n_clusters, size=n)
    resp = np.zeros((n, n_clusters))
    resp[np.arange(n), assigned] = 1.0
    model = m_step(collect_statistics(enc, parent_sets, resp), h, name)
    previous = assigned
    history, changes = [], []
    iterations = 0
    for iterations in range(1, config.max_iterations + 1):
        history.append(objective(model, enc, h))
        resp, ss = e_step(model, enc, config.assignment)
        model = m_step(ss, h, name)
        current = np.argmax(resp, axis=1)
        fraction = float(np.mean(current != previous)) if n else 0.0
        changes.append(fraction)
        previous = current
        if fraction < config.threshold:
            break
    history.append(objective(model, enc, h))
    final = responsibilities(model, enc, "soft")
    return EmResult(model, final, iterations, tuple(history), tuple(changes), enc)


def em_cluster(d: Dataset, config: EmConfig, parent_sets=None,
               h: Hyperparameters = Hyperparameters(), name: str = "") -> EmResult:
    """Cluster ``d``; the cluster count defaults to the number of distinct labels."""
    n_clusters = config.n_clusters
    if n_clusters is None:
        n_clusters = len({c for c in d.labels() if c is not None})
    if n_clusters < 2:
        raise ValueError(f"at least two clusters are required, got {n_clusters}")
    schema = cluster_schema(d, n_clusters)
    enc = encode(d, schema, strict_labels=False)
    parent_sets = ctnb_parents(len(schema)) if parent_sets is None else parent_sets
    return em_cluster_encoded(enc, parent_sets, config, h, name)
