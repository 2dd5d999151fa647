"""Random classifier models and trajectory sampling.

Sampling runs one exponential clock per attribute. When a clock fires the
variable jumps according to its embedded chain, and the clocks of the fired
variable and of its children are redrawn, since their rates may have changed.
Memorylessness makes redrawing exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import Dataset, NodeIndexing, Trajectory
from .model import CtbncModel, ModelSchema, build_model, cim_from_q_theta, ctnb_parents

CLASS_NAME = "Class"


def _labels(prefix: str, n: int) -> tuple[str, ...]:
    # zero padded so that lexicographic and numeric order agree
    width = len(str(n - 1))
    return tuple(f"{prefix}{k:0{width}d}" for k in range(n))


def default_schema(cards: Sequence[int]) -> ModelSchema:
    """``Class`` with states ``c0..``, then attributes ``N01..`` with states ``s0..``."""
    width = max(2, len(str(len(cards) - 1)))
    names = (CLASS_NAME,) + tuple(f"N{i:0{width}d}" for i in range(1, len(cards)))
    states = (_labels("c", cards[0]),) + tuple(_labels("s", c) for c in cards[1:])
    return ModelSchema(names, states)


@dataclass(frozen=True)
class FactorySpec:
    """State counts (class first) and per-attribute exit-rate ranges.

    ``rate_ranges`` holds one ``(lo, hi)`` pair for every attribute, or a
    single pair shared by all. ``parent_sets`` defaults to naive Bayes.
    """

    cards: tuple[int, ...]
    rate_ranges: tuple[tuple[float, float], ...] = ((1.0, 5.0),)
    seed: int = 0
    parent_sets: tuple[tuple[int, ...], ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "cards", tuple(int(c) for c in self.cards))
        if len(self.cards) < 2:
            raise ValueError("a model needs the class and at least one attribute")
        if self.cards[0] < 2 or any(c < 1 for c in self.cards):
            raise ValueError(f"invalid state counts {self.cards}")
        ranges = tuple((float(lo), float(hi)) for lo, hi in self.rate_ranges)
        if len(ranges) == 1:
            ranges = ranges * (len(self.cards) - 1)
        if len(ranges) != len(self.cards) - 1:
            raise ValueError(f"{len(ranges)} rate ranges for {len(self.cards) - 1} attributes")
        for lo, hi in ranges:
            if not 0 < lo <= hi:
                raise ValueError(f"invalid rate range ({lo}, {hi})")
        object.__setattr__(self, "rate_ranges", ranges)


def new_model(spec: FactorySpec, schema: ModelSchema | None = None, name: str = "") -> CtbncModel:
    rng = np.random.default_rng(spec.seed)
    schema = default_schema(spec.cards) if schema is None else schema
    if schema.cards != spec.cards:
        raise ValueError(f"schema cardinalities {schema.cards} differ from {spec.cards}")
    parent_sets = ctnb_parents(len(spec.cards)) if spec.parent_sets is None else spec.parent_sets
    prior = np.full(spec.cards[0], 1.0 / spec.cards[0])
    cims: list = [None]
    for v in range(1, len(spec.cards)):
        card = spec.cards[v]
        n_cfg = math.prod(spec.cards[p] for p in parent_sets[v])
        if card == 1:
            cims.append(np.zeros((n_cfg, 1, 1)))
            continue
        lo, hi = spec.rate_ranges[v - 1]
        q = rng.uniform(lo, hi, size=(n_cfg, card))
        theta = np.zeros((n_cfg, card, card))
        for c in range(n_cfg):
            for x in range(card):
                targets = [j for j in range(card) if j != x]
                theta[c, x, targets] = rng.dirichlet(np.ones(card - 1))
        cims.append(cim_from_q_theta(q, theta))
    return build_model(schema, parent_sets, prior, cims, name)


class _Sampler:
    def __init__(self, model: CtbncModel):
        self.model = model
        n = len(model.nodes)
        self.children = [[c for c in range(1, n) if v in model.nodes[c].parents] for v in range(n)]
        self.radix = []
        for v in range(n):
            r, acc = [], 1
            for p in model.nodes[v].parents:
                r.append(acc)
                acc *= model.nodes[p].card
            self.radix.append(r)

    def cim_row(self, v: int, state: np.ndarray) -> np.ndarray:
        node = self.model.nodes[v]
        cfg = sum(int(state[p]) * r for p, r in zip(node.parents, self.radix[v]))
        return node.cims[cfg, state[v]]

    def run(self, horizon: float, rng: np.random.Generator):
        model = self.model
        n = len(model.nodes)
        state = np.zeros(n, dtype=np.int64)
        state[0] = rng.choice(len(model.classes), p=model.prior)
        for v in range(1, n):
            state[v] = rng.integers(model.nodes[v].card)
        clocks = np.full(n, np.inf)

        def reset(v, now):
            rate = -self.cim_row(v, state)[state[v]]
            clocks[v] = now + rng.exponential(1.0 / rate) if rate > 0 else np.inf

        for v in range(1, n):
            reset(v, 0.0)
        times, rows = [0.0], [state.copy()]
        while True:
            v = int(np.argmin(clocks))
            now = clocks[v]
            if now >= horizon:
                break
            row = self.cim_row(v, state).copy()
            row[state[v]] = 0.0
            state[v] = rng.choice(len(row), p=row / row.sum())
            times.append(now)
            rows.append(state.copy())
            reset(v, now)
            for c in self.children[v]:
                if c != v:
                    reset(c, now)
        if horizon > times[-1]:
            times.append(horizon)
            rows.append(state.copy())
        return np.asarray(times), np.asarray(rows)


def _to_trajectory(model: CtbncModel, identifier: str, times, codes, indexing) -> Trajectory:
    states = np.empty(codes.shape, dtype=object)
    for v, node in enumerate(model.nodes):
        states[:, v] = np.asarray(node.states, dtype=object)[codes[:, v]]
    return Trajectory(identifier, times, states.astype(str), indexing)


def sample_trajectory(model: CtbncModel, horizon: float, rng: np.random.Generator,
                      identifier: str = "trj") -> Trajectory:
    if not horizon > 0:
        raise ValueError(f"the horizon must be positive, got {horizon}")
    times, codes = _Sampler(model).run(horizon, rng)
    return _to_trajectory(model, identifier, times, codes, model.indexing)


def sample_dataset(model: CtbncModel, n: int, horizon: float, seed: int = 0,
                   ext: str = ".csv") -> Dataset:
    """``n`` labeled trajectories named ``trj<i><ext>``, each with its own derived seed."""
    if not horizon > 0:
        raise ValueError(f"the horizon must be positive, got {horizon}")
    sampler = _Sampler(model)
    indexing = model.indexing
    seeds = np.random.SeedSequence(seed).spawn(n)
    width = len(str(max(n, 1)))
    trajectories = []
    for i, s in enumerate(seeds, start=1):
        times, codes = sampler.run(horizon, np.random.default_rng(s))
        trajectories.append(_to_trajectory(model, f"trj{i:0{width}d}{ext}", times, codes, indexing))
    return Dataset(tuple(trajectories), indexing)
