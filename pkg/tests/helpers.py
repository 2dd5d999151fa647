"""Small builders shared by the test modules."""

from __future__ import annotations

import math

import numpy as np

from ctbnc.data import Dataset, NodeIndexing, Trajectory
from ctbnc.model import ModelSchema, build_model
from ctbnc.synthesis import FactorySpec, default_schema, new_model


def trajectory(identifier, times, rows, names, class_name="class"):
    idx = NodeIndexing(tuple(names), class_name)
    return Trajectory(identifier, np.asarray(times, dtype=float), np.asarray(rows, dtype=str), idx)


def dataset(trajectories):
    trajectories = tuple(trajectories)
    return Dataset(trajectories, trajectories[0].indexing)


def random_parent_sets(rng, n_nodes, max_parents, force_class=True):
    """Random parent sets; cycles among attributes are allowed."""
    sets = [()]
    for v in range(1, n_nodes):
        others = [j for j in range(1, n_nodes) if j != v]
        budget = max_parents - (1 if force_class else 0)
        n_extra = int(rng.integers(0, min(budget, len(others)) + 1)) if budget > 0 else 0
        extra = tuple(sorted(rng.choice(others, size=n_extra, replace=False).tolist())) if n_extra else ()
        sets.append(((0,) if force_class else ()) + extra)
    return tuple(sets)


def random_model(rng, n_nodes=None, max_card=3, max_parents=2, rates=(0.5, 4.0)):
    n_nodes = int(rng.integers(2, 5)) if n_nodes is None else n_nodes
    cards = (int(rng.integers(2, max_card + 1)),) + tuple(
        int(rng.integers(2, max_card + 1)) for _ in range(n_nodes - 1))
    parents = random_parent_sets(rng, n_nodes, max_parents, force_class=bool(rng.integers(0, 2)))
    model = new_model(FactorySpec(cards, (rates,), int(rng.integers(1 << 30)), parents))
    prior = rng.dirichlet(np.ones(cards[0]))
    return build_model(model.schema, model.parent_sets, prior,
                       [None] + [n.cims for n in model.nodes[1:]])


def random_trajectory(rng, schema: ModelSchema, n_rows, identifier="trj", label=True):
    times = np.cumsum(np.r_[0.0, rng.uniform(0.05, 1.0, size=n_rows - 1)])
    codes = np.empty((n_rows, len(schema)), dtype=np.int64)
    codes[:, 0] = rng.integers(len(schema.classes))
    codes[0, 1:] = [rng.integers(c) for c in schema.cards[1:]]
    for j in range(1, n_rows):
        codes[j] = codes[j - 1]
        # one or two variables change, as in sampled and real data
        for v in rng.choice(np.arange(1, len(schema)), size=int(rng.integers(1, 3)), replace=True):
            c = schema.cards[v]
            codes[j, v] = (codes[j, v] + 1 + rng.integers(c - 1)) % c
    rows = [[schema.states[v][codes[j, v]] for v in range(len(schema))] for j in range(n_rows)]
    if not label:
        for r in rows:
            r[0] = ""
    return trajectory(identifier, times, rows, schema.names, schema.names[0])


def brute_force_log_score(model, trj):
    """Log prior plus, interval by interval, every attribute's CIM terms.

    Written with plain loops and dictionaries so that it shares no code path
    with the vectorized implementation.
    """
    names = model.names
    col = {n: trj.indexing.index(n) for n in names}
    out = []
    for y, _ in enumerate(model.classes):
        total = math.log(model.prior[y])
        for j in range(len(trj.times) - 1):
            dt = trj.times[j + 1] - trj.times[j]
            for v in range(1, len(names)):
                node = model.nodes[v]
                state_of = lambda w, row: (y if w == 0 else
                                           model.nodes[w].states.index(trj.states[row, col[names[w]]]))
                cfg, radix = 0, 1
                for p in node.parents:
                    cfg += state_of(p, j) * radix
                    radix *= model.nodes[p].card
                x = state_of(v, j)
                x2 = state_of(v, j + 1)
                cim = node.cims[cfg]
                total += cim[x, x] * dt
                if x2 != x:
                    total += math.log(cim[x, x2])
        out.append(total)
    return np.array(out)


def small_schema(cards=(2, 2, 3)):
    return default_schema(cards)
