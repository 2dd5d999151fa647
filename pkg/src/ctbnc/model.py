"""CTBN classifier models and the ``.ctbn`` text format.

Node order convention: the class node is always node 0, followed by the
attribute nodes. Parent configurations are encoded mixed-radix with the first
listed parent varying fastest.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .data import Dataset, NodeIndexing

ROW_SUM_TOL = 1e-9
PARSE_ROW_SUM_TOL = 1e-6
SEPARATOR = "-" * 23


class CimError(ValueError):
    pass


class CtbnFormatError(ValueError):
    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


# ---------------------------------------------------------------------------
# CIM helpers


def check_cim(cim: np.ndarray, tol: float = ROW_SUM_TOL) -> None:
    cim = np.asarray(cim, dtype=float)
    if cim.ndim != 2 or cim.shape[0] != cim.shape[1]:
        raise CimError(f"a CIM must be square, got shape {cim.shape}")
    off = cim - np.diag(np.diag(cim))
    if np.any(off < 0):
        raise CimError("negative off-diagonal intensity")
    if np.any(np.diag(cim) > 0):
        raise CimError("positive diagonal intensity")
    scale = max(1.0, float(np.max(np.abs(cim)))) if cim.size else 1.0
    sums = cim.sum(axis=1)
    bad = np.nonzero(np.abs(sums) > tol * scale)[0]
    if len(bad):
        raise CimError(f"row {int(bad[0])} sums to {sums[bad[0]]!r}, not 0")


def q_theta_decomposition(cim) -> tuple[np.ndarray, np.ndarray]:
    """Split a CIM into exit rates ``q`` and the embedded jump chain ``theta``.

    ``cim == diag(q) @ (theta - I)``; ``theta`` has a zero diagonal and unit
    row sums. Absorbing states (``q == 0``) have no defined jump distribution.
    """
    cim = np.asarray(cim, dtype=float)
    check_cim(cim)
    q = -np.diag(cim).copy()
    absorbing = np.nonzero(q <= 0)[0]
    if len(absorbing):
        raise CimError(f"state {int(absorbing[0])} is absorbing (zero exit rate)")
    theta = cim / q[:, None]
    np.fill_diagonal(theta, 0.0)
    return q, theta


def cim_from_q_theta(q, theta) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    theta = np.asarray(theta, dtype=float)
    cim = q[..., :, None] * theta
    idx = np.arange(q.shape[-1])
    # the diagonal is -q by definition; rows sum to zero up to rounding
    cim[..., idx, idx] = -q
    return cim


def parent_config_index(parent_states: Sequence[int], parent_cards: Sequence[int]) -> int:
    """Mixed-radix index of a parent assignment, first parent fastest."""
    if len(parent_states) != len(parent_cards):
        raise ValueError("one state per parent is required")
    index, radix = 0, 1
    for s, c in zip(parent_states, parent_cards):
        if not 0 <= s < c:
            raise ValueError(f"parent state {s} out of range for cardinality {c}")
        index += int(s) * radix
        radix *= int(c)
    return index


def parent_config_states(index: int, parent_cards: Sequence[int]) -> tuple[int, ...]:
    out = []
    for c in parent_cards:
        out.append(index % c)
        index //= c
    return tuple(out)


# ---------------------------------------------------------------------------
# model types


@dataclass(frozen=True)
class ModelSchema:
    """Variable names and state domains, class first."""

    names: tuple[str, ...]
    states: tuple[tuple[str, ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "states", tuple(tuple(s) for s in self.states))
        if len(self.names) != len(self.states):
            raise ValueError("one state domain per variable is required")
        for n, s in zip(self.names, self.states):
            if len(set(s)) != len(s) or not s:
                raise ValueError(f"{n}: state names must be nonempty and distinct")

    @property
    def class_name(self) -> str:
        return self.names[0]

    @property
    def classes(self) -> tuple[str, ...]:
        return self.states[0]

    @property
    def cards(self) -> tuple[int, ...]:
        return tuple(len(s) for s in self.states)

    def __len__(self):
        return len(self.names)

    def with_classes(self, classes: Sequence[str]) -> "ModelSchema":
        return ModelSchema(self.names, (tuple(classes),) + self.states[1:])


def schema_from_dataset(dataset: Dataset, *others: Dataset, classes: Sequence[str] | None = None
                        ) -> ModelSchema:
    """Collect sorted state domains over one or more datasets sharing variables.

    ``classes`` replaces the class domain (e.g. cluster names for unlabeled data).
    """
    idx = dataset.indexing
    names = (idx.class_name,) + idx.attribute_names
    values: dict[str, set] = {n: set() for n in names}
    for d in (dataset, *others):
        for n in names:
            col = d.indexing.index(n)
            for trj in d:
                values[n].update(np.unique(trj.states[:, col]).tolist())
    values[idx.class_name].discard("")
    if classes is not None:
        values[idx.class_name] = set()
    elif not values[idx.class_name]:
        raise ValueError("the dataset carries no class labels")
    states = [tuple(sorted(values[n])) for n in names]
    if classes is not None:
        states[0] = tuple(classes)
    return ModelSchema(names, tuple(states))


@dataclass(frozen=True, eq=False)
class CtbnNode:
    name: str
    states: tuple[str, ...]
    is_static: bool = False
    parents: tuple[int, ...] = ()
    cims: np.ndarray | None = None
    prior: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "parents", tuple(int(p) for p in self.parents))
        if self.is_static:
            if self.parents:
                raise ValueError(f"static node {self.name} cannot have parents")
            prior = np.asarray(self.prior, dtype=float)
            if prior.shape != (len(self.states),):
                raise ValueError(f"{self.name}: prior needs {len(self.states)} entries")
            if np.any(prior < 0) or abs(prior.sum() - 1.0) > 1e-9:
                raise ValueError(f"{self.name}: prior is not a probability vector")
            prior.setflags(write=False)
            object.__setattr__(self, "prior", prior)
        else:
            cims = np.asarray(self.cims, dtype=float)
            card = len(self.states)
            if cims.ndim != 3 or cims.shape[1:] != (card, card):
                raise ValueError(f"{self.name}: CIM table must be (configs, {card}, {card})")
            for k, cim in enumerate(cims):
                try:
                    check_cim(cim)
                except CimError as e:
                    raise CimError(f"{self.name}, parent configuration {k}: {e}") from None
            cims.setflags(write=False)
            object.__setattr__(self, "cims", cims)

    @property
    def card(self) -> int:
        return len(self.states)


@dataclass(frozen=True, eq=False)
class CtbncModel:
    """A class node (node 0) plus attribute nodes with conditional intensity matrices."""

    nodes: tuple[CtbnNode, ...]
    name: str = ""

    def __post_init__(self):
        nodes = tuple(self.nodes)
        object.__setattr__(self, "nodes", nodes)
        if not nodes or not nodes[0].is_static:
            raise ValueError("the first node must be the static class node")
        if any(n.is_static for n in nodes[1:]):
            raise ValueError("only the class node may be static")
        names = [n.name for n in nodes]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate node names {names}")
        for i, node in enumerate(nodes[1:], start=1):
            for p in node.parents:
                if not 0 <= p < len(nodes) or p == i:
                    raise ValueError(f"{node.name}: invalid parent index {p}")
            if len(set(node.parents)) != len(node.parents):
                raise ValueError(f"{node.name}: repeated parent")
            expected = math.prod(nodes[p].card for p in node.parents)
            if node.cims.shape[0] != expected:
                raise ValueError(
                    f"{node.name}: {node.cims.shape[0]} CIMs for {expected} parent configurations"
                )

    # -- structure ----------------------------------------------------------
    @property
    def class_node(self) -> CtbnNode:
        return self.nodes[0]

    @property
    def classes(self) -> tuple[str, ...]:
        return self.nodes[0].states

    @property
    def prior(self) -> np.ndarray:
        return self.nodes[0].prior

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(n.name for n in self.nodes)

    @property
    def indexing(self) -> NodeIndexing:
        return NodeIndexing(self.names, self.nodes[0].name)

    @property
    def schema(self) -> ModelSchema:
        return ModelSchema(self.names, tuple(n.states for n in self.nodes))

    @property
    def parent_sets(self) -> tuple[tuple[int, ...], ...]:
        return tuple(n.parents for n in self.nodes)

    def parent_cards(self, i: int) -> tuple[int, ...]:
        return tuple(self.nodes[p].card for p in self.nodes[i].parents)

    def adjacency(self) -> np.ndarray:
        """``adj[p, c]`` is True when ``p`` is a parent of ``c``."""
        adj = np.zeros((len(self.nodes), len(self.nodes)), dtype=bool)
        for c, node in enumerate(self.nodes):
            adj[list(node.parents), c] = True
        return adj

    def is_ctnb(self) -> bool:
        return all(n.parents == (0,) for n in self.nodes[1:])

    def is_max_k(self, k: int) -> bool:
        return all(len(n.parents) <= k for n in self.nodes[1:])

    def is_max_k_actnb(self, k: int) -> bool:
        return self.is_max_k(k) and all(0 in n.parents for n in self.nodes[1:])

    def cim(self, node: int, config: int) -> np.ndarray:
        return self.nodes[node].cims[config]

    def renamed(self, name: str) -> "CtbncModel":
        return CtbncModel(self.nodes, name)

    def with_schema(self, schema: ModelSchema) -> "CtbncModel":
        """Rebind state names (e.g. placeholder names from a parsed file)."""
        if schema.names != self.names:
            raise ValueError(f"model variables {self.names} differ from data variables {schema.names}")
        if schema.cards != tuple(n.card for n in self.nodes):
            raise ValueError(
                f"model cardinalities {tuple(n.card for n in self.nodes)} differ from data {schema.cards}"
            )
        nodes = tuple(
            CtbnNode(n.name, s, n.is_static, n.parents, n.cims, n.prior)
            for n, s in zip(self.nodes, schema.states)
        )
        return CtbncModel(nodes, self.name)

    def __eq__(self, other):
        if not isinstance(other, CtbncModel):
            return NotImplemented
        if len(self.nodes) != len(other.nodes):
            return False
        for a, b in zip(self.nodes, other.nodes):
            if (a.name, a.states, a.is_static, a.parents) != (b.name, b.states, b.is_static, b.parents):
                return False
            if a.is_static:
                if not np.array_equal(a.prior, b.prior):
                    return False
            elif not np.array_equal(a.cims, b.cims):
                return False
        return True

    __hash__ = None


@dataclass(frozen=True, eq=False)
class OneVsRestEnsemble:
    """One binary model per class value; member ``k`` targets ``classes[k]``."""

    classes: tuple[str, ...]
    models: tuple[CtbncModel, ...]
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "classes", tuple(self.classes))
        object.__setattr__(self, "models", tuple(self.models))
        if len(self.classes) != len(self.models):
            raise ValueError(
                f"{len(self.models)} member models for {len(self.classes)} classes"
            )
        for c, m in zip(self.classes, self.models):
            if len(m.classes) != 2 or m.classes[0] != c:
                raise ValueError(f"member for {c!r} must have class domain ({c!r}, rest)")


def ctnb_parents(n_nodes: int) -> tuple[tuple[int, ...], ...]:
    return ((),) + tuple((0,) for _ in range(1, n_nodes))


def canonical_parents(parents: Iterable[int]) -> tuple[int, ...]:
    """Class first, then attributes by index."""
    return tuple(sorted(set(parents)))


def build_model(schema: ModelSchema, parent_sets, prior, cims, name: str = "") -> CtbncModel:
    nodes = [CtbnNode(schema.names[0], schema.states[0], True, (), None, prior)]
    for i in range(1, len(schema)):
        nodes.append(CtbnNode(schema.names[i], schema.states[i], False, parent_sets[i], cims[i]))
    return CtbncModel(tuple(nodes), name)


# ---------------------------------------------------------------------------
# .ctbn serialization


def _fmt(x: float) -> str:
    return repr(float(x))


def write_ctbn(model: CtbncModel) -> str:
    lines = [SEPARATOR, "BAYESIAN NETWORK", SEPARATOR, f"BBNodes {len(model.nodes)}", SEPARATOR]
    lines += [f"{n.name} {n.card}" for n in model.nodes]
    lines.append(SEPARATOR)
    # initial distribution: disconnected network with uniform CPTs
    lines += [f"{n.name} 0" for n in model.nodes]
    lines.append(SEPARATOR)
    for n in model.nodes:
        lines.append(n.name)
        if n.is_static:
            lines.append("0 " * n.card)
        else:
            lines.append((_fmt(1.0 / n.card) + " ") * n.card)
        lines.append(SEPARATOR)
    lines += ["DIRECTED GRAPH", SEPARATOR]
    for n in model.nodes:
        lines.append(" ".join([n.name, *(model.nodes[p].name for p in n.parents), "0"]))
    lines += [SEPARATOR, "CIMS", SEPARATOR]
    for n in model.nodes:
        lines.append(n.name)
        if n.is_static:
            lines.append("".join(_fmt(v) + " " for v in n.prior))
        else:
            for cim in n.cims:
                lines.append("".join(_fmt(v) + " " for v in cim.ravel()))
        lines.append(SEPARATOR)
    return "\n".join(lines) + "\n"


class _Lines:
    """Cursor over meaningful lines (blank lines skipped) with line numbers."""

    def __init__(self, text: str):
        self.items = [(i, ln.strip()) for i, ln in enumerate(text.splitlines(), start=1) if ln.strip()]
        self.pos = 0

    def peek(self):
        return self.items[self.pos] if self.pos < len(self.items) else (None, None)

    def next(self, what: str):
        if self.pos >= len(self.items):
            last = self.items[-1][0] if self.items else 0
            raise CtbnFormatError(f"unexpected end of file, expected {what}", last + 1)
        item = self.items[self.pos]
        self.pos += 1
        return item

    def separators(self):
        while self.pos < len(self.items) and set(self.items[self.pos][1]) == {"-"}:
            self.pos += 1

    def expect(self, token: str):
        self.separators()
        line, text = self.next(repr(token))
        if text.split() != token.split():
            raise CtbnFormatError(f"expected {token!r}, found {text!r}", line)


def _numbers(line: int, text: str, what: str) -> list[float]:
    try:
        return [float(v) for v in text.split()]
    except ValueError:
        raise CtbnFormatError(f"non-numeric value in {what}", line) from None


def _graph_section(cur: _Lines, names, index, what) -> dict[str, tuple[int, ...]]:
    out = {}
    for expected in names:
        line, text = cur.next(f"{what} line for {expected}")
        tokens = text.split()
        if tokens[0] != expected:
            raise CtbnFormatError(f"expected {what} line for {expected!r}, found {tokens[0]!r}", line)
        if tokens[-1] != "0" or len(tokens) < 2:
            raise CtbnFormatError(f"{what} line for {expected!r} is not terminated by 0", line)
        parents = []
        for p in tokens[1:-1]:
            if p not in index:
                raise CtbnFormatError(f"unknown parent {p!r} of {expected!r}", line)
            parents.append(index[p])
        out[expected] = tuple(parents)
    return out


def parse_ctbn(text: str, schema: ModelSchema | None = None, name: str = "") -> CtbncModel:
    """Parse the ``.ctbn`` text format.

    The file carries only cardinalities, so state names default to ``"0"``,
    ``"1"``, ... unless ``schema`` supplies them. The initial-distribution
    block is checked for shape and otherwise ignored.
    """
    cur = _Lines(text)
    cur.expect("BAYESIAN NETWORK")
    cur.separators()
    line, header = cur.next("'BBNodes N'")
    tokens = header.split()
    if len(tokens) != 2 or tokens[0] != "BBNodes" or not tokens[1].isdigit():
        raise CtbnFormatError(f"expected 'BBNodes N', found {header!r}", line)
    n_nodes = int(tokens[1])
    cur.separators()
    names, cards = [], []
    while True:
        line, text_ = cur.peek()
        if text_ is None or set(text_) == {"-"}:
            break
        cur.next("node")
        tokens = text_.split()
        if len(tokens) != 2 or not tokens[1].isdigit() or int(tokens[1]) < 1:
            raise CtbnFormatError(f"expected '<name> <states>', found {text_!r}", line)
        names.append(tokens[0])
        cards.append(int(tokens[1]))
    if len(names) != n_nodes:
        raise CtbnFormatError(f"BBNodes declares {n_nodes} nodes but {len(names)} are listed", line)
    index = {n: i for i, n in enumerate(names)}
    cur.separators()
    bn_parents = _graph_section(cur, names, index, "network structure")
    for node in names:
        cur.separators()
        line, text_ = cur.next(f"CPT block of {node}")
        if text_ != node:
            raise CtbnFormatError(f"expected CPT block of {node!r}, found {text_!r}", line)
        rows = math.prod(cards[p] for p in bn_parents[node])
        for _ in range(rows):
            line, text_ = cur.next(f"CPT row of {node}")
            values = _numbers(line, text_, f"CPT of {node}")
            if len(values) != cards[index[node]]:
                raise CtbnFormatError(
                    f"CPT row of {node!r} has {len(values)} values, expected {cards[index[node]]}", line)
    cur.expect("DIRECTED GRAPH")
    cur.separators()
    parents = _graph_section(cur, names, index, "graph")
    cur.expect("CIMS")
    prior = None
    cims = {}
    for i, node in enumerate(names):
        cur.separators()
        line, text_ = cur.next(f"CIM block of {node}")
        if text_ != node:
            raise CtbnFormatError(f"expected CIM block of {node!r}, found {text_!r}", line)
        card = cards[i]
        if i == 0:
            line, text_ = cur.next(f"class prior of {node}")
            prior = _numbers(line, text_, "class prior")
            if len(prior) != card:
                raise CtbnFormatError(f"class prior has {len(prior)} values, expected {card}", line)
            if abs(sum(prior) - 1.0) > PARSE_ROW_SUM_TOL:
                raise CtbnFormatError(f"class prior sums to {sum(prior)!r}", line)
            prior = np.asarray(prior)
            if abs(prior.sum() - 1.0) > 1e-9:
                prior = prior / prior.sum()
            continue
        block = []
        for _ in range(math.prod(cards[p] for p in parents[node])):
            line, text_ = cur.next(f"CIM row of {node}")
            values = _numbers(line, text_, f"CIM of {node}")
            if len(values) != card * card:
                raise CtbnFormatError(
                    f"CIM row of {node!r} has {len(values)} values, expected {card * card}", line)
            cim = np.asarray(values).reshape(card, card)
            try:
                check_cim(cim, PARSE_ROW_SUM_TOL)
            except CimError as e:
                raise CtbnFormatError(f"{node}: {e}", line) from None
            try:
                check_cim(cim)
            except CimError:
                # tolerated truncation: restore exact row sums on the diagonal
                cim = cim_from_q_theta(np.ones(card), cim - np.diag(np.diag(cim)))
            block.append(cim)
        cims[node] = np.asarray(block).reshape(-1, card, card)
    cur.separators()
    line, text_ = cur.peek()
    if text_ is not None:
        raise CtbnFormatError(f"unexpected trailing content {text_!r}", line)
    if parents[names[0]]:
        raise CtbnFormatError("the class node cannot have parents")
    nodes = [CtbnNode(names[0], tuple(str(s) for s in range(cards[0])), True, (), None, prior)]
    for i, node in enumerate(names[1:], start=1):
        nodes.append(CtbnNode(node, tuple(str(s) for s in range(cards[i])), False, parents[node], cims[node]))
    model = CtbncModel(tuple(nodes), name)
    return model.with_schema(schema) if schema is not None else model
