"""Trajectory containers and dataset ingestion.

A trajectory is a time-ordered sequence of full state assignments. The state
in row ``j`` holds over ``[t_j, t_{j+1})``; the last row closes the trajectory
and carries no sojourn.
"""

from __future__ import annotations

import csv
import math
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np


class IngestionError(ValueError):
    """Raised when a trajectory file cannot be turned into a Trajectory."""


class PartitionError(ValueError):
    """Raised for malformed cross-validation partition files."""


@dataclass(frozen=True)
class NodeIndexing:
    """Dense, bidirectional name <-> index mapping shared by data and models."""

    names: tuple[str, ...]
    class_name: str
    time_name: str = "t"
    _index: Mapping[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        names = tuple(self.names)
        object.__setattr__(self, "names", names)
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate variable names in {names}")
        if self.class_name not in names:
            raise ValueError(f"class {self.class_name!r} is not one of the variables {names}")
        object.__setattr__(self, "_index", {n: i for i, n in enumerate(names)})

    def __len__(self):
        return len(self.names)

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise KeyError(f"unknown variable {name!r}") from None

    def name(self, index: int) -> str:
        return self.names[index]

    @property
    def class_index(self) -> int:
        return self._index[self.class_name]

    @property
    def attribute_names(self) -> tuple[str, ...]:
        return tuple(n for n in self.names if n != self.class_name)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """One fully observed multivariate trajectory.

    ``states`` is a ``(J, N)`` array of text values aligned with
    ``indexing.names``. The class column, if the trajectory is labeled, holds
    the (constant) class value; unlabeled trajectories hold ``""`` there.
    """

    identifier: str
    times: np.ndarray
    states: np.ndarray
    indexing: NodeIndexing

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        states = np.asarray(self.states, dtype=str)
        if states.ndim != 2 or states.shape != (len(times), len(self.indexing)):
            raise ValueError(
                f"{self.identifier}: states shape {states.shape} does not match "
                f"{len(times)} time points x {len(self.indexing)} variables"
            )
        if len(times) < 1:
            raise ValueError(f"{self.identifier}: a trajectory needs at least one time point")
        if not np.all(np.isfinite(times)) or np.any(times < 0):
            raise ValueError(f"{self.identifier}: times must be finite and nonnegative")
        if np.any(np.diff(times) <= 0):
            j = int(np.argmax(np.diff(times) <= 0)) + 1
            raise ValueError(f"{self.identifier}: time is not strictly increasing at row {j}")
        cls = states[:, self.indexing.class_index]
        if np.any(cls != cls[0]):
            raise ValueError(f"{self.identifier}: class value changes within the trajectory")
        times.setflags(write=False)
        states.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "states", states)

    def __len__(self):
        return len(self.times)

    def __eq__(self, other):
        if not isinstance(other, Trajectory):
            return NotImplemented
        return (
            self.identifier == other.identifier
            and self.indexing == other.indexing
            and np.array_equal(self.times, other.times)
            and np.array_equal(self.states, other.states)
        )

    __hash__ = None

    @property
    def true_class(self) -> str | None:
        value = str(self.states[0, self.indexing.class_index])
        return value or None

    @property
    def duration(self) -> float:
        return float(self.times[-1] - self.times[0])

    def column(self, name: str) -> np.ndarray:
        return self.states[:, self.indexing.index(name)]

    def replace(self, **changes) -> "Trajectory":
        fields = dict(identifier=self.identifier, times=self.times, states=self.states,
                      indexing=self.indexing)
        fields.update(changes)
        return Trajectory(**fields)

    def with_class(self, value: str) -> "Trajectory":
        states = np.array(self.states)
        states[:, self.indexing.class_index] = value
        return self.replace(states=states)


@dataclass(frozen=True)
class Dataset:
    trajectories: tuple[Trajectory, ...]
    indexing: NodeIndexing

    def __post_init__(self):
        trajectories = tuple(self.trajectories)
        for trj in trajectories:
            if trj.indexing != self.indexing:
                raise ValueError(f"{trj.identifier}: indexing differs from the dataset's")
        object.__setattr__(self, "trajectories", trajectories)

    def __len__(self):
        return len(self.trajectories)

    def __iter__(self):
        return iter(self.trajectories)

    def __getitem__(self, i):
        return self.trajectories[i]

    @property
    def identifiers(self) -> list[str]:
        return [t.identifier for t in self.trajectories]

    def labels(self) -> list[str | None]:
        return [t.true_class for t in self.trajectories]

    def subset(self, identifiers: Iterable[str]) -> "Dataset":
        by_id = {t.identifier: t for t in self.trajectories}
        return Dataset(tuple(by_id[i] for i in identifiers), self.indexing)

    def take(self, positions: Iterable[int]) -> "Dataset":
        return Dataset(tuple(self.trajectories[i] for i in positions), self.indexing)

    def concat(self, other: "Dataset") -> "Dataset":
        return Dataset(self.trajectories + other.trajectories, self.indexing)


@dataclass(frozen=True)
class PartitionSpec:
    folds: tuple[tuple[str, ...], ...]

    def __post_init__(self):
        seen: dict[str, int] = {}
        for k, fold in enumerate(self.folds):
            if not fold:
                raise PartitionError(f"fold {k + 1} is empty")
            for ident in fold:
                if ident in seen:
                    raise PartitionError(
                        f"{ident!r} appears in folds {seen[ident] + 1} and {k + 1}"
                    )
                seen[ident] = k

    @property
    def n_folds(self) -> int:
        return len(self.folds)

    @property
    def membership(self) -> dict[str, int]:
        return {ident: k for k, fold in enumerate(self.folds) for ident in fold}


# ---------------------------------------------------------------------------
# ingestion


def _read_rows(path: Path, separator: str) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh, delimiter=separator)
        rows = [row for row in reader if any(cell.strip() for cell in row)]
    if not rows:
        raise IngestionError(f"{path.name}: empty file")
    header = [h.strip() for h in rows[0]]
    return header, [[c.strip() for c in row] for row in rows[1:]]


def _build_trajectory(identifier, times, rows, indexing, class_col, path, line_numbers):
    order = np.argsort(times, kind="stable")
    times = times[order]
    dup = np.nonzero(np.diff(times) <= 0)[0]
    if len(dup):
        line = line_numbers[order[dup[0] + 1]]
        raise IngestionError(
            f"{path.name}: non-increasing time {times[dup[0] + 1]!r} at row {line}"
        )
    states = np.asarray(rows, dtype=str)[order]
    cls = states[:, indexing.class_index]
    if np.any(cls != cls[0]):
        raise IngestionError(f"{path.name}: class column {class_col!r} is not constant in {identifier}")
    return Trajectory(identifier, times, states, indexing)


def load_file(
    path,
    separator: str = ",",
    time_col: str = "t",
    class_col: str = "class",
    trj_separator_col: str | None = None,
    valid_cols: Sequence[str] | None = None,
    indexing: NodeIndexing | None = None,
) -> list[Trajectory]:
    """Read one delimited file into one or more trajectories."""
    path = Path(path)
    header, rows = _read_rows(path, separator)
    required = [time_col, class_col] + ([trj_separator_col] if trj_separator_col else [])
    required += list(valid_cols or [])
    for col in required:
        if col not in header:
            raise IngestionError(f"{path.name}: missing column {col!r}")
    skip = {time_col, trj_separator_col}
    if valid_cols is not None:
        wanted = set(valid_cols) | {class_col}
        variables = [h for h in header if h in wanted and h not in skip]
    else:
        variables = [h for h in header if h not in skip]
    if indexing is None:
        indexing = NodeIndexing(tuple(variables), class_col, time_col)
    elif set(indexing.names) != set(variables):
        raise IngestionError(
            f"{path.name}: variables {sorted(variables)} differ from {sorted(indexing.names)}"
        )
    cols = [header.index(n) for n in indexing.names]
    t_col = header.index(time_col)
    s_col = header.index(trj_separator_col) if trj_separator_col else None

    segments: list[tuple[list[float], list[list[str]], list[int]]] = []
    last_key = object()
    for lineno, row in enumerate(rows, start=2):
        if len(row) < len(header):
            raise IngestionError(f"{path.name}: row {lineno} has {len(row)} fields, expected {len(header)}")
        try:
            t = float(row[t_col])
        except ValueError:
            raise IngestionError(
                f"{path.name}: non-numeric time {row[t_col]!r} at row {lineno}"
            ) from None
        key = row[s_col] if s_col is not None else None
        if not segments or key != last_key:
            segments.append(([], [], []))
            last_key = key
        segments[-1][0].append(t)
        segments[-1][1].append([row[c] for c in cols])
        segments[-1][2].append(lineno)
    if not segments:
        raise IngestionError(f"{path.name}: no data rows")

    out = []
    for k, (times, values, lines) in enumerate(segments, start=1):
        ident = f"{path.name}#{k}" if trj_separator_col else path.name
        out.append(_build_trajectory(ident, np.asarray(times, dtype=float), values,
                                     indexing, class_col, path, lines))
    return out


def load_dataset(
    path,
    ext: str = ".csv",
    separator: str = ",",
    time_col: str = "t",
    class_col: str = "class",
    trj_separator_col: str | None = None,
    valid_cols: Sequence[str] | None = None,
) -> Dataset:
    """Load every ``*ext`` file of a directory (or one file) as a Dataset.

    Files are read in sorted name order; the variable set is fixed by the
    first file and every other file must agree with it.
    """
    path = Path(path)
    if path.is_dir():
        files = sorted(p for p in path.iterdir() if p.is_file() and p.name.endswith(ext))
        if not files:
            raise IngestionError(f"no {ext!r} files in {path}")
    elif path.is_file():
        files = [path]
    else:
        raise IngestionError(f"{path} does not exist")
    indexing = None
    trajectories: list[Trajectory] = []
    for f in files:
        trjs = load_file(f, separator, time_col, class_col, trj_separator_col, valid_cols, indexing)
        indexing = trjs[0].indexing
        trajectories.extend(trjs)
    return Dataset(tuple(trajectories), indexing)


def write_dataset(dataset: Dataset, directory, separator: str = ",") -> list[Path]:
    """Write each trajectory to ``directory/<identifier>`` with a header row."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    idx = dataset.indexing
    written = []
    for trj in dataset:
        target = directory / trj.identifier
        with open(target, "w", newline="") as fh:
            w = csv.writer(fh, delimiter=separator, lineterminator="\n")
            w.writerow([idx.time_name, *idx.names])
            for t, row in zip(trj.times, trj.states):
                w.writerow([repr(float(t)), *row])
        written.append(target)
    return written


# ---------------------------------------------------------------------------
# partitions

_FOLD_HEADER = re.compile(r"^Test\s*\d*(\s+of\s+\d+)?\s*:?\s*$")
_RESULT_LINE = re.compile(r"^(?P<id>.+?):\s*True Class:")


def parse_partition(text: str, prefix: str | None = None) -> PartitionSpec:
    folds: list[list[str]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if _FOLD_HEADER.match(line):
            folds.append([])
            continue
        if not folds:
            raise PartitionError(f"line {lineno}: trajectory listed before any 'Test' header")
        m = _RESULT_LINE.match(line)
        ident = m.group("id").strip() if m else line
        if prefix and ident.startswith(prefix):
            ident = ident[len(prefix):]
        folds[-1].append(ident)
    if not folds:
        raise PartitionError("no 'Test' fold headers found")
    return PartitionSpec(tuple(tuple(f) for f in folds))


def load_partition(path, prefix: str | None = None) -> PartitionSpec:
    """Read a partition file in either the results-file or listing form."""
    return parse_partition(Path(path).read_text(), prefix)


# ---------------------------------------------------------------------------
# dataset manipulation


def _ceil_fraction(fraction: float, n: int) -> int:
    # guard against 0.7 * 10 == 7.000000000000001
    return max(1, math.ceil(round(fraction * n, 9)))


def cut_dataset(d: Dataset, fraction: float, rng_seed: int = 0) -> Dataset:
    """Keep a random ceil(fraction*n) subset, each cut to its first ceil(fraction*m) rows."""
    if not 0 < fraction <= 1:
        raise ValueError(f"cut fraction must be in (0, 1], got {fraction}")
    if fraction == 1.0 or len(d) == 0:
        return d
    rng = np.random.default_rng(rng_seed)
    keep = np.sort(rng.choice(len(d), size=_ceil_fraction(fraction, len(d)), replace=False))
    out = []
    for i in keep:
        trj = d[int(i)]
        m = _ceil_fraction(fraction, len(trj))
        out.append(trj.replace(times=trj.times[:m], states=trj.states[:m]))
    return Dataset(tuple(out), d.indexing)


def scale_time(d: Dataset, factor: float) -> Dataset:
    if not factor > 0:
        raise ValueError(f"time factor must be positive, got {factor}")
    if factor == 1.0:
        return d
    return Dataset(tuple(t.replace(times=t.times * factor) for t in d), d.indexing)


def permute_dataset(d: Dataset, rng_seed: int = 0) -> Dataset:
    order = np.random.default_rng(rng_seed).permutation(len(d))
    return d.take(int(i) for i in order)


def sorted_by_identifier(d: Dataset) -> Dataset:
    return Dataset(tuple(sorted(d, key=lambda t: t.identifier)), d.indexing)


def file_stem(path) -> str:
    return os.path.splitext(os.path.basename(str(path)))[0]
