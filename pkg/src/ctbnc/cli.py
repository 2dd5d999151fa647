"""Command-line front end.

Usage::

    ctbnc [--modifier[=arg1,arg2,...]]... <data>
    ctbnc synthesize --out DIR [options]

Modifiers may appear in any order; the one token that is not a modifier is
the data path. ``ctbnc --help`` lists them.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import os
import re
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .clustering import EmConfig
from .data import (
    Dataset,
    cut_dataset,
    load_dataset,
    load_partition,
    scale_time,
    write_dataset,
)
from .estimation import Hyperparameters, collect_statistics, encode, estimate_parameters
from .inference import BinaryDecider, classify_any
from .metrics import Z_VALUES, comparison_matrices, confidence_level
from .model import CtbncModel, ModelSchema, OneVsRestEnsemble, ctnb_parents, parse_ctbn, schema_from_dataset, write_ctbn
from .structure import SearchConfig, hill_climb_encoded, learn_one_vs_rest_encoded
from .synthesis import FactorySpec, new_model, sample_dataset
from .validation import (
    ClusteringRun,
    CvResult,
    RunResult,
    ValidationError,
    clustering_in_sample,
    cross_validate,
    hold_out,
    macro_performances,
    micro_performances,
    run_performances,
    summarize,
)


class UsageError(ValueError):
    """Invalid command line."""


# ---------------------------------------------------------------------------
# modifier table


@dataclass(frozen=True)
class Modifier:
    index: int
    name: str
    takes_args: bool
    description: str
    optional_args: bool = False
    enabled: bool = True


MODIFIERS = (
    Modifier(1, "help", False, "print this help and exit"),
    Modifier(2, "CTBNC", True, "models to learn: CTNB, ACTNBk-f, CTBNCk-f (f = LL or CLL), each "
             "optionally followed by Mx, Tx, Px priors and 'penalty'"),
    Modifier(3, "model", True, "paths of .ctbn models to test"),
    Modifier(4, "validation", True, "HO[,fraction] (default HO,0.7) or CV[,k] (default k = 10)"),
    Modifier(5, "clustering", True, "EM clustering: soft|hard, max iterations (int), change "
             "threshold (real), Cn clusters; any order", optional_args=True),
    Modifier(6, "1vs1", False, "learn one binary model per class"),
    Modifier(7, "bThreshold", True, "posterior threshold of the first class in binary problems"),
    Modifier(8, "testName", True, "test name (default yyMMddHHmm_Test)"),
    Modifier(9, "ext", True, "data file extension (default .csv)"),
    Modifier(10, "sep", True, "column separator (default ,)"),
    Modifier(11, "className", True, "class column name (default class)"),
    Modifier(12, "timeName", True, "time column name (default t)"),
    Modifier(13, "trjSeparator", True, "column whose value changes split a file into trajectories"),
    Modifier(14, "validColumns", True, "columns used as variables (default all)"),
    Modifier(15, "cvPartitions", True, "file with a cross-validation partition to follow"),
    Modifier(16, "cvPrefix", True, "prefix removed from the names in the partition file"),
    Modifier(17, "cutPercentage", True, "keep this fraction of trajectories and of their length"),
    Modifier(18, "timeFactor", True, "multiply every timestamp by this factor"),
    Modifier(19, "training", True, "training set directory; <data> becomes the test set"),
    Modifier(20, "testset", False, "use <data> as the test set without splitting"),
    Modifier(21, "rPath", True, "results directory (default <data>/<testName>)"),
    Modifier(22, "confidence", True, "confidence level: 99.9, 99.8, 99, 98, 95, 90 (default), 80"),
    Modifier(23, "noprob", False, "skip the per-transition class probability track"),
    Modifier(24, "v", False, "verbose progress on standard error"),
    Modifier(25, "seed", True, "seed of every random choice (default 0)"),
    Modifier(26, "jobs", True, "worker threads for cross-validation folds (default 1)"),
)
BY_NAME = {m.name: m for m in MODIFIERS if m.enabled}

# symmetric incompatibilities
INCOMPATIBLE = frozenset(
    [frozenset(("help", m.name)) for m in MODIFIERS if m.name != "help"]
    + [frozenset(p) for p in (("model", "1vs1"), ("validation", "clustering"),
                              ("clustering", "1vs1"), ("clustering", "bThreshold"))]
)
# dependencies: modifier -> modifiers whose value it constrains
DEPENDENCIES = {
    "model": ("className", "validColumns"),
    "cvPartitions": ("validation",),
    "cvPrefix": ("validation", "cvPartitions"),
    "training": ("validation",),
    "testset": ("model", "validation", "training"),
}


def help_text() -> str:
    lines = [__doc__.strip(), "", "Modifiers:"]
    for m in MODIFIERS:
        if m.enabled:
            arg = "=args" if m.takes_args else ""
            lines.append(f"  --{m.name}{arg}\n      {m.description}")
    lines += ["", "Subcommand:", "  synthesize   sample a synthetic labeled dataset (see synthesize --help)"]
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# model specification grammar

_MODEL_TOKEN = re.compile(r"^(?:(CTNB)|(ACTNB|CTBNC)(\d+)-(LL|CLL))$")
_PRIOR_TOKEN = re.compile(r"^([MTP])([0-9]*\.?[0-9]+(?:[eE][-+]?\d+)?)$")


@dataclass(frozen=True)
class ModelSpec:
    text: str
    family: str  # CTNB | ACTNB | CTBNC
    k: int = 1
    score: str = "LL"
    hyper: Hyperparameters = field(default_factory=Hyperparameters)
    penalty: bool = False

    def search_config(self) -> SearchConfig | None:
        if self.family == "CTNB":
            return None
        return SearchConfig(self.k, self.score, self.penalty, self.hyper, self.family == "ACTNB")


def parse_model_specs(tokens: Sequence[str]) -> tuple[ModelSpec, ...]:
    specs: list[dict] = []
    for tok in tokens:
        tok = tok.strip()
        m = _MODEL_TOKEN.match(tok)
        if m:
            if m.group(1):
                specs.append(dict(text=tok, family="CTNB", priors={}, penalty=False))
            else:
                family, k, score = m.group(2), int(m.group(3)), m.group(4)
                if family == "ACTNB" and k < 2:
                    raise UsageError(f"--CTBNC: {tok}: ACTNB needs k >= 2")
                if family == "CTBNC" and k < 1:
                    raise UsageError(f"--CTBNC: {tok}: CTBNC needs k >= 1")
                specs.append(dict(text=tok, family=family, k=k, score=score, priors={}, penalty=False))
            continue
        if not specs:
            raise UsageError(f"--CTBNC: {tok!r} must follow a model name")
        current = specs[-1]
        if tok == "penalty":
            if current["penalty"]:
                raise UsageError(f"--CTBNC: penalty repeated for {current['text']}")
            current["penalty"] = True
            continue
        p = _PRIOR_TOKEN.match(tok)
        if not p:
            raise UsageError(f"--CTBNC: unknown token {tok!r}")
        key, value = p.group(1), float(p.group(2))
        if key in current["priors"]:
            raise UsageError(f"--CTBNC: prior {key} repeated for {current['text']}")
        if value <= 0:
            raise UsageError(f"--CTBNC: prior {tok} must be positive")
        current["priors"][key] = value
    out = []
    for s in specs:
        pr = s.pop("priors")
        defaults = Hyperparameters()
        hyper = Hyperparameters(pr.get("M", defaults.alpha_m), pr.get("T", defaults.tau),
                                pr.get("P", defaults.alpha_p))
        if s["family"] == "CTNB":
            s["penalty"] = False  # the flag has no effect without a structure search
        out.append(ModelSpec(hyper=hyper, **s))
    return tuple(out)


def parse_clustering(tokens: Sequence[str]) -> EmConfig:
    values: dict = {}

    def put(key, value, tok):
        if key in values:
            raise UsageError(f"--clustering: {tok!r} sets {key} twice")
        values[key] = value

    for tok in tokens:
        tok = tok.strip()
        if tok in ("soft", "hard"):
            put("assignment", tok, tok)
        elif re.fullmatch(r"C\d+", tok):
            put("n_clusters", int(tok[1:]), tok)
        elif re.fullmatch(r"\d+", tok):
            put("max_iterations", int(tok), tok)
        elif re.fullmatch(r"\d*\.\d+(?:[eE][-+]?\d+)?|\d+[eE][-+]?\d+", tok):
            put("threshold", float(tok), tok)
        else:
            raise UsageError(f"--clustering: unknown argument {tok!r}")
    try:
        return EmConfig(**values)
    except ValueError as e:
        raise UsageError(f"--clustering: {e}") from None


# ---------------------------------------------------------------------------
# run plan


@dataclass(frozen=True)
class RunPlan:
    data: str | None = None
    models: tuple[ModelSpec, ...] = ()
    model_files: tuple[str, ...] = ()
    validation: str = "HO"
    ho_fraction: float = 0.7
    cv_folds: int = 10
    clustering: EmConfig | None = None
    one_vs_rest: bool = False
    threshold: float | None = None
    test_name: str | None = None
    ext: str = ".csv"
    sep: str = ","
    class_name: str = "class"
    time_name: str = "t"
    trj_separator: str | None = None
    valid_columns: tuple[str, ...] | None = None
    cv_partitions: str | None = None
    cv_prefix: str | None = None
    cut: float = 1.0
    time_factor: float = 1.0
    training: str | None = None
    testset: bool = False
    results_path: str | None = None
    confidence: float = 90.0
    noprob: bool = False
    verbose: bool = False
    seed: int = 0
    jobs: int = 1
    help: bool = False
    given: tuple[str, ...] = ()
    argv: tuple[str, ...] = ()

    def resolved_test_name(self) -> str:
        return self.test_name or _dt.datetime.now().strftime("%y%m%d%H%M") + "_Test"

    def resolved_results_path(self, test_name: str) -> Path:
        if self.results_path:
            return Path(self.results_path)
        data = Path(self.data)
        base = data if data.is_dir() else data.parent
        return base / test_name


def _split_modifier(token: str) -> tuple[str, list[str] | None, str | None]:
    body = token[2:]
    if "=" in body:
        name, raw = body.split("=", 1)
        return name, raw.split(","), raw
    return body, None, None


def _number(name: str, text: str, kind=float):
    try:
        return kind(text)
    except ValueError:
        raise UsageError(f"--{name}: {text!r} is not a valid {kind.__name__}") from None


def _one(name: str, args: list[str]) -> str:
    if len(args) != 1 or not args[0]:
        raise UsageError(f"--{name} takes exactly one argument")
    return args[0]


def check_incompatibilities(given: Sequence[str]) -> None:
    given = list(given)
    for i, a in enumerate(given):
        for b in given[i + 1:]:
            if frozenset((a, b)) in INCOMPATIBLE:
                raise UsageError(f"--{a} cannot be used together with --{b}")


def check_dependencies(plan: RunPlan) -> None:
    g = set(plan.given)
    if "cvPrefix" in g:
        if plan.validation != "CV":
            raise UsageError("--cvPrefix requires --validation=CV")
        if "cvPartitions" not in g:
            raise UsageError("--cvPrefix requires --cvPartitions")
    if "cvPartitions" in g and plan.validation != "CV":
        raise UsageError("--cvPartitions requires --validation=CV")
    if "training" in g and plan.validation != "HO":
        raise UsageError("--training requires --validation=HO")
    if "testset" in g:
        if plan.validation != "HO":
            raise UsageError("--testset requires --validation=HO")
        if "model" not in g and "training" not in g:
            raise UsageError("--testset requires --model or --training")
        if plan.models and "training" not in g:
            raise UsageError("--testset with --CTBNC requires --training to learn from")
    if "model" in g:
        if plan.clustering is not None:
            raise UsageError("--model cannot be used together with --clustering")
        if plan.validation != "HO":
            raise UsageError("--model requires --validation=HO")
    if plan.clustering is not None and ("training" in g or "testset" in g):
        raise UsageError("--clustering learns and tests on <data>; --training/--testset do not apply")


def parse_args(argv: Sequence[str]) -> RunPlan:
    argv = list(argv)
    values: dict = {}
    given: list[str] = []
    positional: list[str] = []
    for token in argv:
        if not token.startswith("--"):
            positional.append(token)
            continue
        name, args, raw = _split_modifier(token)
        mod = BY_NAME.get(name)
        if mod is None:
            raise UsageError(f"unknown modifier --{name}")
        if name in given:
            raise UsageError(f"--{name} given more than once")
        if args is not None and not mod.takes_args:
            raise UsageError(f"--{name} takes no arguments")
        if args is None and mod.takes_args and not mod.optional_args:
            raise UsageError(f"--{name} requires arguments")
        given.append(name)
        values[name] = (args or [], raw)
    check_incompatibilities(given)
    if "help" in given:
        return RunPlan(help=True, given=tuple(given), argv=tuple(argv))
    if len(positional) != 1:
        raise UsageError("exactly one data path is required" if not positional
                         else f"more than one data path: {positional}")

    plan: dict = dict(data=positional[0], given=tuple(given), argv=tuple(argv))
    for name, (args, raw) in values.items():
        if name == "CTBNC":
            plan["models"] = parse_model_specs(args)
        elif name == "model":
            if not all(args):
                raise UsageError("--model: empty path")
            plan["model_files"] = tuple(args)
        elif name == "validation":
            method = args[0]
            if method not in ("HO", "CV") or len(args) > 2:
                raise UsageError(f"--validation: expected HO[,fraction] or CV[,k], got {raw!r}")
            plan["validation"] = method
            if len(args) == 2:
                if method == "HO":
                    f = _number(name, args[1])
                    if not 0 < f < 1:
                        raise UsageError(f"--validation: hold-out fraction {f} not in (0, 1)")
                    plan["ho_fraction"] = f
                else:
                    k = _number(name, args[1], int)
                    if k < 2:
                        raise UsageError(f"--validation: {k} folds, at least 2 are needed")
                    plan["cv_folds"] = k
        elif name == "clustering":
            plan["clustering"] = parse_clustering(args)
        elif name == "1vs1":
            plan["one_vs_rest"] = True
        elif name == "bThreshold":
            t = _number(name, _one(name, args))
            if not 0 <= t <= 1:
                raise UsageError(f"--bThreshold: {t} not in [0, 1]")
            plan["threshold"] = t
        elif name == "testName":
            plan["test_name"] = _one(name, args)
        elif name == "ext":
            plan["ext"] = _one(name, args)
        elif name == "sep":
            if raw is None or len(raw) != 1:
                raise UsageError(f"--sep: the separator must be one character, got {raw!r}")
            plan["sep"] = raw
        elif name == "className":
            plan["class_name"] = _one(name, args)
        elif name == "timeName":
            plan["time_name"] = _one(name, args)
        elif name == "trjSeparator":
            plan["trj_separator"] = _one(name, args)
        elif name == "validColumns":
            if not all(args):
                raise UsageError("--validColumns: empty column name")
            plan["valid_columns"] = tuple(args)
        elif name == "cvPartitions":
            plan["cv_partitions"] = _one(name, args)
        elif name == "cvPrefix":
            plan["cv_prefix"] = _one(name, args)
        elif name == "cutPercentage":
            c = _number(name, _one(name, args))
            if not 0 < c <= 1:
                raise UsageError(f"--cutPercentage: {c} not in (0, 1]")
            plan["cut"] = c
        elif name == "timeFactor":
            f = _number(name, _one(name, args))
            if not f > 0:
                raise UsageError(f"--timeFactor: {f} must be positive")
            plan["time_factor"] = f
        elif name == "training":
            plan["training"] = _one(name, args)
        elif name == "testset":
            plan["testset"] = True
        elif name == "rPath":
            plan["results_path"] = _one(name, args)
        elif name == "confidence":
            level = _number(name, _one(name, args))
            try:
                plan["confidence"] = confidence_level(level)
            except ValueError as e:
                raise UsageError(f"--confidence: {e}") from None
        elif name == "noprob":
            plan["noprob"] = True
        elif name == "v":
            plan["verbose"] = True
        elif name == "seed":
            plan["seed"] = _number(name, _one(name, args), int)
        elif name == "jobs":
            j = _number(name, _one(name, args), int)
            if j < 1:
                raise UsageError("--jobs must be at least 1")
            plan["jobs"] = j
    result = RunPlan(**plan)
    check_dependencies(result)
    if not result.models and not result.model_files:
        result = replace(result, models=parse_model_specs(["CTNB"]))
    return result


# ---------------------------------------------------------------------------
# execution


def model_dir_names(plan: RunPlan) -> list[str]:
    """``M<i>_<spec>``: learned models first, then loaded files by stem."""
    names = [f"M{i}_{s.text}" for i, s in enumerate(plan.models)]
    offset = len(names)
    names += [f"M{offset + i}_{Path(f).stem}" for i, f in enumerate(plan.model_files)]
    return names


class _Log:
    def __init__(self, verbose: bool):
        self.verbose = verbose

    def __call__(self, message: str):
        if self.verbose:
            print(message, file=sys.stderr, flush=True)


def _load(plan: RunPlan, path: str) -> Dataset:
    d = load_dataset(path, plan.ext, plan.sep, plan.time_name, plan.class_name,
                     plan.trj_separator, plan.valid_columns)
    if plan.cut < 1.0:
        d = cut_dataset(d, plan.cut, plan.seed)
    if plan.time_factor != 1.0:
        d = scale_time(d, plan.time_factor)
    return d


def _spec_learner(spec: ModelSpec, schema: ModelSchema, one_vs_rest: bool, name: str):
    config = spec.search_config()

    def learn_single(enc, weights, s):
        if config is None:
            ss = collect_statistics(enc, ctnb_parents(len(s)), weights, s)
            return estimate_parameters(ss, spec.hyper, name)
        return hill_climb_encoded(enc, config, weights=weights, schema=s, name=name)[1]

    def learner(train: Dataset):
        enc = encode(train, schema)
        if one_vs_rest:
            return learn_one_vs_rest_encoded(enc, learn_single, name)
        return learn_single(enc, enc.one_hot(), schema)

    return learner


def bind_loaded_model(model: CtbncModel, plan: RunPlan, schema: ModelSchema, path: str) -> CtbncModel:
    """Check a loaded model against the data columns and attach state names."""
    if model.names[0] != plan.class_name:
        raise ValidationError(
            f"{path}: model class {model.names[0]!r} differs from --className {plan.class_name!r}")
    attrs = set(model.names[1:])
    if plan.valid_columns is not None and attrs != set(plan.valid_columns) - {plan.class_name}:
        raise ValidationError(
            f"{path}: model variables {sorted(attrs)} differ from --validColumns {sorted(plan.valid_columns)}")
    if attrs != set(schema.names[1:]):
        raise ValidationError(
            f"{path}: model variables {sorted(attrs)} differ from data variables {sorted(schema.names[1:])}")
    states = dict(zip(schema.names, schema.states))
    for node in model.nodes:
        if node.card != len(states[node.name]):
            raise ValidationError(
                f"{path}: {node.name} has {node.card} states in the model but "
                f"{len(states[node.name])} in the data {states[node.name]}")
    return model.with_schema(ModelSchema(model.names, tuple(states[n] for n in model.names)))


@dataclass
class ModelOutcome:
    name: str
    classes: tuple[str, ...]
    hold_out: RunResult | None = None
    cv: CvResult | None = None
    clustering: ClusteringRun | None = None


def _preflight(path: Path) -> None:
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OSError(f"cannot create results directory {path}: {e}") from None
    if not os.access(path, os.W_OK):
        raise OSError(f"results directory {path} is not writable")


def run(plan: RunPlan) -> Path:
    log = _Log(plan.verbose)
    test_name = plan.resolved_test_name()
    out = plan.resolved_results_path(test_name)
    _preflight(out)
    names = model_dir_names(plan)

    log(f"loading {plan.data}")
    train = test = None
    if plan.training:
        train = _load(plan, plan.training)
        test = _load(plan, plan.data)
        schema = schema_from_dataset(train, test)
    elif plan.testset:
        test = _load(plan, plan.data)
        schema = schema_from_dataset(test)
    else:
        data = _load(plan, plan.data)
        schema = schema_from_dataset(data)
    log(f"variables {schema.names}, classes {schema.classes}")

    decider = BinaryDecider(plan.threshold) if plan.threshold is not None else None
    if decider is not None and len(schema.classes) != 2:
        raise ValidationError(f"--bThreshold needs a binary class, the data has {len(schema.classes)} classes")

    def classifier(model, ds):
        return classify_any(model, ds, track=not plan.noprob, decider=decider)

    outcomes: list[ModelOutcome] = []
    if plan.clustering is not None:
        for spec, name in zip(plan.models, names):
            log(f"clustering {name}")
            res = clustering_in_sample(data, replace(plan.clustering, seed=plan.seed), spec.hyper,
                                       name=name)
            outcomes.append(ModelOutcome(name, res.em.model.classes, clustering=res))
        write_clustering_results(out, plan, outcomes, test_name)
        return out

    learners = [_spec_learner(s, schema, plan.one_vs_rest, n) for s, n in zip(plan.models, names)]
    for path, name in zip(plan.model_files, names[len(plan.models):]):
        loaded = parse_ctbn(Path(path).read_text(), name=name)
        bound = bind_loaded_model(loaded, plan, schema, path)
        learners.append(lambda _train, m=bound: m)

    partition = None
    if plan.validation == "CV" and plan.cv_partitions:
        partition = load_partition(plan.cv_partitions, plan.cv_prefix)
    for learner, name in zip(learners, names):
        log(f"testing {name}")
        if plan.validation == "HO":
            if test is not None:
                run_ = hold_out(train if train is not None else test, plan.ho_fraction, plan.seed,
                                learner, classifier, test=test)
            else:
                run_ = hold_out(data, plan.ho_fraction, plan.seed, learner, classifier)
            outcomes.append(ModelOutcome(name, schema.classes, hold_out=run_))
        else:
            cv = cross_validate(data, plan.cv_folds, plan.seed, learner, classifier, partition,
                                plan.jobs)
            outcomes.append(ModelOutcome(name, schema.classes, cv=cv))
    write_classification_results(out, plan, outcomes, test_name)
    log(f"results in {out}")
    return out


# ---------------------------------------------------------------------------
# results writer

CURVE_DIRS = {"ROC": "ROCs", "PR": "Precision-Recall", "CumulativeResponse": "CumulativeResp&LiftChar",
              "Lift": "CumulativeResp&LiftChar"}
CURVE_PREFIX = {"ROC": "ROC", "PR": "PR", "CumulativeResponse": "CumulativeResponse", "Lift": "Lift"}


def _fmt(x) -> str:
    if x is None:
        return ""
    x = float(x)
    return "NaN" if np.isnan(x) else repr(x)


def _safe(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]", "_", name)


def result_line(r) -> str:
    return (f"{r.identifier}: True Class: {r.true_class or ''}, Predicted: {r.predicted}, "
            f"Probability: {_fmt(r.probability)}")


def write_modifiers(out: Path, plan: RunPlan, test_name: str) -> None:
    lines = [f"Test name: {test_name}", "Command line:", "  " + " ".join(plan.argv), "Modifiers:"]
    lines += [f"  --{g}" for g in plan.given]
    lines += ["Resolved settings:"]
    for key in ("data", "validation", "ho_fraction", "cv_folds", "clustering", "one_vs_rest",
                "threshold", "ext", "sep", "class_name", "time_name", "trj_separator",
                "valid_columns", "cv_partitions", "cv_prefix", "cut", "time_factor", "training",
                "testset", "confidence", "noprob", "seed", "jobs"):
        lines.append(f"  {key}: {getattr(plan, key)}")
    for i, s in enumerate(plan.models):
        lines.append(f"  model {i}: {s}")
    for f in plan.model_files:
        lines.append(f"  model file: {f}")
    (out / "modifiers.txt").write_text("\n".join(lines) + "\n")


def _write_curve(path: Path, curve) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if curve.bar is None:
            w.writerow(["x", "y"])
            w.writerows([_fmt(a), _fmt(b)] for a, b in zip(curve.x, curve.y))
        else:
            w.writerow(["x", "y", "bar"])
            w.writerows([_fmt(a), _fmt(b), _fmt(c)] for a, b, c in zip(curve.x, curve.y, curve.bar))


def _write_curves(model_dir: Path, curves: dict, tag: str) -> None:
    for kind, per_class in curves.items():
        for c, curve in per_class.items():
            if curve is not None:
                name = f"{tag}{CURVE_PREFIX[kind]}_{_safe(c)}.csv"
                _write_curve(model_dir / CURVE_DIRS[kind] / name, curve)


def _measure_rows(perf, confidence, prefix="") -> list[tuple[str, float]]:
    m = perf.measures
    lo, hi = perf.accuracy_interval
    rows = [(f"{prefix}Accuracy", m.accuracy), (f"{prefix}Accuracy lower bound ({confidence:g}%)", lo),
            (f"{prefix}Accuracy upper bound ({confidence:g}%)", hi), (f"{prefix}Error", m.error)]
    rows += _per_class_rows(perf.classes, prefix, m.precision, m.recall, m.f_measure, perf.pr_auc,
                            m.sensitivity, m.specificity, m.tp_rate, m.fp_rate, perf.roc_auc)
    rows.append((f"{prefix}Brier", perf.brier))
    return rows


def _per_class_rows(classes, prefix, precision, recall, f, pr_auc, sens, spec, tpr, fpr, roc_auc):
    rows = []
    for label, values in (("Precision", precision), ("Recall", recall), ("F-Measure", f),
                          ("PR AUC", pr_auc), ("Sensitivity", sens), ("Specificity", spec),
                          ("TP-Rate", tpr), ("FP-Rate", fpr), ("ROC AUC", roc_auc)):
        rows += [(f"{prefix}{label} {c}", v) for c, v in zip(classes, values)]
    return rows


def _timing_rows(learn, infer) -> list[tuple[str, float]]:
    learn = np.asarray(learn, dtype=float)
    infer = np.asarray(infer, dtype=float)
    var = lambda a: float(a.var(ddof=1)) if len(a) > 1 else 0.0
    return [("Avg learning time", float(learn.mean())), ("Var learning time", var(learn)),
            ("Avg inference time", float(infer.mean()) if len(infer) else float("nan")),
            ("Var inference time", var(infer))]


def _write_metrics_table(path: Path, columns: list[str], table: list[list[tuple[str, float]]]) -> None:
    labels = [label for label, _ in table[0]]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["Measure", *columns])
        for i, label in enumerate(labels):
            w.writerow([label, *(_fmt(rows[i][1]) for rows in table)])


def _labeled(results) -> bool:
    return all(r.true_class is not None for r in results)


def _write_models(run_dir: Path, model, tag: str) -> None:
    run_dir.mkdir(parents=True, exist_ok=True)
    if isinstance(model, OneVsRestEnsemble):
        for c, member in zip(model.classes, model.models):
            (run_dir / f"{tag}_{_safe(c)}.ctbn").write_text(write_ctbn(member))
    else:
        (run_dir / f"{tag}.ctbn").write_text(write_ctbn(model))


def write_classification_results(out: Path, plan: RunPlan, outcomes: list[ModelOutcome],
                                 test_name: str) -> None:
    write_modifiers(out, plan, test_name)
    conf = plan.confidence
    metric_columns, metric_tables = [], []
    fold_accuracies = {}
    for o in outcomes:
        model_dir = out / o.name
        model_dir.mkdir(parents=True, exist_ok=True)
        for d in sorted(set(CURVE_DIRS.values())) + ["runs"]:
            (model_dir / d).mkdir(exist_ok=True)
        lines = []
        if o.hold_out is not None:
            run_ = o.hold_out
            lines += [result_line(r) for r in run_.results]
            _write_models(model_dir / "runs", run_.model, "model")
            if _labeled(run_.results):
                perf = run_performances(run_, o.classes, conf)
                rows = _measure_rows(perf, conf) + _timing_rows([run_.learn_time], run_.inference_times)
                metric_columns.append(o.name)
                metric_tables.append(rows)
                _write_metrics_table(model_dir / "runs" / "metrics.csv", ["Test1"], [rows])
                _write_curves(model_dir, perf.curves, "")
        else:
            cv = o.cv
            per_fold, fold_rows = [], []
            for run_ in cv.runs:
                lines.append(f"Test{run_.fold + 1}")
                lines += [result_line(r) for r in run_.results]
                _write_models(model_dir / "runs", run_.model, f"Test{run_.fold + 1}")
            labeled = all(_labeled(r.results) for r in cv.runs)
            if labeled:
                for run_ in cv.runs:
                    p = run_performances(run_, o.classes, conf)
                    per_fold.append(p)
                    fold_rows.append(_measure_rows(p, conf)
                                     + _timing_rows([run_.learn_time], run_.inference_times))
                _write_metrics_table(model_dir / "runs" / "metrics.csv",
                                     [f"Test{r.fold + 1}" for r in cv.runs], fold_rows)
                micro = micro_performances(cv.runs, o.classes, conf)
                macro = macro_performances(per_fold, conf)
                rows = _measure_rows(micro, conf, "Micro ")
                rows += _macro_rows(macro, o.classes, conf, len(per_fold))
                rows += _timing_rows(micro.learn_times, micro.inference_times)
                metric_columns.append(o.name)
                metric_tables.append(rows)
                fold_accuracies[o.name] = [p.measures.accuracy for p in per_fold]
                _write_curves(model_dir, micro.curves, "micro_")
                _write_curves(model_dir, macro.curves, "macro_")
        (out / f"{o.name}-results.txt").write_text("\n".join(lines) + "\n")
    if metric_tables:
        _write_metrics_table(out / "metrics.csv", metric_columns, metric_tables)
    if len(fold_accuracies) >= 2:
        write_comparison(out / "model-comparison.csv", fold_accuracies)


def _macro_rows(macro, classes, confidence, k) -> list[tuple[str, float]]:
    z = Z_VALUES[confidence]
    half = z * macro.accuracy_std / np.sqrt(k)
    rows = [("Macro Accuracy", macro.accuracy),
            (f"Macro Accuracy lower bound ({confidence:g}%)", max(0.0, macro.accuracy - half)),
            (f"Macro Accuracy upper bound ({confidence:g}%)", min(1.0, macro.accuracy + half)),
            ("Macro Error", macro.error)]
    rows += _per_class_rows(classes, "Macro ", macro.precision, macro.recall, macro.f_measure,
                            macro.pr_auc, macro.recall, macro.specificity, macro.recall,
                            macro.fp_rate, macro.roc_auc)
    rows.append(("Macro Brier", macro.brier))
    return rows


def write_comparison(path: Path, accuracies: dict) -> None:
    names = list(accuracies)
    short = [n.split("_", 1)[0] for n in names]
    mats = comparison_matrices(accuracies)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["UP: the column model is better; LF: the row model is better; 0: no "
                    "difference. A two-tailed difference at level c means one-sided dominance "
                    "at (1 + c) / 2."])
        for level, mat in mats.items():
            w.writerow([])
            w.writerow(["Comparison test", f"{level:g}%"])
            w.writerow(["", *short])
            for s, row in zip(short, mat):
                w.writerow([s, *row])
        w.writerow([])
        w.writerow(["Models", *names])


def write_clustering_results(out: Path, plan: RunPlan, outcomes: list[ModelOutcome],
                             test_name: str) -> None:
    write_modifiers(out, plan, test_name)
    for o in outcomes:
        res = o.clustering
        model_dir = out / o.name
        model_dir.mkdir(parents=True, exist_ok=True)
        (model_dir / "results.txt").write_text("\n".join(result_line(r) for r in res.results) + "\n")
        (model_dir / "model.ctbn").write_text(write_ctbn(res.em.model))
        cfg = plan.clustering
        readme = [
            f"Test: {test_name}",
            f"Model: {o.name}",
            f"Assignment: {cfg.assignment}",
            f"Maximum iterations: {cfg.max_iterations}",
            f"Change threshold: {cfg.threshold}",
            f"Clusters: {len(res.em.model.classes)}" + (" (set manually)" if res.manual_clusters else ""),
            f"Iterations run: {res.em.iterations}",
            f"Seed: {plan.seed}",
            "Cluster names carry no correspondence with class names.",
        ]
        if res.manual_clusters:
            readme.append("The cluster count was set manually, so no performance file is written.")
        (model_dir / "readme.txt").write_text("\n".join(readme) + "\n")
        if res.external is not None:
            (model_dir / "performances.txt").write_text(_clustering_report(res))


def _matrix_block(title, rows_label, cols_label, rows, cols, m) -> list[str]:
    out = [title, f"{rows_label}\\{cols_label}," + ",".join(cols)]
    for r, vals in zip(rows, m):
        out.append(r + "," + ",".join(_fmt(v) if isinstance(v, float) or np.issubdtype(type(v), np.floating)
                                      else str(v) for v in vals))
    return out + [""]


def _clustering_report(res: ClusteringRun) -> str:
    e = res.external
    clusters, classes = res.cluster_order, res.class_order
    lines = [f"Rand index (R),{_fmt(e.rand)}", f"Jaccard coefficient (J),{_fmt(e.jaccard)}",
             f"Fowlkes-Mallows index (FM),{_fmt(e.fowlkes_mallows)}", ""]
    lines += _matrix_block("Association matrix", "cluster", "class", clusters, classes,
                           e.association.tolist())
    partition = e.association / e.association.sum()
    lines += _matrix_block("Clustering-partition matrix", "cluster", "class", clusters, classes,
                           partition.tolist())
    lines += _matrix_block("Precision matrix", "cluster", "class", clusters, classes, e.precision.tolist())
    lines += _matrix_block("Recall matrix", "cluster", "class", clusters, classes, e.recall.tolist())
    lines += _matrix_block("F-measure matrix", "cluster", "class", clusters, classes, e.f_measure.tolist())
    t = res.inference_times
    lines += [f"Learning time,{_fmt(res.learn_time)}",
              f"Avg inference time,{_fmt(t.mean() if len(t) else float('nan'))}",
              f"Var inference time,{_fmt(t.var(ddof=1) if len(t) > 1 else 0.0)}"]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# synthesis subcommand


def _synthesize(argv: Sequence[str]) -> int:
    p = argparse.ArgumentParser(prog="ctbnc synthesize",
                                description="Sample a labeled dataset from a random naive Bayes model.")
    p.add_argument("--out", required=True, help="output directory for the trajectory files")
    p.add_argument("--states", default="10,2,3,4",
                   help="state counts, class first (default 10,2,3,4)")
    p.add_argument("--rates", default="1,5", help="exit-rate range lo,hi (default 1,5)")
    p.add_argument("--n", type=int, default=100, help="number of trajectories (default 100)")
    p.add_argument("--horizon", type=float, default=5.0, help="time horizon (default 5)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ext", default=".csv")
    p.add_argument("--sep", default=",")
    p.add_argument("--model-out", default=None,
                   help="where to write the generating model (default <out>/generator.ctbn)")
    args = p.parse_args(list(argv))
    cards = tuple(int(s) for s in args.states.split(","))
    lo, hi = (float(v) for v in args.rates.split(","))
    model = new_model(FactorySpec(cards, ((lo, hi),), args.seed))
    data = sample_dataset(model, args.n, args.horizon, args.seed + 1, args.ext)
    out = Path(args.out)
    write_dataset(data, out, args.sep)
    model_path = Path(args.model_out) if args.model_out else out / "generator.ctbn"
    model_path.parent.mkdir(parents=True, exist_ok=True)
    model_path.write_text(write_ctbn(model))
    print(f"wrote {len(data)} trajectories to {out} and the model to {model_path}")
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv and argv[0] == "synthesize":
        return _synthesize(argv[1:])
    try:
        plan = parse_args(argv)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    if plan.help:
        print(help_text())
        return 0
    try:
        run(plan)
    except (ValueError, OSError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
