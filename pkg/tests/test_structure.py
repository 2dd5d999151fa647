import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctbnc.data import Dataset
from ctbnc.estimation import (
    Hyperparameters,
    encode,
    learn_parameters,
    node_statistics,
    statistics_from_dataset,
)
from ctbnc.inference import classify_dataset
from ctbnc.model import build_model, ctnb_parents
from ctbnc.structure import (
    SearchConfig,
    cll_score,
    dimension_penalty,
    hill_climb,
    learn_one_vs_rest,
    mll_family_score,
    mll_score,
    model_dimension,
    rest_label,
)
from ctbnc.synthesis import FactorySpec, default_schema, new_model, sample_dataset
from helpers import dataset, random_trajectory, trajectory


def _mll_loops(stats, h):
    """Per-cell evaluation of the closed-form marginal likelihood."""
    total = 0.0
    card = stats.M.shape[-1]
    a, tau = h.alpha_m, h.tau
    for c in range(stats.M.shape[0]):
        for x in range(card):
            m = stats.M[c, x].sum()
            t = stats.T[c, x]
            total += (math.lgamma(a + m + 1) + (a + 1) * math.log(tau) - math.lgamma(a + 1)
                      - (a + m + 1) * math.log(tau + t))
            total += math.lgamma(a) - math.lgamma(a + m)
            for x2 in range(card):
                if x2 != x:
                    ax = a / (card - 1)
                    total += math.lgamma(ax + stats.M[c, x, x2]) - math.lgamma(ax)
    return total


def _dependent_model(seed, strong=8.0):
    """N02 moves fast when N01 is in s1 and slowly otherwise."""
    schema = default_schema((2, 2, 2, 2))
    parents = ((), (0,), (0, 1), (0,))
    rng = np.random.default_rng(seed)

    def flip(q):
        return np.array([[-q, q], [q, -q]])

    n01 = np.array([flip(rng.uniform(1, 2)) for _ in range(2)])
    n03 = np.array([flip(rng.uniform(1, 2)) for _ in range(2)])
    # configurations: (class, N01), class fastest
    base = rng.uniform(0.5, 1.0, size=2)
    n02 = np.array([flip(base[0]), flip(base[1]), flip(base[0] * strong), flip(base[1] * strong)])
    return build_model(schema, parents, np.array([0.5, 0.5]), [None, n01, n02, n03])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.1, 5.0), st.floats(1e-3, 1.0))
def test_family_score_matches_cell_loop(seed, alpha, tau):
    rng = np.random.default_rng(seed)
    schema = default_schema((2, 3, 2))
    d = dataset(random_trajectory(rng, schema, int(rng.integers(1, 7)), f"t{i}") for i in range(4))
    enc = encode(d, schema)
    h = Hyperparameters(alpha, tau)
    for parents in [(0,), (0, 2), (2,), ()]:
        stats = node_statistics(enc, 1, parents)
        assert mll_family_score(stats, h) == pytest.approx(_mll_loops(stats, h), abs=1e-9)


def test_no_data_scores_are_equal_across_parent_sets():
    schema = default_schema((2, 2, 2, 3))
    d = dataset([trajectory("t", [0.0], [["c0", "s0", "s0", "s0"]], schema.names, "Class")])
    enc = encode(d, schema)
    h = Hyperparameters()
    score = lambda ps: mll_family_score(node_statistics(enc, 1, ps), h)
    # one interval of zero length: every count is zero and each ratio cancels
    for ps in [(0,), (2,), (0, 2), (0, 3), (0, 2, 3)]:
        assert score(ps) == pytest.approx(0.0, abs=1e-12)


def test_score_depends_on_data_size():
    gen = _dependent_model(0)
    d = sample_dataset(gen, 50, 5.0, seed=1)
    doubled = Dataset(d.trajectories + tuple(t.replace(identifier="x" + t.identifier) for t in d),
                      d.indexing)
    h = Hyperparameters()
    a = mll_score(statistics_from_dataset(d, gen.schema, gen.parent_sets), h)
    b = mll_score(statistics_from_dataset(doubled, gen.schema, gen.parent_sets), h)
    assert a != b


def test_dependence_raises_family_score():
    wins = 0
    h = Hyperparameters()
    for seed in range(20):
        gen = _dependent_model(seed)
        enc = encode(sample_dataset(gen, 500, 5.0, seed=100 + seed), gen.schema)
        with_parent = mll_family_score(node_statistics(enc, 2, (0, 1)), h)
        without = mll_family_score(node_statistics(enc, 2, (0,)), h)
        wins += with_parent > without
    assert wins >= 19


def test_mll_decomposes():
    gen = _dependent_model(1)
    d = sample_dataset(gen, 60, 5.0, seed=2)
    ss = statistics_from_dataset(d, gen.schema, gen.parent_sets)
    h = Hyperparameters()
    assert mll_score(ss, h) == sum(mll_family_score(s, h) for s in ss.nodes[1:])


# -- CLL --------------------------------------------------------------------


def test_cll_of_prior_only_model():
    schema = default_schema((2, 2))
    cims = np.array([[[-1.0, 1.0], [1.0, -1.0]]] * 2)
    model = build_model(schema, ctnb_parents(2), np.array([0.5, 0.5]), [None, cims])
    rng = np.random.default_rng(0)
    d = dataset(random_trajectory(rng, schema, 4, f"t{i}") for i in range(4))
    assert cll_score(model, d) == pytest.approx(4 * math.log(0.5), abs=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_cll_matches_per_trajectory_sum(seed):
    rng = np.random.default_rng(seed)
    gen = new_model(FactorySpec((3, 2, 3), seed=seed % 1000))
    d = sample_dataset(gen, 10, 2.0, seed=seed)
    model = learn_parameters(d, gen.schema, gen.parent_sets)
    expected = sum(math.log(r.posterior[model.classes.index(r.true_class)])
                   for r in classify_dataset(model, d))
    got = cll_score(model, d)
    assert got == pytest.approx(expected, abs=1e-10)
    assert got <= 0.0
    del rng


def test_separating_model_cll_near_zero():
    schema = default_schema((2, 2))
    cims = np.array([[[-0.1, 0.1], [0.1, -0.1]], [[-50.0, 50.0], [50.0, -50.0]]])
    model = build_model(schema, ctnb_parents(2), np.array([0.5, 0.5]), [None, cims])
    d = sample_dataset(model, 20, 3.0, seed=0)
    s = cll_score(model, d)
    assert -1e-3 < s <= 0.0


# -- penalty ----------------------------------------------------------------


def test_penalty_values():
    model = new_model(FactorySpec((2, 2), seed=0))
    assert model_dimension(model) == 2 * 2 * 1 + 1
    assert dimension_penalty(model, 1) == 0.0
    assert dimension_penalty(model, 10) == pytest.approx(-(5 / 2) * math.log(10))


def test_binary_node_with_two_configurations():
    # the family part alone: 2 configs * 2 states * 1 free target
    from ctbnc.structure import family_dimension
    assert family_dimension(2, 2) == 4
    assert -family_dimension(2, 2) / 2 * math.log(7) == pytest.approx(-2 * math.log(7))


@given(st.integers(1, 10_000))
def test_penalty_never_positive(n):
    model = new_model(FactorySpec((3, 2, 3), seed=1))
    assert dimension_penalty(model, n) <= 0.0


# -- hill climbing ----------------------------------------------------------


def test_empty_neighbourhood_keeps_naive_bayes():
    gen = _dependent_model(0)
    d = sample_dataset(gen, 100, 5.0, seed=3)
    for score in ("LL", "CLL"):
        result, model = hill_climb(d, SearchConfig(1, score), gen.schema)
        assert model.is_ctnb()
        assert len(result.history) == 1


def test_actnb_needs_room_for_an_attribute_parent():
    with pytest.raises(ValueError):
        SearchConfig(1, "LL", force_class=True)


def test_recovers_planted_edge():
    gen = _dependent_model(5)
    d = sample_dataset(gen, 2000, 5.0, seed=6)
    result, model = hill_climb(d, SearchConfig(2, "LL"), gen.schema)
    assert 1 in model.nodes[2].parents


@pytest.mark.parametrize("score, penalty", [("LL", False), ("LL", True), ("CLL", False), ("CLL", True)])
def test_search_invariants(score, penalty):
    gen = new_model(FactorySpec((2, 3, 2, 2), seed=7))
    d = sample_dataset(gen, 80, 3.0, seed=8)
    config = SearchConfig(3, score, penalty, force_class=True)
    result, model = hill_climb(d, config, gen.schema)
    assert model.nodes[0].parents == ()
    assert model.is_max_k_actnb(3)
    hist = np.array(result.history)
    assert np.all(np.diff(hist) > 0)
    assert result.score == pytest.approx(hist[-1])
    again, _ = hill_climb(d, config, gen.schema)
    np.testing.assert_array_equal(again.adjacency, result.adjacency)


def test_penalty_lowers_scores():
    gen = _dependent_model(2)
    d = sample_dataset(gen, 100, 5.0, seed=9)
    plain, _ = hill_climb(d, SearchConfig(2, "LL"), gen.schema)
    pen, _ = hill_climb(d, SearchConfig(2, "LL", True), gen.schema)
    assert pen.score < plain.score


def test_ctbnc_bound_counts_the_class():
    gen = _dependent_model(3)
    d = sample_dataset(gen, 400, 5.0, seed=10)
    _, model = hill_climb(d, SearchConfig(2, "LL"), gen.schema)
    assert model.is_max_k(2)


# -- one-vs-rest ------------------------------------------------------------


def test_one_member_per_class():
    gen = new_model(FactorySpec((10, 2, 2), seed=0))
    d = sample_dataset(gen, 100, 2.0, seed=1)
    schema = gen.schema
    ens = learn_one_vs_rest(d, None, schema)
    assert len(ens.models) == 10
    assert all(m.is_ctnb() and len(m.classes) == 2 for m in ens.models)


def test_two_class_members_mirror():
    gen = new_model(FactorySpec((2, 3), seed=0))
    d = sample_dataset(gen, 60, 3.0, seed=2)
    a, b = learn_one_vs_rest(d, None, gen.schema).models
    np.testing.assert_allclose(a.prior, b.prior[::-1])
    np.testing.assert_allclose(a.nodes[1].cims, b.nodes[1].cims[::-1])


def test_member_priors_recount():
    gen = new_model(FactorySpec((3, 2), seed=0))
    d = sample_dataset(gen, 90, 1.0, seed=3)
    ens = learn_one_vs_rest(d, None, gen.schema)
    labels = d.labels()
    for c, m in zip(ens.classes, ens.models):
        k = labels.count(c)
        np.testing.assert_allclose(m.prior, [(k + 1) / (len(d) + 2), (len(d) - k + 1) / (len(d) + 2)])


def test_rest_label_avoids_collisions():
    assert rest_label(("a", "b")) == "rest"
    assert rest_label(("rest", "_rest")) == "__rest"


def test_structured_members():
    gen = _dependent_model(4)
    d = sample_dataset(gen, 300, 5.0, seed=11)
    ens = learn_one_vs_rest(d, SearchConfig(2, "LL", force_class=True), gen.schema)
    assert all(m.is_max_k_actnb(2) for m in ens.models)
