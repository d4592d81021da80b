import random

import pytest
from hypothesis import given, settings, strategies as st

from cliplearn.concept import And, Bottom, Exists, Forall, Not, Or, Top, parse_concept, random_concept
from cliplearn.retrieval import (RetrievalError, f_measure, f_measure_mask, instances, pos_neg,
                                 quality_from_counts, retriever)
from oracles import naive_instances


def test_family_examples(family):
    assert instances(family, parse_concept("Female")) == {"Anna", "Kate"}
    assert instances(family, parse_concept("not Car")) == {"Anna", "Kate", "Jack", "Paul"}
    assert instances(family, parse_concept("only hasChild.Car")) == {"Anna", "Kate", "Venza", "Paul"}


def test_pos_neg(family):
    assert pos_neg(family, Top) == (family.individuals, frozenset())
    assert pos_neg(family, Bottom) == (frozenset(), family.individuals)
    assert pos_neg(family, parse_concept("Female")) == ({"Anna", "Kate"}, {"Venza", "Jack", "Paul"})


def test_unknown_names(family):
    with pytest.raises(RetrievalError):
        instances(family, parse_concept("Dragon"))
    with pytest.raises(RetrievalError):
        instances(family, parse_concept("some flies.Top"))


def test_f_measure_cases():
    q = f_measure({"a", "b", "c", "x"}, {"a", "b", "c", "d"}, {"x", "y"})
    assert (q.precision, q.recall, q.f1) == (0.75, 0.75, 0.75)
    q = f_measure({"a", "b", "z"}, {"a", "b"}, {"c"})
    assert (q.precision, q.recall, q.f1, q.accuracy) == (1.0, 1.0, 1.0, 1.0)
    q = f_measure(set(), {"a"}, {"b"})
    assert (q.precision, q.recall, q.f1) == (0.0, 0.0, 0.0)
    assert q.accuracy == 0.5


def test_f_measure_rejects_overlap():
    with pytest.raises(ValueError):
        f_measure({"a"}, {"a"}, {"a"})


def test_mask_variant_agrees(synth):
    ret = retriever(synth)
    rng = random.Random(0)
    inds = sorted(synth.individuals)
    for _ in range(50):
        pos = set(rng.sample(inds, 10))
        neg = set(rng.sample(sorted(set(inds) - pos), 10))
        e = random_concept(synth, 7, rng)
        a = f_measure(instances(synth, e), pos, neg)
        b = f_measure_mask(ret.mask(e), ret.to_mask(pos), ret.to_mask(neg), len(pos), len(neg))
        assert a == b


def test_quality_bounds():
    for tp, fp, fn, tn in [(0, 0, 0, 0), (1, 0, 0, 0), (3, 2, 1, 5), (0, 4, 4, 0)]:
        q = quality_from_counts(tp, fp, fn, tn)
        assert 0 <= q.f1 <= 1
        assert q.f1 <= max(q.precision, q.recall) + 1e-12


def test_matches_naive_evaluator(synth):
    rng = random.Random(7)
    for _ in range(300):
        e = random_concept(synth, 9, rng)
        assert instances(synth, e) == naive_instances(synth, e)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6))
def test_de_morgan_and_involution(synth, seed):
    rng = random.Random(seed)
    c, d = random_concept(synth, 6, rng), random_concept(synth, 6, rng)
    assert instances(synth, Not(And(c, d))) == instances(synth, Or(Not(c), Not(d)))
    assert instances(synth, Not(Not(c))) == instances(synth, c)


def test_vacuous_forall(synth):
    for r in synth.roles:
        without = {a for a in synth.individuals if (a, r) not in synth.role_assertions}
        assert without
        for filler in (Bottom, Top, parse_concept(sorted(synth.atomic_concepts)[0])):
            assert without <= instances(synth, Forall(r, filler))
            assert not without & instances(synth, Exists(r, filler))


def test_bounded_cache(synth):
    from cliplearn.retrieval import Retriever
    ret = Retriever(synth, cache_size=4)
    rng = random.Random(3)
    for _ in range(20):
        ret.mask(random_concept(synth, 5, rng))
    assert ret.mask.cache_info().currsize <= 4
