import random

import pytest
from hypothesis import given, settings, strategies as st

from cliplearn.concept import And, Atomic, Bottom, Exists, Forall, Not, Or, Top, parse_concept, random_concept
from cliplearn.kb import KBError, from_triples
from cliplearn.refinement import RefinementConfig, refine_atomic, refine_helper, refine_top, rho
from cliplearn.retrieval import instances


def test_helper_size_family(family):
    # 2 subconcepts, 2 negations, 2 quantifiers x 3 roles x 3 fillers
    assert len(refine_helper(family, "Human")) == 22


def test_helper_leaf(family):
    out = refine_helper(family, "Mother")
    assert len(out) == 2 * len(family.roles) * 3
    assert all(isinstance(c, (Exists, Forall)) for c in out)


def test_helper_samples_when_many_subconcepts():
    triples = [(f"S{i}", "rdfs:subClassOf", "A") for i in range(8)] + [("x", "r", "y")]
    kb = from_triples(triples)
    cfg = RefinementConfig(k=5)
    out = refine_helper(kb, "A", cfg)
    fillers = {c.filler for c in out if isinstance(c, Exists)}
    assert len(fillers) == 3 + 5 + 5
    assert refine_helper(kb, "A", cfg) == out


def test_helper_unknown_concept(family):
    with pytest.raises(KBError):
        refine_helper(family, "Dragon")


def test_atomic_leaf_is_empty(family):
    assert refine_atomic(family, "Mother") == set()


def test_atomic_family_example(family):
    out = {c.key for c in refine_atomic(family, "Human", RefinementConfig(construct_frac=1.0))}
    assert {"Female", "Mother", "Female or Mother"} <= out


def test_atomic_shapes(family):
    human = Atomic("Human")
    subs = {Atomic("Female"), Atomic("Mother")}
    for c in refine_atomic(family, "Human", RefinementConfig(construct_frac=1.0)):
        if c in subs or c is Bottom:
            continue
        if isinstance(c, Or):
            assert {c.left, c.right} <= subs
        else:
            assert isinstance(c, And)
            assert c.left in subs or (c.right == human and isinstance(c.left, Or))


def test_atomic_sample_size_follows_fraction(family):
    small = refine_atomic(family, "Human", RefinementConfig(construct_frac=0.1))
    full = refine_atomic(family, "Human", RefinementConfig(construct_frac=1.0))
    assert len(small) < len(full)


def test_atomic_respects_max_length(synth):
    for a in synth.atomic_concepts:
        for ml in (1, 3, 5, 15):
            assert all(c.length <= ml for c in refine_atomic(synth, a, RefinementConfig(max_length=ml)))


def test_atomic_downward(synth):
    cfg = RefinementConfig(construct_frac=1.0)
    for a in sorted(synth.atomic_concepts):
        ia = instances(synth, Atomic(a))
        for c in refine_atomic(synth, a, cfg):
            assert instances(synth, c) <= ia


def test_bottom_conjunctions_collapse(family):
    out = refine_atomic(family, "Human", RefinementConfig(construct_frac=1.0))
    assert not any(isinstance(c, And) and Bottom in (c.left, c.right) for c in out)


def test_rho_top(family):
    out = rho(family, Top, 15)
    assert Top not in out
    assert Bottom in out
    assert Not(Atomic("Car")) in out
    assert Exists("hasChild", Top) in out and Forall("hasChild", Top) in out
    assert Or(Atomic("Car"), Atomic("Female")) in out
    assert all(c.length <= 3 for c in out)


def test_rho_top_toggles(family):
    cfg = RefinementConfig(top_bottom=False, top_unions=False, top_negations=False,
                           top_restrictions=False)
    assert refine_top(family, cfg) == {Atomic(a) for a in family.atomic_concepts}


def test_rho_exists_to_forall(family):
    e = parse_concept("some marriedTo.(not Car)")
    out = rho(family, e, 15)
    assert Forall("marriedTo", Not(Atomic("Car"))) in out
    assert Exists("marriedTo", And(Not(Atomic("Car")), Atomic("Female"))) in out


def test_rho_negation_moves_up(family):
    out = rho(family, parse_concept("not Female"), 15)
    assert parse_concept("not Human") in out
    assert parse_concept("not Female and some hasChild.Top") in out


def test_rho_union_conjunction(family):
    out = rho(family, parse_concept("Car or Female"), 15)
    assert parse_concept("(Car or Female) and Human") in out
    assert parse_concept("Car or Mother") in out


def test_rho_cap_one(family):
    assert all(c.length == 1 for c in rho(family, Top, 1))
    assert rho(family, parse_concept("only hasChild.Top"), 2) == set()


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 15))
def test_rho_length_bound(synth, seed, cap):
    e = random_concept(synth, 9, random.Random(seed))
    assert all(c.length <= cap for c in rho(synth, e, cap))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 14))
def test_rho_cap_monotone(synth, seed, cap):
    e = random_concept(synth, 8, random.Random(seed))
    assert rho(synth, e, cap) <= rho(synth, e, cap + 1)


def test_rho_deterministic(synth):
    e = Atomic(sorted(synth.atomic_concepts)[0])
    assert rho(synth, e, 15, seed=3) == rho(synth, e, 15, seed=3)


def test_rho_never_returns_input(synth):
    rng = random.Random(5)
    for _ in range(100):
        e = random_concept(synth, 7, rng)
        assert e not in rho(synth, e, 15)


def test_leaf_fallback(family):
    cfg = RefinementConfig(leaf_fallback=True)
    out = refine_atomic(family, "Mother", cfg)
    assert parse_concept("Mother and some hasChild.Top") in out
    assert all(instances(family, c) <= {"Kate"} for c in out)


def test_config_validation():
    with pytest.raises(ValueError):
        RefinementConfig(k=0)
    with pytest.raises(ValueError):
        RefinementConfig(construct_frac=0)
    with pytest.raises(ValueError):
        RefinementConfig(max_length=0)
