import pickle
import random

import pytest
from hypothesis import given, settings, strategies as st

from cliplearn.concept import (And, Atomic, Bottom, ConceptSyntaxError, Exists, Forall, Not, Or,
                               Top, conj, is_valid_name, length, parse_concept, print_concept,
                               random_concept, signature)
from oracles import random_ast, token_length

WORKSHOP = "Person and (only attendsSome.(Workshop or Conference))"


def test_length_rules():
    assert length(Atomic("Human")) == 1
    assert length(Top) == length(Bottom) == 1
    assert length(Exists("marriedTo", Not(Atomic("Car")))) == 4
    assert length(parse_concept(WORKSHOP)) == 7


@pytest.mark.parametrize("seed", range(5))
def test_length_matches_token_oracle(seed):
    rng = random.Random(seed)
    for _ in range(200):
        e = random_ast(rng, 6)
        assert length(e) == token_length(e)


def test_parse_examples():
    assert parse_concept("Female or Mother") == Or(Atomic("Female"), Atomic("Mother"))
    assert parse_concept("some marriedTo.(not Car)") == Exists("marriedTo", Not(Atomic("Car")))
    assert parse_concept("only r.Top") == Forall("r", Top)


def test_printer_precedence():
    assert print_concept(Or(Atomic("A"), And(Atomic("B"), Atomic("C")))) == "A or B and C"
    assert print_concept(And(Or(Atomic("A"), Atomic("B")), Atomic("C"))) == "(A or B) and C"
    assert print_concept(Not(And(Atomic("A"), Atomic("B")))) == "not (A and B)"
    assert print_concept(Top) == "Top"


def test_nary_inputs_right_fold():
    e = parse_concept("A and B and C")
    assert e == And(Atomic("A"), And(Atomic("B"), Atomic("C")))
    assert e == conj(Atomic("A"), Atomic("B"), Atomic("C"))


def test_left_nested_conjunction_keeps_brackets():
    e = And(And(Atomic("A"), Atomic("B")), Atomic("C"))
    assert parse_concept(print_concept(e)) == e


@pytest.mark.parametrize("text, pos", [("A and", 5), ("(A or B", 7), ("some r A", 7), ("A B", 2),
                                       ("", 0), ("A $ B", 2)])
def test_syntax_errors_carry_position(text, pos):
    with pytest.raises(ConceptSyntaxError) as exc:
        parse_concept(text)
    assert exc.value.pos == pos


def test_iri_names():
    e = parse_concept("some <http://x/r>.<http://x/C>")
    assert e == Exists("<http://x/r>", Atomic("<http://x/C>"))
    assert is_valid_name("<http://x/C>")
    assert not is_valid_name("and")
    assert not is_valid_name("a b")


def test_immutable_and_hashable():
    e = parse_concept(WORKSHOP)
    with pytest.raises(AttributeError):
        e.length = 3
    assert len({e, parse_concept(WORKSHOP)}) == 1
    assert pickle.loads(pickle.dumps(e)) == e


def test_signature():
    atoms, roles = signature(parse_concept(WORKSHOP))
    assert atoms == {"Person", "Workshop", "Conference"}
    assert roles == {"attendsSome"}


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(0, 7))
def test_round_trip(seed, depth):
    e = random_ast(random.Random(seed), depth)
    text = print_concept(e)
    assert parse_concept(text) == e
    assert print_concept(parse_concept(text)) == text


def test_random_concept_budget(family):
    rng = random.Random(0)
    for budget in range(1, 16):
        for _ in range(60):
            assert random_concept(family, budget, rng).length <= budget


def test_random_concept_length_one(family):
    rng = random.Random(1)
    for _ in range(50):
        e = random_concept(family, 1, rng)
        assert e is Top or e is Bottom or isinstance(e, Atomic)


def test_random_concept_deterministic(family):
    a = [random_concept(family, 15, random.Random(42)) for _ in range(3)]
    assert a[0] == a[1] == a[2]


def test_random_concept_needs_atoms():
    from cliplearn.kb import load_kb
    with pytest.raises(ValueError):
        random_concept(load_kb(""), 5, random.Random(0))
