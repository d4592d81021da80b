import io

import pytest
from hypothesis import given, settings, strategies as st

from cliplearn.kb import (KBError, from_triples, kb_stats, load_kb, parse_triples, serialize_kb,
                          subconcepts, to_triples)
from cliplearn.synthetic import synthetic_kb


def test_family_registries(family):
    assert family.individuals == {"Anna", "Kate", "Venza", "Jack", "Paul"}
    assert {"Female", "Mother", "Car", "Human", "Parent"} <= family.atomic_concepts
    assert family.roles == {"hasChild", "marriedTo", "manufacturedBy"}
    assert family.role_assertions[("Jack", "hasChild")] == {"Paul"}


def test_complex_subsumption_is_ignored_with_diagnostic(family):
    assert ("Human", "_:notCar") not in family.subclass_edges
    assert any("complex subsumption" in d for d in family.diagnostics)


def test_subconcepts(family):
    assert subconcepts(family, "Human") == {"Female", "Mother"}
    assert subconcepts(family, "Mother") == frozenset()
    with pytest.raises(KBError):
        subconcepts(family, "Dragon")


def test_chain_closure():
    kb = from_triples([("A", "rdfs:subClassOf", "B"), ("B", "rdfs:subClassOf", "C")])
    assert kb.subconcepts("C") == {"A", "B"}
    assert kb.subconcepts("B") == {"A"}


def test_cycle_collapses_into_equivalence():
    kb = from_triples([("A", "rdfs:subClassOf", "B"), ("B", "rdfs:subClassOf", "A"),
                       ("C", "rdfs:subClassOf", "A")])
    assert "A" not in kb.subconcepts("A")
    assert kb.subconcepts("A") >= {"C"}
    assert any("cycle" in d for d in kb.diagnostics)


def test_stats(family):
    s = kb_stats(family)
    assert s["individuals"] == 5
    assert s["obj_properties"] == 3
    assert s["tbox_axioms"] == 2
    assert s["abox_assertions"] == 4


def test_empty_kb():
    kb = load_kb(b"")
    assert kb_stats(kb) == {k: 0 for k in kb_stats(kb)}
    assert not kb.individuals


def test_repeated_type_assertion_is_idempotent():
    kb = load_kb("a rdf:type C .\na rdf:type C .\n")
    assert kb.type_assertions["a"] == {"C"}


def test_to_triples(family):
    triples = to_triples(family)
    assert triples == sorted(triples)
    assert len(triples) == 6
    assert ("Jack", "hasChild", "Paul") in triples
    assert ("Anna", "rdf:type", "Female") in triples
    assert to_triples(from_triples([("Jack", "hasChild", "Paul")])) == [("Jack", "hasChild", "Paul")]


def test_long_iris_are_normalised():
    text = ("<http://x/a> <http://www.w3.org/1999/02/22-rdf-syntax-ns#type> <http://x/C> .\n"
            "<http://x/C> <http://www.w3.org/2000/01/rdf-schema#subClassOf> <http://x/D>\n")
    kb = load_kb(text)
    assert kb.type_assertions["<http://x/a>"] == {"<http://x/C>"}
    assert kb.subconcepts("<http://x/D>") == {"<http://x/C>"}


def test_trailing_dot_glued_to_iri():
    triples, _ = parse_triples(io.StringIO("<a> <p> <b>.\n"))
    assert triples == [("<a>", "<p>", "<b>")]


def test_malformed_line_reports_line_number():
    with pytest.raises(KBError) as exc:
        load_kb("a rdf:type C .\n# comment\nbroken line\n")
    assert exc.value.line == 3
    assert "line 3" in str(exc.value)


def test_invalid_utf8_reports_line():
    with pytest.raises(KBError) as exc:
        load_kb(b"a rdf:type C .\n\xff\xfe x y\n")
    assert exc.value.line == 2


def test_reserved_word_as_concept_rejected():
    with pytest.raises(KBError):
        load_kb("a rdf:type and .\n")


def test_literals_become_data_assertions():
    kb = load_kb('a age "42" .\na knows b .\n')
    assert "age" in kb.data_properties
    assert "age" not in kb.roles
    assert kb.roles == {"knows"}


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 40), st.integers(1, 12), st.integers(1, 4), st.integers(0, 10_000))
def test_serialize_round_trip(n_ind, n_con, n_roles, seed):
    kb = synthetic_kb(n_ind, n_con, n_roles, seed)
    back = load_kb(serialize_kb(kb))
    assert back.individuals == kb.individuals
    assert back.atomic_concepts == kb.atomic_concepts
    assert back.roles == kb.roles
    assert back.subclass_edges == kb.subclass_edges
    assert dict(back.type_assertions) == dict(kb.type_assertions)
    assert dict(back.role_assertions) == dict(kb.role_assertions)


def test_subconcepts_transitive(synth):
    for a in synth.atomic_concepts:
        for b in synth.subconcepts(a):
            assert synth.subconcepts(b) <= synth.subconcepts(a)


def test_triple_count_identity(synth):
    n_types = sum(len(v) for v in synth.type_assertions.values())
    n_roles = sum(len(v) for v in synth.role_assertions.values())
    assert len(to_triples(synth)) == n_types + n_roles + len(synth.subclass_edges)
