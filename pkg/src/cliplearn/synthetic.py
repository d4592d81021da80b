"""Small knowledge bases for tests, demos and the self-test."""
from __future__ import annotations

import random

from cliplearn.kb import KnowledgeBase, from_triples, load_kb

FAMILY_KB = """\
# Toy family/car knowledge base
Car rdf:type owl:Class .
Parent rdf:type owl:Class .
hasChild rdf:type owl:ObjectProperty .
marriedTo rdf:type owl:ObjectProperty .
manufacturedBy rdf:type owl:ObjectProperty .
Anna rdf:type Female .
Kate rdf:type Mother .
Venza rdf:type Car .
Jack hasChild Paul .
Mother rdfs:subClassOf Female .
Female rdfs:subClassOf Human .
Human rdfs:subClassOf _:notCar .
"""


def family_kb() -> KnowledgeBase:
    """Anna, Kate, Venza, Jack and Paul; Mother below Female below Human."""
    return load_kb(FAMILY_KB)


# parent of each concept; None marks a root
_HIERARCHY = {
    "Agent": None, "Person": "Agent", "Student": "Person", "Teacher": "Person",
    "Organisation": "Agent", "Place": None, "City": "Place", "Event": None,
    "Workshop": "Event", "Conference": "Event", "Publication": None, "Paper": "Publication",
}


def synthetic_kb(n_individuals: int = 50, n_concepts: int = 8, n_roles: int = 3,
                 seed: int = 0, edges_per_role: float = 1.2, noise: float = 0.2) -> KnowledgeBase:
    """Random KB over a fixed-shape concept hierarchy.

    The first ``n_concepts`` names of a small upper ontology are used (parents
    always included before children) and every individual gets one or two of
    them. Each role has a domain and a range concept; about
    ``edges_per_role * n_individuals`` edges per role are drawn, a ``noise``
    fraction of them between arbitrary individuals and the rest from domain
    members to range members.
    """
    rng = random.Random(seed)
    names = list(_HIERARCHY)[:n_concepts] if n_concepts <= len(_HIERARCHY) else (
        list(_HIERARCHY) + [f"Extra{i}" for i in range(n_concepts - len(_HIERARCHY))])
    triples = []
    for c in names:
        triples.append((c, "rdf:type", "owl:Class"))
        parent = _HIERARCHY.get(c)
        if parent is not None and parent in names:
            triples.append((c, "rdfs:subClassOf", parent))
    roles = [f"r{i}" for i in range(n_roles)]
    for r in roles:
        triples.append((r, "rdf:type", "owl:ObjectProperty"))
    inds = [f"i{j:03d}" for j in range(n_individuals)]
    members: dict[str, list[str]] = {c: [] for c in names}
    for a in inds:
        triples.append((a, "rdf:type", "owl:NamedIndividual"))
        for c in rng.sample(names, min(len(names), rng.choice((1, 1, 2)))):
            triples.append((a, "rdf:type", c))
            members[c].append(a)
    typed = [c for c in names if members[c]]
    for r in roles:
        dom, ran = rng.sample(typed, 2) if len(typed) >= 2 else (None, None)
        for _ in range(int(edges_per_role * n_individuals)):
            if dom is None or rng.random() < noise:
                triples.append((rng.choice(inds), r, rng.choice(inds)))
            else:
                triples.append((rng.choice(members[dom]), r, rng.choice(members[ran])))
    return from_triples(triples)
