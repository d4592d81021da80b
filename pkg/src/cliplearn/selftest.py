"""Quick end-to-end check on the toy KB, used by ``cliplearn selftest``."""
from __future__ import annotations

import math
import random
from typing import Callable

import numpy as np


def _checks():
    from cliplearn.concept import parse_concept
    from cliplearn.embed import load_embeddings, save_embeddings, train_embeddings
    from cliplearn.kb import kb_stats, to_triples
    from cliplearn.lengthpred import build_feature_matrix, macro_f1, mlp_input
    from cliplearn.lpgen import LearningProblem, sample_examples
    from cliplearn.nn import Tensor, class_weights, weighted_cross_entropy
    from cliplearn.refinement import RefinementConfig, refine_atomic, refine_helper, rho
    from cliplearn.retrieval import f_measure, instances
    from cliplearn.search import ClipConfig, clip_learn, heuristic, SearchNode
    from cliplearn.retrieval import Quality
    from cliplearn.synthetic import family_kb

    kb = family_kb()
    yield "kb counts", kb_stats(kb)["individuals"] == 5 and kb.subconcepts("Human") == {"Female", "Mother"}
    workshop = parse_concept("Person and only attendsSome.(Workshop or Conference)")
    yield "concept length", workshop.length == 7 and parse_concept("not Car").length == 2
    yield "retrieval", instances(kb, parse_concept("Female")) == {"Anna", "Kate"}
    yield "f-measure", math.isclose(f_measure({"a", "b"}, {"a", "c"}, {"b", "d"}).f1, 0.5)
    yield "refine helper", len(refine_helper(kb, "Human")) == 22
    ref = refine_atomic(kb, "Human", RefinementConfig(construct_frac=1.0))
    yield "refine atomic", {"Female", "Mother", "Female or Mother"} <= {c.key for c in ref}
    yield "rho cap", all(c.length <= 3 for c in rho(kb, parse_concept("Top"), 3))
    pos, neg = sample_examples(set(range(100)), set(range(100, 1000)), 362, random.Random(0))
    yield "sampling", (len(pos), len(neg)) == (100, 262)
    w = class_weights([0, 0, 0, 0, 1], 2)
    ce = weighted_cross_entropy(Tensor(np.zeros((2, 4))), np.array([0, 1]), np.ones(4))
    yield "loss", list(w) == [0.5, 1.0] and math.isclose(float(ce.data), math.log(4))
    table = train_embeddings(to_triples(kb), dim=4, epochs=5, seed=0)
    yield "embeddings", load_embeddings(save_embeddings(table)).entity_vectors.keys() == table.entity_vectors.keys()
    m = build_feature_matrix(table, ["Anna"], ["Venza"])
    yield "features", list(m.rows[:, -1]) == [1.0, -1.0] and mlp_input(m).shape == (5,)
    yield "macro f1", math.isclose(macro_f1([3, 3, 5, 5], [3, 5, 5, 5]), (2 / 3 + 4 / 5) / 2)
    node = SearchNode(workshop, Quality(0.8, 0, 0, 0), 0.0, workshop.length)
    yield "heuristic", math.isclose(heuristic(node, 0.6, ClipConfig(cap_mode="none")), 0.86)
    lp = LearningProblem(frozenset({"Anna", "Kate"}), frozenset({"Jack", "Paul", "Venza"}))
    res = clip_learn(kb, lp, ClipConfig(cap_mode="fixed", cap=3, timeout_s=10))
    yield "search", res.f1 == 1.0 and res.length <= 3


def run_selftest(emit: Callable[[str], object] = print) -> int:
    failures = 0
    for name, ok in _checks():
        emit(f"{'ok' if ok else 'FAIL'} {name}")
        failures += not ok
    return failures
