"""Closed-world instance retrieval and F-measure scoring.

Instance sets are held internally as Python ints used as bitsets over the
sorted individual list, which keeps union/intersection/complement cheap.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass
from functools import lru_cache
from typing import AbstractSet, Iterable

from cliplearn.concept import And, Atomic, Concept, Exists, Forall, Not, Or, _Bottom, _Top
from cliplearn.kb import KnowledgeBase

DEFAULT_CACHE_SIZE = 100_000


class RetrievalError(KeyError):
    def __str__(self):
        return str(self.args[0])


class Retriever:
    """Bitset evaluator bound to one knowledge base, with an LRU memo keyed by
    canonical concept text."""

    def __init__(self, kb: KnowledgeBase, cache_size: int = DEFAULT_CACHE_SIZE):
        self.names = sorted(kb.individuals)
        self.index = {a: i for i, a in enumerate(self.names)}
        self.all = (1 << len(self.names)) - 1

        asserted: dict[str, int] = {}
        for ind, types in kb.type_assertions.items():
            bit = 1 << self.index[ind]
            for c in types:
                asserted[c] = asserted.get(c, 0) | bit
        self._atoms = {}
        for a in kb.atomic_concepts:
            m = 0
            for b in kb.closure_below(a):
                m |= asserted.get(b, 0)
            self._atoms[a] = m

        self._roles: dict[str, list[tuple[int, int]]] = {}
        for r in kb.roles:
            pairs = []
            for subj, fillers in sorted(kb.role_fillers(r).items()):
                fm = 0
                for b in fillers:
                    fm |= 1 << self.index[b]
                pairs.append((1 << self.index[subj], fm))
            self._roles[r] = pairs
        self.mask = lru_cache(maxsize=cache_size)(self._compute)

    def _compute(self, e: Concept) -> int:
        if isinstance(e, Atomic):
            try:
                return self._atoms[e.name]
            except KeyError:
                raise RetrievalError(f"unknown atomic concept {e.name!r}") from None
        if isinstance(e, And):
            return self.mask(e.left) & self.mask(e.right)
        if isinstance(e, Or):
            return self.mask(e.left) | self.mask(e.right)
        if isinstance(e, Not):
            return self.all & ~self.mask(e.child)
        if isinstance(e, (Exists, Forall)):
            try:
                pairs = self._roles[e.role]
            except KeyError:
                raise RetrievalError(f"unknown role {e.role!r}") from None
            m = self.mask(e.filler)
            if isinstance(e, Exists):
                out = 0
                for sb, fm in pairs:
                    if fm & m:
                        out |= sb
                return out
            bad = 0
            for sb, fm in pairs:
                if fm & ~m:
                    bad |= sb
            return self.all & ~bad
        if isinstance(e, _Top):
            return self.all
        if isinstance(e, _Bottom):
            return 0
        raise TypeError(f"not a concept: {e!r}")

    def to_mask(self, individuals: Iterable[str]) -> int:
        m = 0
        for a in individuals:
            m |= 1 << self.index[a]
        return m

    def to_set(self, mask: int) -> frozenset[str]:
        out = []
        i = 0
        while mask:
            if mask & 1:
                out.append(self.names[i])
            mask >>= 1
            i += 1
        return frozenset(out)


_lock = threading.Lock()


def retriever(kb: KnowledgeBase) -> Retriever:
    """Shared per-KB retriever (and memo), stored on the KB itself."""
    with _lock:
        r = kb.__dict__.get("_retriever")
        if r is None:
            r = Retriever(kb)
            object.__setattr__(kb, "_retriever", r)
        return r


def instances(kb: KnowledgeBase, e: Concept) -> frozenset[str]:
    r = retriever(kb)
    return r.to_set(r.mask(e))


def pos_neg(kb: KnowledgeBase, e: Concept) -> tuple[frozenset[str], frozenset[str]]:
    """(instances, non-instances) under the closed-world assumption."""
    r = retriever(kb)
    m = r.mask(e)
    return r.to_set(m), r.to_set(r.all & ~m)


@dataclass(frozen=True)
class Quality:
    f1: float
    precision: float
    recall: float
    accuracy: float


def quality_from_counts(tp: int, fp: int, fn: int, tn: int) -> Quality:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    total = tp + fp + fn + tn
    accuracy = (tp + tn) / total if total else 0.0
    return Quality(f1=f1, precision=precision, recall=recall, accuracy=accuracy)


def f_measure(c_p: AbstractSet[str], positives: AbstractSet[str],
              negatives: AbstractSet[str]) -> Quality:
    """Score an instance set against a learning problem's examples."""
    if positives & negatives:
        raise ValueError("positive and negative examples overlap")
    if not positives and not negatives:
        raise ValueError("no examples")
    tp = len(c_p & positives)
    fp = len(c_p & negatives)
    return quality_from_counts(tp, fp, len(positives) - tp, len(negatives) - fp)


def f_measure_mask(c_p: int, pos: int, neg: int, n_pos: int, n_neg: int) -> Quality:
    """Bitset variant of :func:`f_measure` used in the search loop."""
    tp = (c_p & pos).bit_count()
    fp = (c_p & neg).bit_count()
    return quality_from_counts(tp, fp, n_pos - tp, n_neg - fp)
