"""Length-bounded downward refinement operator.

Atomic concepts are refined by sampling "constructs" (subconcepts, their
negations and role restrictions) and combining them with the subconcepts;
complex expressions are refined structurally, CELOE style.

Random sampling never uses a shared stream: every atomic concept gets its own
generator derived from ``(seed, concept)``, so the refinements of ``A`` do not
depend on which other nodes were expanded before, nor on the length cap.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Iterable

from cliplearn.concept import (And, Atomic, Bottom, Concept, Exists, Forall, Not, Or, Top,
                               _Bottom, _Top)
from cliplearn.kb import KBError, KnowledgeBase


@dataclass(frozen=True)
class RefinementConfig:
    k: int = 5
    construct_frac: float = 0.8
    max_length: int = 15
    rng_seed: int = 0
    # off by default: a leaf atomic then has no refinements at all
    leaf_fallback: bool = False
    top_negations: bool = True
    top_unions: bool = True
    top_restrictions: bool = True
    neg_conjunctions: bool = True
    union_conjunctions: bool = True
    exists_to_forall: bool = True
    # Bottom as a refinement of Top, so that only r.Bottom is reachable at length 3
    top_bottom: bool = True

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not 0 < self.construct_frac <= 1:
            raise ValueError("construct_frac must be in (0, 1]")
        if self.max_length < 1:
            raise ValueError("max_length must be >= 1")


def derive_rng(seed: int, *tags: object) -> random.Random:
    """Independent generator for one (seed, tags) combination."""
    return random.Random("|".join([str(seed), *map(str, tags)]))


def _and(a: Concept, b: Concept) -> Concept:
    if a is Bottom or b is Bottom or isinstance(a, _Bottom) or isinstance(b, _Bottom):
        return Bottom
    return And(a, b)


def _atomic_subs(kb: KnowledgeBase, a: str) -> list[Concept]:
    return [Atomic(b) for b in sorted(kb.subconcepts(a))]


def refine_helper(kb: KnowledgeBase, a: str, cfg: RefinementConfig = RefinementConfig(),
                  rng: random.Random | None = None) -> set[Concept]:
    """Subconcepts of ``a``, their negations, and existential/universal
    restrictions over every role with fillers Top, Bottom, ``a`` (plus ``k``
    sampled subconcepts and ``k`` sampled negated subconcepts when ``a`` has at
    least ``k`` subconcepts)."""
    if rng is None:
        rng = derive_rng(cfg.rng_seed, "helper", a)
    subs = _atomic_subs(kb, a)
    neg_subs = [Not(c) for c in subs]
    fillers: list[Concept] = [Top, Bottom, Atomic(a)]
    if len(subs) >= cfg.k:
        fillers += rng.sample(subs, cfg.k)
        fillers += rng.sample(neg_subs, cfg.k)
    restrictions: set[Concept] = set()
    for c in fillers:
        for r in sorted(kb.roles):
            restrictions.add(Exists(r, c))
            restrictions.add(Forall(r, c))
    return set(subs) | set(neg_subs) | restrictions


def refine_atomic(kb: KnowledgeBase, a: str, cfg: RefinementConfig = RefinementConfig(),
                  rng: random.Random | None = None) -> set[Concept]:
    if rng is None:
        rng = derive_rng(cfg.rng_seed, "atomic", a)
    constructs = sorted(refine_helper(kb, a, cfg, rng))
    m = math.floor(cfg.construct_frac * len(constructs))
    constructs = rng.sample(constructs, m)
    subs = _atomic_subs(kb, a)
    sub_keys = {s.key for s in subs}
    top = Atomic(a)
    limit = cfg.max_length
    result: set[Concept] = set(subs)
    for s1 in subs:
        for s2 in constructs:
            if s1.key == s2.key:
                continue
            if 1 + s1.length + s2.length <= limit:
                result.add(_and(s1, s2))
            if s2.key in sub_keys and 1 + s1.length + s2.length <= limit:
                result.add(Or(s1, s2))
            elif 3 + s1.length + s2.length <= limit:
                result.add(And(Or(s1, s2), top))
    if not subs and cfg.leaf_fallback:
        for e in refine_top(kb, cfg):
            if 2 + e.length <= limit:
                result.add(_and(top, e))
    return result


def refine_top(kb: KnowledgeBase, cfg: RefinementConfig = RefinementConfig()) -> set[Concept]:
    """Refinements of Top: atomics, negated atomics, restrictions to Top,
    unions of two distinct atomics, and Bottom."""
    atoms = [Atomic(a) for a in sorted(kb.atomic_concepts)]
    out: set[Concept] = set(atoms)
    if cfg.top_bottom:
        out.add(Bottom)
    if cfg.top_negations:
        out.update(Not(a) for a in atoms)
    if cfg.top_restrictions:
        for r in sorted(kb.roles):
            out.add(Exists(r, Top))
            out.add(Forall(r, Top))
    if cfg.top_unions:
        for i, a1 in enumerate(atoms):
            for a2 in atoms[i + 1:]:
                out.add(Or(a1, a2))
    return out


class Refiner:
    """Caches the seed-determined atomic and Top refinements for one (kb, cfg)."""

    def __init__(self, kb: KnowledgeBase, cfg: RefinementConfig = RefinementConfig(),
                 seed: int | None = None):
        if seed is not None and seed != cfg.rng_seed:
            cfg = RefinementConfig(**{**cfg.__dict__, "rng_seed": seed})
        self.kb = kb
        self.cfg = cfg
        self._atomic: dict[str, tuple[Concept, ...]] = {}
        self._top = tuple(sorted(refine_top(kb, cfg)))
        self._supers: dict[str, list[str]] = {}
        for b in sorted(kb.atomic_concepts):
            for c in kb.subconcepts(b):
                self._supers.setdefault(c, []).append(b)

    def atomic(self, a: str) -> tuple[Concept, ...]:
        hit = self._atomic.get(a)
        if hit is None:
            if a not in self.kb.atomic_concepts:
                raise KBError(f"unknown atomic concept {a!r}")
            hit = self._atomic[a] = tuple(sorted(refine_atomic(self.kb, a, self.cfg)))
        return hit

    def top(self, cap: int) -> Iterable[Concept]:
        return (e for e in self._top if e.length <= cap)

    def rho(self, e: Concept, cap: int) -> set[Concept]:
        """Downward refinements of ``e`` no longer than ``cap``."""
        out: set[Concept] = set()
        if cap < 1:
            return out
        cfg = self.cfg
        if isinstance(e, _Top):
            out.update(self.top(cap))
        elif isinstance(e, Atomic):
            out.update(c for c in self.atomic(e.name) if c.length <= cap)
        elif isinstance(e, Not):
            if isinstance(e.child, Atomic):
                if cap >= 2:
                    out.update(Not(Atomic(s)) for s in self._supers.get(e.child.name, ()))
                if cfg.neg_conjunctions:
                    out.update(_and(e, d) for d in self.top(cap - 1 - e.length))
        elif isinstance(e, And):
            out.update(_and(c, e.right) for c in self.rho(e.left, cap - 1 - e.right.length))
            out.update(_and(e.left, d) for d in self.rho(e.right, cap - 1 - e.left.length))
        elif isinstance(e, Or):
            out.update(Or(c, e.right) for c in self.rho(e.left, cap - 1 - e.right.length))
            out.update(Or(e.left, d) for d in self.rho(e.right, cap - 1 - e.left.length))
            if cfg.union_conjunctions:
                out.update(_and(e, d) for d in self.top(cap - 1 - e.length))
        elif isinstance(e, Exists):
            out.update(Exists(e.role, c) for c in self.rho(e.filler, cap - 2))
            if cfg.exists_to_forall and e.length <= cap:
                out.add(Forall(e.role, e.filler))
        elif isinstance(e, Forall):
            out.update(Forall(e.role, c) for c in self.rho(e.filler, cap - 2))
        out.discard(e)
        return out


def refiner(kb: KnowledgeBase, cfg: RefinementConfig = RefinementConfig()) -> Refiner:
    """Shared per-(kb, cfg) refiner; stored on the KB so it dies with it."""
    per_kb = kb.__dict__.get("_refiners")
    if per_kb is None:
        per_kb = {}
        object.__setattr__(kb, "_refiners", per_kb)
    r = per_kb.get(cfg)
    if r is None:
        r = per_kb[cfg] = Refiner(kb, cfg)
    return r


def rho(kb: KnowledgeBase, e: Concept, cap: int, cfg: RefinementConfig = RefinementConfig(),
        seed: int | None = None) -> set[Concept]:
    """Refinements of ``e`` with length <= ``cap``; ``seed`` overrides ``cfg.rng_seed``."""
    if seed is not None and seed != cfg.rng_seed:
        cfg = RefinementConfig(**{**cfg.__dict__, "rng_seed": seed})
    return refiner(kb, cfg).rho(e, cap)
