"""ALC concept expressions: AST, canonical printer, parser, length, random generation.

Text grammar::

    expr  := disj
    disj  := conj ("or" conj)*
    conj  := unary ("and" unary)*
    unary := "not" unary | "some" ROLE "." unary | "only" ROLE "." unary
           | "(" expr ")" | "Top" | "Bottom" | NAME

Chains of ``and``/``or`` fold to the right, so ``A and B and C`` is
``And(A, And(B, C))``.
"""
from __future__ import annotations

import random
import re
from typing import Iterator

KEYWORDS = frozenset({"Top", "Bottom", "not", "and", "or", "some", "only"})

_BARE = re.compile(r"[^\s().<>]+")
_IRI = re.compile(r"<[^\s<>]*>")
_TOKEN = re.compile(r"\s*(?:(?P<punct>[().])|(?P<iri><[^\s<>]*>)|(?P<name>[^\s().<>]+))")


def is_valid_name(name: str) -> bool:
    """True if ``name`` can appear as an atomic concept or role in concept text."""
    if _IRI.fullmatch(name):
        return True
    return bool(_BARE.fullmatch(name)) and name not in KEYWORDS


class Concept:
    """Base class. Equality and hashing go through the canonical text form."""

    __slots__ = ("key", "length")

    key: str
    length: int

    def _set(self, key: str, length: int) -> None:
        object.__setattr__(self, "key", key)
        object.__setattr__(self, "length", length)

    def __setattr__(self, name, value):
        raise AttributeError(f"{type(self).__name__} is immutable")

    def __eq__(self, other):
        return isinstance(other, Concept) and self.key == other.key

    def __hash__(self):
        return hash(self.key)

    def __lt__(self, other):
        return self.key < other.key

    def __str__(self):
        return self.key

    def __repr__(self):
        return f"{type(self).__name__}<{self.key}>"

    def __reduce__(self):
        return (parse_concept, (self.key,))


class _Top(Concept):
    __slots__ = ()

    def __init__(self):
        self._set("Top", 1)


class _Bottom(Concept):
    __slots__ = ()

    def __init__(self):
        self._set("Bottom", 1)


Top = _Top()
Bottom = _Bottom()


class Atomic(Concept):
    __slots__ = ("name",)

    def __init__(self, name: str):
        object.__setattr__(self, "name", name)
        self._set(name, 1)


def _wrap(c: Concept, kinds: tuple[type, ...]) -> str:
    return f"({c.key})" if isinstance(c, kinds) else c.key


class Not(Concept):
    __slots__ = ("child",)

    def __init__(self, child: Concept):
        object.__setattr__(self, "child", child)
        self._set("not " + _wrap(child, (And, Or)), 1 + child.length)


class And(Concept):
    __slots__ = ("left", "right")

    def __init__(self, left: Concept, right: Concept):
        object.__setattr__(self, "left", left)
        object.__setattr__(self, "right", right)
        key = f"{_wrap(left, (And, Or))} and {_wrap(right, (Or,))}"
        self._set(key, 1 + left.length + right.length)


class Or(Concept):
    __slots__ = ("left", "right")

    def __init__(self, left: Concept, right: Concept):
        object.__setattr__(self, "left", left)
        object.__setattr__(self, "right", right)
        self._set(f"{_wrap(left, (Or,))} or {right.key}", 1 + left.length + right.length)


class Exists(Concept):
    __slots__ = ("role", "filler")

    def __init__(self, role: str, filler: Concept):
        object.__setattr__(self, "role", role)
        object.__setattr__(self, "filler", filler)
        self._set(f"some {role}.{_wrap(filler, (And, Or))}", 2 + filler.length)


class Forall(Concept):
    __slots__ = ("role", "filler")

    def __init__(self, role: str, filler: Concept):
        object.__setattr__(self, "role", role)
        object.__setattr__(self, "filler", filler)
        self._set(f"only {role}.{_wrap(filler, (And, Or))}", 2 + filler.length)


def length(e: Concept) -> int:
    """Syntactic length: 1 per atom/Top/Bottom/not/and/or, 2 per quantifier+role."""
    return e.length


def print_concept(e: Concept) -> str:
    return e.key


def conj(*parts: Concept) -> Concept:
    """Right-folded conjunction of one or more concepts."""
    out = parts[-1]
    for p in reversed(parts[:-1]):
        out = And(p, out)
    return out


def disj(*parts: Concept) -> Concept:
    out = parts[-1]
    for p in reversed(parts[:-1]):
        out = Or(p, out)
    return out


def subterms(e: Concept) -> Iterator[Concept]:
    """Pre-order traversal of every sub-expression, ``e`` included."""
    stack = [e]
    while stack:
        c = stack.pop()
        yield c
        if isinstance(c, Not):
            stack.append(c.child)
        elif isinstance(c, (And, Or)):
            stack.extend((c.right, c.left))
        elif isinstance(c, (Exists, Forall)):
            stack.append(c.filler)


def signature(e: Concept) -> tuple[set[str], set[str]]:
    """Atomic concept names and role names occurring in ``e``."""
    atoms: set[str] = set()
    roles: set[str] = set()
    for c in subterms(e):
        if isinstance(c, Atomic):
            atoms.add(c.name)
        elif isinstance(c, (Exists, Forall)):
            roles.add(c.role)
    return atoms, roles


class ConceptSyntaxError(ValueError):
    def __init__(self, message: str, pos: int):
        self.pos = pos
        super().__init__(f"{message} at position {pos}")


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    n = len(text)
    while pos < n:
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            raise ConceptSyntaxError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        value = m.group(kind)
        start = m.start(kind)
        if kind == "name" and value in KEYWORDS:
            kind = "kw"
        tokens.append((kind, value, start))
        pos = m.end()
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else ("eof", "", len(self.text))

    def take(self):
        tok = self.peek()
        self.i += 1
        return tok

    def expect(self, kind, value=None):
        tok = self.take()
        if tok[0] != kind or (value is not None and tok[1] != value):
            want = value if value is not None else kind
            raise ConceptSyntaxError(f"expected {want!r}, found {tok[1] or 'end of input'!r}", tok[2])
        return tok

    def expr(self) -> Concept:
        parts = [self.conj()]
        while self.peek()[:2] == ("kw", "or"):
            self.take()
            parts.append(self.conj())
        return disj(*parts)

    def conj(self) -> Concept:
        parts = [self.unary()]
        while self.peek()[:2] == ("kw", "and"):
            self.take()
            parts.append(self.unary())
        return conj(*parts)

    def role(self) -> str:
        kind, value, pos = self.take()
        if kind not in ("name", "iri"):
            raise ConceptSyntaxError(f"expected role name, found {value or 'end of input'!r}", pos)
        return value

    def unary(self) -> Concept:
        kind, value, pos = self.take()
        if kind == "kw":
            if value == "not":
                return Not(self.unary())
            if value in ("some", "only"):
                r = self.role()
                self.expect("punct", ".")
                filler = self.unary()
                return Exists(r, filler) if value == "some" else Forall(r, filler)
            if value == "Top":
                return Top
            if value == "Bottom":
                return Bottom
            raise ConceptSyntaxError(f"unexpected keyword {value!r}", pos)
        if kind in ("name", "iri"):
            return Atomic(value)
        if (kind, value) == ("punct", "("):
            inner = self.expr()
            self.expect("punct", ")")
            return inner
        raise ConceptSyntaxError(f"unexpected {value or 'end of input'!r}", pos)


def parse_concept(text: str) -> Concept:
    p = _Parser(text)
    e = p.expr()
    kind, value, pos = p.peek()
    if kind != "eof":
        raise ConceptSyntaxError(f"trailing input {value!r}", pos)
    return e


def random_concept(kb, max_length: int, rng: random.Random) -> Concept:
    """Random expression built top-down; each constructor is picked uniformly
    among those that still fit in the remaining length budget."""
    if max_length < 1:
        raise ValueError("max_length must be >= 1")
    atoms = sorted(kb.atomic_concepts)
    roles = sorted(kb.roles)
    if not atoms:
        raise ValueError("knowledge base has no atomic concepts")
    return _random(atoms, roles, max_length, rng)


def _random(atoms: list[str], roles: list[str], budget: int, rng: random.Random) -> Concept:
    options = ["top", "bottom", "atomic"]
    if budget >= 2:
        options.append("not")
    if budget >= 3:
        options += ["and", "or"]
        if roles:
            options += ["some", "only"]
    op = rng.choice(options)
    if op == "top":
        return Top
    if op == "bottom":
        return Bottom
    if op == "atomic":
        return Atomic(rng.choice(atoms))
    if op == "not":
        return Not(_random(atoms, roles, budget - 1, rng))
    if op in ("some", "only"):
        r = rng.choice(roles)
        filler = _random(atoms, roles, budget - 2, rng)
        return Exists(r, filler) if op == "some" else Forall(r, filler)
    left = _random(atoms, roles, rng.randint(1, budget - 2), rng)
    right = _random(atoms, roles, budget - 1 - left.length, rng)
    return And(left, right) if op == "and" else Or(left, right)
