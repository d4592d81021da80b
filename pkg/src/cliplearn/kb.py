"""Knowledge base: atomic subsumption TBox plus type/role ABox, loaded from triples."""
from __future__ import annotations

import io
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import IO, Iterable, Mapping

from cliplearn.concept import is_valid_name

log = logging.getLogger(__name__)

RDF = "http://www.w3.org/1999/02/22-rdf-syntax-ns#"
RDFS = "http://www.w3.org/2000/01/rdf-schema#"
OWL = "http://www.w3.org/2002/07/owl#"

RDF_TYPE = "rdf:type"
SUBCLASS_OF = "rdfs:subClassOf"

_ALIASES = {
    f"<{RDF}type>": RDF_TYPE,
    f"<{RDFS}subClassOf>": SUBCLASS_OF,
    f"<{OWL}Class>": "owl:Class",
    f"<{OWL}NamedIndividual>": "owl:NamedIndividual",
    f"<{OWL}ObjectProperty>": "owl:ObjectProperty",
    f"<{OWL}DatatypeProperty>": "owl:DatatypeProperty",
    f"<{OWL}Thing>": "owl:Thing",
}
_SCHEMA_PREFIXES = ("rdf:", "rdfs:", "owl:", "xsd:", f"<{RDF}", f"<{RDFS}", f"<{OWL}",
                    "<http://www.w3.org/2001/XMLSchema#")


class KBError(ValueError):
    """Malformed knowledge-base input; carries the offending line number when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def _norm(token: str) -> str:
    return _ALIASES.get(token, token)


def _is_schema(token: str) -> bool:
    return token.startswith(_SCHEMA_PREFIXES)


def _is_literal(token: str) -> bool:
    return token.startswith('"') or token[0].isdigit() or token[0] in "+-"


@dataclass(frozen=True, eq=False)
class KnowledgeBase:
    """Immutable knowledge base with a precomputed hierarchy index.

    ``role_assertions`` maps ``(subject, role)`` to the set of fillers.
    ``data_assertions`` holds literal-valued triples; they are kept but never
    used for learning.
    """

    individuals: frozenset[str] = frozenset()
    atomic_concepts: frozenset[str] = frozenset()
    roles: frozenset[str] = frozenset()
    subclass_edges: frozenset[tuple[str, str]] = frozenset()
    type_assertions: Mapping[str, frozenset[str]] = field(default_factory=dict)
    role_assertions: Mapping[tuple[str, str], frozenset[str]] = field(default_factory=dict)
    data_properties: frozenset[str] = frozenset()
    data_assertions: tuple[tuple[str, str, str], ...] = ()
    diagnostics: tuple[str, ...] = ()

    def __post_init__(self):
        for ind, types in self.type_assertions.items():
            if ind not in self.individuals:
                raise KBError(f"type assertion on unknown individual {ind!r}")
            unknown = types - self.atomic_concepts
            if unknown:
                raise KBError(f"type assertion with unknown concept(s) {sorted(unknown)}")
        for (a, r), fillers in self.role_assertions.items():
            if r not in self.roles:
                raise KBError(f"role assertion with unknown role {r!r}")
            if a not in self.individuals or not fillers <= self.individuals:
                raise KBError(f"role assertion {r!r} on unknown individual(s)")
        for c, d in self.subclass_edges:
            if c not in self.atomic_concepts or d not in self.atomic_concepts:
                raise KBError(f"subclass edge ({c}, {d}) references unknown concept")

        children: dict[str, set[str]] = defaultdict(set)
        for c, d in self.subclass_edges:
            children[d].add(c)
        below: dict[str, frozenset[str]] = {}
        for a in self.atomic_concepts:
            seen: set[str] = set()
            stack = list(children.get(a, ()))
            while stack:
                b = stack.pop()
                if b not in seen:
                    seen.add(b)
                    stack.extend(children.get(b, ()))
            below[a] = frozenset(seen)

        strict: dict[str, frozenset[str]] = {}
        diags = list(self.diagnostics)
        for a, desc in below.items():
            group = {b for b in desc if a in below[b]}
            if group:
                group.add(a)
                msg = f"subclass cycle collapsed into equivalence group {sorted(group)}"
                if msg not in diags:
                    diags.append(msg)
                    log.warning(msg)
            strict[a] = desc - group
        # below[a] includes a's equivalents; instance retrieval needs exactly that set
        object.__setattr__(self, "_below", below)
        object.__setattr__(self, "_strict_below", strict)
        object.__setattr__(self, "diagnostics", tuple(diags))

        by_role: dict[str, dict[str, frozenset[str]]] = defaultdict(dict)
        for (a, r), fillers in self.role_assertions.items():
            if fillers:
                by_role[r][a] = fillers
        object.__setattr__(self, "_by_role", dict(by_role))

    def subconcepts(self, a: str) -> frozenset[str]:
        """Atomic concepts strictly below ``a`` (never ``a`` itself or its equivalents)."""
        if a not in self.atomic_concepts:
            raise KBError(f"unknown atomic concept {a!r}")
        return self._strict_below[a]

    def closure_below(self, a: str) -> frozenset[str]:
        """``a`` together with every atomic concept it subsumes, equivalents included."""
        if a not in self.atomic_concepts:
            raise KBError(f"unknown atomic concept {a!r}")
        return self._below[a] | {a}

    def role_fillers(self, role: str) -> Mapping[str, frozenset[str]]:
        """Subject -> non-empty filler set for one role."""
        if role not in self.roles:
            raise KBError(f"unknown role {role!r}")
        return self._by_role.get(role, {})


def subconcepts(kb: KnowledgeBase, a: str) -> frozenset[str]:
    return kb.subconcepts(a)


def from_triples(triples: Iterable[tuple[str, str, str]],
                 lines: Iterable[int] | None = None) -> KnowledgeBase:
    """Build a knowledge base from (subject, predicate, object) triples.

    Unknown predicates become roles. Schema vocabulary other than ``rdf:type``
    and ``rdfs:subClassOf`` is skipped, as are subsumptions involving blank
    nodes (complex TBox axioms); both are recorded in ``diagnostics``.
    """
    individuals: set[str] = set()
    concepts: set[str] = set()
    roles: set[str] = set()
    data_props: set[str] = set()
    edges: set[tuple[str, str]] = set()
    types: dict[str, set[str]] = defaultdict(set)
    rels: dict[tuple[str, str], set[str]] = defaultdict(set)
    data: set[tuple[str, str, str]] = set()
    skipped_schema = 0
    diags: list[str] = []

    def check(name: str, lineno: int | None) -> str:
        if not is_valid_name(name):
            raise KBError(f"identifier {name!r} is not a valid concept-grammar name", lineno)
        return name

    line_iter = iter(lines) if lines is not None else None
    for s, p, o in triples:
        lineno = next(line_iter) if line_iter is not None else None
        p, o = _norm(p), _norm(o)
        if p == RDF_TYPE:
            if o == "owl:Class":
                concepts.add(check(s, lineno))
            elif o == "owl:ObjectProperty":
                roles.add(check(s, lineno))
            elif o == "owl:DatatypeProperty":
                data_props.add(s)
            elif o in ("owl:NamedIndividual", "owl:Thing"):
                individuals.add(s)
            elif _is_schema(o) or s.startswith("_:") or o.startswith("_:"):
                skipped_schema += 1
            else:
                individuals.add(s)
                concepts.add(check(o, lineno))
                types[s].add(o)
        elif p == SUBCLASS_OF:
            if s.startswith("_:") or o.startswith("_:"):
                diags.append(f"line {lineno}: complex subsumption ({s} subClassOf {o}) ignored")
                continue
            if o == "owl:Thing":
                concepts.add(check(s, lineno))
                continue
            if _is_schema(s) or _is_schema(o):
                skipped_schema += 1
                continue
            concepts.add(check(s, lineno))
            concepts.add(check(o, lineno))
            if s != o:
                edges.add((s, o))
        elif _is_schema(p) or s.startswith("_:") or o.startswith("_:"):
            skipped_schema += 1
        elif _is_literal(o) or p in data_props:
            data_props.add(p)
            data.add((s, p, o))
        else:
            individuals.add(s)
            individuals.add(o)
            roles.add(check(p, lineno))
            rels[(s, p)].add(o)

    if skipped_schema:
        diags.append(f"{skipped_schema} schema triple(s) skipped")
    # a predicate declared as data property after being used as a role stays a role
    data_props -= roles
    return KnowledgeBase(
        individuals=frozenset(individuals),
        atomic_concepts=frozenset(concepts),
        roles=frozenset(roles),
        subclass_edges=frozenset(edges),
        type_assertions={k: frozenset(v) for k, v in types.items()},
        role_assertions={k: frozenset(v) for k, v in rels.items()},
        data_properties=frozenset(data_props),
        data_assertions=tuple(sorted(data)),
        diagnostics=tuple(diags),
    )


def parse_triples(stream: IO[bytes] | IO[str]) -> tuple[list[tuple[str, str, str]], list[int]]:
    """Tokenize a triples file. Returns the triples and their 1-based line numbers."""
    triples: list[tuple[str, str, str]] = []
    linenos: list[int] = []
    for lineno, raw in enumerate(stream, start=1):
        if isinstance(raw, bytes):
            try:
                raw = raw.decode("utf-8")
            except UnicodeDecodeError as exc:
                raise KBError(f"invalid UTF-8 ({exc.reason})", lineno) from None
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) == 4 and parts[3] == ".":
            parts.pop()
        elif len(parts) == 3 and parts[2].endswith(">."):
            parts[2] = parts[2][:-1]
        if len(parts) != 3:
            raise KBError(f"expected 3 tokens, found {len(parts)}", lineno)
        triples.append((parts[0], parts[1], parts[2]))
        linenos.append(lineno)
    return triples, linenos


def load_kb(source: IO[bytes] | IO[str] | bytes | str) -> KnowledgeBase:
    """Load a knowledge base from a triples stream (or raw bytes / text)."""
    if isinstance(source, bytes):
        source = io.BytesIO(source)
    elif isinstance(source, str):
        source = io.StringIO(source)
    triples, linenos = parse_triples(source)
    return from_triples(triples, linenos)


def load_kb_file(path: str) -> KnowledgeBase:
    with open(path, "rb") as fh:
        try:
            return load_kb(fh)
        except KBError as exc:
            raise KBError(f"{path}: {exc}") from None


def to_triples(kb: KnowledgeBase) -> list[tuple[str, str, str]]:
    """Assertions and subsumptions as triples, sorted lexicographically."""
    out = [(a, RDF_TYPE, c) for a, cs in kb.type_assertions.items() for c in cs]
    out += [(a, r, b) for (a, r), bs in kb.role_assertions.items() for b in bs]
    out += [(c, SUBCLASS_OF, d) for c, d in kb.subclass_edges]
    out.sort()
    return out


def serialize_kb(kb: KnowledgeBase) -> str:
    """Full triples text, including declarations so that empty registries survive a reload."""
    lines = [f"{c} {RDF_TYPE} owl:Class ." for c in sorted(kb.atomic_concepts)]
    lines += [f"{r} {RDF_TYPE} owl:ObjectProperty ." for r in sorted(kb.roles)]
    lines += [f"{p} {RDF_TYPE} owl:DatatypeProperty ." for p in sorted(kb.data_properties)]
    lines += [f"{a} {RDF_TYPE} owl:NamedIndividual ." for a in sorted(kb.individuals)]
    lines += [f"{s} {p} {o} ." for s, p, o in to_triples(kb)]
    lines += [f"{s} {p} {o} ." for s, p, o in kb.data_assertions]
    return "\n".join(lines) + ("\n" if lines else "")


def kb_stats(kb: KnowledgeBase) -> dict[str, int]:
    n_types = sum(len(v) for v in kb.type_assertions.values())
    n_roles = sum(len(v) for v in kb.role_assertions.values())
    return {
        "individuals": len(kb.individuals),
        "atomic_concepts": len(kb.atomic_concepts),
        "obj_properties": len(kb.roles),
        "data_properties": len(kb.data_properties),
        "tbox_axioms": len(kb.subclass_edges),
        "abox_assertions": n_types + n_roles,
    }
