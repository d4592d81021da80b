"""Entity embeddings: a trilinear (DistMult-style) trainer and a CSV import/export.

Externally trained vectors (e.g. from a stronger KGE model) can be dropped in
through :func:`load_embeddings`; the length predictor only needs one vector
per individual.
"""
from __future__ import annotations

import io
import logging
from dataclasses import dataclass, field
from typing import IO, Iterable, Sequence

import numpy as np

from cliplearn.nn import AdamState, adam_step

log = logging.getLogger(__name__)


class EmbeddingError(ValueError):
    pass


@dataclass
class EmbeddingTable:
    dim: int
    entity_vectors: dict[str, np.ndarray] = field(default_factory=dict)
    relation_vectors: dict[str, np.ndarray] = field(default_factory=dict)
    losses: list[float] = field(default_factory=list, compare=False, repr=False)

    def __post_init__(self):
        for kind, vecs in (("entity", self.entity_vectors), ("relation", self.relation_vectors)):
            for k, v in vecs.items():
                if np.shape(v) != (self.dim,):
                    raise EmbeddingError(f"{kind} {k!r} has shape {np.shape(v)}, expected ({self.dim},)")

    def matrix(self, ids: Sequence[str]) -> np.ndarray:
        """Stack the vectors of ``ids`` into a (len(ids), dim) array."""
        out = np.empty((len(ids), self.dim))
        for i, a in enumerate(ids):
            try:
                out[i] = self.entity_vectors[a]
            except KeyError:
                raise EmbeddingError(f"no embedding for {a!r}") from None
        return out

    def score(self, h: str, r: str, t: str) -> float:
        return float(np.sum(self.entity_vectors[h] * self.relation_vectors[r] * self.entity_vectors[t]))


def _log1pexp(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def train_embeddings(triples: Sequence[tuple[str, str, str]], dim: int = 40, epochs: int = 100,
                     lr: float = 0.05, neg_per_pos: int = 4, batch_size: int = 512,
                     seed: int = 0) -> EmbeddingTable:
    """Fit ``score(h, r, t) = sum(h * r * t)`` with a logistic loss.

    Each observed triple is paired with ``neg_per_pos`` corruptions that swap
    the head or the tail for a uniformly drawn entity. Parameters start
    uniform in [-0.1, 0.1] and are updated with Adam on mini-batches. The
    mean loss of every epoch is kept in ``table.losses``.
    """
    if not triples:
        raise EmbeddingError("no triples to train on")
    if dim < 2:
        raise EmbeddingError("dim must be >= 2")
    rng = np.random.default_rng(seed)
    ents = sorted({t[0] for t in triples} | {t[2] for t in triples})
    rels = sorted({t[1] for t in triples})
    e_idx = {e: i for i, e in enumerate(ents)}
    r_idx = {r: i for i, r in enumerate(rels)}
    data = np.array([(e_idx[h], r_idx[r], e_idx[t]) for h, r, t in sorted(set(triples))], dtype=np.int64)
    E = rng.uniform(-0.1, 0.1, (len(ents), dim))
    R = rng.uniform(-0.1, 0.1, (len(rels), dim))
    state = AdamState()
    losses: list[float] = []
    n_ent = len(ents)

    for epoch in range(epochs):
        order = rng.permutation(len(data))
        total, count = 0.0, 0
        for start in range(0, len(order), batch_size):
            pos = data[order[start:start + batch_size]]
            neg = np.repeat(pos, neg_per_pos, axis=0)
            swap_head = rng.random(len(neg)) < 0.5
            repl = rng.integers(0, n_ent, len(neg))
            neg[swap_head, 0] = repl[swap_head]
            neg[~swap_head, 2] = repl[~swap_head]
            batch = np.concatenate([pos, neg])
            y = np.concatenate([np.ones(len(pos)), -np.ones(len(neg))])
            h, r, t = E[batch[:, 0]], R[batch[:, 1]], E[batch[:, 2]]
            with np.errstate(over="ignore", invalid="ignore"):  # checked just below
                s = np.sum(h * r * t, axis=1)
                loss = _log1pexp(-y * s)
            if not np.all(np.isfinite(loss)):
                raise EmbeddingError(f"non-finite loss at epoch {epoch}; try a smaller learning rate")
            total += float(loss.sum())
            count += len(loss)
            ds = (-y * _sigmoid(-y * s) / len(loss))[:, None]
            gE = np.zeros_like(E)
            gR = np.zeros_like(R)
            np.add.at(gE, batch[:, 0], ds * r * t)
            np.add.at(gE, batch[:, 2], ds * h * r)
            np.add.at(gR, batch[:, 1], ds * h * t)
            adam_step({"E": E, "R": R}, {"E": gE, "R": gR}, state, lr)
        losses.append(total / count)
        log.debug("epoch %d loss %.5f", epoch, losses[-1])

    return EmbeddingTable(dim, {e: E[i].copy() for i, e in enumerate(ents)},
                          {r: R[i].copy() for i, r in enumerate(rels)}, losses)


def save_embeddings(table: EmbeddingTable, out: IO[str] | None = None) -> str:
    """CSV text: ``id,dim=<d>`` header, one ``id,v1,...,vd`` row per entity,
    then relation rows after a ``#relations`` marker line."""
    buf = io.StringIO()
    buf.write(f"id,dim={table.dim}\n")

    def rows(vecs):
        for k in sorted(vecs):
            buf.write(k + "," + ",".join(format(float(x), ".17g") for x in vecs[k]) + "\n")
    rows(table.entity_vectors)
    if table.relation_vectors:
        buf.write("#relations\n")
        rows(table.relation_vectors)
    text = buf.getvalue()
    if out is not None:
        out.write(text)
    return text


def load_embeddings(source: IO[str] | IO[bytes] | str | bytes) -> EmbeddingTable:
    if isinstance(source, bytes):
        source = source.decode("utf-8")
    if isinstance(source, str):
        source = io.StringIO(source)
    dim: int | None = None
    ents: dict[str, np.ndarray] = {}
    rels: dict[str, np.ndarray] = {}
    target = ents
    for lineno, raw in enumerate(source, start=1):
        line = raw.decode("utf-8") if isinstance(raw, bytes) else raw
        line = line.strip()
        if not line:
            continue
        if line == "#relations":
            target = rels
            continue
        if line.startswith("#"):
            continue
        parts = line.split(",")
        if lineno == 1 and len(parts) == 2 and parts[1].startswith("dim="):
            dim = int(parts[1][4:])
            continue
        key, vals = parts[0], parts[1:]
        if dim is None:
            dim = len(vals)
        if len(vals) != dim:
            raise EmbeddingError(f"row {key!r} (line {lineno}) has {len(vals)} values, expected {dim}")
        if key in target:
            raise EmbeddingError(f"duplicate id {key!r} (line {lineno})")
        try:
            target[key] = np.array([float(v) for v in vals])
        except ValueError:
            raise EmbeddingError(f"row {key!r} (line {lineno}) has a non-numeric value") from None
    if dim is None:
        raise EmbeddingError("empty embedding file")
    return EmbeddingTable(dim, ents, rels)


def embed_kb(kb, dim: int = 40, epochs: int = 100, lr: float = 0.05, neg_per_pos: int = 4,
             batch_size: int = 512, seed: int = 0) -> EmbeddingTable:
    """Train on the KB's triples; individuals without any triple get a small
    random vector so that every individual is covered."""
    from cliplearn.kb import to_triples

    triples = to_triples(kb)
    table = train_embeddings(triples, dim, epochs, lr, neg_per_pos, batch_size, seed) if triples \
        else EmbeddingTable(dim)
    rng = np.random.default_rng(seed + 1)
    for a in sorted(kb.individuals):
        if a not in table.entity_vectors:
            table.entity_vectors[a] = rng.uniform(-0.1, 0.1, dim)
    return table


def coverage(table: EmbeddingTable, ids: Iterable[str]) -> list[str]:
    """Ids without a vector."""
    return sorted(a for a in ids if a not in table.entity_vectors)
