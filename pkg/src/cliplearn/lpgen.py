"""Training-concept generation, example sampling, dataset splits and random
benchmark learning problems."""
from __future__ import annotations

import json
import logging
import math
import random
from collections import Counter, defaultdict, deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from cliplearn.concept import Concept, Top, parse_concept, random_concept
from cliplearn.kb import KnowledgeBase
from cliplearn.refinement import RefinementConfig, refiner
from cliplearn.retrieval import retriever

log = logging.getLogger(__name__)


class LPGenError(RuntimeError):
    pass


@dataclass(frozen=True)
class LearningProblem:
    positives: frozenset[str]
    negatives: frozenset[str]
    target: Concept | None = None

    def __post_init__(self):
        object.__setattr__(self, "positives", frozenset(self.positives))
        object.__setattr__(self, "negatives", frozenset(self.negatives))
        if not self.positives or not self.negatives:
            raise ValueError("learning problem needs non-empty positives and negatives")
        if self.positives & self.negatives:
            raise ValueError("positive and negative examples overlap")

    def to_json(self) -> dict:
        out = {"positives": sorted(self.positives), "negatives": sorted(self.negatives)}
        if self.target is not None:
            out["target"] = self.target.key
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "LearningProblem":
        target = obj.get("target")
        return cls(frozenset(obj["positives"]), frozenset(obj["negatives"]),
                   parse_concept(target) if target else None)


@dataclass
class LabeledConcept:
    concept: Concept
    sampled_pos: list[str]
    sampled_neg: list[str]
    label: int = -1

    def __post_init__(self):
        if self.label < 0:
            self.label = self.concept.length

    def to_json(self) -> str:
        return json.dumps({"concept": self.concept.key, "label": self.label,
                           "positives": self.sampled_pos, "negatives": self.sampled_neg})

    @classmethod
    def from_json(cls, line: str) -> "LabeledConcept":
        obj = json.loads(line)
        return cls(parse_concept(obj["concept"]), list(obj["positives"]),
                   list(obj["negatives"]), int(obj["label"]))


@dataclass
class DatasetSplit:
    train: list[LabeledConcept] = field(default_factory=list)
    val: list[LabeledConcept] = field(default_factory=list)
    test: list[LabeledConcept] = field(default_factory=list)


def default_n_examples(kb: KnowledgeBase) -> int:
    """min(1000, |individuals| / 2), never below 2."""
    return max(2, min(1000, len(kb.individuals) // 2))


def generate_training_concepts(kb: KnowledgeBase, count_target: int,
                               cfg: RefinementConfig = RefinementConfig(),
                               rng: random.Random | None = None,
                               branch: int = 8,
                               max_expansions: int | None = None) -> list[tuple[Concept, frozenset[str]]]:
    """Concepts with non-trivial, pairwise distinct instance sets.

    Breadth-first refinement from Top, keeping ``branch`` random children of
    every expanded node in the queue and a per-length quota on new instance
    sets. If the frontier dries up before ``count_target`` is reached, random
    concepts fill the gap. Among concepts sharing an instance set the shorter
    (then lexicographically smaller) one survives.
    """
    if count_target < 1:
        raise ValueError("count_target must be >= 1")
    if len(kb.individuals) < 2:
        raise LPGenError("need at least 2 individuals to build positive/negative splits")
    rng = rng or random.Random(0)
    ret = retriever(kb)
    ref = refiner(kb, cfg)
    quota = max(1, math.ceil(count_target / cfg.max_length))
    best: dict[int, Concept] = {}
    per_len: Counter[int] = Counter()

    def consider(c: Concept, use_quota: bool) -> None:
        m = ret.mask(c)
        if m == 0 or m == ret.all:
            return
        old = best.get(m)
        if old is not None:
            if (c.length, c.key) < (old.length, old.key):
                per_len[old.length] -= 1
                per_len[c.length] += 1
                best[m] = c
            return
        if use_quota and per_len[c.length] >= quota:
            return
        best[m] = c
        per_len[c.length] += 1

    budget = max_expansions if max_expansions is not None else 20 * count_target
    seen = {Top.key}
    queue: deque[Concept] = deque([Top])
    expansions = 0
    while queue and len(best) < count_target and expansions < budget:
        node = queue.popleft()
        expansions += 1
        children = [c for c in sorted(ref.rho(node, cfg.max_length)) if c.key not in seen]
        rng.shuffle(children)
        for c in children:
            seen.add(c.key)
            consider(c, use_quota=True)
            if len(best) >= count_target:
                break
        queue.extend(children[:branch])

    attempts = 0
    while len(best) < count_target and attempts < 50 * count_target:
        attempts += 1
        c = random_concept(kb, cfg.max_length, rng)
        if c.key not in seen:
            seen.add(c.key)
            consider(c, use_quota=False)
    if len(best) < count_target:
        log.warning("generated %d of %d requested concepts", len(best), count_target)

    out = [(c, ret.to_set(m)) for m, c in best.items()]
    out.sort(key=lambda p: (p[0].length, p[0].key))
    return out


def sample_examples(c_p: Iterable[str], c_n: Iterable[str], n_total: int,
                    rng: random.Random) -> tuple[list[str], list[str]]:
    """Balanced example sampling: ``n_total // 2`` from each side when both
    sides are large enough, otherwise all of the smaller side and the rest from
    the larger one. Odd totals give the extra example to the negatives."""
    pos, neg = sorted(c_p), sorted(c_n)
    if not pos or not neg:
        raise ValueError("both instance sets must be non-empty")
    if n_total < 2:
        raise ValueError("n_total must be >= 2")
    if len(pos) >= n_total / 2 and len(neg) >= n_total / 2:
        half = n_total // 2
        return rng.sample(pos, half), rng.sample(neg, n_total - half)
    if len(pos) <= len(neg):
        p = rng.sample(pos, len(pos))
        return p, rng.sample(neg, min(len(neg), n_total - len(p)))
    n = rng.sample(neg, len(neg))
    return rng.sample(pos, min(len(pos), n_total - len(n))), n


def label_concepts(concepts: Sequence[tuple[Concept, frozenset[str]]], kb: KnowledgeBase,
                   n_total: int, rng: random.Random) -> list[LabeledConcept]:
    """Attach sampled examples and length labels to generated concepts."""
    everyone = kb.individuals
    out = []
    for c, c_p in concepts:
        pos, neg = sample_examples(c_p, everyone - c_p, n_total, rng)
        out.append(LabeledConcept(c, pos, neg, c.length))
    return out


def split_dataset(data: Sequence[LabeledConcept], rng: random.Random,
                  test_frac: float = 0.2, val_frac: float = 0.1) -> DatasetSplit:
    """Per-label split: ``test_frac`` of each class to test, then ``val_frac``
    of the remainder to validation (rounded half up), leaving ~72/8/20."""
    if len(data) < 10:
        raise ValueError("need at least 10 labeled concepts to split")
    groups: dict[int, list[LabeledConcept]] = defaultdict(list)
    for item in data:
        groups[item.label].append(item)
    split = DatasetSplit()
    for label in sorted(groups):
        items = list(groups[label])
        rng.shuffle(items)
        n = len(items)
        if n < 3:
            log.warning("length class %d has only %d member(s); kept in train", label, n)
            split.train.extend(items)
            continue
        n_test = math.floor(test_frac * n + 0.5)
        n_val = math.floor(val_frac * (n - n_test) + 0.5)
        split.test.extend(items[:n_test])
        split.val.extend(items[n_test:n_test + n_val])
        split.train.extend(items[n_test + n_val:])
    return split


def generate_random_lps(kb: KnowledgeBase, count: int = 100, max_length: int = 15,
                        n_total: int | None = None,
                        rng: random.Random | None = None) -> list[LearningProblem]:
    """Learning problems from random target concepts.

    Positives and negatives are the full instance / non-instance sets of the
    target unless ``n_total`` is given, in which case they are subsampled with
    :func:`sample_examples`.
    """
    rng = rng or random.Random(0)
    ret = retriever(kb)
    lps = []
    for _ in range(count):
        for _attempt in range(10_000):
            target = random_concept(kb, max_length, rng)
            m = ret.mask(target)
            if m != 0 and m != ret.all:
                break
        else:
            raise LPGenError("10000 consecutive random concepts had an empty or full extension")
        pos, neg = ret.to_set(m), ret.to_set(ret.all & ~m)
        if n_total is not None:
            p, n = sample_examples(pos, neg, n_total, rng)
            pos, neg = frozenset(p), frozenset(n)
        lps.append(LearningProblem(pos, neg, target))
    return lps


def write_lps(lps: Iterable[LearningProblem], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for lp in lps:
            fh.write(json.dumps(lp.to_json(), sort_keys=True) + "\n")


def read_lps(path: str) -> list[LearningProblem]:
    """Read learning problems from JSON-lines, or a single JSON object / array."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    stripped = text.strip()
    if stripped.startswith("["):
        return [LearningProblem.from_json(o) for o in json.loads(stripped)]
    try:
        return [LearningProblem.from_json(json.loads(stripped))]
    except json.JSONDecodeError:
        return [LearningProblem.from_json(json.loads(line)) for line in text.splitlines() if line.strip()]


def write_dataset(data: Iterable[LabeledConcept], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for item in data:
            fh.write(item.to_json() + "\n")


def read_dataset(path: str) -> list[LabeledConcept]:
    with open(path, encoding="utf-8") as fh:
        return [LabeledConcept.from_json(line) for line in fh if line.strip()]
