"""Best-first concept learning with a length cap on refinements."""
from __future__ import annotations

import heapq
import io
import itertools
import logging
import math
import random
import time
from dataclasses import dataclass, field
from typing import Sequence

from cliplearn.concept import Concept, Top
from cliplearn.kb import KnowledgeBase
from cliplearn.lpgen import LearningProblem, sample_examples
from cliplearn.refinement import RefinementConfig, refiner
from cliplearn.retrieval import Quality, f_measure_mask, retriever

log = logging.getLogger(__name__)


@dataclass(eq=False)
class SearchNode:
    concept: Concept
    quality: Quality
    heuristic: float
    horiz_exp: int
    parent: "SearchNode | None" = None
    depth: int = 0


@dataclass
class ClipConfig:
    timeout_s: float = 120.0
    cap_mode: str = "predicted"  # predicted | fixed | none
    cap: int | None = None  # used when cap_mode == "fixed"
    cap_slack: int = 0
    expansion_penalty: float = 0.05
    gain_bonus: float = 0.3
    stop_on_perfect: bool = True
    max_nodes: int | None = None
    cap_floor: int = 3
    under_cap_fallback: bool = False
    n_total: int | None = None  # examples fed to the predictor; None -> KB default

    def __post_init__(self):
        if not self.timeout_s > 0:
            raise ValueError("timeout_s must be > 0")
        if self.cap_mode not in ("predicted", "fixed", "none"):
            raise ValueError(f"unknown cap_mode {self.cap_mode!r}")
        if self.cap_mode == "fixed" and (self.cap is None or self.cap < 1):
            raise ValueError("fixed cap must be >= 1")


def parse_cap(text: str) -> tuple[str, int | None]:
    """``predicted``, ``none`` or ``fixed:<k>``."""
    if text in ("predicted", "none"):
        return text, None
    if text.startswith("fixed:"):
        try:
            k = int(text[6:])
        except ValueError:
            raise ValueError(f"bad cap {text!r}") from None
        if k < 1:
            raise ValueError("fixed cap must be >= 1")
        return "fixed", k
    raise ValueError(f"bad cap {text!r}; expected predicted, none or fixed:<k>")


@dataclass
class LearnResult:
    best_concept: Concept
    f1: float
    accuracy: float
    length: int
    runtime_s: float
    nodes_expanded: int
    concepts_tested: int
    predicted_cap: int | None = None
    cap: int | None = None
    over_cap_scored: int = 0
    stop_reason: str = ""
    trace: list[float] = field(default_factory=list, repr=False)

    def to_json(self) -> dict:
        return {"best_concept": self.best_concept.key, "f1": self.f1, "accuracy": self.accuracy,
                "length": self.length, "runtime_s": self.runtime_s,
                "nodes_expanded": self.nodes_expanded, "concepts_tested": self.concepts_tested,
                "predicted_cap": self.predicted_cap, "cap": self.cap, "stop_reason": self.stop_reason}


def heuristic(node: SearchNode, parent_quality: float, cfg: ClipConfig) -> float:
    f1 = node.quality.f1
    return (f1 + cfg.gain_bonus * (f1 - parent_quality)
            - cfg.expansion_penalty * (node.horiz_exp - node.concept.length))


def predict_cap(model, table, lp: LearningProblem, n_total: int, rng: random.Random,
                cap_slack: int = 0, max_length: int = 15, floor: int = 3) -> int:
    """Sample examples from ``lp``, predict a length and turn it into a cap."""
    from cliplearn.lengthpred import build_feature_matrix

    pos, neg = sample_examples(lp.positives, lp.negatives, n_total, rng)
    k = model.predict(build_feature_matrix(table, pos, neg))
    return max(floor, min(max_length, k + cap_slack))


def clip_learn(kb: KnowledgeBase, lp: LearningProblem, cfg: ClipConfig = ClipConfig(),
               predictor=None, table=None, rcfg: RefinementConfig = RefinementConfig(),
               rng: random.Random | None = None) -> LearnResult:
    """Best-first search from Top. Every expansion asks the refinement operator
    for children no longer than ``min(horiz_exp, cap)``, so concepts above the
    cap are never built, scored or queued."""
    start = time.monotonic()
    rng = rng or random.Random(0)
    ret = retriever(kb)
    ref = refiner(kb, rcfg)
    pos, neg = ret.to_mask(lp.positives), ret.to_mask(lp.negatives)
    n_pos, n_neg = len(lp.positives), len(lp.negatives)

    predicted = None
    if cfg.cap_mode == "predicted":
        if predictor is None or table is None:
            raise ValueError("cap_mode=predicted needs a predictor and an embedding table")
        from cliplearn.lpgen import default_n_examples
        n_total = cfg.n_total or default_n_examples(kb)
        predicted = predict_cap(predictor, table, lp, n_total, rng, cfg.cap_slack,
                                rcfg.max_length, cfg.cap_floor)
        cap = predicted
    elif cfg.cap_mode == "fixed":
        cap = min(cfg.cap, rcfg.max_length)
    else:
        cap = rcfg.max_length

    seq = itertools.count()
    seen: set[str] = set()
    tested = 0
    over_cap = 0

    def score(c: Concept) -> Quality:
        nonlocal tested, over_cap
        tested += 1
        if cfg.cap_mode != "none" and c.length > cap:
            over_cap += 1
        return f_measure_mask(ret.mask(c), pos, neg, n_pos, n_neg)

    root_q = score(Top)
    seen.add(Top.key)
    root = SearchNode(Top, root_q, 0.0, max(3, Top.length))
    root.heuristic = heuristic(root, root_q.f1, cfg)
    best = root
    trace = [root_q.f1]
    frontier: list = []

    def push(n: SearchNode) -> None:
        heapq.heappush(frontier, (-n.heuristic, n.concept.length, n.concept.key, next(seq), n))

    def better(a: SearchNode, b: SearchNode) -> bool:
        return (a.quality.f1, -a.concept.length, b.concept.key) > (b.quality.f1, -b.concept.length, a.concept.key)

    push(root)
    expanded = 0
    stop = "exhausted"
    fallback_used = False
    retired: list[SearchNode] = []  # fully expanded under the current cap
    while True:
        if cfg.stop_on_perfect and best.quality.f1 >= 1.0:
            stop = "perfect"
            break
        if time.monotonic() - start >= cfg.timeout_s:
            stop = "timeout"
            break
        if cfg.max_nodes is not None and expanded >= cfg.max_nodes:
            stop = "max_nodes"
            break
        if not frontier:
            if cfg.under_cap_fallback and cfg.cap_mode == "predicted" and not fallback_used \
                    and cap < rcfg.max_length:
                fallback_used = True
                cap = min(rcfg.max_length, cap + 2)
                for n in retired:
                    push(n)
                retired.clear()
                continue
            stop = "exhausted"
            break
        _, _, _, _, node = heapq.heappop(frontier)
        expanded += 1
        bound = min(node.horiz_exp, cap)
        for c in sorted(ref.rho(node.concept, bound)):
            if c.key in seen:
                continue
            seen.add(c.key)
            q = score(c)
            child = SearchNode(c, q, 0.0, c.length, node, node.depth + 1)
            child.heuristic = heuristic(child, node.quality.f1, cfg)
            push(child)
            if better(child, best):
                best = child
                trace.append(q.f1)
            if cfg.stop_on_perfect and q.f1 >= 1.0:
                break
            if time.monotonic() - start >= cfg.timeout_s:
                break
        node.horiz_exp += 1
        if node.horiz_exp <= cap:
            parent_f1 = node.parent.quality.f1 if node.parent else node.quality.f1
            node.heuristic = heuristic(node, parent_f1, cfg)
            push(node)
        elif cfg.under_cap_fallback:
            retired.append(node)

    if stop == "timeout" and tested <= 1:
        log.warning("timed out before any refinement was scored; returning Top")
    return LearnResult(best.concept, best.quality.f1, best.quality.accuracy, best.concept.length,
                       time.monotonic() - start, expanded, tested, predicted, cap, over_cap, stop, trace)


_METRICS = ("f1", "accuracy", "runtime_s", "length")


def aggregate(results: Sequence[LearnResult]) -> dict[str, tuple[float, float]]:
    """Mean and population standard deviation per reported metric."""
    out = {}
    for m in _METRICS + ("nodes_expanded", "concepts_tested"):
        vals = [float(getattr(r, m)) for r in results]
        mu = sum(vals) / len(vals)
        out[m] = (mu, math.sqrt(sum((v - mu) ** 2 for v in vals) / len(vals)))
    return out


def benchmark(kb: KnowledgeBase, lps: Sequence[LearningProblem], cfg: ClipConfig = ClipConfig(),
              predictor=None, table=None, rcfg: RefinementConfig = RefinementConfig(),
              rng: random.Random | None = None) -> tuple[list[LearnResult], dict]:
    if not lps:
        raise ValueError("benchmark needs at least one learning problem")
    rng = rng or random.Random(0)
    results = []
    for i, lp in enumerate(lps):
        try:
            r = clip_learn(kb, lp, cfg, predictor, table, rcfg, random.Random(rng.random()))
        except Exception as exc:  # one bad problem should not sink the run
            log.error("lp %d failed: %s", i, exc)
            r = LearnResult(Top, 0.0, 0.0, Top.length, 0.0, 0, 0, stop_reason=f"error: {exc}")
        results.append(r)
    return results, aggregate(results)


def benchmark_csv(results: Sequence[LearnResult], agg: dict, timing: bool = True) -> str:
    """Per-problem rows followed by a ``#aggregate`` block (metric,mean,std).

    With ``timing=False`` runtimes are written as 0 so reruns are byte-identical.
    """
    buf = io.StringIO()
    buf.write("lp_id,f1,accuracy,runtime_s,length,nodes_expanded,concepts_tested,predicted_cap,best_concept\n")
    for i, r in enumerate(results):
        rt = r.runtime_s if timing else 0.0
        pc = "" if r.predicted_cap is None else r.predicted_cap
        concept = '"' + r.best_concept.key.replace('"', '""') + '"'
        buf.write(f"{i},{r.f1:.4f},{r.accuracy:.4f},{rt:.3f},{r.length},{r.nodes_expanded},"
                  f"{r.concepts_tested},{pc},{concept}\n")
    buf.write("#aggregate\nmetric,mean,std\n")
    for m, (mu, sd) in agg.items():
        if m == "runtime_s" and not timing:
            mu = sd = 0.0
        buf.write(f"{m},{mu:.4f},{sd:.4f}\n")
    return buf.getvalue()
