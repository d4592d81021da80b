"""Seed-fixed experiment drivers shared by scripts/ and the acceptance suite."""
from __future__ import annotations

import random
import time
from dataclasses import dataclass, field

from cliplearn.embed import embed_kb
from cliplearn.kb import KnowledgeBase
from cliplearn.lengthpred import (PredictorConfig, TrainReport, evaluate, random_baseline,
                                  train_predictor)
from cliplearn.lpgen import (LearningProblem, default_n_examples, generate_random_lps,
                             generate_training_concepts, label_concepts, split_dataset)
from cliplearn.refinement import RefinementConfig
from cliplearn.search import ClipConfig, LearnResult, clip_learn
from cliplearn.synthetic import synthetic_kb


@dataclass
class LengthExperimentConfig:
    n_individuals: int = 100
    n_concepts: int = 8
    n_roles: int = 3
    kb_seed: int = 0
    dim: int = 16
    emb_epochs: int = 200
    count: int = 1000
    max_length: int = 15
    epochs: int = 100
    hidden: int = 64
    batch_size: int = 64
    seed: int = 0


@dataclass
class LengthExperimentResult:
    macro_f1: dict[str, float]
    accuracy: dict[str, float]
    reports: dict[str, TrainReport]
    label_counts: dict[int, int]
    n_items: tuple[int, int, int]
    runtime_s: float


def length_prediction_experiment(cfg: LengthExperimentConfig = LengthExperimentConfig()
                                 ) -> LengthExperimentResult:
    """Train GRU and MLP length predictors on one synthetic dataset and score
    them, plus the distribution-aware random baseline, on its test split."""
    start = time.monotonic()
    kb = synthetic_kb(cfg.n_individuals, cfg.n_concepts, cfg.n_roles, seed=cfg.kb_seed)
    table = embed_kb(kb, dim=cfg.dim, epochs=cfg.emb_epochs, seed=cfg.seed)
    concepts = generate_training_concepts(kb, cfg.count, RefinementConfig(max_length=cfg.max_length),
                                          rng=random.Random(f"{cfg.seed}|concepts"))
    data = label_concepts(concepts, kb, default_n_examples(kb), random.Random(f"{cfg.seed}|examples"))
    split = split_dataset(data, random.Random(f"{cfg.seed}|split"))

    f1, acc, reports = {}, {}, {}
    for arch in ("gru", "mlp"):
        pcfg = PredictorConfig(arch=arch, d=cfg.dim, hidden=cfg.hidden, epochs=cfg.epochs,
                               batch_size=cfg.batch_size, seed=cfg.seed)
        model, report = train_predictor(split, table, pcfg)
        reports[arch] = report
        f1[arch], acc[arch] = report.test_macro_f1, report.test_accuracy
    rb = random_baseline([it.label for it in split.train], random.Random(f"{cfg.seed}|random"))
    res = evaluate(rb, split.test, table)
    f1["random"], acc["random"] = res["macro_f1"], res["accuracy"]

    counts: dict[int, int] = {}
    for it in data:
        counts[it.label] = counts.get(it.label, 0) + 1
    return LengthExperimentResult(f1, acc, reports, dict(sorted(counts.items())),
                                  (len(split.train), len(split.val), len(split.test)),
                                  time.monotonic() - start)


@dataclass
class PruningExperimentConfig:
    n_individuals: int = 50
    n_concepts: int = 8
    n_roles: int = 3
    kb_seed: int = 0
    n_lps: int = 20
    max_length: int = 7
    lp_seed: int = 3
    timeout_s: float = 120.0
    max_nodes: int | None = None


@dataclass
class PruningRow:
    lp: LearningProblem
    capped: LearnResult
    uncapped: LearnResult


@dataclass
class PruningExperimentResult:
    rows: list[PruningRow] = field(default_factory=list)

    @property
    def capped_runtime(self) -> float:
        return sum(r.capped.runtime_s for r in self.rows)

    @property
    def uncapped_runtime(self) -> float:
        return sum(r.uncapped.runtime_s for r in self.rows)


def pruning_experiment(cfg: PruningExperimentConfig = PruningExperimentConfig(),
                       kb: KnowledgeBase | None = None) -> PruningExperimentResult:
    """Paired runs per generated LP: cap = true target length vs no cap."""
    kb = kb or synthetic_kb(cfg.n_individuals, cfg.n_concepts, cfg.n_roles, seed=cfg.kb_seed)
    lps = generate_random_lps(kb, cfg.n_lps, max_length=cfg.max_length, rng=random.Random(cfg.lp_seed))
    out = PruningExperimentResult()
    for i, lp in enumerate(lps):
        rng_tag = f"{cfg.lp_seed}|lp{i}"
        capped = clip_learn(kb, lp, ClipConfig(timeout_s=cfg.timeout_s, cap_mode="fixed",
                                               cap=lp.target.length, max_nodes=cfg.max_nodes),
                            rng=random.Random(rng_tag))
        uncapped = clip_learn(kb, lp, ClipConfig(timeout_s=cfg.timeout_s, cap_mode="none",
                                                 max_nodes=cfg.max_nodes),
                              rng=random.Random(rng_tag))
        out.rows.append(PruningRow(lp, capped, uncapped))
    return out
