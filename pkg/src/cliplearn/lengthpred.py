"""Concept-length prediction from example embeddings.

A learning problem becomes an N x (d+1) matrix: the embeddings of the sampled
positives followed by those of the negatives, each row extended by a +1/-1
membership flag. The GRU reads the rows as a sequence; the MLP sees their
column means. Classes are literal lengths 0..L.
"""
from __future__ import annotations

import copy
import io
import random
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from cliplearn.embed import EmbeddingTable
from cliplearn.lpgen import DatasetSplit, LabeledConcept
from cliplearn.nn import (GRU, Adam, BatchNorm, Linear, Module, ShapeError, Tensor,
                          class_weights, dropout, load_weights, relu, save_weights,
                          weighted_cross_entropy)


@dataclass
class FeatureMatrix:
    rows: np.ndarray
    n_pos: int
    n_neg: int


def build_feature_matrix(table: EmbeddingTable, pos: Sequence[str], neg: Sequence[str]) -> FeatureMatrix:
    overlap = set(pos) & set(neg)
    if overlap:
        raise ValueError(f"examples are both positive and negative: {sorted(overlap)[:5]}")
    emb = table.matrix(list(pos) + list(neg))
    flags = np.concatenate([np.ones(len(pos)), -np.ones(len(neg))])
    return FeatureMatrix(np.column_stack([emb, flags]) if len(flags) else emb.reshape(0, table.dim + 1),
                         len(pos), len(neg))


def mlp_input(m: FeatureMatrix) -> np.ndarray:
    if m.rows.shape[0] == 0:
        raise ValueError("empty feature matrix")
    return m.rows.mean(axis=0)


@dataclass
class PredictorConfig:
    arch: str = "gru"
    d: int = 40
    num_classes: int | None = None
    hidden: int = 64
    gru_layers: int = 2
    mlp_layers: int = 4
    dropout_p: float = 0.2
    lr: float = 0.003
    batch_size: int = 512
    epochs: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.arch not in ("gru", "mlp"):
            raise ValueError(f"unknown architecture {self.arch!r}")
        if min(self.d, self.hidden, self.gru_layers, self.batch_size) < 1 or self.mlp_layers < 2:
            raise ValueError("sizes must be positive (mlp_layers >= 2)")


class GRUNet(Module):
    """Stacked GRU, then linear -> batchnorm -> relu -> dropout -> linear."""

    def __init__(self, cfg: PredictorConfig, num_classes: int, rng: np.random.Generator):
        self.gru = GRU(cfg.d + 1, cfg.hidden, cfg.gru_layers, rng)
        self.fc1 = Linear(cfg.hidden, cfg.hidden, rng)
        self.bn = BatchNorm(cfg.hidden)
        self.fc2 = Linear(cfg.hidden, num_classes, rng)
        self.p = cfg.dropout_p
        self.rng = rng

    def __call__(self, x: np.ndarray) -> Tensor:
        h = self.gru(x)
        h = dropout(relu(self.bn(self.fc1(h))), self.p, self.training, self.rng)
        return self.fc2(h)


class MLPNet(Module):
    """``mlp_layers`` linear layers with batchnorm, relu and dropout between them."""

    def __init__(self, cfg: PredictorConfig, num_classes: int, rng: np.random.Generator):
        sizes = [cfg.d + 1] + [cfg.hidden] * (cfg.mlp_layers - 1) + [num_classes]
        self.layers = [Linear(a, b, rng) for a, b in zip(sizes, sizes[1:])]
        self.norms = [BatchNorm(b) for b in sizes[1:-1]]
        self.p = cfg.dropout_p
        self.rng = rng

    def __call__(self, x: np.ndarray) -> Tensor:
        h = Tensor(x.mean(axis=1) if x.ndim == 3 else x)
        for lin, bn in zip(self.layers, self.norms):
            h = dropout(relu(bn(lin(h))), self.p, self.training, self.rng)
        return self.layers[-1](h)


class PredictorModel:
    """A trained length classifier together with the metadata needed to reuse it."""

    def __init__(self, cfg: PredictorConfig, num_classes: int, weights: np.ndarray | None = None):
        self.cfg = cfg
        self.num_classes = num_classes
        rng = np.random.default_rng(cfg.seed)
        self.net: Module = (GRUNet if cfg.arch == "gru" else MLPNet)(cfg, num_classes, rng)
        self.class_weights = np.zeros(num_classes) if weights is None else np.asarray(weights, float)

    @property
    def d(self) -> int:
        return self.cfg.d

    def logits(self, batch: np.ndarray) -> np.ndarray:
        """Eval-mode scores for a (bs, N, d+1) array."""
        if batch.ndim != 3 or batch.shape[2] != self.d + 1:
            raise ShapeError(f"expected (batch, N, {self.d + 1}) features, got {batch.shape}")
        self.net.eval()
        return self.net(batch).data

    def predict(self, m: FeatureMatrix) -> int:
        if m.rows.shape[1] != self.d + 1:
            raise ShapeError(f"feature width {m.rows.shape[1]} does not match model d+1={self.d + 1}")
        return int(np.argmax(self.logits(m.rows[None])[0]))

    def predict_many(self, mats: Sequence[FeatureMatrix], batch_size: int = 256) -> list[int]:
        out: dict[int, int] = {}
        for idx, arr in _batches_by_length(mats, batch_size):
            for i, k in zip(idx, np.argmax(self.logits(arr), axis=1)):
                out[i] = int(k)
        return [out[i] for i in range(len(mats))]

    def to_bytes(self) -> bytes:
        header = {"arch": self.cfg.arch, "d": self.d, "num_classes": self.num_classes,
                  "L": self.num_classes - 1, "class_weights": self.class_weights.tolist(),
                  "config": asdict(self.cfg)}
        return save_weights(self.net.state(), header)


class RandomBaseline:
    """Predicts length k with its training-set frequency, ignoring the input."""

    def __init__(self, train_labels: Sequence[int], rng: random.Random | None = None):
        if not train_labels:
            raise ValueError("no training labels")
        counts = Counter(train_labels)
        self.classes = sorted(counts)
        total = sum(counts.values())
        self.probs = [counts[k] / total for k in self.classes]
        self.rng = rng or random.Random(0)
        self.num_classes = max(self.classes) + 1

    def predict(self, m: FeatureMatrix | None = None) -> int:
        return self.rng.choices(self.classes, weights=self.probs)[0]

    def predict_many(self, mats: Sequence[FeatureMatrix], batch_size: int = 0) -> list[int]:
        return [self.predict(m) for m in mats]

    def to_bytes(self) -> bytes:
        return save_weights({}, {"arch": "random", "classes": self.classes, "probs": self.probs})


def random_baseline(train_labels: Sequence[int], rng: random.Random | None = None) -> RandomBaseline:
    return RandomBaseline(train_labels, rng)


def load_model(blob: bytes) -> PredictorModel | RandomBaseline:
    state, header = load_weights(blob)
    if header.get("arch") == "random":
        rb = RandomBaseline([0])
        rb.classes = list(header["classes"])
        rb.probs = list(header["probs"])
        rb.num_classes = max(rb.classes) + 1
        return rb
    cfg = PredictorConfig(**header["config"])
    model = PredictorModel(cfg, header["num_classes"], np.array(header["class_weights"]))
    model.net.load_state(state)
    return model


def _batches_by_length(mats: Sequence[FeatureMatrix], batch_size: int, order=None):
    groups: dict[int, list[int]] = defaultdict(list)
    for i in (order if order is not None else range(len(mats))):
        groups[mats[i].rows.shape[0]].append(i)
    for n in sorted(groups):
        idx = groups[n]
        for s in range(0, len(idx), batch_size):
            chunk = idx[s:s + batch_size]
            yield chunk, np.stack([mats[i].rows for i in chunk])


@dataclass
class TrainReport:
    train_loss: list[float] = field(default_factory=list)
    train_acc: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    val_acc: list[float] = field(default_factory=list)
    best_epoch: int = -1
    test_accuracy: float = float("nan")
    test_macro_f1: float = float("nan")

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("epoch,train_loss,train_acc,val_loss,val_acc\n")
        for i in range(len(self.train_loss)):
            buf.write(f"{i + 1},{self.train_loss[i]:.6f},{self.train_acc[i]:.6f},"
                      f"{self.val_loss[i]:.6f},{self.val_acc[i]:.6f}\n")
        return buf.getvalue()


def featurize(items: Sequence[LabeledConcept], table: EmbeddingTable) -> list[FeatureMatrix]:
    return [build_feature_matrix(table, it.sampled_pos, it.sampled_neg) for it in items]


def _loss_acc(model: PredictorModel, mats, labels, weights) -> tuple[float, float]:
    if not mats:
        return float("nan"), float("nan")
    total_loss, correct = 0.0, 0
    for idx, arr in _batches_by_length(mats, 256):
        scores = model.logits(arr)
        y = np.asarray([labels[i] for i in idx])
        total_loss += float(weighted_cross_entropy(Tensor(scores), y, weights).data) * len(idx)
        correct += int((np.argmax(scores, axis=1) == y).sum())
    return total_loss / len(mats), correct / len(mats)


def train_predictor(dataset: DatasetSplit, table: EmbeddingTable,
                    cfg: PredictorConfig) -> tuple[PredictorModel, TrainReport]:
    """Train with Adam on the weighted cross-entropy; the returned weights are
    those of the epoch with the best validation accuracy (training accuracy
    when there is no validation split)."""
    if not dataset.train:
        raise ValueError("empty training split")
    if table.dim != cfg.d:
        raise ShapeError(f"embedding dim {table.dim} does not match config d={cfg.d}")
    all_labels = [it.label for part in (dataset.train, dataset.val, dataset.test) for it in part]
    num_classes = cfg.num_classes or max(all_labels) + 1
    if max(all_labels) >= num_classes:
        raise ValueError(f"label {max(all_labels)} outside 0..{num_classes - 1}")
    train_x = featurize(dataset.train, table)
    train_y = [it.label for it in dataset.train]
    val_x = featurize(dataset.val, table)
    val_y = [it.label for it in dataset.val]
    weights = class_weights(train_y, num_classes)

    model = PredictorModel(cfg, num_classes, weights)
    opt = Adam(model.net.named_parameters(), cfg.lr)
    shuffler = np.random.default_rng(cfg.seed + 1)
    report = TrainReport()
    best_score, best_state = -1.0, copy.deepcopy(model.net.state())

    for epoch in range(cfg.epochs):
        model.net.train()
        order = shuffler.permutation(len(train_x))
        total_loss, correct, seen = 0.0, 0, 0
        for idx, arr in _batches_by_length(train_x, cfg.batch_size, order):
            if len(idx) < 2:
                continue  # batchnorm needs more than one row
            y = np.asarray([train_y[i] for i in idx])
            opt.zero_grad()
            scores = model.net(arr)
            loss = weighted_cross_entropy(scores, y, weights)
            loss.backward()
            opt.step()
            total_loss += float(loss.data) * len(idx)
            correct += int((np.argmax(scores.data, axis=1) == y).sum())
            seen += len(idx)
        report.train_loss.append(total_loss / max(seen, 1))
        report.train_acc.append(correct / max(seen, 1))
        vl, va = _loss_acc(model, val_x, val_y, weights)
        report.val_loss.append(vl)
        report.val_acc.append(va)
        score = va if val_x else report.train_acc[-1]
        if score > best_score:
            best_score, best_state = score, copy.deepcopy(model.net.state())
            report.best_epoch = epoch + 1

    model.net.load_state(best_state)
    model.net.eval()
    if dataset.test:
        res = evaluate(model, dataset.test, table)
        report.test_accuracy, report.test_macro_f1 = res["accuracy"], res["macro_f1"]
    return model, report


def predict_length(model: PredictorModel | RandomBaseline, m: FeatureMatrix) -> int:
    return model.predict(m)


def macro_f1(gold: Sequence[int], pred: Sequence[int]) -> float:
    """Unweighted mean of per-class F1 over the classes present in ``gold``."""
    if not gold:
        raise ValueError("empty evaluation set")
    scores = []
    for k in sorted(set(gold)):
        tp = sum(1 for g, p in zip(gold, pred) if g == k and p == k)
        fp = sum(1 for g, p in zip(gold, pred) if g != k and p == k)
        fn = sum(1 for g, p in zip(gold, pred) if g == k and p != k)
        scores.append(2 * tp / (2 * tp + fp + fn) if tp else 0.0)
    return sum(scores) / len(scores)


def evaluate(model: PredictorModel | RandomBaseline, split: Sequence[LabeledConcept],
             table: EmbeddingTable) -> dict[str, float]:
    if not split:
        raise ValueError("empty evaluation split")
    gold = [it.label for it in split]
    pred = model.predict_many(featurize(split, table))
    acc = sum(g == p for g, p in zip(gold, pred)) / len(gold)
    return {"accuracy": acc, "macro_f1": macro_f1(gold, pred)}
