"""Frozen-encoder regression head, correlation metrics and the few-shot protocol."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import nn
from .errors import DegenerateVariance, EmptyDataset, InsufficientData
from .imagecore import Image
from .nn import EMBED_DIM, EncoderParams
from .rcm import derive_rng


@dataclass
class RegressionHead:
    weight: np.ndarray = field(default_factory=lambda: np.zeros(EMBED_DIM))
    bias: float = 0.0

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64).reshape(EMBED_DIM)
        self.bias = float(self.bias)
        if not (np.isfinite(self.weight).all() and np.isfinite(self.bias)):
            raise ValueError("head parameters must be finite")

    def logits(self, embeddings: np.ndarray) -> np.ndarray:
        return np.asarray(embeddings) @ self.weight + self.bias

    def predict(self, embeddings: np.ndarray) -> np.ndarray:
        return _sigmoid(self.logits(embeddings))

    def arrays(self) -> list[np.ndarray]:
        return [self.weight, np.array([self.bias])]

    @classmethod
    def from_arrays(cls, arrays: list[np.ndarray]) -> "RegressionHead":
        if len(arrays) != 2 or arrays[0].size != EMBED_DIM or arrays[1].size != 1:
            raise ValueError("head blob must hold a 128-vector and a scalar")
        return cls(arrays[0].ravel(), float(arrays[1].ravel()[0]))


@dataclass
class FinetuneConfig:
    batch_size: int = 128
    lr: float = 0.001
    momentum: float = 0.9
    weight_decay: float = 0.001
    epochs: int = 30
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")
        if self.lr <= 0 or self.momentum < 0 or self.weight_decay < 0:
            raise ValueError("lr must be positive; momentum and weight_decay non-negative")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    # split by sign to avoid overflow in exp
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def embed_images(encoder: EncoderParams, images: Sequence[Image], chunk: int = 64) -> np.ndarray:
    if len(images) == 0:
        return np.zeros((0, EMBED_DIM))
    parts = [
        nn.encoder_forward(encoder, nn.prepare_input(list(images[i : i + chunk])))
        for i in range(0, len(images), chunk)
    ]
    return np.concatenate(parts)


def predict_ic(encoder: EncoderParams, head: RegressionHead, img: Image) -> float:
    return float(head.predict(embed_images(encoder, [img]))[0])


def finetune_embeddings(
    embeddings: np.ndarray, labels: np.ndarray, config: FinetuneConfig
) -> RegressionHead:
    """SGD on the mean squared error of ``sigmoid(w.e + b)``; head starts at zero."""
    e = np.asarray(embeddings, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if len(e) == 0:
        raise EmptyDataset("no labelled examples")
    if len(e) != len(y):
        raise ValueError("embeddings and labels differ in length")
    if y.min() < 0 or y.max() > 1:
        raise ValueError("labels must lie in [0, 1]")
    w, b = np.zeros(e.shape[1]), 0.0
    vw, vb = np.zeros_like(w), 0.0
    rng = derive_rng(config.seed, 11)
    for _ in range(config.epochs):
        order = rng.permutation(len(e))
        for s in range(0, len(order), config.batch_size):
            idx = order[s : s + config.batch_size]
            p = _sigmoid(e[idx] @ w + b)
            dz = 2.0 * (p - y[idx]) * p * (1.0 - p) / len(idx)
            gw, gb = dz @ e[idx], float(dz.sum())
            vw = config.momentum * vw + gw + config.weight_decay * w
            vb = config.momentum * vb + gb + config.weight_decay * b
            w = w - config.lr * vw
            b = b - config.lr * vb
    return RegressionHead(w, b)


def finetune(
    encoder: EncoderParams, labeled: Sequence[tuple[Image, float]], config: FinetuneConfig
) -> RegressionHead:
    """Fit a head on top of ``encoder``; the encoder is only read, never written."""
    if len(labeled) == 0:
        raise EmptyDataset("no labelled examples")
    images = [img for img, _ in labeled]
    labels = np.array([lab for _, lab in labeled], dtype=np.float64)
    return finetune_embeddings(embed_images(encoder, images), labels, config)


def _as_pair(x, y):
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if len(x) != len(y):
        raise ValueError(f"length mismatch: {len(x)} vs {len(y)}")
    if len(x) < 2:
        raise InsufficientData("need at least two paired values")
    return x, y


def pearson(x, y) -> float:
    x, y = _as_pair(x, y)
    dx, dy = x - x.mean(), y - y.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise DegenerateVariance("pearson correlation undefined for constant input")
    # one square root of the product keeps exact cases (e.g. 1/sqrt(4)) exact
    denom = math.sqrt(sxx * syy)
    if not math.isfinite(denom) or denom == 0.0:
        denom = math.sqrt(sxx) * math.sqrt(syy)
    r = float(dx @ dy) / denom
    return min(1.0, max(-1.0, r))


def average_ranks(x) -> np.ndarray:
    """1-based ranks; tied values share the mean of the ranks they span."""
    x = np.asarray(x, dtype=np.float64).ravel()
    order = np.argsort(x, kind="stable")
    sorted_x = x[order]
    ranks = np.empty(len(x))
    start = 0
    while start < len(x):
        stop = start + 1
        while stop < len(x) and sorted_x[stop] == sorted_x[start]:
            stop += 1
        ranks[order[start:stop]] = (start + stop + 1) / 2.0
        start = stop
    return ranks


def spearman(x, y) -> float:
    x, y = _as_pair(x, y)
    return pearson(average_ranks(x), average_ranks(y))


@dataclass
class EvalReport:
    pcc: float
    srcc: float
    n: int
    scorer: str
    rows: list[tuple[str, float, float]]

    def to_dict(self) -> dict:
        return {
            "pcc": self.pcc,
            "srcc": self.srcc,
            "n": self.n,
            "scorer": self.scorer,
            "per_image": [{"id": i, "prediction": p, "label": t} for i, p, t in self.rows],
        }


def evaluate(ids: Sequence[str], predictions, labels, scorer: str) -> EvalReport:
    predictions = [float(p) for p in predictions]
    labels = [float(t) for t in labels]
    return EvalReport(
        pearson(predictions, labels),
        spearman(predictions, labels),
        len(labels),
        scorer,
        list(zip(ids, predictions, labels)),
    )


def few_shot_curve(
    encoder: EncoderParams,
    pool: Sequence[tuple[Image, float]],
    ns: Sequence[int],
    config: FinetuneConfig,
    eval_size: int | None = None,
    embeddings: np.ndarray | None = None,
) -> list[tuple[int, float, float]]:
    """PCC/SRCC on a held-out split after fine-tuning on ``n`` pool items, for each ``n``.

    The pool is shuffled once with the config seed; the last ``eval_size``
    items (default: everything beyond ``max(ns)``) are held out.
    """
    ns = [int(n) for n in ns]
    if not ns or any(b <= a for a, b in zip(ns, ns[1:])) or ns[0] < 1:
        raise ValueError("ns must be a non-empty strictly ascending list of positive counts")
    if eval_size is None:
        eval_size = len(pool) - ns[-1]
    if eval_size < 2 or len(pool) < ns[-1] + eval_size:
        raise InsufficientData(f"pool of {len(pool)} cannot supply {ns[-1]} training and {eval_size} held-out items")
    labels = np.array([lab for _, lab in pool], dtype=np.float64)
    if embeddings is None:
        embeddings = embed_images(encoder, [img for img, _ in pool])
    order = derive_rng(config.seed, 12).permutation(len(pool))
    held, train_idx = order[len(pool) - eval_size :], order[: len(pool) - eval_size]
    rows = []
    for n in ns:
        pick = derive_rng(config.seed, 13, n).choice(train_idx, size=n, replace=False)
        head = finetune_embeddings(embeddings[pick], labels[pick], config)
        pred = head.predict(embeddings[held])
        rows.append((n, pearson(pred, labels[held]), spearman(pred, labels[held])))
    return rows
