"""Momentum-contrast training with RCM positives.

Each image is its own class. Its RCM samples go through the query encoder,
one augmented full-image view goes through the momentum (key) encoder, and
the per-positive InfoNCE losses against the key and the negative queue are
averaged.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import nn
from .checkpoint import save_params
from .errors import BatchSizeMismatch, EmptyPositives, EmptyQueue, InsufficientData, ShapeMismatch
from .imagecore import Image, resize
from .nn import EMBED_DIM, INPUT_SIZE, EncoderParams
from .rcm import derive_rng, rcm_positives, transform_crop

log = logging.getLogger(__name__)

KEY_VIEWS = ("full", "rcm")


@dataclass
class TrainConfig:
    batch_size: int = 128
    lr: float = 0.03
    epochs: int = 30
    lr_drops: tuple[float, ...] = (0.6, 0.8)
    lr_drop_factor: float = 0.1
    momentum_m: float = 0.999
    temperature: float = 0.2
    K: int = 4096
    c: int = 2
    seed: int = 0
    sgd_momentum: float = 0.9
    weight_decay: float = 1e-4
    key_view: str = "full"

    def __post_init__(self):
        self.lr_drops = tuple(float(d) for d in self.lr_drops)
        if not 0.0 < self.momentum_m < 1.0:
            raise ValueError("momentum_m must lie in (0, 1)")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")
        if self.K < 1 or self.K % self.batch_size:
            raise BatchSizeMismatch(f"queue size K={self.K} must be a multiple of batch_size={self.batch_size}")
        if self.key_view not in KEY_VIEWS:
            raise ValueError(f"key_view must be one of {KEY_VIEWS}")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["lr_drops"] = list(self.lr_drops)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


def lr_at(epoch: int, config: TrainConfig) -> float:
    """Step schedule: multiply by ``lr_drop_factor`` from epoch ``ceil(frac * epochs)`` on (0-based)."""
    drops = sum(1 for frac in config.lr_drops if epoch >= math.ceil(frac * config.epochs - 1e-9))
    return config.lr * config.lr_drop_factor**drops


class NegativeQueue:
    """FIFO ring of ``K`` unit-norm keys; the oldest slots are overwritten first."""

    def __init__(self, store: np.ndarray, ptr: int = 0):
        store = np.asarray(store, dtype=np.float64)
        if store.ndim != 2:
            raise ShapeMismatch("queue store must be K x dim")
        self.store = store.copy()
        self.ptr = int(ptr) % max(len(store), 1)

    @classmethod
    def random(cls, K: int, rng: np.random.Generator, dim: int = EMBED_DIM) -> "NegativeQueue":
        v = rng.normal(size=(K, dim))
        return cls(v / np.linalg.norm(v, axis=1, keepdims=True))

    @property
    def K(self) -> int:
        return len(self.store)

    def enqueue(self, keys: np.ndarray) -> "NegativeQueue":
        keys = np.atleast_2d(np.asarray(keys, dtype=np.float64))
        b = len(keys)
        if b == 0 or self.K % b:
            raise BatchSizeMismatch(f"batch of {b} keys does not divide K={self.K}")
        if keys.shape[1] != self.store.shape[1]:
            raise ShapeMismatch(f"key dim {keys.shape[1]} vs queue dim {self.store.shape[1]}")
        self.store[np.arange(self.ptr, self.ptr + b) % self.K] = keys
        self.ptr = (self.ptr + b) % self.K
        return self


def enqueue(queue: NegativeQueue, keys: np.ndarray) -> NegativeQueue:
    return queue.enqueue(keys)


def _negatives(queue) -> np.ndarray:
    store = queue.store if isinstance(queue, NegativeQueue) else np.asarray(queue, dtype=np.float64)
    if store.size == 0:
        raise EmptyQueue("negative queue is empty")
    return store


def info_nce(q: np.ndarray, k_pos: np.ndarray, queue, tau: float) -> tuple[float, np.ndarray]:
    """Loss and its gradient with respect to ``q``; key and queue are constants."""
    negs = _negatives(queue)
    q = np.asarray(q, dtype=np.float64)
    k_pos = np.asarray(k_pos, dtype=np.float64)
    logits = np.concatenate(([q @ k_pos], negs @ q)) / tau
    top = logits.max()
    lse = top + math.log(np.exp(logits - top).sum())
    prob = np.exp(logits - lse)
    grad = ((prob[0] - 1.0) * k_pos + prob[1:] @ negs) / tau
    return float(lse - logits[0]), grad


def multi_positive_loss(qs: np.ndarray, k_pos: np.ndarray, queue, tau: float) -> tuple[float, np.ndarray]:
    """Mean InfoNCE over several query embeddings sharing one positive key."""
    qs = np.atleast_2d(np.asarray(qs, dtype=np.float64))
    if len(qs) == 0:
        raise EmptyPositives("need at least one positive query")
    losses, grads = zip(*(info_nce(q, k_pos, queue, tau) for q in qs))
    n = len(qs)
    return float(sum(losses) / n), np.stack(grads) / n


def momentum_update(theta_k: EncoderParams, theta_q: EncoderParams, m: float) -> EncoderParams:
    if not 0.0 <= m < 1.0:
        raise ValueError("m must lie in [0, 1)")
    out = {}
    for name, k in theta_k.items():
        q = theta_q[name]
        if q.shape != k.shape:
            raise ShapeMismatch(f"{name}: {k.shape} vs {q.shape}")
        out[name] = m * k + (1.0 - m) * q
    return EncoderParams(out)


@dataclass
class TrainState:
    theta_q: EncoderParams
    theta_k: EncoderParams
    queue: NegativeQueue
    velocity: EncoderParams
    epoch: int = 0
    step: int = 0
    loss_history: list[float] = field(default_factory=list)

    @classmethod
    def initial(cls, config: TrainConfig) -> "TrainState":
        theta_q = EncoderParams.init(derive_rng(config.seed, 0))
        queue = NegativeQueue.random(config.K, derive_rng(config.seed, 2))
        return cls(theta_q, theta_q.copy(), queue, EncoderParams.zeros())


def key_view(img: Image, config: TrainConfig, rng: np.random.Generator) -> Image:
    if config.key_view == "rcm":
        samples = rcm_positives(img, config.c, rng)
        return samples[int(rng.integers(len(samples)))].canvas
    return transform_crop(resize(img, INPUT_SIZE, INPUT_SIZE), rng)


def make_views(images: Sequence[Image], config: TrainConfig, rng: np.random.Generator):
    """Query batch (RCM canvases, grouped per image) and key batch (one view per image)."""
    queries, keys, counts = [], [], []
    for img in images:
        samples = rcm_positives(img, config.c, rng)
        queries.extend(s.canvas for s in samples)
        counts.append(len(samples))
        keys.append(key_view(img, config, rng))
    return nn.prepare_input(queries), nn.prepare_input(keys), counts


def train_step(
    state: TrainState, images: Sequence[Image], config: TrainConfig, rng: np.random.Generator, lr: float | None = None
) -> float:
    """One optimisation step; updates ``state`` in place and returns the batch loss."""
    if len(images) == 0:
        raise EmptyPositives("empty batch")
    lr = config.lr if lr is None else lr
    xq, xk, counts = make_views(images, config, rng)
    cache = nn.forward(state.theta_q, xq)
    k = nn.encoder_forward(state.theta_k, xk)

    upstream = np.empty_like(cache.embedding)
    losses = []
    start = 0
    for i, n in enumerate(counts):
        loss, grad = multi_positive_loss(cache.embedding[start : start + n], k[i], state.queue, config.temperature)
        losses.append(loss)
        upstream[start : start + n] = grad / len(images)
        start += n

    grads = nn.backward(state.theta_q, cache, upstream)
    state.theta_q, state.velocity = nn.sgd_step(
        state.theta_q, grads, lr, config.sgd_momentum, config.weight_decay, state.velocity
    )
    state.theta_k = momentum_update(state.theta_k, state.theta_q, config.momentum_m)
    state.queue.enqueue(k)
    state.step += 1
    return float(np.mean(losses))


def _save_state(state: TrainState, config: TrainConfig, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    save_params(state.theta_q, out_dir / "encoder.ckpt")
    arrays = {f"q/{k}": v for k, v in state.theta_q.items()}
    arrays.update({f"k/{k}": v for k, v in state.theta_k.items()})
    arrays.update({f"v/{k}": v for k, v in state.velocity.items()})
    arrays["queue"] = state.queue.store
    with open(out_dir / "state.npz", "wb") as fh:
        np.savez(fh, **arrays)
    sidecar = {
        "epoch": state.epoch,
        "step": state.step,
        "queue_ptr": state.queue.ptr,
        "config": config.to_dict(),
        "loss_history": state.loss_history,
    }
    (out_dir / "train.json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")


def load_state(out_dir: str | Path) -> tuple[TrainState, TrainConfig]:
    out_dir = Path(out_dir)
    meta = json.loads((out_dir / "train.json").read_text())
    with np.load(out_dir / "state.npz") as z:
        names = nn.param_shapes()
        theta_q = EncoderParams({n: z[f"q/{n}"] for n in names})
        theta_k = EncoderParams({n: z[f"k/{n}"] for n in names})
        velocity = EncoderParams({n: z[f"v/{n}"] for n in names})
        queue = NegativeQueue(z["queue"], meta["queue_ptr"])
    state = TrainState(theta_q, theta_k, queue, velocity, meta["epoch"], meta["step"], list(meta["loss_history"]))
    return state, TrainConfig.from_dict(meta["config"])


def train(
    config: TrainConfig,
    images: Sequence[Image],
    out_dir: str | Path | None = None,
    resume: bool = False,
    state: TrainState | None = None,
) -> TrainState:
    """Run ``config.epochs`` epochs, checkpointing into ``out_dir`` after each.

    Epoch ``e`` draws its shuffle and augmentations from ``derive_rng(seed, 1, e)``,
    so a resumed run reproduces an uninterrupted one. The last partial batch
    of each epoch is dropped.
    """
    if len(images) == 0:
        raise InsufficientData("training corpus is empty")
    steps = len(images) // config.batch_size
    if steps == 0:
        raise InsufficientData(f"{len(images)} images cannot fill one batch of {config.batch_size}")
    if state is None:
        if resume and out_dir is not None and (Path(out_dir) / "train.json").exists():
            state, saved = load_state(out_dir)
            if saved != config:
                log.warning("resuming with a config that differs from the checkpoint")
        else:
            state = TrainState.initial(config)

    while state.epoch < config.epochs:
        e = state.epoch
        rng = derive_rng(config.seed, 1, e)
        lr = lr_at(e, config)
        order = rng.permutation(len(images))
        losses = []
        for s in range(steps):
            batch = [images[j] for j in order[s * config.batch_size : (s + 1) * config.batch_size]]
            losses.append(train_step(state, batch, config, rng, lr))
        state.loss_history.append(float(np.mean(losses)))
        state.epoch += 1
        log.info("epoch %d/%d lr=%.5g loss=%.5f", state.epoch, config.epochs, lr, state.loss_history[-1])
        if out_dir is not None:
            _save_state(state, config, Path(out_dir))
    return state


def similarity_report(
    state: TrainState, images: Sequence[Image], config: TrainConfig, seed: int = 0
) -> dict[str, float]:
    """Mean cosine similarity of queries to their own key and to the queued negatives."""
    rng = derive_rng(seed, 3)
    pos, neg = [], []
    for img in images:
        xq, xk, _ = make_views([img], config, rng)
        q = nn.encoder_forward(state.theta_q, xq)
        k = nn.encoder_forward(state.theta_k, xk)[0]
        pos.append(float(np.mean(q @ k)))
        neg.append(float(np.mean(q @ state.queue.store.T)))
    return {"positive": float(np.mean(pos)), "negative": float(np.mean(neg))}
