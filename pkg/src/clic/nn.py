"""A small convolutional encoder with hand-derived gradients.

Architecture (input ``N x 3 x 64 x 64``):

    4 x [conv 3x3, stride 2, pad 1 -> ReLU]   channels 3->16->32->64->64
    global average pool                         -> 64
    linear 64->128 -> ReLU -> linear 128->128   projection head
    L2 normalisation                            -> unit embedding

Everything runs in float64 numpy.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .errors import NormalizationDegenerate, ShapeMismatch
from .imagecore import Image, resize, to_rgb

INPUT_SIZE = 64
CONV_CHANNELS = (3, 16, 32, 64, 64)
HIDDEN_DIM = 128
EMBED_DIM = 128
NORM_EPS = 1e-12
# fixed affine map of [0, 1] inputs onto [-1, 1] before the first conv
INPUT_CENTER = 0.5
INPUT_SCALE = 2.0


def param_shapes() -> dict[str, tuple[int, ...]]:
    shapes: dict[str, tuple[int, ...]] = {}
    for i in range(4):
        cin, cout = CONV_CHANNELS[i], CONV_CHANNELS[i + 1]
        shapes[f"conv{i + 1}.weight"] = (cout, cin, 3, 3)
        shapes[f"conv{i + 1}.bias"] = (cout,)
    shapes["proj1.weight"] = (HIDDEN_DIM, CONV_CHANNELS[-1])
    shapes["proj1.bias"] = (HIDDEN_DIM,)
    shapes["proj2.weight"] = (EMBED_DIM, HIDDEN_DIM)
    shapes["proj2.bias"] = (EMBED_DIM,)
    return shapes


class EncoderParams:
    """Named parameter arrays in declaration order. Also used for gradients and velocity."""

    def __init__(self, arrays: dict[str, np.ndarray]):
        expected = param_shapes()
        if list(arrays) != list(expected):
            raise ShapeMismatch(f"expected parameters {list(expected)}, got {list(arrays)}")
        self.arrays = {}
        for name, a in arrays.items():
            a = np.asarray(a, dtype=np.float64)
            if a.shape != expected[name]:
                raise ShapeMismatch(f"{name}: expected {expected[name]}, got {a.shape}")
            self.arrays[name] = a

    @classmethod
    def init(cls, seed: int | np.random.Generator) -> "EncoderParams":
        """He (fan-in) normal weights, zero biases."""
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        arrays = {}
        for name, shape in param_shapes().items():
            if name.endswith(".bias"):
                arrays[name] = np.zeros(shape)
            else:
                fan_in = int(np.prod(shape[1:]))
                arrays[name] = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)
        return cls(arrays)

    @classmethod
    def zeros(cls) -> "EncoderParams":
        return cls({name: np.zeros(shape) for name, shape in param_shapes().items()})

    def copy(self) -> "EncoderParams":
        return EncoderParams({k: v.copy() for k, v in self.arrays.items()})

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self.arrays)

    def items(self):
        return self.arrays.items()

    def values(self):
        return self.arrays.values()

    @property
    def size(self) -> int:
        return sum(a.size for a in self.arrays.values())

    def allclose(self, other: "EncoderParams", atol: float = 0.0) -> bool:
        return all(np.allclose(a, other[k], rtol=0.0, atol=atol) for k, a in self.items())

    def __eq__(self, other):
        if not isinstance(other, EncoderParams):
            return NotImplemented
        return all(np.array_equal(a, other[k]) for k, a in self.items())

    __hash__ = None


def _same_layout(a: EncoderParams, b: EncoderParams) -> None:
    for name, arr in a.items():
        if b[name].shape != arr.shape:
            raise ShapeMismatch(f"{name}: {arr.shape} vs {b[name].shape}")


def prepare_input(images: list[Image]) -> np.ndarray:
    """Resize to the encoder's input size, promote gray to RGB, stack as NCHW."""
    batch = np.empty((len(images), 3, INPUT_SIZE, INPUT_SIZE))
    for i, img in enumerate(images):
        img = to_rgb(resize(img, INPUT_SIZE, INPUT_SIZE))
        batch[i] = img.pixels.transpose(2, 0, 1)
    return batch


def _check_batch(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 4 or x.shape[1:] != (3, INPUT_SIZE, INPUT_SIZE):
        raise ShapeMismatch(f"expected N x 3 x {INPUT_SIZE} x {INPUT_SIZE} batch, got {x.shape}")
    return x


# --- stride-2, pad-1, 3x3 convolution via im2col -------------------------------


def _conv_forward(x, w, b):
    n, c, h, wd = x.shape
    ho, wo = (h - 1) // 2 + 1, (wd - 1) // 2 + 1
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    cols = np.empty((n, c, 3, 3, ho, wo))
    for i in range(3):
        for j in range(3):
            cols[:, :, i, j] = xp[:, :, i : i + 2 * ho - 1 : 2, j : j + 2 * wo - 1 : 2]
    cols = cols.reshape(n, c * 9, ho * wo).transpose(0, 2, 1).reshape(n * ho * wo, c * 9)
    out = cols @ w.reshape(w.shape[0], -1).T + b
    out = out.reshape(n, ho, wo, -1).transpose(0, 3, 1, 2)
    return out, cols


def _conv_backward(dout, cols, x_shape, w):
    n, c, h, wd = x_shape
    o, ho, wo = dout.shape[1], dout.shape[2], dout.shape[3]
    dmat = dout.transpose(0, 2, 3, 1).reshape(n * ho * wo, o)
    dw = (dmat.T @ cols).reshape(w.shape)
    db = dout.sum(axis=(0, 2, 3))
    dcols = (dmat @ w.reshape(o, -1)).reshape(n, ho, wo, c, 3, 3).transpose(0, 3, 4, 5, 1, 2)
    dxp = np.zeros((n, c, h + 2, wd + 2))
    for i in range(3):
        for j in range(3):
            dxp[:, :, i : i + 2 * ho - 1 : 2, j : j + 2 * wo - 1 : 2] += dcols[:, :, i, j]
    return dxp[:, :, 1:-1, 1:-1], dw, db


@dataclass
class ForwardCache:
    inputs: list  # per conv block: (input shape, im2col matrix, pre-activation)
    pooled: np.ndarray
    hidden_pre: np.ndarray
    hidden: np.ndarray
    raw: np.ndarray
    norm: np.ndarray
    embedding: np.ndarray
    stages: list


def forward(params: EncoderParams, batch: np.ndarray) -> ForwardCache:
    x = _check_batch(batch)
    blocks, stages = [], []
    a = INPUT_SCALE * (x - INPUT_CENTER)
    for i in range(1, 5):
        z, cols = _conv_forward(a, params[f"conv{i}.weight"], params[f"conv{i}.bias"])
        blocks.append((a.shape, cols, z))
        a = np.maximum(z, 0.0)
        stages.append(a)
    pooled = a.mean(axis=(2, 3))
    h_pre = pooled @ params["proj1.weight"].T + params["proj1.bias"]
    h = np.maximum(h_pre, 0.0)
    y = h @ params["proj2.weight"].T + params["proj2.bias"]
    norm = np.linalg.norm(y, axis=1, keepdims=True)
    if np.any(norm < NORM_EPS):
        raise NormalizationDegenerate("projection output has zero norm")
    return ForwardCache(blocks, pooled, h_pre, h, y, norm, y / norm, stages)


def encoder_forward(params: EncoderParams, batch: np.ndarray) -> np.ndarray:
    """Unit-norm embeddings, shape ``(N, 128)``."""
    return forward(params, batch).embedding


def stage_outputs(params: EncoderParams, batch: np.ndarray) -> list[np.ndarray]:
    """Post-ReLU output of each conv block; no normalisation of the head is required."""
    x = _check_batch(batch)
    out = []
    a = INPUT_SCALE * (x - INPUT_CENTER)
    for i in range(1, 5):
        z, _ = _conv_forward(a, params[f"conv{i}.weight"], params[f"conv{i}.bias"])
        a = np.maximum(z, 0.0)
        out.append(a)
    return out


def backward(params: EncoderParams, cache: ForwardCache, upstream: np.ndarray) -> EncoderParams:
    """Gradients of ``sum(upstream * embedding)`` with respect to every parameter."""
    g = np.asarray(upstream, dtype=np.float64)
    if g.shape != cache.embedding.shape:
        raise ShapeMismatch(f"upstream gradient {g.shape} vs embeddings {cache.embedding.shape}")
    e = cache.embedding
    dy = (g - e * np.sum(e * g, axis=1, keepdims=True)) / cache.norm
    grads = {}
    grads["proj2.weight"] = dy.T @ cache.hidden
    grads["proj2.bias"] = dy.sum(axis=0)
    dh = (dy @ params["proj2.weight"]) * (cache.hidden_pre > 0)
    grads["proj1.weight"] = dh.T @ cache.pooled
    grads["proj1.bias"] = dh.sum(axis=0)
    dpool = dh @ params["proj1.weight"]
    last = cache.stages[-1]
    da = np.broadcast_to(
        dpool[:, :, None, None] / (last.shape[2] * last.shape[3]), last.shape
    )
    for i in range(4, 0, -1):
        x_shape, cols, z = cache.inputs[i - 1]
        dz = da * (z > 0)
        da, dw, db = _conv_backward(dz, cols, x_shape, params[f"conv{i}.weight"])
        grads[f"conv{i}.weight"] = dw
        grads[f"conv{i}.bias"] = db
    return EncoderParams({name: grads[name] for name in param_shapes()})


def sgd_step(
    params: EncoderParams,
    grads: EncoderParams,
    lr: float,
    momentum: float,
    weight_decay: float,
    velocity: EncoderParams | None = None,
) -> tuple[EncoderParams, EncoderParams]:
    """``v <- momentum*v + grad + wd*param``; ``param <- param - lr*v``."""
    _same_layout(params, grads)
    if velocity is None:
        velocity = EncoderParams.zeros()
    _same_layout(params, velocity)
    new_v, new_p = {}, {}
    for name, p in params.items():
        v = momentum * velocity[name] + grads[name] + weight_decay * p
        new_v[name] = v
        new_p[name] = p - lr * v
    return EncoderParams(new_p), EncoderParams(new_v)
