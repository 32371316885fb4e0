"""Inject complexity feature maps into a host network's feature maps.

The encoder is frozen: stage maps are plain arrays with no gradient path back
into it. ``fuse`` aligns an encoder map to a task map (bilinear resize, then a
channel-mean projection when channel counts differ) and adds it with a weight.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .imagecore import Image, bilinear_resize
from .nn import EncoderParams

DEFAULT_WEIGHT = 0.5


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """Activations laid out as ``(channels, height, width)``."""

    data: np.ndarray

    def __post_init__(self):
        d = np.array(self.data, dtype=np.float64)
        if d.ndim != 3 or 0 in d.shape:
            raise ValueError(f"feature map must be a nonempty C x H x W array, got {d.shape}")
        d.setflags(write=False)
        object.__setattr__(self, "data", d)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]


def extract_stage_maps(encoder: EncoderParams, img: Image) -> list[FeatureMap]:
    stages = nn.stage_outputs(encoder, nn.prepare_input([img]))
    return [FeatureMap(s[0]) for s in stages]


def align(ic_map: FeatureMap, channels: int, height: int, width: int) -> np.ndarray:
    a = ic_map.data
    if (a.shape[1], a.shape[2]) != (height, width):
        a = bilinear_resize(a.transpose(1, 2, 0), height, width).transpose(2, 0, 1)
    if a.shape[0] != channels:
        a = np.broadcast_to(a.mean(axis=0, keepdims=True), (channels, height, width))
    return a


def fuse(task_map: FeatureMap, ic_map: FeatureMap, weight: float = DEFAULT_WEIGHT) -> FeatureMap:
    if not np.isfinite(weight):
        raise ValueError("fusion weight must be finite")
    aligned = align(ic_map, task_map.channels, task_map.height, task_map.width)
    return FeatureMap(task_map.data + weight * aligned)
