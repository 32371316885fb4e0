"""Training-free complexity scorers, each mapping an image to [0, 1]."""

from __future__ import annotations

import zlib
from typing import Callable

import numpy as np

from .errors import ImageTooSmall, UnknownScorer
from .imagecore import GrayImage, Image, to_grayscale, to_uint8

EDGE_RELATIVE_THRESHOLD = 0.1
ZLIB_LEVEL = 9


def shannon_entropy(img: GrayImage) -> float:
    """Histogram entropy over 256 levels, in bits, divided by 8."""
    levels = np.round(img.pixels * 255.0).astype(np.int64).ravel()
    counts = np.bincount(levels, minlength=256)
    p = counts[counts > 0] / levels.size
    h = abs(float((p * np.log2(p)).sum()))
    return min(max(h / 8.0, 0.0), 1.0)


def sobel_magnitude(img: GrayImage) -> np.ndarray:
    """Sobel gradient magnitude on interior pixels, shape ``(H-2, W-2)``."""
    if img.width < 3 or img.height < 3:
        raise ImageTooSmall("edge density needs at least a 3x3 image")
    p = img.pixels
    tl, tc, tr = p[:-2, :-2], p[:-2, 1:-1], p[:-2, 2:]
    ml, mr = p[1:-1, :-2], p[1:-1, 2:]
    bl, bc, br = p[2:, :-2], p[2:, 1:-1], p[2:, 2:]
    gx = (tr + 2 * mr + br) - (tl + 2 * ml + bl)
    gy = (bl + 2 * bc + br) - (tl + 2 * tc + tr)
    return np.hypot(gx, gy)


def edge_density(img: GrayImage) -> float:
    g = sobel_magnitude(img)
    peak = g.max()
    if peak <= 0.0:
        return 0.0
    return float(np.count_nonzero(g > EDGE_RELATIVE_THRESHOLD * peak) / g.size)


def compression_ratio(img: Image) -> float:
    raw = to_uint8(img).tobytes()
    packed = zlib.compress(raw, ZLIB_LEVEL)
    return min(1.0, len(packed) / len(raw))


SCORERS: dict[str, Callable[[Image], float]] = {
    "entropy": lambda img: shannon_entropy(to_grayscale(img)),
    "edge": lambda img: edge_density(to_grayscale(img)),
    "compress": compression_ratio,
}

# Needs a trained encoder and head; resolved by the callers that have them.
LEARNED_SCORERS = ("clic",)


def scorer_names() -> list[str]:
    return sorted(SCORERS) + list(LEARNED_SCORERS)


def get_scorer(name: str) -> Callable[[Image], float]:
    try:
        return SCORERS[name]
    except KeyError:
        raise UnknownScorer(
            f"unknown scorer {name!r}; available: {', '.join(scorer_names())}"
        ) from None
