"""Procedural test corpora: constant, noise, stripe and checkerboard images.

Labels are the normalised gray-level entropy of each generated image, so a
labelled corpus exists without any external dataset.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .heuristics import shannon_entropy
from .imagecore import Image, save_png, to_grayscale
from .manifest import Manifest, ManifestEntry

KINDS = ("constant", "noise", "stripe", "checker")


def _palette(rng: np.random.Generator, k: int) -> np.ndarray:
    return np.round(rng.random((k, 3)) * 255) / 255


def make_image(kind: str, size: int, rng: np.random.Generator) -> Image:
    if kind == "constant":
        color = _palette(rng, 1)[0]
        return Image(np.broadcast_to(color, (size, size, 3)))
    if kind == "noise":
        levels = int(2 ** rng.integers(1, 9))
        q = rng.integers(0, levels, size=(size, size, 3))
        return Image(np.round(q / (levels - 1) * 255) / 255)
    if kind == "stripe":
        k = int(rng.integers(2, 9))
        width = int(rng.integers(1, max(2, size // 4)))
        colors = _palette(rng, k)
        band = (np.arange(size) // width) % k
        grid = np.broadcast_to(band[None, :], (size, size))
        if rng.random() < 0.5:
            grid = grid.T
        return Image(colors[grid])
    if kind == "checker":
        k = int(rng.integers(2, 5))
        cell = int(rng.integers(1, 9))
        colors = _palette(rng, k)
        idx = np.arange(size) // cell
        grid = (idx[:, None] + idx[None, :]) % k
        return Image(colors[grid])
    raise ValueError(f"unknown synthetic kind {kind!r}")


def synth_images(n: int, size: int = 64, seed: int = 0) -> list[tuple[Image, str, float]]:
    """``n`` images cycling through the kinds, with their entropy labels."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 7]))
    out = []
    for i in range(n):
        kind = KINDS[i % len(KINDS)]
        img = make_image(kind, size, rng)
        out.append((img, kind, shannon_entropy(to_grayscale(img))))
    return out


def write_corpus(out_dir: str | Path, n: int, size: int = 64, seed: int = 0) -> Manifest:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, (img, kind, label) in enumerate(synth_images(n, size, seed)):
        name = f"{kind}_{i:05d}"
        path = out_dir / f"{name}.png"
        save_png(img, path)
        entries.append(ManifestEntry(str(path), round(label, 6), name))
    return Manifest(entries)
