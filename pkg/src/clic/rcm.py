"""Random Crop and Mix: multi-scale crops tiled with augmented copies.

For a short side ``L`` and hyperparameter ``c >= 2`` an image is cut into
``c`` crops of side ``L//c``, ``2c`` of side ``L//(2c)`` and ``4c`` of side
``L//(4c)``. Crops of one scale are paired at random and each pair ``(a, b)``
becomes a 2x2 canvas ``[a, b; T(a), T(b)]`` where ``T`` is a random
augmentation. An odd leftover crop is paired with itself, so a level with
``n`` crops gives ``ceil(n/2)`` samples.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ImageTooSmall, InvalidC
from .imagecore import LUMA_WEIGHTS, Image, Rect, crop, load_image, save_png
from .manifest import Manifest, ManifestEntry

log = logging.getLogger(__name__)

FLIP_P = 0.5
ROTATE_P = 0.5
JITTER_P = 0.5
GRAY_P = 0.2
JITTER_GAIN = (0.6, 1.4)
JITTER_BIAS = (-0.2, 0.2)


def derive_rng(seed: int, *keys: int) -> np.random.Generator:
    """Independent generator for a sub-task, e.g. ``derive_rng(seed, entry_index)``."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, keys)]))


@dataclass(frozen=True)
class CropPlan:
    height: int
    width: int
    c: int
    levels: tuple[tuple[int, int], ...]

    @property
    def L(self) -> int:
        return min(self.height, self.width)

    @property
    def total(self) -> int:
        return sum(n for _, n in self.levels)


@dataclass(frozen=True, eq=False)
class MixedSample:
    tile_side: int
    tiles: tuple[Image, Image, Image, Image]
    canvas: Image
    source_id: str
    scale_level: int


@dataclass(frozen=True)
class TransformParams:
    """One concrete draw of the crop augmentation. ``gain``/``bias`` are per channel."""

    flip: bool = False
    rot90: int = 0
    gain: tuple[float, ...] | None = None
    bias: tuple[float, ...] | None = None
    gray: bool = False


def samples_per_image(c: int) -> int:
    """Closed form for the number of mixed samples RCM yields per image."""
    return math.ceil(c / 2) + c + 2 * c


def plan_crops(height: int, width: int, c: int) -> CropPlan:
    if c < 2:
        raise InvalidC(f"c must be >= 2, got {c}")
    L = min(height, width)
    if L < 4 * c:
        raise ImageTooSmall(f"short side {L} is below 4c = {4 * c}")
    levels = tuple((L // (k * c), k * c) for k in (1, 2, 4))
    return CropPlan(height, width, c, levels)


def sample_rects(plan: CropPlan, rng: np.random.Generator) -> list[tuple[int, Rect]]:
    rects = []
    for level, (side, count) in enumerate(plan.levels):
        xs = rng.integers(0, plan.width - side + 1, size=count)
        ys = rng.integers(0, plan.height - side + 1, size=count)
        rects.extend((level, Rect(int(x), int(y), side)) for x, y in zip(xs, ys))
    return rects


def random_crop_set(img: Image, plan: CropPlan, rng: np.random.Generator) -> list[tuple[int, Image]]:
    if (plan.height, plan.width) != (img.height, img.width):
        raise ValueError("crop plan was built for a different image size")
    return [(level, crop(img, r)) for level, r in sample_rects(plan, rng)]


def sample_transform(rng: np.random.Generator, channels: int = 3) -> TransformParams:
    flip = bool(rng.random() < FLIP_P)
    rot90 = int(rng.integers(1, 4)) if rng.random() < ROTATE_P else 0
    gain = bias = None
    if rng.random() < JITTER_P:
        gain = tuple(float(v) for v in rng.uniform(*JITTER_GAIN, size=channels))
        bias = tuple(float(v) for v in rng.uniform(*JITTER_BIAS, size=channels))
    gray = bool(rng.random() < GRAY_P)
    return TransformParams(flip, rot90, gain, bias, gray)


def apply_transform(tile: Image, t: TransformParams) -> Image:
    p = tile.pixels
    if t.flip:
        p = p[:, ::-1]
    if t.rot90:
        p = np.rot90(p, k=t.rot90, axes=(0, 1))
    if t.gain is not None:
        gain = np.asarray(t.gain, dtype=np.float64)
        bias = np.zeros_like(gain) if t.bias is None else np.asarray(t.bias, dtype=np.float64)
        p = np.clip(p * gain + bias, 0.0, 1.0)
    if t.gray and p.shape[2] == 3:
        luma = np.clip(p @ LUMA_WEIGHTS, 0.0, 1.0)
        p = np.repeat(luma[:, :, None], 3, axis=2)
    return Image(p)


def transform_crop(tile: Image, rng: np.random.Generator) -> Image:
    if tile.width != tile.height:
        raise ValueError("transform_crop expects a square tile")
    return apply_transform(tile, sample_transform(rng, tile.channels))


def _canvas(a: Image, b: Image, ta: Image, tb: Image) -> Image:
    top = np.concatenate([a.pixels, b.pixels], axis=1)
    bottom = np.concatenate([ta.pixels, tb.pixels], axis=1)
    return Image(np.concatenate([top, bottom], axis=0))


def mix_pairs(
    crops: list[tuple[int, Image]], rng: np.random.Generator, source_id: str = ""
) -> list[MixedSample]:
    by_level: dict[int, list[Image]] = {}
    for level, im in crops:
        by_level.setdefault(level, []).append(im)
    out = []
    for level in sorted(by_level):
        group = by_level[level]
        order = rng.permutation(len(group))
        for i in range(0, len(order), 2):
            a = group[order[i]]
            b = group[order[i + 1]] if i + 1 < len(order) else a
            ta, tb = transform_crop(a, rng), transform_crop(b, rng)
            out.append(MixedSample(a.width, (a, b, ta, tb), _canvas(a, b, ta, tb), source_id, level))
    return out


def rcm_positives(img: Image, c: int, rng: np.random.Generator, source_id: str = "") -> list[MixedSample]:
    plan = plan_crops(img.height, img.width, c)
    return mix_pairs(random_crop_set(img, plan, rng), rng, source_id)


def _unique_keys(manifest: Manifest) -> list[str]:
    seen: set[str] = set()
    keys = []
    for i, entry in enumerate(manifest):
        k = entry.key
        if k in seen:
            k = f"{k}-{i}"
        seen.add(k)
        keys.append(k)
    return keys


def expand_dataset(
    manifest: Manifest,
    c: int,
    seed: int,
    out_dir: str | Path,
    keep_originals: bool = False,
    jobs: int = 1,
) -> Manifest:
    """Write RCM samples of every entry as PNGs and return the resulting manifest.

    Entry ``i`` uses ``derive_rng(seed, i)`` so output does not depend on ``jobs``.
    Entries that fail to decode or are too small are logged and listed in
    ``Manifest.skipped``.
    """
    if c < 2:
        raise InvalidC(f"c must be >= 2, got {c}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    keys = _unique_keys(manifest)

    def work(i: int):
        entry = manifest[i]
        try:
            img = load_image(entry.path)
            samples = rcm_positives(img, c, derive_rng(seed, i), keys[i])
        except Exception as exc:  # per-entry failures are not fatal
            log.warning("skipping %s: %s", entry.path, exc)
            return None, {"path": entry.path, "error": f"{type(exc).__name__}: {exc}"}
        written = []
        counters: dict[int, int] = {}
        for s in samples:
            idx = counters.get(s.scale_level, 0)
            counters[s.scale_level] = idx + 1
            name = f"{keys[i]}_rcm_{s.scale_level}_{idx}"
            path = out_dir / f"{name}.png"
            save_png(s.canvas, path)
            written.append(ManifestEntry(str(path), None, name))
        return written, None

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(work, range(len(manifest))))
    else:
        results = [work(i) for i in range(len(manifest))]

    out = Manifest()
    for entry, (written, failure) in zip(manifest, results):
        if failure is not None:
            out.skipped.append(failure)
            continue
        if keep_originals:
            out.entries.append(entry)
        out.entries.extend(written)
    return out
