"""Image values, decoding, and the geometric primitives everything else builds on.

Pixels are float64 in [0, 1], stored as ``(height, width, channels)`` arrays.
The only place 8-bit data appears is the decode/encode boundary.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image as PILImage, UnidentifiedImageError

from .errors import DecodeError, OutOfBounds

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Image:
    """Dense image with 1 or 3 channels and intensities in [0, 1]."""

    pixels: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.pixels, dtype=np.float64)
        if p.ndim == 2:
            p = p[:, :, None]
        if p.ndim != 3 or p.shape[2] not in (1, 3):
            raise ValueError(f"expected (H, W, 1|3) pixels, got shape {p.shape}")
        if p.shape[0] < 1 or p.shape[1] < 1:
            raise ValueError("image must be nonempty")
        if p.size and (p.min() < 0.0 or p.max() > 1.0 or not np.isfinite(p).all()):
            raise ValueError("intensities must lie in [0, 1]")
        object.__setattr__(self, "pixels", _frozen(p))

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    def __eq__(self, other):
        if not isinstance(other, Image):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and bool(
            np.array_equal(self.pixels, other.pixels)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class GrayImage:
    """Single-plane intensities in [0, 1], shape ``(height, width)``."""

    pixels: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.pixels, dtype=np.float64)
        if p.ndim != 2 or p.size == 0:
            raise ValueError(f"expected nonempty (H, W) pixels, got shape {p.shape}")
        object.__setattr__(self, "pixels", _frozen(p))

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def __eq__(self, other):
        if not isinstance(other, GrayImage):
            return NotImplemented
        return bool(np.array_equal(self.pixels, other.pixels))

    __hash__ = None


@dataclass(frozen=True)
class Rect:
    """Square crop window; ``x`` is the left column, ``y`` the top row."""

    x: int
    y: int
    side: int

    def fits(self, width: int, height: int) -> bool:
        return (
            self.x >= 0
            and self.y >= 0
            and self.side >= 1
            and self.x + self.side <= width
            and self.y + self.side <= height
        )


def decode_image(data: bytes) -> Image:
    """Decode PNG or JPEG bytes. Palette/alpha images are converted to RGB."""
    try:
        with PILImage.open(io.BytesIO(data)) as im:
            if im.format not in ("PNG", "JPEG"):
                raise DecodeError(f"unsupported image format: {im.format}")
            if im.mode in ("1", "I;16", "I", "F"):
                im = im.convert("L")
            elif im.mode not in ("L", "RGB"):
                im = im.convert("RGB")
            arr = np.asarray(im, dtype=np.uint8)
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise DecodeError(str(exc)) from exc
    return Image(arr.astype(np.float64) / 255.0)


def load_image(path: str | Path) -> Image:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise DecodeError(f"{path}: {exc}") from exc
    return decode_image(data)


def to_uint8(img: Image) -> np.ndarray:
    return np.round(img.pixels * 255.0).astype(np.uint8)


def encode_png(img: Image) -> bytes:
    arr = to_uint8(img)
    if arr.shape[2] == 1:
        arr = arr[:, :, 0]
    buf = io.BytesIO()
    PILImage.fromarray(arr).save(buf, format="PNG")
    return buf.getvalue()


def save_png(img: Image, path: str | Path) -> None:
    Path(path).write_bytes(encode_png(img))


def to_grayscale(img: Image) -> GrayImage:
    if img.channels == 1:
        return GrayImage(img.pixels[:, :, 0])
    gray = img.pixels @ LUMA_WEIGHTS
    return GrayImage(np.clip(gray, 0.0, 1.0))


def to_rgb(img: Image) -> Image:
    if img.channels == 3:
        return img
    return Image(np.repeat(img.pixels, 3, axis=2))


def crop(img: Image, r: Rect) -> Image:
    if not r.fits(img.width, img.height):
        raise OutOfBounds(f"{r} does not fit a {img.width}x{img.height} image")
    return Image(img.pixels[r.y : r.y + r.side, r.x : r.x + r.side])


def _axis_weights(n_in: int, n_out: int):
    if n_out == 1 or n_in == 1:
        src = np.zeros(n_out)
    else:
        src = np.arange(n_out) * ((n_in - 1) / (n_out - 1))
    lo = np.floor(src).astype(int)
    lo = np.minimum(lo, n_in - 1)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = src - lo
    return lo, hi, frac


def bilinear_resize(a: np.ndarray, height: int, width: int) -> np.ndarray:
    """Corner-aligned bilinear resampling of an ``(H, W, ...)`` array.

    Works for arbitrary real values (feature maps as well as images).
    """
    if height < 1 or width < 1:
        raise ValueError("target size must be at least 1x1")
    a = np.asarray(a, dtype=np.float64)
    if a.shape[0] == height and a.shape[1] == width:
        return a.copy()
    y0, y1, fy = _axis_weights(a.shape[0], height)
    x0, x1, fx = _axis_weights(a.shape[1], width)
    extra = (1,) * (a.ndim - 2)
    fy = fy.reshape((-1, 1) + extra)
    fx = fx.reshape((1, -1) + extra)
    top = a[y0][:, x0] * (1 - fx) + a[y0][:, x1] * fx
    bottom = a[y1][:, x0] * (1 - fx) + a[y1][:, x1] * fx
    return top * (1 - fy) + bottom * fy


def resize(img: Image, w: int, h: int) -> Image:
    if w < 1 or h < 1:
        raise ValueError("target size must be at least 1x1")
    if (w, h) == (img.width, img.height):
        return img
    out = bilinear_resize(img.pixels, h, w)
    return Image(np.clip(out, 0.0, 1.0))
