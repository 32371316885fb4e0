import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from PIL import Image as PILImage

from clic.errors import DecodeError, OutOfBounds
from clic.imagecore import (
    Image,
    Rect,
    bilinear_resize,
    crop,
    decode_image,
    encode_png,
    resize,
    to_grayscale,
)


def _png(arr, mode=None):
    buf = io.BytesIO()
    PILImage.fromarray(np.asarray(arr, dtype=np.uint8), mode=mode).save(buf, format="PNG")
    return buf.getvalue()


class TestDecode:
    def test_white_png_is_one(self):
        img = decode_image(_png(np.full((2, 2, 3), 255)))
        assert img.width == 2 and img.height == 2 and img.channels == 3
        assert np.all(img.pixels == 1.0)

    def test_black_is_zero(self):
        img = decode_image(_png(np.zeros((1, 1))))
        assert img.channels == 1
        assert img.pixels[0, 0, 0] == 0.0

    def test_mid_gray(self):
        img = decode_image(_png(np.full((1, 1), 128)))
        assert img.pixels[0, 0, 0] == pytest.approx(128 / 255)

    def test_jpeg(self):
        buf = io.BytesIO()
        PILImage.fromarray(np.full((8, 8, 3), 200, dtype=np.uint8)).save(buf, format="JPEG")
        img = decode_image(buf.getvalue())
        assert img.channels == 3
        assert np.allclose(img.pixels, 200 / 255, atol=3 / 255)

    def test_rgba_is_flattened_to_rgb(self):
        img = decode_image(_png(np.full((2, 2, 4), 10), mode="RGBA"))
        assert img.channels == 3

    @pytest.mark.parametrize("data", [b"", b"not an image", _png(np.zeros((2, 2)))[:20]])
    def test_corrupt(self, data):
        with pytest.raises(DecodeError):
            decode_image(data)

    def test_unsupported_format(self):
        buf = io.BytesIO()
        PILImage.fromarray(np.zeros((2, 2), dtype=np.uint8)).save(buf, format="BMP")
        with pytest.raises(DecodeError):
            decode_image(buf.getvalue())

    def test_png_roundtrip(self, rng):
        arr = rng.integers(0, 256, size=(5, 7, 3))
        img = Image(arr / 255.0)
        assert decode_image(encode_png(img)) == img


class TestImageInvariants:
    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            Image(np.full((2, 2, 3), 1.5))

    def test_rejects_bad_channels(self):
        with pytest.raises(ValueError):
            Image(np.zeros((2, 2, 2)))

    def test_immutable(self):
        img = Image(np.zeros((2, 2, 3)))
        with pytest.raises(ValueError):
            img.pixels[0, 0, 0] = 1.0


class TestGrayscale:
    def test_white(self):
        assert to_grayscale(Image(np.ones((1, 1, 3)))).pixels[0, 0] == pytest.approx(1.0)

    def test_red_weight(self):
        assert to_grayscale(Image(np.array([[[1.0, 0.0, 0.0]]]))).pixels[0, 0] == pytest.approx(0.299)

    def test_gray_passthrough(self, rng):
        img = Image(rng.random((4, 5, 1)))
        assert np.array_equal(to_grayscale(img).pixels, img.pixels[:, :, 0])


class TestCrop:
    def setup_method(self):
        self.img = Image(np.arange(16, dtype=float).reshape(4, 4) / 15)

    def test_full_frame(self):
        assert crop(self.img, Rect(0, 0, 4)) == self.img

    def test_offset_subgrid(self):
        out = crop(self.img, Rect(1, 1, 2))
        # index arithmetic: row y+i, column x+j of the 4x4 grid
        expected = np.array([[5, 6], [9, 10]]) / 15
        assert np.array_equal(out.pixels[:, :, 0], expected)

    def test_out_of_bounds(self):
        with pytest.raises(OutOfBounds):
            crop(self.img, Rect(3, 3, 2))

    @settings(max_examples=60, deadline=None)
    @given(st.data())
    def test_composition(self, data):
        img = Image(np.random.default_rng(0).random((12, 10, 3)))
        s1 = data.draw(st.integers(1, 10))
        a = Rect(data.draw(st.integers(0, 10 - s1)), data.draw(st.integers(0, 12 - s1)), s1)
        s2 = data.draw(st.integers(1, s1))
        b = Rect(data.draw(st.integers(0, s1 - s2)), data.draw(st.integers(0, s1 - s2)), s2)
        assert crop(crop(img, a), b) == crop(img, Rect(a.x + b.x, a.y + b.y, s2))


class TestResize:
    def test_identity(self, rng):
        img = Image(rng.random((5, 6, 3)))
        assert resize(img, 6, 5) == img

    def test_constant(self):
        img = Image(np.full((3, 4, 3), 0.5))
        out = resize(img, 9, 2)
        assert out.width == 9 and out.height == 2
        assert np.allclose(out.pixels, 0.5)

    def test_corner_aligned_upsample(self):
        out = resize(Image(np.array([[0.0, 1.0]])), 3, 1)
        np.testing.assert_allclose(out.pixels[0, :, 0], [0.0, 0.5, 1.0])

    def test_against_pointwise_formula(self, rng):
        a = rng.random((4, 5))
        out = bilinear_resize(a, 7, 3)
        for i in range(7):
            for j in range(3):
                y = i * 3 / 6
                x = j * 4 / 2
                y0, x0 = min(int(y), 3), min(int(x), 4)
                y1, x1 = min(y0 + 1, 3), min(x0 + 1, 4)
                fy, fx = y - y0, x - x0
                ref = (a[y0, x0] * (1 - fx) + a[y0, x1] * fx) * (1 - fy) + (a[y1, x0] * (1 - fx) + a[y1, x1] * fx) * fy
                assert out[i, j] == pytest.approx(ref)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 20), st.integers(1, 20), st.integers(0, 2**32 - 1))
    def test_range_preserved(self, w, h, seed):
        img = Image(np.random.default_rng(seed).random((6, 5, 3)))
        out = resize(img, w, h)
        assert out.pixels.min() >= 0.0 and out.pixels.max() <= 1.0
