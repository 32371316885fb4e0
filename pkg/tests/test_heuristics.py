import numpy as np
import pytest

from clic.errors import ImageTooSmall, UnknownScorer
from clic.heuristics import (
    SCORERS,
    compression_ratio,
    edge_density,
    get_scorer,
    scorer_names,
    shannon_entropy,
    sobel_magnitude,
)
from clic.imagecore import GrayImage, Image

from oracles import sobel_bruteforce


def step_image(h, w):
    p = np.zeros((h, w))
    p[:, w // 2 :] = 1.0
    return GrayImage(p)


class TestEntropy:
    def test_constant(self):
        assert shannon_entropy(GrayImage(np.full((8, 8), 0.3))) == 0.0

    def test_two_levels(self):
        assert shannon_entropy(GrayImage(np.array([[0.0, 0.0], [1.0, 1.0]]))) == 0.125

    def test_uniform_histogram(self):
        p = (np.arange(256) / 255.0).reshape(16, 16)
        assert shannon_entropy(GrayImage(p)) == pytest.approx(1.0, abs=1e-15)

    def test_permutation_invariant(self, rng):
        p = rng.random((20, 20))
        shuffled = rng.permutation(p.ravel()).reshape(20, 20)
        assert shannon_entropy(GrayImage(p)) == shannon_entropy(GrayImage(shuffled))


class TestEdgeDensity:
    def test_constant(self):
        assert edge_density(GrayImage(np.full((6, 6), 0.7))) == 0.0

    @pytest.mark.parametrize("h,w", [(5, 8), (10, 10), (7, 13)])
    def test_step(self, h, w):
        # Sobel responds on the two interior columns adjacent to the step
        expected = 2 * (h - 2) / ((h - 2) * (w - 2))
        assert edge_density(step_image(h, w)) == pytest.approx(expected, abs=1e-15)

    def test_sobel_matches_bruteforce(self, rng):
        p = rng.random((9, 11))
        np.testing.assert_allclose(sobel_magnitude(GrayImage(p)), sobel_bruteforce(p), atol=1e-12)

    def test_checkerboard_beats_step(self):
        yy, xx = np.mgrid[0:16, 0:16]
        checker = GrayImage(((yy // 2 + xx // 2) % 2).astype(float))
        assert edge_density(checker) > edge_density(step_image(16, 16))

    def test_single_pixel_checkerboard_is_invisible(self):
        # period-2 patterns sit at the Sobel kernel's null frequency
        yy, xx = np.mgrid[0:16, 0:16]
        checker = ((yy + xx) % 2).astype(float)
        assert np.all(sobel_bruteforce(checker) == 0.0)
        assert edge_density(GrayImage(checker)) == 0.0

    def test_inversion_invariant(self, rng):
        p = rng.random((12, 12))
        assert edge_density(GrayImage(p)) == edge_density(GrayImage(1.0 - p))

    def test_too_small(self):
        with pytest.raises(ImageTooSmall):
            edge_density(GrayImage(np.zeros((2, 5))))


class TestCompression:
    def test_constant(self):
        assert compression_ratio(Image(np.full((256, 256, 3), 0.5))) < 0.05

    def test_noise(self, rng):
        noise = Image(rng.random((256, 256, 3)))
        assert compression_ratio(noise) > 0.9
        assert compression_ratio(noise) > compression_ratio(Image(np.zeros((256, 256, 3))))


class TestRegistry:
    def test_names(self):
        assert scorer_names() == ["compress", "edge", "entropy", "clic"]

    def test_unknown_lists_available(self):
        with pytest.raises(UnknownScorer) as info:
            get_scorer("sharpness")
        assert "entropy" in str(info.value) and "clic" in str(info.value)

    @pytest.mark.parametrize("name", sorted(SCORERS))
    def test_range_and_determinism(self, name, rng):
        fn = get_scorer(name)
        for _ in range(25):
            h, w = rng.integers(3, 40, size=2)
            img = Image(rng.random((h, w, int(rng.choice([1, 3])))) ** rng.uniform(0.2, 5))
            s = fn(img)
            assert 0.0 <= s <= 1.0
            assert fn(img) == s
