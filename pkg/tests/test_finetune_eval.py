import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from clic.errors import DegenerateVariance, EmptyDataset, InsufficientData
from clic.finetune_eval import (
    FinetuneConfig,
    RegressionHead,
    average_ranks,
    evaluate,
    few_shot_curve,
    finetune,
    finetune_embeddings,
    pearson,
    predict_ic,
    spearman,
)
from clic.nn import EncoderParams
from clic.synth import synth_images

from conftest import random_image
from oracles import pearson_ref, ranks_ref, spearman_ref


@pytest.fixture(scope="module")
def encoder():
    return EncoderParams.init(21)


class TestPearson:
    def test_examples(self):
        assert pearson([1, 2, 3], [2, 4, 6]) == 1.0
        assert pearson([1, 2, 3], [3, 2, 1]) == -1.0
        assert pearson([1, 2, 3], [1, 3, 2]) == 0.5

    def test_matches_formula(self, rng):
        for _ in range(200):
            n = int(rng.integers(2, 30))
            x, y = rng.normal(size=n), rng.normal(size=n)
            assert pearson(x, y) == pytest.approx(pearson_ref(list(x), list(y)), abs=1e-12)

    def test_degenerate(self):
        with pytest.raises(DegenerateVariance):
            pearson([1, 1, 1], [1, 2, 3])

    def test_too_short(self):
        with pytest.raises(InsufficientData):
            pearson([1.0], [2.0])

    def test_symmetry_and_affine(self, rng):
        x, y = rng.normal(size=(2, 40))
        r = pearson(x, y)
        assert pearson(y, x) == pytest.approx(r, abs=1e-14)
        assert pearson(3.0 * x - 7.0, 0.2 * y + 1.0) == pytest.approx(r, abs=1e-12)


class TestSpearman:
    def test_examples(self):
        assert spearman([1, 2, 3], [1, 3, 2]) == 0.5
        assert spearman([1, 5, 9, 10], [-3, 0, 0.1, 8]) == 1.0
        np.testing.assert_array_equal(average_ranks([1, 2, 2]), [1, 2.5, 2.5])

    def test_ranks_match_sort(self, rng):
        for _ in range(100):
            x = rng.integers(0, 6, size=int(rng.integers(1, 20))).astype(float)
            np.testing.assert_array_equal(average_ranks(x), ranks_ref(list(x)))

    def test_matches_reference_with_ties(self, rng):
        for _ in range(200):
            n = int(rng.integers(3, 25))
            x = rng.integers(0, 5, size=n).astype(float)
            y = rng.normal(size=n)
            if np.ptp(x) == 0:
                continue
            assert spearman(x, y) == pytest.approx(spearman_ref(x, y), abs=1e-12)

    def test_monotone_transform(self, rng):
        x, y = rng.normal(size=(2, 50))
        assert spearman(np.exp(x), y) == pytest.approx(spearman(x, y), abs=1e-14)

    def test_all_equal(self):
        with pytest.raises(DegenerateVariance):
            spearman([2, 2, 2], [1, 2, 3])

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.tuples(st.floats(-1e6, 1e6), st.floats(-1e6, 1e6)), min_size=2, max_size=40))
    def test_bounded(self, pairs):
        x, y = map(np.array, zip(*pairs))
        for fn in (pearson, spearman):
            try:
                assert -1.0 <= fn(x, y) <= 1.0
            except DegenerateVariance:
                pass


class TestHead:
    def test_zero_head(self, encoder, rng):
        head = RegressionHead()
        for _ in range(3):
            assert predict_ic(encoder, head, random_image(rng)) == 0.5

    def test_range(self, rng):
        head = RegressionHead(rng.normal(size=128) * 50, 3.0)
        emb = rng.normal(size=(1000, 128))
        emb /= np.linalg.norm(emb, axis=1, keepdims=True)
        p = head.predict(emb)
        assert np.all((p >= 0) & (p <= 1))
        assert np.all(np.isfinite(head.predict(emb * 1e4)))

    def test_deterministic(self, encoder, rng):
        img = random_image(rng)
        head = RegressionHead(rng.normal(size=128), 0.1)
        assert predict_ic(encoder, head, img) == predict_ic(encoder, head, img)

    def test_arrays_roundtrip(self, rng):
        head = RegressionHead(rng.normal(size=128), -0.25)
        back = RegressionHead.from_arrays(head.arrays())
        assert np.array_equal(back.weight, head.weight) and back.bias == head.bias


class TestFinetune:
    def test_encoder_frozen(self, encoder, rng):
        before = {k: v.tobytes() for k, v in encoder.items()}
        labeled = [(random_image(rng), float(rng.random())) for _ in range(6)]
        finetune(encoder, labeled, FinetuneConfig(epochs=3))
        assert {k: v.tobytes() for k, v in encoder.items()} == before

    @pytest.mark.parametrize("label", [0.2, 0.8, 0.95])
    def test_single_example_converges(self, label, rng):
        e = rng.normal(size=128)
        e /= np.linalg.norm(e)
        head = finetune_embeddings(np.tile(e, (128, 1)), np.full(128, label), FinetuneConfig(batch_size=1))
        assert abs(head.predict(e[None])[0] - label) < 0.05

    def test_half_labels_zero_logit(self, rng):
        e = rng.normal(size=(20, 128))
        head = finetune_embeddings(e, np.full(20, 0.5), FinetuneConfig(batch_size=4))
        assert np.abs(head.logits(e)).max() < 1e-12

    def test_empty(self, encoder):
        with pytest.raises(EmptyDataset):
            finetune(encoder, [], FinetuneConfig())

    def test_label_range(self):
        with pytest.raises(ValueError):
            finetune_embeddings(np.zeros((2, 128)), np.array([0.5, 1.5]), FinetuneConfig())


class TestEvaluate:
    def test_report(self):
        rep = evaluate(["a", "b", "c"], [0.1, 0.3, 0.2], [1, 3, 2], "entropy").to_dict()
        assert rep["pcc"] == pytest.approx(1.0) and rep["srcc"] == 1.0 and rep["n"] == 3
        assert rep["per_image"][1] == {"id": "b", "prediction": 0.3, "label": 3.0}


@pytest.fixture(scope="module")
def pool():
    return [(img, lab) for img, _, lab in synth_images(60, 32, seed=4)]


class TestFewShot:
    def test_shape_and_determinism(self, encoder, pool):
        cfg = FinetuneConfig(epochs=5, batch_size=8)
        a = few_shot_curve(encoder, pool, [5, 10, 20], cfg)
        assert [r[0] for r in a] == [5, 10, 20]
        assert all(-1 <= r[1] <= 1 and -1 <= r[2] <= 1 for r in a)
        assert a == few_shot_curve(encoder, pool, [5, 10, 20], cfg)

    def test_insufficient(self, encoder, pool):
        with pytest.raises(InsufficientData):
            few_shot_curve(encoder, pool, [10, 59], FinetuneConfig())

    def test_ns_ascending(self, encoder, pool):
        with pytest.raises(ValueError):
            few_shot_curve(encoder, pool, [10, 5], FinetuneConfig())
