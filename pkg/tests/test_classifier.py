import math

import numpy as np
import pytest

from appintent.classifier import (
    ClassifierConfig,
    ClassifierState,
    _bce_batch_grad,
    class_forward,
    init_classifier,
    predict_products,
    train_classifier,
    weighted_bce,
)
from appintent.encoder import EncoderConfig, init_encoder
from appintent.pipeline import DatasetSplit, LabeledQuery
from appintent.tokenizer import build_vocab


@pytest.fixture
def micro_encoder(tiny_vocab):
    config = EncoderConfig(vocab_size=tiny_vocab.size, d_model=16, n_layers=1,
                           n_heads=2, d_ff=32, seed=0)
    return init_encoder(config)


@pytest.fixture
def micro_split():
    train = [
        LabeledQuery("crop the photo", {"ps": 1.0}, "behavioral"),
        LabeledQuery("photo layer mask", {"ps": 1.0}, "behavioral"),
        LabeledQuery("trim the video", {"pr": 1.0}, "behavioral"),
        LabeledQuery("video clip", {"pr": 0.8}, "behavioral"),
    ] * 4
    val = [
        LabeledQuery("crop photo", {"ps": 1.0}, "behavioral"),
        LabeledQuery("trim video clip", {"pr": 1.0}, "behavioral"),
    ]
    return DatasetSplit(train=train, validation=val, test=val, seed=0)


class TestWeightedBce:
    def test_perfect_positive_is_near_zero(self):
        loss = weighted_bce(np.array([1.0 - 1e-9]), {"ps": 1.0}, {"ps": 0})
        assert loss == pytest.approx(0.0, abs=1e-6)

    def test_single_weighted_positive(self):
        # P=1, y=1, w=0.24, p=0.5 -> 0.24 * ln 2
        loss = weighted_bce(np.array([0.5]), {"ps": 0.24}, {"ps": 0})
        assert loss == pytest.approx(0.24 * math.log(2), abs=1e-9)

    def test_all_negative_uniform(self):
        # P=2, no labels, p=(0.5, 0.5) -> ln 2
        loss = weighted_bce(np.array([0.5, 0.5]), {}, {})
        assert loss == pytest.approx(math.log(2), abs=1e-9)

    def test_negative_weight_scales_negatives(self):
        base = weighted_bce(np.array([0.5, 0.5]), {}, {})
        half = weighted_bce(np.array([0.5, 0.5]), {}, {}, negative_weight=0.5)
        assert half == pytest.approx(base / 2, abs=1e-12)

    def test_weight_outside_range_rejected(self):
        with pytest.raises(ValueError):
            weighted_bce(np.array([0.5]), {"ps": 0.0}, {"ps": 0})
        with pytest.raises(ValueError):
            weighted_bce(np.array([0.5]), {"ps": 1.2}, {"ps": 0})

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(0)
        logits = rng.normal(0, 1.5, (3, 4))
        y = (rng.random((3, 4)) < 0.4).astype(float)
        w = np.where(y > 0, rng.uniform(0.05, 1.0, (3, 4)), 0.0)
        _, grad = _bce_batch_grad(logits, y, w, negative_weight=0.7)
        h = 1e-6
        numeric = np.zeros_like(logits)
        for i in range(3):
            for k in range(4):
                for sign in (1, -1):
                    logits[i, k] += sign * h
                    loss, _ = _bce_batch_grad(logits, y, w, negative_weight=0.7)
                    numeric[i, k] += sign * loss / (2 * h)
                    logits[i, k] -= sign * h
        rel = np.abs(grad - numeric) / np.maximum(np.abs(numeric), 1e-10)
        assert rel.max() < 1e-4


class TestInference:
    def test_zero_head_scores_half(self, micro_encoder, tiny_vocab):
        state = init_classifier(ClassifierConfig(hidden=(8, 8)), micro_encoder, 3)
        state.params["w3"][:] = 0.0
        state.params["b3"][:] = 0.0
        scores = class_forward(state, "crop the photo", tiny_vocab)
        np.testing.assert_allclose(scores, 0.5, atol=1e-12)

    def test_scores_in_unit_interval(self, micro_encoder, tiny_vocab):
        state = init_classifier(ClassifierConfig(hidden=(8, 8), seed=1), micro_encoder, 5)
        scores = class_forward(state, "photo video layer", tiny_vocab)
        assert ((scores >= 0) & (scores <= 1)).all()

    def test_predict_products_sort_threshold_topk(self, micro_encoder, tiny_vocab, catalog, monkeypatch):
        state = init_classifier(ClassifierConfig(hidden=(8, 8)), micro_encoder, 3)
        fixed = np.array([0.9, 0.7, 0.2])
        monkeypatch.setattr("appintent.classifier.class_forward", lambda *a: fixed)
        out = predict_products(state, "q", tiny_vocab, catalog, tau=0.5, top_k=2)
        assert out == [("ps", 0.9), ("pr", 0.7)]
        assert predict_products(state, "q", tiny_vocab, catalog, tau=0.95) == []

    def test_predict_products_tie_breaks_lexicographic(self, micro_encoder, tiny_vocab, catalog, monkeypatch):
        state = init_classifier(ClassifierConfig(hidden=(8, 8)), micro_encoder, 3)
        monkeypatch.setattr("appintent.classifier.class_forward",
                            lambda *a: np.array([0.8, 0.8, 0.1]))
        out = predict_products(state, "q", tiny_vocab, catalog, tau=0.5)
        assert [pid for pid, _ in out] == ["pr", "ps"]

    def test_monotone_thresholding(self, micro_encoder, tiny_vocab, catalog, monkeypatch):
        state = init_classifier(ClassifierConfig(hidden=(8, 8)), micro_encoder, 3)
        monkeypatch.setattr("appintent.classifier.class_forward",
                            lambda *a: np.array([0.9, 0.6, 0.3]))
        low = predict_products(state, "q", tiny_vocab, catalog, tau=0.2)
        high = predict_products(state, "q", tiny_vocab, catalog, tau=0.55)
        assert low[: len(high)] == high

    def test_multilabel_independence_under_catalog_growth(self, micro_encoder, tiny_vocab):
        small = init_classifier(ClassifierConfig(hidden=(8, 8)), micro_encoder, 3)
        grown = {k: v.copy() for k, v in small.params.items()}
        grown["w3"] = np.hstack([grown["w3"], np.zeros((grown["w3"].shape[0], 1))])
        grown["b3"] = np.append(grown["b3"], 0.0)
        big = ClassifierState(config=small.config, params=grown, encoder=micro_encoder)
        a = class_forward(small, "crop the photo", tiny_vocab)
        b = class_forward(big, "crop the photo", tiny_vocab)
        np.testing.assert_allclose(a, b[:3], atol=1e-15)
        assert b[3] == 0.5


class TestTraining:
    CFG = ClassifierConfig(hidden=(16, 16), dropout=0.1, lr=1e-2,
                           freeze_epochs=1, total_epochs=3, batch_size=4, seed=0)

    def test_backbone_untouched_during_freeze(self, micro_encoder, micro_split, tiny_vocab, catalog):
        result = train_classifier(micro_encoder, micro_split, self.CFG, tiny_vocab, catalog)
        assert result.backbone_hash_input == result.backbone_hash_after_freeze

    def test_unfrozen_phase_updates_a_copy(self, micro_encoder, micro_split, tiny_vocab, catalog):
        before = {k: v.copy() for k, v in micro_encoder.params.items()}
        result = train_classifier(micro_encoder, micro_split, self.CFG, tiny_vocab, catalog)
        for name, arr in micro_encoder.params.items():
            np.testing.assert_array_equal(arr, before[name])
        assert any(
            not np.array_equal(result.encoder.params[n], before[n]) for n in before
        )

    def test_deterministic_for_fixed_seed(self, micro_encoder, micro_split, tiny_vocab, catalog):
        a = train_classifier(micro_encoder, micro_split, self.CFG, tiny_vocab, catalog)
        b = train_classifier(micro_encoder, micro_split, self.CFG, tiny_vocab, catalog)
        for name in a.classifier.params:
            np.testing.assert_array_equal(a.classifier.params[name], b.classifier.params[name])
        assert a.f1_history == b.f1_history

    def test_learns_planted_task(self, micro_encoder, micro_split, tiny_vocab, catalog):
        cfg = ClassifierConfig(hidden=(16, 16), dropout=0.0, lr=3e-2,
                               freeze_epochs=1, total_epochs=8, batch_size=4, seed=0)
        result = train_classifier(micro_encoder, micro_split, cfg, tiny_vocab, catalog)
        scores = class_forward(result.classifier, "crop photo", tiny_vocab)
        assert int(np.argmax(scores)) == catalog.label_index["ps"]

    def test_empty_train_split_rejected(self, micro_encoder, tiny_vocab, catalog):
        empty = DatasetSplit(train=[], validation=[], test=[], seed=0)
        with pytest.raises(ValueError):
            train_classifier(micro_encoder, empty, self.CFG, tiny_vocab, catalog)
