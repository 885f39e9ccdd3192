import json
import math
import random

import numpy as np
import pytest
from scipy import sparse

from medsift.classifier import (
    ClassifierError,
    FeatureConfig,
    GridSearchSpec,
    LabeledPost,
    NgramTfidfVectorizer,
    SelfReportClassifier,
    evaluate,
    featurize,
    f1_for_positive,
    import_external_labels,
    logistic_loss_and_grad,
    stratified_folds,
    train,
)


class TestVectorizer:
    def test_smoothed_idf_values(self):
        cfg = FeatureConfig(ngram_min=1, ngram_max=1, vocab_min_df=1, use_length=False)
        vec = NgramTfidfVectorizer(cfg).fit(["a b", "a c"])
        idf = {g: vec.idf_[i] for g, i in vec.vocabulary_.items()}
        assert idf["a"] == pytest.approx(1.0)
        assert idf["b"] == pytest.approx(math.log(3 / 2) + 1, abs=1e-12)

    def test_empty_string_zero_vector(self):
        cfg = FeatureConfig(ngram_min=1, ngram_max=1, vocab_min_df=1, use_length=False)
        vec = NgramTfidfVectorizer(cfg).fit(["a b", "a c"])
        row = vec.transform([""])
        assert row.nnz == 0

    def test_raw_counts_when_tfidf_off(self):
        cfg = FeatureConfig(ngram_min=1, ngram_max=1, use_tfidf=False, use_length=False, vocab_min_df=1)
        vec = NgramTfidfVectorizer(cfg).fit(["a a b"])
        row = vec.transform(["a a b"]).toarray()[0]
        counts = {g: row[i] for g, i in vec.vocabulary_.items()}
        assert counts == {"a": 2.0, "b": 1.0}

    def test_unseen_ngrams_dropped(self):
        cfg = FeatureConfig(ngram_min=1, ngram_max=1, vocab_min_df=1, use_length=False)
        vec = NgramTfidfVectorizer(cfg).fit(["a b"])
        assert vec.transform(["z z z"]).nnz == 0

    def test_min_df_prunes_vocabulary(self):
        cfg = FeatureConfig(ngram_min=1, ngram_max=1, vocab_min_df=2, use_length=False)
        vec = NgramTfidfVectorizer(cfg).fit(["a b", "a c"])
        assert set(vec.vocabulary_) == {"a"}

    def test_length_feature_appended(self):
        cfg = FeatureConfig(ngram_min=1, ngram_max=1, vocab_min_df=1, use_length=True)
        vec = NgramTfidfVectorizer(cfg).fit(["a b"])
        row = vec.transform(["a b c"]).toarray()[0]
        assert row[-1] == 3.0

    def test_featurize_without_vocabulary(self):
        out = featurize("a a b", FeatureConfig(ngram_min=1, ngram_max=1, use_tfidf=False, use_length=False))
        assert out == {"a": 2.0, "b": 1.0}

    def test_featurize_with_vocabulary_counts_only(self):
        cfg = FeatureConfig(ngram_min=1, ngram_max=1, use_tfidf=False, use_length=False)
        out = featurize("a a b z", cfg, vocabulary={"a": 0, "b": 1})
        assert out == {0: 2.0, 1: 1.0}  # unseen "z" dropped


class TestGradient:
    def test_matches_central_finite_differences(self):
        rng = np.random.default_rng(42)
        for _ in range(20):
            n, d = rng.integers(4, 12), rng.integers(2, 8)
            X = sparse.csr_matrix(rng.normal(size=(n, d)))
            y = rng.integers(0, 2, size=n).astype(float)
            w = rng.normal(size=d)
            b = float(rng.normal())
            l2 = float(rng.uniform(0.001, 1.0))
            _, grad_w, grad_b = logistic_loss_and_grad(w, b, X, y, l2)
            h = 1e-6
            fd = np.zeros(d)
            for i in range(d):
                e = np.zeros(d)
                e[i] = h
                lp, _, _ = logistic_loss_and_grad(w + e, b, X, y, l2)
                lm, _, _ = logistic_loss_and_grad(w - e, b, X, y, l2)
                fd[i] = (lp - lm) / (2 * h)
            lp, _, _ = logistic_loss_and_grad(w, b + h, X, y, l2)
            lm, _, _ = logistic_loss_and_grad(w, b - h, X, y, l2)
            fd_b = (lp - lm) / (2 * h)
            analytic = np.append(grad_w, grad_b)
            numeric = np.append(fd, fd_b)
            rel = np.linalg.norm(analytic - numeric) / max(1e-12, np.linalg.norm(numeric))
            assert rel <= 1e-5


def separable_dataset(n=40):
    """Class S posts carry 'recovery', NR posts carry 'promo'; one feature
    splits them exactly, which a single-token threshold rule verifies."""
    rng = random.Random(7)
    filler = ["day", "today", "update", "walk", "coffee", "feeling"]
    data = []
    for i in range(n):
        noise = " ".join(rng.choice(filler) for _ in range(3))
        if i % 2 == 0:
            data.append((f"my recovery {noise}", "S"))
        else:
            data.append((f"huge promo {noise}", "NR"))
    return data


class TestTraining:
    def test_separable_set_reaches_perfect_training_accuracy(self):
        data = separable_dataset()
        # oracle: a one-token threshold rule separates the classes exactly
        assert all(("recovery" in t) == (l == "S") for t, l in data)
        spec = GridSearchSpec(l2_penalties=(1e-4,), ngram_ranges=((1, 1),), folds=5, seed=0)
        model, report = train(data, spec, FeatureConfig(vocab_min_df=1))
        predictions = model.predict([t for t, _ in data])
        accuracy = sum(p == l for p, (_, l) in zip(predictions, data)) / len(data)
        assert accuracy == 1.0
        assert report.best.mean_f1 > 0.9

    def test_identical_texts_hit_majority_baseline(self):
        # 8 S + 4 NR identical posts; predicting the majority class always
        # gives each fold TP=2, FP=1, FN=0 => F1 = 0.8
        data = [("same text here", "S")] * 8 + [("same text here", "NR")] * 4
        spec = GridSearchSpec(l2_penalties=(1e-4,), ngram_ranges=((1, 1),), folds=4, seed=1)
        _, report = train(data, spec, FeatureConfig(vocab_min_df=1))
        expected = f1_for_positive(["S", "S", "NR"], ["S", "S", "S"])
        assert expected == pytest.approx(0.8)
        assert report.best.mean_f1 == pytest.approx(expected)

    def test_duplicate_winning_row_keeps_first_in_grid_order(self):
        data = separable_dataset(20)
        spec = GridSearchSpec(l2_penalties=(1e-3, 1e-3), ngram_ranges=((1, 1),), folds=4, seed=0)
        _, report = train(data, spec, FeatureConfig(vocab_min_df=1))
        assert report.cells[0].mean_f1 == report.cells[1].mean_f1
        assert report.best_index == 0

    def test_single_class_rejected(self):
        with pytest.raises(ClassifierError):
            train([("a", "S"), ("b", "S")], GridSearchSpec(folds=2))

    def test_fewer_samples_than_folds_rejected(self):
        with pytest.raises(ClassifierError):
            train([("a", "S"), ("b", "NR")], GridSearchSpec(folds=5))

    def test_model_json_round_trip(self, tmp_path):
        data = separable_dataset(20)
        spec = GridSearchSpec(l2_penalties=(1e-3,), ngram_ranges=((1, 2),), folds=4, seed=0)
        model, _ = train(data, spec, FeatureConfig(vocab_min_df=1))
        path = tmp_path / "model.json"
        model.save(path)
        loaded = SelfReportClassifier.load(path)
        texts = [t for t, _ in data]
        assert loaded.predict(texts) == model.predict(texts)
        assert np.allclose(loaded.decision_scores(texts), model.decision_scores(texts))


class TestFolds:
    def test_disjoint_covering_stratified(self):
        rng = random.Random(23)
        labels = ["S"] * 37 + ["NR"] * 18
        rng.shuffle(labels)
        assignment = stratified_folds(labels, folds=5, seed=9)
        assert len(assignment) == len(labels)
        assert set(assignment) == set(range(5))
        for label in ("S", "NR"):
            counts = [
                sum(1 for l, f in zip(labels, assignment) if l == label and f == fold)
                for fold in range(5)
            ]
            assert max(counts) - min(counts) <= 1

    def test_seeded_and_deterministic(self):
        labels = ["S", "NR"] * 10
        assert stratified_folds(labels, 5, 3) == stratified_folds(labels, 5, 3)
        assert stratified_folds(labels, 5, 3) != stratified_folds(labels, 5, 4)


class TestPredict:
    def test_zero_model_scores_half_and_labels_s(self):
        model = SelfReportClassifier.from_dict(
            {
                "feature_config": {"ngram_min": 1, "ngram_max": 1, "use_tfidf": True,
                                    "use_length": False, "vocab_min_df": 1},
                "vocabulary": ["hello"],
                "idf": [1.0],
                "weights": [0.0],
                "bias": 0.0,
                "l2": 0.01,
            }
        )
        label, score = model.predict_one("hello")
        assert score == 0.5
        assert label == "S"

    def test_large_margin_saturates(self):
        model = SelfReportClassifier.from_dict(
            {
                "feature_config": {"ngram_min": 1, "ngram_max": 1, "use_tfidf": False,
                                    "use_length": False, "vocab_min_df": 1},
                "vocabulary": ["good"],
                "idf": [1.0],
                "weights": [50.0],
                "bias": 0.0,
                "l2": 0.01,
            }
        )
        _, score = model.predict_one("good good good")
        assert score > 1 - 1e-12

    def test_unseen_tokens_fall_back_to_bias(self):
        model = SelfReportClassifier.from_dict(
            {
                "feature_config": {"ngram_min": 1, "ngram_max": 1, "use_tfidf": True,
                                    "use_length": False, "vocab_min_df": 1},
                "vocabulary": ["known"],
                "idf": [1.0],
                "weights": [3.0],
                "bias": -1.0,
                "l2": 0.01,
            }
        )
        _, score = model.predict_one("totally novel words")
        assert score == pytest.approx(1 / (1 + math.exp(1)))


class TestEvaluate:
    @staticmethod
    def _confusion_case():
        gold, pred = [], []
        i = 0
        for truth, guess, count in [
            ("S", "S", 16), ("NR", "S", 9), ("S", "NR", 9), ("NR", "NR", 66),
        ]:
            for _ in range(count):
                gold.append(LabeledPost(f"p{i}", truth))
                pred.append(LabeledPost(f"p{i}", guess))
                i += 1
        return pred, gold

    def test_point_from_confusion_counts(self):
        pred, gold = self._confusion_case()
        metrics = evaluate(pred, gold)
        assert metrics.precision == pytest.approx(0.64)
        assert metrics.recall == pytest.approx(0.64)
        assert metrics.f1 == pytest.approx(0.64)
        assert metrics.accuracy == pytest.approx(0.82)
        assert metrics.confusion == {"tp": 16, "fp": 9, "fn": 9, "tn": 66}

    def test_all_correct(self):
        gold = [LabeledPost("a", "S"), LabeledPost("b", "NR")]
        metrics = evaluate(gold, gold)
        assert metrics.accuracy == 1.0 and metrics.f1 == 1.0

    def test_degenerate_no_predicted_positives(self):
        gold = [LabeledPost("a", "S"), LabeledPost("b", "NR")]
        pred = [LabeledPost("a", "NR"), LabeledPost("b", "NR")]
        metrics = evaluate(pred, gold)
        assert metrics.precision == 0.0
        assert metrics.recall == 0.0
        assert metrics.f1 == 0.0

    def test_id_mismatch_rejected(self):
        with pytest.raises(ClassifierError):
            evaluate([LabeledPost("a", "S")], [LabeledPost("b", "S")])

    def test_permutation_invariant_and_cells_sum(self):
        pred, gold = self._confusion_case()
        rng = random.Random(2)
        shuffled_pred = list(pred)
        rng.shuffle(shuffled_pred)
        metrics = evaluate(shuffled_pred, gold)
        assert metrics == evaluate(pred, gold)
        assert sum(metrics.confusion.values()) == len(gold)


class TestExternalLabels:
    def test_five_valid_rows(self):
        lines = [json.dumps({"post_id": f"p{i}", "label": "S"}) for i in range(5)]
        labels, report = import_external_labels(lines)
        assert len(labels) == 5
        assert report.parsed == 5 and report.rejected == 0

    def test_label_outside_enum_rejected(self):
        lines = [json.dumps({"post_id": "p1", "label": "MAYBE"})]
        labels, report = import_external_labels(lines)
        assert labels == []
        assert report.rejected == 1

    def test_duplicate_post_id_last_write_wins(self):
        lines = [
            json.dumps({"post_id": "p1", "label": "S"}),
            json.dumps({"post_id": "p1", "label": "NR"}),
        ]
        labels, report = import_external_labels(lines)
        assert labels == [LabeledPost("p1", "NR")]
        assert report.overwritten == 1

    def test_malformed_line_tallied(self):
        labels, report = import_external_labels(["oops", json.dumps({"post_id": "p", "label": "S"})])
        assert len(labels) == 1
        assert report.rejected == 1

    def test_unknown_post_ids_reported(self):
        lines = [json.dumps({"post_id": "ghost", "label": "S"})]
        _, report = import_external_labels(lines, known_post_ids={"p1"})
        assert report.unknown_post_ids == ["ghost"]
