"""Self-report vs. not-relevant post classification.

A TF-IDF weighted n-gram featurizer feeds an L2-regularized logistic
regression fit by deterministic full-batch gradient descent; hyperparameters
come from a seeded, stratified k-fold grid search.  Labels produced by an
external model can be imported instead of training.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import sparse
from sklearn.base import BaseEstimator

from .text import normalize
from .validation import check_labels, check_texts

LABEL_POSITIVE = "S"
LABEL_NEGATIVE = "NR"
LABELS = (LABEL_POSITIVE, LABEL_NEGATIVE)


class ClassifierError(ValueError):
    pass


@dataclass(frozen=True)
class LabeledPost:
    post_id: str
    label: str

    def __post_init__(self):
        if self.label not in LABELS:
            raise ClassifierError(f"label must be one of {LABELS}, got {self.label!r}")


@dataclass(frozen=True)
class FeatureConfig:
    ngram_min: int = 1
    ngram_max: int = 3
    use_tfidf: bool = True
    use_length: bool = True
    vocab_min_df: int = 2

    def __post_init__(self):
        if not 1 <= self.ngram_min <= self.ngram_max:
            raise ClassifierError("need 1 <= ngram_min <= ngram_max")
        if self.vocab_min_df < 1:
            raise ClassifierError("vocab_min_df must be >= 1")


@dataclass(frozen=True)
class GridSearchSpec:
    l2_penalties: tuple[float, ...] = (1e-4, 1e-2, 1.0)
    ngram_ranges: tuple[tuple[int, int], ...] = ((1, 1), (1, 2), (1, 3))
    folds: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.folds < 2:
            raise ClassifierError("folds must be >= 2")
        if not self.l2_penalties or not self.ngram_ranges:
            raise ClassifierError("grid lists must be nonempty")
        if any(l2 <= 0 for l2 in self.l2_penalties):
            raise ClassifierError("l2 penalties must be positive")
        object.__setattr__(self, "l2_penalties", tuple(self.l2_penalties))
        object.__setattr__(self, "ngram_ranges", tuple(tuple(r) for r in self.ngram_ranges))


def _ngrams(text: str, lo: int, hi: int) -> list[str]:
    tokens = normalize(text).tokens
    grams = []
    for n in range(lo, hi + 1):
        grams.extend(" ".join(tokens[i : i + n]) for i in range(len(tokens) - n + 1))
    return grams


def token_count(text: str) -> int:
    return len(normalize(text).tokens)


class NgramTfidfVectorizer(BaseEstimator):
    """N-gram count/TF-IDF featurizer over matcher-normalized tokens.

    idf is smoothed, ``ln((1 + N) / (1 + df)) + 1``, fixed at fit time;
    n-grams unseen at fit time are dropped at transform time.  When enabled,
    a token-count column is appended after the vocabulary.
    """

    def __init__(self, config: FeatureConfig | None = None):
        self.config = config

    def _cfg(self) -> FeatureConfig:
        return self.config or FeatureConfig()

    def fit(self, texts: Iterable[str]):
        cfg = self._cfg()
        texts = check_texts(texts)
        df_counts: dict[str, int] = {}
        for text in texts:
            for gram in set(_ngrams(text, cfg.ngram_min, cfg.ngram_max)):
                df_counts[gram] = df_counts.get(gram, 0) + 1
        vocab = sorted(g for g, df in df_counts.items() if df >= cfg.vocab_min_df)
        self.vocabulary_ = {gram: i for i, gram in enumerate(vocab)}
        n_docs = len(texts)
        self.idf_ = np.array(
            [math.log((1 + n_docs) / (1 + df_counts[g])) + 1.0 for g in vocab], dtype=float
        )
        return self

    @property
    def n_features_(self) -> int:
        return len(self.vocabulary_) + (1 if self._cfg().use_length else 0)

    def transform(self, texts: Iterable[str]) -> sparse.csr_matrix:
        if not hasattr(self, "vocabulary_"):
            raise ClassifierError("vectorizer is not fitted")
        cfg = self._cfg()
        texts = check_texts(texts)
        rows, cols, vals = [], [], []
        for row, text in enumerate(texts):
            counts: dict[int, float] = {}
            for gram in _ngrams(text, cfg.ngram_min, cfg.ngram_max):
                idx = self.vocabulary_.get(gram)
                if idx is not None:
                    counts[idx] = counts.get(idx, 0.0) + 1.0
            for idx, tf in sorted(counts.items()):
                rows.append(row)
                cols.append(idx)
                vals.append(tf * self.idf_[idx] if cfg.use_tfidf else tf)
            if cfg.use_length:
                rows.append(row)
                cols.append(len(self.vocabulary_))
                vals.append(float(token_count(text)))
        return sparse.csr_matrix(
            (vals, (rows, cols)), shape=(len(texts), self.n_features_), dtype=float
        )

    def fit_transform(self, texts: Iterable[str]) -> sparse.csr_matrix:
        texts = check_texts(texts)
        return self.fit(texts).transform(texts)


def featurize(
    text: str, cfg: FeatureConfig, vocabulary: dict[str, int] | None = None, idf=None
) -> dict[int, float]:
    """Sparse feature mapping for a single text.

    Without a vocabulary, n-grams index themselves by string (raw counts);
    with one, unseen n-grams are dropped and TF-IDF weighting applies.
    """
    if vocabulary is None:
        counts: dict[str, float] = {}
        for gram in _ngrams(text, cfg.ngram_min, cfg.ngram_max):
            counts[gram] = counts.get(gram, 0.0) + 1.0
        out: dict = dict(sorted(counts.items()))
        if cfg.use_length:
            out["__length__"] = float(token_count(text))
        return out
    vec = NgramTfidfVectorizer(cfg)
    vec.vocabulary_ = vocabulary
    vec.idf_ = (
        np.asarray(idf, dtype=float) if idf is not None else np.ones(len(vocabulary))
    )
    row = vec.transform([text])
    return {int(i): float(v) for i, v in zip(row.indices, row.data)}


def logistic_loss_and_grad(
    weights: np.ndarray,
    bias: float,
    X: sparse.spmatrix | np.ndarray,
    y: np.ndarray,
    l2: float,
) -> tuple[float, np.ndarray, float]:
    """Mean log-loss with L2 weight penalty, and its analytic gradient.

    The bias is not penalized.  ``y`` holds 0/1 class indicators.
    """
    n = X.shape[0]
    z = np.asarray(X @ weights).ravel() + bias
    # log(1 + exp(-|z|)) + max(0, -z*sign) form avoids overflow
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z)) + 0.5 * l2 * float(weights @ weights)
    prob = _sigmoid(z)
    residual = prob - y
    grad_w = np.asarray(X.T @ residual).ravel() / n + l2 * weights
    grad_b = float(np.mean(residual))
    return loss, grad_w, grad_b


def _sigmoid(z: np.ndarray | float):
    return 1.0 / (1.0 + np.exp(-np.clip(z, -500, 500)))


class SelfReportClassifier(BaseEstimator):
    """L2 logistic regression fit by full-batch gradient descent.

    Fully deterministic: the step size is one over a Lipschitz bound on the
    gradient, iteration stops at ``max_iter`` or when the gradient's infinity
    norm drops below ``tol``.
    """

    def __init__(
        self,
        feature_config: FeatureConfig | None = None,
        l2: float = 1e-2,
        max_iter: int = 2000,
        tol: float = 1e-7,
        threshold: float = 0.5,
    ):
        self.feature_config = feature_config
        self.l2 = l2
        self.max_iter = max_iter
        self.tol = tol
        self.threshold = threshold

    def fit(self, texts: Sequence[str], labels: Sequence[str]):
        texts = check_texts(texts)
        labels = check_labels(labels, LABELS)
        if len(texts) != len(labels):
            raise ClassifierError("texts and labels must align")
        if len(set(labels)) < 2:
            raise ClassifierError("training data must contain both classes")
        self.vectorizer_ = NgramTfidfVectorizer(self.feature_config)
        X = self.vectorizer_.fit_transform(texts)
        y = np.array([1.0 if l == LABEL_POSITIVE else 0.0 for l in labels])
        self.weights_, self.bias_, self.n_iter_ = self._descend(X, y)
        return self

    def _descend(self, X, y) -> tuple[np.ndarray, float, int]:
        n = X.shape[0]
        w = np.zeros(X.shape[1])
        b = 0.0
        # Hessian spectral norm is bounded by (||X||_F^2 + n)/(4n) + l2,
        # the +n accounting for the implicit bias column of ones.
        frob_sq = float((X.multiply(X)).sum()) if sparse.issparse(X) else float((X * X).sum())
        lipschitz = (frob_sq + n) / (4.0 * n) + self.l2
        step = 1.0 / lipschitz
        iteration = 0
        for iteration in range(1, self.max_iter + 1):
            _, grad_w, grad_b = logistic_loss_and_grad(w, b, X, y, self.l2)
            if max(np.max(np.abs(grad_w), initial=0.0), abs(grad_b)) < self.tol:
                break
            w -= step * grad_w
            b -= step * grad_b
        return w, b, iteration

    def decision_scores(self, texts: Sequence[str]) -> np.ndarray:
        if not hasattr(self, "weights_"):
            raise ClassifierError("classifier is not fitted")
        X = self.vectorizer_.transform(check_texts(texts))
        return _sigmoid(np.asarray(X @ self.weights_).ravel() + self.bias_)

    def predict(self, texts: Sequence[str]) -> list[str]:
        return [
            LABEL_POSITIVE if s >= self.threshold else LABEL_NEGATIVE
            for s in self.decision_scores(texts)
        ]

    def predict_one(self, text: str) -> tuple[str, float]:
        score = float(self.decision_scores([text])[0])
        return (LABEL_POSITIVE if score >= self.threshold else LABEL_NEGATIVE, score)

    # -- persistence: one JSON document holds the whole model ----------------

    def to_dict(self) -> dict:
        cfg = self.vectorizer_._cfg()
        vocab = sorted(self.vectorizer_.vocabulary_, key=self.vectorizer_.vocabulary_.get)
        return {
            "feature_config": {
                "ngram_min": cfg.ngram_min,
                "ngram_max": cfg.ngram_max,
                "use_tfidf": cfg.use_tfidf,
                "use_length": cfg.use_length,
                "vocab_min_df": cfg.vocab_min_df,
            },
            "vocabulary": vocab,
            "idf": list(map(float, self.vectorizer_.idf_)),
            "weights": list(map(float, self.weights_)),
            "bias": float(self.bias_),
            "l2": self.l2,
            "threshold": self.threshold,
        }

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_dict(cls, doc: dict) -> "SelfReportClassifier":
        cfg = FeatureConfig(**doc["feature_config"])
        model = cls(feature_config=cfg, l2=doc["l2"], threshold=doc.get("threshold", 0.5))
        model.vectorizer_ = NgramTfidfVectorizer(cfg)
        model.vectorizer_.vocabulary_ = {g: i for i, g in enumerate(doc["vocabulary"])}
        model.vectorizer_.idf_ = np.array(doc["idf"], dtype=float)
        model.weights_ = np.array(doc["weights"], dtype=float)
        model.bias_ = float(doc["bias"])
        model.n_iter_ = 0
        return model

    @classmethod
    def load(cls, path: str | Path) -> "SelfReportClassifier":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# Cross-validated grid search


@dataclass
class CVCell:
    l2: float
    ngram_range: tuple[int, int]
    mean_f1: float
    std_f1: float
    fold_f1: list[float] = field(default_factory=list)


@dataclass
class CVReport:
    cells: list[CVCell]
    best_index: int

    @property
    def best(self) -> CVCell:
        return self.cells[self.best_index]


def stratified_folds(labels: Sequence[str], folds: int, seed: int) -> list[int]:
    """Seeded stratified fold assignment; per-class counts differ by <= 1
    across folds."""
    import random

    rng = random.Random(seed)
    assignment = [0] * len(labels)
    for label in sorted(set(labels)):
        indices = [i for i, l in enumerate(labels) if l == label]
        rng.shuffle(indices)
        for pos, idx in enumerate(indices):
            assignment[idx] = pos % folds
    return assignment


def f1_for_positive(y_true: Sequence[str], y_pred: Sequence[str]) -> float:
    tp = sum(t == LABEL_POSITIVE and p == LABEL_POSITIVE for t, p in zip(y_true, y_pred))
    fp = sum(t == LABEL_NEGATIVE and p == LABEL_POSITIVE for t, p in zip(y_true, y_pred))
    fn = sum(t == LABEL_POSITIVE and p == LABEL_NEGATIVE for t, p in zip(y_true, y_pred))
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 0.0


def train(
    data: Sequence[tuple[str, str]],
    spec: GridSearchSpec | None = None,
    base_config: FeatureConfig | None = None,
) -> tuple[SelfReportClassifier, CVReport]:
    """Grid-search hyperparameters by stratified k-fold CV, refit on all data.

    The winning cell maximizes mean F1 on the positive class; exact ties keep
    the earlier cell in grid order.
    """
    spec = spec or GridSearchSpec()
    base_config = base_config or FeatureConfig()
    texts = [t for t, _ in data]
    labels = check_labels([l for _, l in data], LABELS)
    if len(set(labels)) < 2:
        raise ClassifierError("training data must contain both classes")
    if len(data) < spec.folds:
        raise ClassifierError("fewer samples than folds")
    assignment = stratified_folds(labels, spec.folds, spec.seed)
    cells = []
    for l2 in spec.l2_penalties:
        for lo, hi in spec.ngram_ranges:
            cfg = replace(base_config, ngram_min=lo, ngram_max=hi)
            fold_scores = []
            for fold in range(spec.folds):
                train_idx = [i for i, f in enumerate(assignment) if f != fold]
                val_idx = [i for i, f in enumerate(assignment) if f == fold]
                if not val_idx or len({labels[i] for i in train_idx}) < 2:
                    continue
                model = SelfReportClassifier(feature_config=cfg, l2=l2)
                model.fit([texts[i] for i in train_idx], [labels[i] for i in train_idx])
                pred = model.predict([texts[i] for i in val_idx])
                fold_scores.append(f1_for_positive([labels[i] for i in val_idx], pred))
            mean = sum(fold_scores) / len(fold_scores) if fold_scores else 0.0
            std = (
                math.sqrt(sum((s - mean) ** 2 for s in fold_scores) / len(fold_scores))
                if fold_scores
                else 0.0
            )
            cells.append(CVCell(l2=l2, ngram_range=(lo, hi), mean_f1=mean, std_f1=std, fold_f1=fold_scores))
    best_index = max(range(len(cells)), key=lambda i: (cells[i].mean_f1, -i))
    best = cells[best_index]
    final_cfg = replace(base_config, ngram_min=best.ngram_range[0], ngram_max=best.ngram_range[1])
    model = SelfReportClassifier(feature_config=final_cfg, l2=best.l2)
    model.fit(texts, labels)
    return model, CVReport(cells=cells, best_index=best_index)


# ---------------------------------------------------------------------------
# Evaluation and external labels


@dataclass
class Metrics:
    accuracy: float
    precision: float
    recall: float
    f1: float
    confusion: dict[str, int]  # tp/fp/fn/tn with S as the positive class


def evaluate(predictions: Sequence[LabeledPost], gold: Sequence[LabeledPost]) -> Metrics:
    pred_by_id = {p.post_id: p.label for p in predictions}
    gold_by_id = {g.post_id: g.label for g in gold}
    if set(pred_by_id) != set(gold_by_id):
        raise ClassifierError("prediction and gold post_id sets differ")
    tp = fp = fn = tn = 0
    for post_id, truth in gold_by_id.items():
        pred = pred_by_id[post_id]
        if truth == LABEL_POSITIVE and pred == LABEL_POSITIVE:
            tp += 1
        elif truth == LABEL_NEGATIVE and pred == LABEL_POSITIVE:
            fp += 1
        elif truth == LABEL_POSITIVE and pred == LABEL_NEGATIVE:
            fn += 1
        else:
            tn += 1
    total = tp + fp + fn + tn
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return Metrics(
        accuracy=(tp + tn) / total if total else 0.0,
        precision=precision,
        recall=recall,
        f1=f1,
        confusion={"tp": tp, "fp": fp, "fn": fn, "tn": tn},
    )


@dataclass
class LabelImportReport:
    lines: int = 0
    parsed: int = 0
    rejected: int = 0
    overwritten: int = 0
    unknown_post_ids: list[str] = field(default_factory=list)
    errors: list = field(default_factory=list)


def import_external_labels(
    source: str | Path | Iterable[str], known_post_ids: set[str] | None = None
) -> tuple[list[LabeledPost], LabelImportReport]:
    """Parse a line-delimited JSON labels file ``{post_id, label, score?}``.

    Labels outside {S, NR} and malformed lines are tallied; a repeated
    post_id overwrites the earlier label (last write wins, counted).
    """
    if isinstance(source, (str, Path)):
        with open(source, encoding="utf-8") as fh:
            return import_external_labels(list(fh), known_post_ids)
    report = LabelImportReport()
    by_id: dict[str, str] = {}
    for line_number, line in enumerate(source, start=1):
        line = line.strip()
        if not line:
            continue
        report.lines += 1
        try:
            doc = json.loads(line)
            post_id = str(doc["post_id"])
            label = doc["label"]
            if label not in LABELS:
                raise ClassifierError(f"label {label!r} outside {LABELS}")
        except (json.JSONDecodeError, KeyError, TypeError, ClassifierError) as exc:
            report.rejected += 1
            report.errors.append((line_number, str(exc)))
            continue
        if post_id in by_id:
            report.overwritten += 1
        by_id[post_id] = label
        report.parsed += 1
    if known_post_ids is not None:
        report.unknown_post_ids = sorted(set(by_id) - known_post_ids)
    return [LabeledPost(pid, lab) for pid, lab in by_id.items()], report
