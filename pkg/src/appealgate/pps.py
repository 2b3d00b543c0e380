"""Predicted probability of success from the initial appeal text.

Unigram and bigram counts feed an L2-penalized logistic regression. The
decision threshold for evaluation is 0.5, and cross-validation uses seeded
stratified folds with macro-averaged F1.
"""

from __future__ import annotations

import csv
import json
import os
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from appealgate.logistic import fit_logistic, sigmoid
from appealgate.toxicity import tokenize

MODEL_FORMAT = "appealgate.pps"
MODEL_VERSION = 1


class DegenerateLabelsError(ValueError):
    pass


class FoldingError(RuntimeError):
    pass


class CorpusError(ValueError):
    pass


def ngrams(text: str) -> list[str]:
    toks = tokenize(text)
    return toks + [f"{a}_{b}" for a, b in zip(toks, toks[1:])]


def build_vocabulary(corpus: Sequence[str], min_df: int = 2) -> dict[str, int]:
    if not corpus:
        raise ValueError("corpus must be non-empty")
    df: Counter[str] = Counter()
    for text in corpus:
        df.update(set(ngrams(text)))
    terms = sorted(t for t, n in df.items() if n >= min_df)
    return {t: i for i, t in enumerate(terms)}


def transform(corpus: Sequence[str], vocab: dict[str, int]) -> sp.csr_matrix:
    rows, cols, vals = [], [], []
    for r, text in enumerate(corpus):
        counts = Counter(g for g in ngrams(text) if g in vocab)
        for g, n in counts.items():
            rows.append(r)
            cols.append(vocab[g])
            vals.append(n)
    return sp.csr_matrix((vals, (rows, cols)), shape=(len(corpus), len(vocab)), dtype=float)


def featurize(corpus: Sequence[str], min_df: int = 2) -> tuple[dict[str, int], sp.csr_matrix]:
    vocab = build_vocabulary(corpus, min_df)
    return vocab, transform(corpus, vocab)


@dataclass
class LogisticModel:
    intercept: float
    weights: np.ndarray
    vocabulary: dict[str, int] = field(default_factory=dict)
    min_df: int = 2
    l2: float = 1.0

    def decision_function(self, X) -> np.ndarray:
        return np.asarray(X @ self.weights).ravel() + self.intercept

    def predict_proba(self, X) -> np.ndarray:
        return sigmoid(self.decision_function(X))

    def to_dict(self) -> dict:
        terms = sorted(self.vocabulary, key=self.vocabulary.__getitem__)
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "featurizer": {"min_df": self.min_df, "ngram_range": [1, 2], "tokenizer": "lower-strip-punct-split"},
            "l2": self.l2,
            "intercept": self.intercept,
            "vocabulary": terms,
            # repr round-trips IEEE doubles exactly
            "weights": [repr(float(w)) for w in self.weights],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LogisticModel":
        if d.get("format") != MODEL_FORMAT or d.get("version") != MODEL_VERSION:
            raise ValueError("unsupported model file")
        weights = np.array([float(w) for w in d["weights"]])
        vocab = {t: i for i, t in enumerate(d["vocabulary"])}
        if len(vocab) != weights.size:
            raise ValueError("vocabulary and weights differ in length")
        return cls(float(d["intercept"]), weights, vocab, int(d["featurizer"]["min_df"]), float(d["l2"]))

    def save(self, path: str | os.PathLike) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | os.PathLike) -> "LogisticModel":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _check_labels(y) -> np.ndarray:
    y = np.asarray(y, dtype=float).ravel()
    if y.size == 0 or not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0/1")
    if y.min() == y.max():
        raise DegenerateLabelsError("degenerate labels: only one class present")
    return y


def train(X, y, l2: float = 1.0, *, vocabulary: dict[str, int] | None = None, min_df: int = 2) -> LogisticModel:
    y = _check_labels(y)
    fit = fit_logistic(X, y, l2=l2, tol=1e-8)
    return LogisticModel(fit.intercept, fit.coef, dict(vocabulary or {}), min_df, l2)


def train_text(corpus: Sequence[str], y, l2: float = 1.0, min_df: int = 2) -> LogisticModel:
    vocab, X = featurize(corpus, min_df)
    return train(X, y, l2, vocabulary=vocab, min_df=min_df)


def predict_pps(model: LogisticModel, text: str) -> float:
    x = transform([text], model.vocabulary)
    return float(model.predict_proba(x)[0])


@dataclass(frozen=True)
class ClassScores:
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class CvReport:
    k: int
    folds: list[tuple[ClassScores, ClassScores]]  # (class 0, class 1) per fold
    macro_f: float
    seed: int
    attempts: int = 1


def class_scores(y_true: np.ndarray, y_pred: np.ndarray, label: int) -> ClassScores:
    tp = int(np.sum((y_pred == label) & (y_true == label)))
    fp = int(np.sum((y_pred == label) & (y_true != label)))
    fn = int(np.sum((y_pred != label) & (y_true == label)))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return ClassScores(precision, recall, f1)


def stratified_folds(y: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Fold id per row; each class is shuffled and dealt round-robin."""
    fold = np.empty(y.size, dtype=int)
    offset = 0
    for label in (0, 1):
        idx = np.flatnonzero(y == label)
        rng.shuffle(idx)
        fold[idx] = (np.arange(idx.size) + offset) % k
        offset += idx.size
    return fold


def cross_validate(X, y, k: int = 5, *, l2: float = 1.0, seed: int = 0, threshold: float = 0.5,
                   max_attempts: int = 10) -> CvReport:
    y = _check_labels(y)
    n = y.size
    if n < k or k < 2:
        raise ValueError(f"need 2 <= k <= n, got k={k}, n={n}")
    X = sp.csr_matrix(X) if sp.issparse(X) else np.asarray(X, dtype=float)
    rng = np.random.default_rng(seed)
    for attempt in range(1, max_attempts + 1):  # noqa: B007 - reported in CvReport
        fold = stratified_folds(y, k, rng)
        if all(np.unique(y[fold != f]).size == 2 for f in range(k)):
            break
    else:
        raise FoldingError(f"could not build {k} folds with both classes in training after {max_attempts} attempts")
    per_fold = []
    for f in range(k):
        train_idx, test_idx = fold != f, fold == f
        model = train(X[train_idx], y[train_idx], l2)
        pred = (model.predict_proba(X[test_idx]) >= threshold).astype(int)
        truth = y[test_idx].astype(int)
        per_fold.append((class_scores(truth, pred, 0), class_scores(truth, pred, 1)))
    macro = float(np.mean([(a.f1 + b.f1) / 2 for a, b in per_fold]))
    return CvReport(k, per_fold, macro, seed, attempt)


def read_corpus(path: str | os.PathLike) -> tuple[list[str], np.ndarray]:
    """CSV with a header containing ``text`` and ``label`` (0/1) columns."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames or []
        missing = {"text", "label"} - set(fields)
        if missing:
            raise CorpusError(f"corpus is missing column(s): {', '.join(sorted(missing))}")
        texts, labels = [], []
        for lineno, row in enumerate(reader, start=2):
            try:
                label = int(row["label"])
            except (TypeError, ValueError):
                raise CorpusError(f"line {lineno}: label must be 0 or 1") from None
            if label not in (0, 1):
                raise CorpusError(f"line {lineno}: label must be 0 or 1")
            texts.append(row["text"] or "")
            labels.append(label)
    if not texts:
        raise CorpusError("corpus has no rows")
    return texts, np.array(labels, dtype=float)
