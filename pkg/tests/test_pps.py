import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from appealgate.logistic import ConvergenceError, sigmoid
from appealgate.pps import (
    CorpusError,
    DegenerateLabelsError,
    FoldingError,
    LogisticModel,
    build_vocabulary,
    class_scores,
    cross_validate,
    featurize,
    ngrams,
    predict_pps,
    read_corpus,
    stratified_folds,
    train,
    train_text,
    transform,
)

from helpers import toy_corpus as _corpus


def test_vocabulary_examples():
    assert set(build_vocabulary(["a b", "a c"], min_df=1)) == {"a", "b", "c", "a_b", "a_c"}
    assert build_vocabulary(["a b", "a c"], min_df=2) == {"a": 0}
    assert ngrams("solo") == ["solo"]


def test_vocabulary_is_lexicographic_and_dense():
    vocab = build_vocabulary(["Zeta, alpha! beta", "alpha beta zeta"], min_df=1)
    assert list(vocab) == sorted(vocab)
    assert sorted(vocab.values()) == list(range(len(vocab)))


def test_transform_counts_and_ignores_unknown_terms():
    vocab, X = featurize(["good good day", "bad day"], min_df=1)
    row = X[0].toarray().ravel()
    assert row[vocab["good"]] == 2
    assert row[vocab["good_good"]] == 1
    assert X.nnz == np.count_nonzero(X.toarray())
    assert transform(["unknown words only"], vocab).nnz == 0


def test_empty_corpus_rejected():
    with pytest.raises(ValueError):
        build_vocabulary([])


def _toy():
    X = np.r_[np.zeros(50), np.ones(50)][:, None]
    y = np.r_[np.zeros(50), np.ones(50)]
    return X, y


def _grid_argmin(f, lo, hi, levels=4, n=81):
    """Nested grid search over a box; each level zooms around the best cell."""
    lo, hi = np.array(lo, float), np.array(hi, float)
    for _ in range(levels):
        axes = [np.linspace(a, b, n) for a, b in zip(lo, hi)]
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, len(lo))
        best = grid[np.argmin([f(g) for g in grid])]
        step = (hi - lo) / (n - 1)
        lo, hi = best - 2 * step, best + 2 * step
    return best


def test_toy_model_matches_grid_search():
    X, y = _toy()
    model = train(X, y, l2=1.0)
    p0, p1 = model.predict_proba(np.array([[0.0], [1.0]]))
    assert p1 > 0.9 > p0

    def J(t):
        eta = t[0] + X[:, 0] * t[1]
        return float(np.sum(np.logaddexp(0, eta) - y * eta) + 0.5 * t[1] ** 2)

    b, w = _grid_argmin(J, (-10, 0), (10, 20))
    assert model.intercept == pytest.approx(b, abs=1e-3)
    assert model.weights[0] == pytest.approx(w, abs=1e-3)


def test_mean_prediction_equals_base_rate():
    # the unpenalized intercept makes the score equation hold at any l2
    X, y = _toy()
    assert train(X, y, l2=1.0).predict_proba(X).mean() == pytest.approx(y.mean(), abs=1e-9)
    rng = np.random.default_rng(5)
    Xn = rng.normal(size=(300, 3))
    yn = (rng.random(300) < sigmoid(Xn @ [1.0, -0.5, 0.2])).astype(float)
    assert train(Xn, yn, l2=0.0).predict_proba(Xn).mean() == pytest.approx(yn.mean(), abs=1e-9)


def test_separable_without_penalty_fails_to_converge():
    X, y = _toy()
    with pytest.raises(ConvergenceError, match="nonconvergence"):
        train(X, y, l2=0.0)


@pytest.mark.parametrize("labels", [np.zeros(10), np.ones(10)])
def test_degenerate_labels(labels):
    with pytest.raises(DegenerateLabelsError, match="degenerate labels"):
        train(np.eye(10), labels)


def test_duplication_invariance():
    rng = np.random.default_rng(2)
    X = sp.csr_matrix(rng.poisson(0.4, size=(80, 12)).astype(float))
    y = (rng.random(80) < 0.4).astype(float)
    once = train(X, y, l2=1.5)
    twice = train(sp.vstack([X, X]), np.r_[y, y], l2=3.0)
    assert twice.intercept == pytest.approx(once.intercept, abs=1e-7)
    np.testing.assert_allclose(twice.weights, once.weights, atol=1e-7)


def test_predict_pps_examples():
    texts, y = _corpus()
    model = train_text(texts, y)
    assert predict_pps(model, "zzz qqq") == pytest.approx(float(sigmoid(model.intercept)))
    assert 0.0 < predict_pps(model, "sorry i understand the rule") < 1.0
    assert predict_pps(model, "sorry i understand") > predict_pps(model, "unfair biased mods")


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 5), min_size=8, max_size=8), st.integers(0, 7))
def test_positive_feature_occurrence_never_lowers_pps(counts, j):
    model = _MODEL.setdefault("m", train_text(*_corpus()))
    rng = np.random.default_rng(j)
    x = np.zeros((1, model.weights.size))
    x[0, rng.choice(model.weights.size, 8, replace=False)] = counts
    positive = np.flatnonzero(model.weights > 0)
    k = positive[j % positive.size]
    bumped = x.copy()
    bumped[0, k] += 1
    assert model.predict_proba(bumped)[0] >= model.predict_proba(x)[0]


_MODEL: dict = {}


def test_separable_corpus_scores_perfect_macro_f():
    texts, y = _corpus()
    vocab, X = featurize(texts)
    assert cross_validate(X, y, k=5, seed=0).macro_f == 1.0


def test_cv_is_deterministic():
    texts, y = _corpus(3, separable=False)
    _, X = featurize(texts)
    a = cross_validate(X, y, seed=11)
    b = cross_validate(X, y, seed=11)
    assert a == b
    assert 0.0 <= a.macro_f <= 1.0
    assert a.macro_f == pytest.approx(np.mean([(c0.f1 + c1.f1) / 2 for c0, c1 in a.folds]))


def test_stratified_folds_balance_classes():
    y = np.r_[np.zeros(37), np.ones(13)]
    fold = stratified_folds(y, 5, np.random.default_rng(0))
    for f in range(5):
        assert abs(np.sum(y[fold == f]) - 13 / 5) < 1
        assert abs(np.sum(fold == f) - 10) <= 1


def test_refolding_gives_up():
    y = np.r_[np.ones(1), np.zeros(9)]
    with pytest.raises(FoldingError):
        cross_validate(np.eye(10), y, k=5)
    with pytest.raises(ValueError):
        cross_validate(np.eye(3), np.array([0.0, 1.0, 0.0]), k=5)


def test_class_scores():
    t = np.array([1, 1, 0, 0])
    p = np.array([1, 0, 0, 0])
    c1 = class_scores(t, p, 1)
    assert (c1.precision, c1.recall) == (1.0, 0.5)
    assert c1.f1 == pytest.approx(2 / 3)
    assert class_scores(np.zeros(3, int), np.zeros(3, int), 1).f1 == 0.0


def test_serialization_round_trip(tmp_path):
    texts, y = _corpus(1, separable=False)
    model = train_text(texts, y, l2=0.7)
    path = tmp_path / "m.json"
    model.save(path)
    back = LogisticModel.load(path)
    assert back.intercept == model.intercept
    assert np.array_equal(back.weights, model.weights)
    assert back.vocabulary == model.vocabulary
    assert (back.min_df, back.l2) == (model.min_df, model.l2)
    for t in texts[:10]:
        assert predict_pps(back, t) == predict_pps(model, t)


def test_load_rejects_foreign_files():
    with pytest.raises(ValueError):
        LogisticModel.from_dict({"format": "other", "version": 1})


def test_read_corpus(tmp_path):
    p = tmp_path / "c.csv"
    p.write_text('text,label\n"hello, world",1\nbye,0\n')
    texts, y = read_corpus(p)
    assert texts == ["hello, world", "bye"]
    assert y.tolist() == [1.0, 0.0]


@pytest.mark.parametrize(
    "content,match",
    [("text,y\nhi,1\n", "label"), ("label\n1\n", "text"), ("text,label\nhi,2\n", "0 or 1"),
     ("text,label\nhi,yes\n", "0 or 1"), ("text,label\n", "no rows")],
)
def test_read_corpus_errors(tmp_path, content, match):
    p = tmp_path / "c.csv"
    p.write_text(content)
    with pytest.raises(CorpusError, match=match):
        read_corpus(p)


def test_base_rate_intercept():
    y = np.r_[np.ones(129), np.zeros(871)]
    model = train(sp.csr_matrix((1000, 0)), y, l2=1.0)
    assert model.intercept == pytest.approx(np.log(0.129 / 0.871), abs=1e-9)
    assert model.intercept == pytest.approx(-1.910, abs=1e-3)
