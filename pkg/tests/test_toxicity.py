import hashlib
import itertools
import math
from decimal import Decimal
from fractions import Fraction

import httpx
import pytest
from hypothesis import given
from hypothesis import strategies as st

from appealgate.toxicity import (
    SCORER_URL_ENV,
    LexiconScorer,
    RemoteScorer,
    ScoredAppeal,
    ScorerError,
    classify,
    load_lexicon,
    threshold_sweep,
    tokenize,
    truncated_percent,
)

# sha256 of the shipped lexicon; changing the table must be a deliberate act
LEXICON_SHA256 = "aa25b642dc8a5c217abad8b73850f8baa59646150c8bbd1d3282d1ea2f5ee8c0"


@pytest.fixture(scope="module")
def scorer():
    return LexiconScorer()


def test_lexicon_is_pinned():
    from importlib import resources

    raw = resources.files("appealgate").joinpath("data/lexicon.tsv").read_bytes()
    table = load_lexicon()
    assert len(table) == 32
    assert sorted(set(table.values())) == [0.3, 0.8, 1.4, 2.5]
    assert table["idiot"] == 0.8 and table["fuck"] == 2.5
    assert hashlib.sha256(raw).hexdigest() == LEXICON_SHA256


def test_no_terms_scores_zero(scorer):
    assert scorer.score("I would like to appeal my ban, please.") == 0.0


def test_single_term_score(scorer):
    for term, w in load_lexicon().items():
        assert scorer.score(f"you are {term}") == pytest.approx(1 - math.exp(-w), rel=1e-15)


def test_matching_is_case_and_punctuation_insensitive(scorer):
    assert scorer.score("IDIOT!!!") == scorer.score("idiot")
    assert tokenize("Don't, STOP.") == ["dont", "stop"]


@pytest.mark.parametrize("text", ["", "   ", "\n"])
def test_empty_text_rejected(scorer, text):
    with pytest.raises(ValueError):
        scorer.score(text)


def test_monotone_over_all_two_term_combinations(scorer):
    terms = sorted(load_lexicon())
    single = {t: scorer.score(t) for t in terms}
    for a, b in itertools.combinations_with_replacement(terms, 2):
        both = scorer.score(f"{a} {b}")
        assert both >= max(single[a], single[b])
        assert both == pytest.approx(1 - (1 - single[a]) * (1 - single[b]), abs=1e-12)
        assert both == scorer.score(f"{b} {a}")  # order-free
        assert 0.0 <= both <= 1.0


def test_threshold_crossings_of_the_tiers(scorer):
    # 0.5/0.7/0.9 boundaries fall between tiers, which the fixture relies on
    assert scorer.score("stupid") < 0.7 <= scorer.score("crap")
    assert scorer.score("crap") < 0.9 <= scorer.score("bullshit")
    assert scorer.score("dumb") < 0.5 <= scorer.score("stupid")


def test_custom_lexicon_file(tmp_path):
    p = tmp_path / "lex.tsv"
    p.write_text("# comment\nfoo\t1.0\n\nBAR\t0.5\n")
    assert load_lexicon(p) == {"foo": 1.0, "bar": 0.5}
    p.write_text("foo 1.0\n")
    with pytest.raises(ValueError):
        load_lexicon(p)
    p.write_text("foo\t-1\n")
    with pytest.raises(ValueError):
        load_lexicon(p)


def test_classify_boundaries():
    assert classify(0.8, 0.7)
    assert classify(0.7, 0.7)
    assert not classify(0.69, 0.7)
    for bad in (0.0, 1.0, -0.2, 1.5):
        with pytest.raises(ValueError):
            classify(0.5, bad)


@given(st.lists(st.floats(0, 1), max_size=50), st.floats(0.01, 0.98), st.floats(0.001, 0.5))
def test_classify_monotone_in_threshold(scores, lo, gap):
    hi = min(lo + gap, 0.99)
    assert sum(classify(s, hi) for s in scores) <= sum(classify(s, lo) for s in scores)


def test_truncated_percent_is_exact():
    assert truncated_percent(Fraction(79, 438)) == Decimal("18.03")  # 18.036...
    assert truncated_percent(Fraction(5, 131)) == Decimal("3.81")  # 3.816...
    assert truncated_percent(Fraction(1, 3)) == Decimal("33.33")
    assert truncated_percent(Fraction(2, 3)) == Decimal("66.66")
    assert truncated_percent(Fraction(0)) == Decimal("0")


def _appeals(ctl_toxic, ctl_total, comp_toxic, comp_total, scores=(0.95, 0.75, 0.55)):
    """Appeals whose per-threshold counts follow the given cumulative tallies."""
    out = []

    def block(counts, total, group, completed):
        made = 0
        prev = 0
        for n, s in zip(counts[::-1], scores):
            out.extend(ScoredAppeal(s, group, True, completed) for _ in range(n - prev))
            made += n - prev
            prev = n
        out.extend(ScoredAppeal(0.1, group, True, completed) for _ in range(total - made))

    block(ctl_toxic, ctl_total, "control", False)
    block(comp_toxic, comp_total, "treatment", True)
    return out


def test_sweep_reproduces_reference_rates():
    rows = threshold_sweep(_appeals((79, 58, 32), 438, (8, 5, 2), 131))
    assert [(r.control_toxic, r.completed_toxic) for r in rows] == [(79, 8), (58, 5), (32, 2)]
    assert [str(r.rate_control_pct) for r in rows] == ["18.03", "13.24", "7.3"]
    assert [str(r.rate_after_pct) for r in rows] == ["6.1", "3.81", "1.52"]
    assert rows[1].rate_control == Fraction(58, 438)


def test_sweep_with_no_toxic_appeals():
    rows = threshold_sweep(_appeals((0, 0, 0), 10, (0, 0, 0), 4))
    assert all(r.rate_control == 0 and r.rate_after == 0 for r in rows)


def test_sweep_ignores_invisible_treatment_in_rate_after():
    appeals = [ScoredAppeal(0.99, "treatment", False), ScoredAppeal(0.1, "treatment", True, True)]
    (row,) = threshold_sweep(appeals, [0.7])
    assert row.treatment_toxic == 1 and row.visible_toxic_after == 0 and row.rate_after == 0


# remote scorer


def _remote(handler, **kw):
    sleeps = []
    client = httpx.Client(transport=httpx.MockTransport(handler))
    s = RemoteScorer("http://scorer.test/score", client=client, sleep=sleeps.append, **kw)
    return s, sleeps


def test_remote_wire_contract():
    seen = []

    def handler(request):
        seen.append(request)
        return httpx.Response(200, json={"score": 0.42})

    s, _ = _remote(handler)
    assert s.score("hello") == 0.42
    assert seen[0].method == "POST"
    assert httpx.Request("POST", "/", json={"text": "hello"}).content == seen[0].content


def test_remote_retries_with_exponential_backoff():
    calls = iter([httpx.Response(503), httpx.Response(429), httpx.Response(200, json={"score": 0.9})])
    s, sleeps = _remote(lambda r: next(calls), backoff=0.5)
    assert s.score("x") == 0.9
    assert sleeps == [0.5, 1.0]


def test_remote_gives_up_after_bounded_retries():
    n = []

    def handler(request):
        n.append(1)
        raise httpx.ConnectError("refused", request=request)

    s, sleeps = _remote(handler, retries=3, backoff=0.1)
    with pytest.raises(ScorerError, match="after 4 attempts") as info:
        s.score("x")
    assert info.value.retryable
    assert len(n) == 4
    assert sleeps == pytest.approx([0.1, 0.2, 0.4])


@pytest.mark.parametrize(
    "response",
    [httpx.Response(400), httpx.Response(200, json={"nope": 1}), httpx.Response(200, text="garbage"),
     httpx.Response(200, json={"score": 1.7})],
)
def test_remote_non_retryable_errors(response):
    n = []

    def handler(request):
        n.append(1)
        return response

    s, _ = _remote(handler)
    with pytest.raises(ScorerError) as info:
        s.score("x")
    assert not info.value.retryable
    assert len(n) == 1


def test_remote_url_from_environment(monkeypatch):
    monkeypatch.setenv(SCORER_URL_ENV, "http://env.test/score")
    s = RemoteScorer(client=httpx.Client(transport=httpx.MockTransport(lambda r: httpx.Response(200, json={"score": 0}))))
    assert s.url == "http://env.test/score"
    monkeypatch.delenv(SCORER_URL_ENV)
    with pytest.raises(ValueError):
        RemoteScorer()


def test_remote_in_flight_cap():
    import threading
    import time

    active, peak = [0], [0]
    lock = threading.Lock()

    def handler(request):
        with lock:
            active[0] += 1
            peak[0] = max(peak[0], active[0])
        time.sleep(0.01)
        with lock:
            active[0] -= 1
        return httpx.Response(200, json={"score": 0.1})

    s, _ = _remote(handler, max_in_flight=2)
    threads = [threading.Thread(target=s.score, args=("t",)) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert peak[0] <= 2
