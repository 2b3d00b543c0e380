"""Toxicity scoring backends and threshold classification."""

from __future__ import annotations

import math
import os
import string
import threading
import time
from dataclasses import dataclass
from decimal import Decimal
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable, Mapping, Protocol

import httpx

DEFAULT_THRESHOLDS = (0.5, 0.7, 0.9)
SCORER_URL_ENV = "APPEALGATE_SCORER_URL"

_PUNCT = str.maketrans("", "", string.punctuation)


class ScorerError(RuntimeError):
    """The scoring backend failed; ``retryable`` tells callers whether to try later."""

    def __init__(self, message: str, *, retryable: bool = True):
        super().__init__(message)
        self.retryable = retryable


class Scorer(Protocol):
    def score(self, text: str) -> float: ...


def tokenize(text: str) -> list[str]:
    """Lowercase, drop ASCII punctuation, split on whitespace."""
    return text.lower().translate(_PUNCT).split()


def _require_text(text: str) -> None:
    if not isinstance(text, str) or not text.strip():
        raise ValueError("text must be non-empty")


def load_lexicon(path: str | os.PathLike | None = None) -> dict[str, float]:
    """Read ``term<TAB>weight`` lines; ``#`` starts a comment line."""
    if path is None:
        raw = resources.files("appealgate").joinpath("data/lexicon.tsv").read_text(encoding="utf-8")
    else:
        raw = Path(path).read_text(encoding="utf-8")
    table: dict[str, float] = {}
    for lineno, line in enumerate(raw.splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise ValueError(f"lexicon line {lineno}: expected term<TAB>weight")
        term, weight = parts[0].strip().lower(), float(parts[1])
        if not term or weight < 0 or not math.isfinite(weight):
            raise ValueError(f"lexicon line {lineno}: bad entry {line!r}")
        table[term] = weight
    return table


class LexiconScorer:
    """score = 1 - exp(-sum of weights over matched token occurrences)."""

    def __init__(self, table: Mapping[str, float] | None = None):
        self.table = dict(load_lexicon() if table is None else table)
        if any(w < 0 for w in self.table.values()):
            raise ValueError("lexicon weights must be non-negative")

    def total_weight(self, text: str) -> float:
        return sum(self.table.get(tok, 0.0) for tok in tokenize(text))

    def score(self, text: str) -> float:
        _require_text(text)
        return min(1.0, max(0.0, -math.expm1(-self.total_weight(text))))


class RemoteScorer:
    """HTTP scorer: POST ``{"text": ...}`` and read ``{"score": ...}``.

    Transport errors and 5xx/429 responses are retried ``retries`` times with
    exponential backoff; at most ``max_in_flight`` requests run at once.
    """

    def __init__(
        self,
        url: str | None = None,
        *,
        timeout: float = 10.0,
        retries: int = 3,
        backoff: float = 0.5,
        max_in_flight: int = 4,
        client: httpx.Client | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        url = url or os.environ.get(SCORER_URL_ENV)
        if not url:
            raise ValueError(f"no scorer URL given and {SCORER_URL_ENV} is unset")
        self.url = url
        self.retries = retries
        self.backoff = backoff
        self._client = client or httpx.Client(timeout=timeout)
        self._sleep = sleep
        self._slots = threading.BoundedSemaphore(max_in_flight)

    def _once(self, text: str) -> float:
        resp = self._client.post(self.url, json={"text": text})
        if resp.status_code == 429 or resp.status_code >= 500:
            raise ScorerError(f"scorer returned HTTP {resp.status_code}")
        if resp.status_code >= 400:
            raise ScorerError(f"scorer rejected request: HTTP {resp.status_code}", retryable=False)
        try:
            value = float(resp.json()["score"])
        except (ValueError, KeyError, TypeError) as exc:
            raise ScorerError(f"malformed scorer response: {resp.text[:200]!r}", retryable=False) from exc
        if not 0.0 <= value <= 1.0:
            raise ScorerError(f"score out of range: {value}", retryable=False)
        return value

    def score(self, text: str) -> float:
        _require_text(text)
        last: Exception | None = None
        with self._slots:
            for attempt in range(self.retries + 1):
                if attempt:
                    self._sleep(self.backoff * 2 ** (attempt - 1))
                try:
                    return self._once(text)
                except httpx.TransportError as exc:
                    last = exc
                except ScorerError as exc:
                    if not exc.retryable:
                        raise
                    last = exc
        raise ScorerError(f"scorer unavailable after {self.retries + 1} attempts: {last}")

    def close(self) -> None:
        self._client.close()


def classify(score: float, threshold: float = 0.7) -> bool:
    """Toxic iff ``score >= threshold`` (inclusive boundary)."""
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    return score >= threshold


def truncated_percent(ratio: Fraction, places: int = 2) -> Decimal:
    """``100 * ratio`` truncated (not rounded) to ``places`` decimals."""
    scale = 10**places
    return Decimal(math.floor(Fraction(ratio) * 100 * scale)) / scale


@dataclass(frozen=True)
class ScoredAppeal:
    score: float
    group: str  # "control" | "treatment"
    visible: bool
    completed: bool = False


@dataclass(frozen=True)
class SweepRow:
    threshold: float
    control_toxic: int
    control_visible: int
    treatment_toxic: int
    treatment_total: int
    completed_toxic: int
    visible_toxic_after: int
    visible_after: int

    @property
    def rate_control(self) -> Fraction | None:
        return Fraction(self.control_toxic, self.control_visible) if self.control_visible else None

    @property
    def rate_after(self) -> Fraction | None:
        return Fraction(self.visible_toxic_after, self.visible_after) if self.visible_after else None

    @staticmethod
    def _pct(fr: Fraction | None) -> Decimal | None:
        return truncated_percent(fr) if fr is not None else None

    @property
    def rate_control_pct(self) -> Decimal | None:
        return self._pct(self.rate_control)

    @property
    def rate_after_pct(self) -> Decimal | None:
        return self._pct(self.rate_after)


def threshold_sweep(appeals: Iterable[ScoredAppeal], thresholds: Iterable[float] = DEFAULT_THRESHOLDS) -> list[SweepRow]:
    """Toxic counts and exposure rates per threshold.

    Control rates are toxic/visible control appeals; the "after" rate is
    toxic/visible among treatment appeals (completed or bypassed).
    """
    appeals = list(appeals)
    rows = []
    for th in thresholds:
        ctl_tox = ctl_vis = tr_tox = tr_n = comp_tox = vis_tox = vis = 0
        for a in appeals:
            toxic = classify(a.score, th)
            if a.group == "control":
                ctl_vis += a.visible
                ctl_tox += toxic and a.visible
            else:
                tr_n += 1
                tr_tox += toxic
                comp_tox += toxic and a.completed
                vis += a.visible
                vis_tox += toxic and a.visible
        rows.append(SweepRow(th, ctl_tox, ctl_vis, tr_tox, tr_n, comp_tox, vis_tox, vis))
    return rows
