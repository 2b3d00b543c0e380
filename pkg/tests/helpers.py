"""Small builders shared by the engine-level tests."""

from __future__ import annotations

import numpy as np

from appealgate.experiment.assignment import Group, draw_group
from appealgate.runtime import AppealBot, Runtime

SEED = "tests"

ANSWERS = {
    "copy_ban_reason": "Rule 1: be civil",
    "actions_and_circumstances": "I called someone a name during an argument.",
    "future_steps": "I will log off when I get angry.",
    "rule_in_own_words": "Do not insult people.",
    "comment_labeling": ["d", "e"],
}


def user_in(group: Group, prefix: str = "u", seed=SEED, ratio: float = 0.5, start: int = 0) -> str:
    """First user id ``prefix<n>`` that hashes into ``group``."""
    i = start
    while True:
        name = f"{prefix}{i}"
        if draw_group(seed, name, ratio) is group:
            return name
        i += 1


def new_bot(**kw) -> tuple[Runtime, AppealBot]:
    kw.setdefault("seed", SEED)
    rt = Runtime(**kw)
    return rt, AppealBot(rt)


def toy_corpus(seed=0, n=120, separable=True):
    """Balanced two-class appeal texts; class words never overlap when ``separable``."""
    rng = np.random.default_rng(seed)
    good = ["sorry", "apologize", "understand", "rule", "mistake", "again"]
    bad = ["unfair", "biased", "corrupt", "censorship", "power", "tripping"]
    filler = ["i", "was", "banned", "the", "mods", "my", "comment", "please", "ban", "reddit"]
    texts, labels = [], []
    for i in range(n):
        y = i % 2
        pool = (good if y else bad) if separable else good + bad
        words = list(rng.choice(filler, 6)) + list(rng.choice(pool, 3))
        rng.shuffle(words)
        texts.append(" ".join(words))
        labels.append(y)
    return texts, np.array(labels, float)
