"""Reference event log encoding the reference workload and outcome counts.

The log is produced by driving the real runtime (platform, form service,
engine, bot with the shipped lexicon scorer), so it exercises the same code
paths as a live run. Counts encoded:

* 438 control and 442 treatment appeals, 131 completed forms;
* responded 263 / 105, granted 48 / 42;
* toxic appeals per threshold 0.5/0.7/0.9: control 79/58/32,
  treatment 81/57/29, completed 8/5/2;
* follow-up messages in back-and-forth conversations: 12 of 326 toxic
  (control), 10 of 207 (treatment);
* medians over responded conversations: 5 messages, 2 moderator messages,
  210 (control) and 208 (treatment) moderator characters;
* median completion time 290 s;
* PPS values for which the completion regression's score equations hold
  exactly at intercept -1.051 and slope 3.408.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from appealgate.experiment.assignment import Group, draw_group
from appealgate.experiment.eventlog import EventLog
from appealgate.runtime import AppealBot, Runtime
from appealgate.toxicity import LexiconScorer

FIXTURE_SEED = "reference-fixture"
SLOT = 7200.0

# Beta parameters whose quantile grid gives 131 expected completions and
# SE(slope) = 0.939 under the target coefficients (see tests for the solve).
PPS_BETA = (0.14383179587660205, 2.739588513832071)
TARGET_COEF = (-1.051, 3.408)

APPEALS = {
    "none": (
        "Hi, I was banned yesterday and I would like to appeal. I did not mean to break any rule.",
        "I think my ban was a mistake, I was only joking with a friend in that thread.",
        "Please reconsider my ban. I have read the rules again and understand what I did wrong.",
        "Why was I banned? My comment was a bit dumb but it did not attack anyone.",
        "I apologize for my comment, it will not happen again.",
    ),
    "A": ("This ban is stupid, I did nothing wrong.", "Unban me, the other guy was the idiot here."),
    "B": ("What a load of crap, unban me now.", "You banned the wrong person, jerk."),
    "C": ("This is bullshit, you mods banned me for nothing.", "Unban me you fucking clowns."),
}
FOLLOWUPS = (
    "Thanks for the reply.",
    "Okay, I understand. Can I get unbanned?",
    "I read the rule again, sorry about that.",
    "Fair enough, thank you for explaining.",
)
TOXIC_FOLLOWUP = "Whatever, you are all jerks."
REMINDER_PROBE = "Hello? Is anyone reading this?"
BAN_REASONS = ("Rule 1: be civil", "Rule 3: no personal attacks", "Rule 5: no trolling")
MOD_FILLER = (
    "Thanks for reaching out. We looked at the comment that led to the ban and at your recent "
    "history in the community. Please keep the rules in mind when you post, especially the rule "
    "about civility, and let us know if anything is unclear. "
)


@dataclass
class UserPlan:
    user: str
    group: Group
    band: str = "none"
    pps: float = 0.0
    completes: bool = False
    duration: float = 0.0
    responded: bool = False
    followups: int = 0
    mod_messages: int = 0
    mod_chars: int = 0
    toxic_followups: set[int] = field(default_factory=set)
    granted: bool = False
    probe: bool = False


def _users(seed: str, n_control: int, n_treatment: int) -> list[tuple[str, Group]]:
    out, nc, nt, i = [], 0, 0, 0
    while nc < n_control or nt < n_treatment:
        i += 1
        user = f"user{i:05d}"
        g = draw_group(seed, user, 0.5)
        if g is Group.CONTROL and nc < n_control:
            nc += 1
            out.append((user, g))
        elif g is Group.TREATMENT and nt < n_treatment:
            nt += 1
            out.append((user, g))
    return out


def _median_split(rng, n: int, median: int, lo: int, hi: int) -> list[int]:
    """``n`` (odd) integers whose median is exactly ``median``."""
    half = n // 2
    vals = list(rng.integers(lo, median, half)) + [median] + list(rng.integers(median + 1, hi, half))
    return sorted(int(v) for v in vals)


def _shapes(spec: list[tuple[int, int, int]]) -> list[tuple[int, int]]:
    return [(f, m) for count, f, m in spec for _ in range(count)]


def _assign_conversations(rng, plans: list[UserPlan], shapes, median_chars: int, toxic: int) -> None:
    order = rng.permutation(len(plans))
    shapes = [shapes[i] for i in rng.permutation(len(shapes))]
    chars = _median_split(rng, len(plans), median_chars, 70, 2 * median_chars + 100)
    # more moderator messages go with longer totals
    ranked = sorted(range(len(plans)), key=lambda k: (shapes[k][1], rng.random()))
    for rank, k in enumerate(ranked):
        p = plans[order[k]]
        p.responded = True
        p.followups, p.mod_messages = shapes[k]
        p.mod_chars = chars[rank]
    slots = [(p, j) for p in plans for j in range(p.followups)]
    for idx in rng.choice(len(slots), toxic, replace=False):
        p, j = slots[idx]
        p.toxic_followups.add(j)


def _bands(rng, counts: dict[str, int]) -> list[str]:
    bands = [b for b, n in counts.items() for _ in range(n)]
    return [bands[i] for i in rng.permutation(len(bands))]


def _pps_and_completers(rng, n: int, completions: int) -> tuple[np.ndarray, np.ndarray]:
    """Quantile-grid PPS plus completers satisfying the logistic score equations."""
    b0, b1 = TARGET_COEF
    x = stats.beta.ppf((np.arange(n) + 0.5) / n, *PPS_BETA)
    p = 1.0 / (1.0 + np.exp(-(b0 + b1 * x)))
    y = np.zeros(n)
    y[rng.choice(n, completions, replace=False)] = 1
    target = float(x @ p)
    for _ in range(5000):
        gap = float(x @ y) - target
        if abs(gap) < 1e-6:
            break
        ones, zeros = np.flatnonzero(y == 1), np.flatnonzero(y == 0)
        d = x[zeros][None, :] - x[ones][:, None]
        i, j = np.unravel_index(np.argmin(np.abs(gap + d)), d.shape)
        y[ones[i]], y[zeros[j]] = 0, 1
    return x, y.astype(bool)


def plan_reference(seed: int = 7) -> list[UserPlan]:
    rng = np.random.default_rng(seed)
    users = _users(FIXTURE_SEED, 438, 442)
    control = [UserPlan(u, g) for u, g in users if g is Group.CONTROL]
    treatment = [UserPlan(u, g) for u, g in users if g is Group.TREATMENT]

    for p, band in zip(control, _bands(rng, {"C": 32, "B": 26, "A": 21, "none": 359})):
        p.band = band
    cx = stats.beta.ppf((np.arange(len(control)) + 0.5) / len(control), *PPS_BETA)
    for p, v in zip(control, rng.permutation(cx)):
        p.pps = float(v)
    ctl_resp = [control[i] for i in sorted(rng.choice(len(control), 263, replace=False))]
    _assign_conversations(
        rng, ctl_resp,
        _shapes([(30, 1, 2), (100, 2, 2), (32, 3, 3), (50, 0, 1), (51, 0, 2)]),
        210, 12,
    )
    for i in rng.choice(len(ctl_resp), 48, replace=False):
        ctl_resp[i].granted = True

    x, done = _pps_and_completers(rng, len(treatment), 131)
    perm = rng.permutation(len(treatment))
    for p, k in zip(treatment, perm):
        p.pps, p.completes = float(x[k]), bool(done[k])
    finishers = [p for p in treatment if p.completes]
    quitters = [p for p in treatment if not p.completes]
    for p, band in zip(finishers, _bands(rng, {"C": 2, "B": 3, "A": 3, "none": 123})):
        p.band = band
    for p, band in zip(quitters, _bands(rng, {"C": 27, "B": 25, "A": 21, "none": 238})):
        p.band = band
    for p in quitters[::5]:
        p.probe = True
    durations = _median_split(rng, len(finishers), 290, 95, 1400)
    for p, d in zip(finishers, rng.permutation(durations)):
        p.duration = float(d)
    trt_resp = [finishers[i] for i in sorted(rng.choice(len(finishers), 105, replace=False))]
    _assign_conversations(
        rng, trt_resp,
        _shapes([(6, 1, 2), (33, 2, 2), (25, 3, 2), (20, 3, 3), (10, 0, 1), (11, 0, 2)]),
        208, 10,
    )
    for i in rng.choice(len(trt_resp), 42, replace=False):
        trt_resp[i].granted = True

    by_user = {p.user: p for p in control + treatment}
    return [by_user[u] for u, _ in users]


def _mod_bodies(total: int, m: int) -> list[str]:
    sizes = [total // m + (1 if i < total % m else 0) for i in range(m)]
    text = MOD_FILLER * (1 + max(sizes) // len(MOD_FILLER))
    out = []
    for i, size in enumerate(sizes):
        start = (i * 37) % len(MOD_FILLER)
        body = (text + text)[start:start + size]
        out.append(body[:-1] + "." if body[-1] == " " else body)
    return out


def _answers(p: UserPlan, k: int) -> dict:
    return {
        "copy_ban_reason": BAN_REASONS[k % 3],
        "actions_and_circumstances": "I got into an argument and posted an angry reply.",
        "future_steps": "I will step away before replying when I am annoyed.",
        "rule_in_own_words": "Be respectful to other users, even when you disagree.",
        "comment_labeling": [["d", "e"], ["d"], ["a", "d", "e"], ["e"]][k % 4],
    }


def reference_log(seed: int = 7) -> EventLog:
    plans = plan_reference(seed)
    pps = {p.user: p.pps for p in plans}
    rt = Runtime(seed=FIXTURE_SEED, ratio=0.5, pps_fn=lambda user, text: pps[user])
    bot = AppealBot(rt, scorer=LexiconScorer())
    plat, forms, clock = rt.platform, rt.forms, rt.clock
    rng = np.random.default_rng(seed + 1)
    for k, p in enumerate(plans):
        t0 = k * SLOT
        clock.set(t0)
        plat.ban(p.user, BAN_REASONS[k % 3])
        clock.set(t0 + 30)
        pool = APPEALS[p.band]
        plat.user_message(p.user, pool[int(rng.integers(len(pool)))])
        bot.step()
        conv = rt.engine.latest_record(p.user).conversation
        t = t0 + 60
        if p.probe:
            clock.set(t0 + 45)
            plat.user_message(p.user, REMINDER_PROBE, conv)
            bot.step()
        if p.completes:
            t = t0 + 90 + p.duration
            clock.set(t)
            forms.submit(p.user, _answers(p, k), started_at=t - p.duration)
            clock.set(t + 30)
            bot.step()
            t += 30
        if p.group is Group.TREATMENT and not p.completes:
            continue
        bodies = _mod_bodies(p.mod_chars, p.mod_messages) if p.mod_messages else []
        seq: list[tuple[str, int]] = []
        for i in range(max(len(bodies), p.followups)):
            if i < len(bodies):
                seq.append(("mod", i))
            if i < p.followups:
                seq.append(("user", i))
        for kind, i in seq:
            t += 300
            clock.set(t)
            if kind == "mod":
                plat.moderator_message(conv, bodies[i])
            else:
                body = TOXIC_FOLLOWUP if i in p.toxic_followups else FOLLOWUPS[(k + i) % len(FOLLOWUPS)]
                plat.user_message(p.user, body, conv)
                bot.step()
        clock.set(t + 600)
        if p.responded:
            plat.decide(conv, "granted" if p.granted else "denied")
        else:
            plat.decide(conv, "ignored")
        bot.step()
    return rt.log
