"""Behavioral simulation of appellants and moderators.

A population is drawn up front (all random choices vectorized and seeded),
then :func:`run_simulation` replays that plan against the real runtime in
simulated time: users appeal, treatment users complete the form or walk away,
and moderators respond and decide. Everything the report needs ends up in the
event log.

Generative model per user::

    pps      ~ Beta(alpha, beta)
    toxic    ~ Bernoulli(toxic_prob)                  (independent of pps)
    complete ~ Bernoulli(sigmoid(b0 + b1 * pps + b_tox * toxic))   treatment only
    respond  ~ Bernoulli(r_group)                     visible appeals only
    grant    ~ Bernoulli(min(1, k_group * pps))       responded appeals only
"""

from __future__ import annotations

import heapq
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Callable

import numpy as np
from scipy import integrate, optimize
from scipy.special import beta as beta_fn

from appealgate.audit import InvariantViolation, audit_log
from appealgate.experiment.assignment import Group, hash_unit
from appealgate.experiment.eventlog import EventLog
from appealgate.runtime import AppealBot, Runtime
from appealgate.stats import RegressionTable, logit_inference
from appealgate.toxicity import LexiconScorer, classify, load_lexicon

GOOD_TOKENS = (
    "sorry", "apologize", "understand", "rules", "mistake", "learned", "respect",
    "promise", "careful", "regret", "read", "calm", "fair", "thank",
)
BAD_TOKENS = (
    "unfair", "censorship", "mods", "power", "speech", "wrong", "nothing", "abuse",
    "biased", "joke", "ridiculed", "pointless", "joking", "silenced",
)
FILLER = (
    "We reviewed your appeal together with the comment that led to the ban and your recent "
    "history here. Please reread the community rules before posting again and keep discussions civil. "
)
NEUTRAL_FOLLOWUPS = (
    "Thanks for the reply.",
    "Okay, I understand now.",
    "Can you tell me which comment it was?",
    "I will be more careful, thank you.",
)
PROBE = "Hello? Is anyone reading this?"


def sigmoid(z):
    return 1.0 / (1.0 + np.exp(-np.asarray(z, dtype=float)))


@dataclass(frozen=True)
class BehaviorConfig:
    n_users: int = 880
    ratio: float = 0.5
    seed: int = 0
    pps_alpha: float = 0.5738525192360852
    pps_beta: float = 5.683927696151014
    toxic_prob: float = 0.13
    beta0: float = -1.051
    beta1: float = 3.408
    beta_tox: float = -1.6737622110272465
    response_control: float = 0.6004
    response_treatment: float = 0.8015
    grant_target: float = 0.10
    grant_scale_control: float = 1.821465227386175
    grant_scale_treatment: float = 4.206853179923882
    message_geometric_p: float = 0.18  # messages after the appeal, support {1, 2, ...}
    moderator_chars_median: float = 88.0
    moderator_chars_sigma: float = 0.35
    completion_median_seconds: float = 290.0
    completion_sigma: float = 0.6
    missing_reason_prob: float = 0.0
    probe_prob: float = 0.2  # awaiting-form users who message again before leaving
    followup_toxic_prob_toxic: float = 0.25
    followup_toxic_prob_other: float = 0.02
    arrival_mean_seconds: float = 900.0

    def __post_init__(self):
        probs = (
            "ratio", "toxic_prob", "response_control", "response_treatment", "grant_target",
            "message_geometric_p", "missing_reason_prob", "probe_prob",
            "followup_toxic_prob_toxic", "followup_toxic_prob_other",
        )
        for name in probs:
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.message_geometric_p == 0:
            raise ValueError("message_geometric_p must be positive")
        for name in ("pps_alpha", "pps_beta", "moderator_chars_median", "completion_median_seconds",
                     "arrival_mean_seconds"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.n_users < 0:
            raise ValueError("n_users must be non-negative")
        if self.grant_scale_control < 0 or self.grant_scale_treatment < 0:
            raise ValueError("grant scales must be non-negative")

    def with_(self, **changes) -> "BehaviorConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return asdict(self)


# calibration


def beta_expectation(f: Callable[[float], float], a: float, b: float) -> float:
    """E[f(X)] for X ~ Beta(a, b); endpoint singularities handled by quad's algebraic weight."""
    val, _ = integrate.quad(f, 0.0, 1.0, weight="alg", wvar=(a - 1.0, b - 1.0), limit=200)
    return float(val / beta_fn(a, b))


@dataclass(frozen=True)
class Calibration:
    pps_alpha: float
    pps_beta: float
    beta_tox: float
    grant_scale_control: float
    grant_scale_treatment: float
    completion_non_toxic: float
    completion_toxic: float
    completion_overall: float
    slope_se: float


def _slope_se(a: float, b: float, b0: float, b1: float, n: int) -> float:
    def w(x):
        p = 1.0 / (1.0 + math.exp(-(b0 + b1 * x)))
        return p * (1.0 - p)

    i00 = beta_expectation(w, a, b)
    i01 = beta_expectation(lambda x: x * w(x), a, b)
    i11 = beta_expectation(lambda x: x * x * w(x), a, b)
    det = i00 * i11 - i01 * i01
    return math.sqrt(i00 / det / n)


def calibrate(
    base: BehaviorConfig | None = None,
    *,
    completion_non_toxic: float = 0.327,
    completion_toxic: float = 0.087,
    slope_se: float = 0.939,
    se_sample: int = 442,
) -> Calibration:
    """Solve for the parameters the target aggregates leave open.

    * Beta mean is pinned by the non-toxic completion rate and Beta
      concentration by the slope's standard error at ``se_sample`` users.
    * ``beta_tox`` is pinned by the toxic completion rate.
    * grant scales make each group's expected grant rate equal ``grant_target``.
    """
    cfg = base or BehaviorConfig()
    b0, b1 = cfg.beta0, cfg.beta1

    def comp(x, shift=0.0):
        return 1.0 / (1.0 + math.exp(-(b0 + b1 * x + shift)))

    def ab(mean, conc):
        return mean * conc, (1.0 - mean) * conc

    def mean_for(conc):
        return optimize.brentq(
            lambda m: beta_expectation(comp, *ab(m, conc)) - completion_non_toxic, 1e-4, 0.999, xtol=1e-14
        )

    conc = optimize.brentq(
        lambda c: _slope_se(*ab(mean_for(c), c), b0, b1, se_sample) - slope_se, 0.5, 50.0, xtol=1e-12
    )
    a, b = ab(mean_for(conc), conc)
    btox = optimize.brentq(
        lambda t: beta_expectation(lambda x: comp(x, t), a, b) - completion_toxic, -20.0, 5.0, xtol=1e-14
    )

    def completion(x):
        return (1 - cfg.toxic_prob) * comp(x) + cfg.toxic_prob * comp(x, btox)

    target = cfg.grant_target
    kc = optimize.brentq(
        lambda k: cfg.response_control * beta_expectation(lambda x: min(1.0, k * x), a, b) - target,
        1e-6, 1e4, xtol=1e-14,
    )
    kt = optimize.brentq(
        lambda k: cfg.response_treatment * beta_expectation(lambda x: completion(x) * min(1.0, k * x), a, b)
        - target,
        1e-6, 1e4, xtol=1e-14,
    )
    return Calibration(
        pps_alpha=a,
        pps_beta=b,
        beta_tox=btox,
        grant_scale_control=kc,
        grant_scale_treatment=kt,
        completion_non_toxic=float(beta_expectation(comp, a, b)),
        completion_toxic=float(beta_expectation(lambda x: comp(x, btox), a, b)),
        completion_overall=float(beta_expectation(completion, a, b)),
        slope_se=_slope_se(a, b, b0, b1, se_sample),
    )


# population


@dataclass
class Population:
    """Per-user plan, stored column-wise; index ``i`` is one simulated user."""

    config: BehaviorConfig
    users: list[str]
    treatment: np.ndarray
    pps: np.ndarray
    toxic: np.ndarray
    missing_reason: np.ndarray
    will_complete: np.ndarray
    visible: np.ndarray
    responds: np.ndarray
    grants: np.ndarray
    n_after: np.ndarray  # messages after the appeal in responded conversations
    durations: np.ndarray
    probes: np.ndarray
    arrivals: np.ndarray
    texts: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.users)

    def user(self, i: int) -> "SimulatedUser":
        return SimulatedUser(
            id=self.users[i],
            group=Group.TREATMENT if self.treatment[i] else Group.CONTROL,
            pps=float(self.pps[i]),
            toxic=bool(self.toxic[i]),
            appeal_text=self.texts[i] if self.texts else "",
            will_complete=bool(self.will_complete[i]),
            responds=bool(self.responds[i]),
            grant=bool(self.grants[i]),
            messages_after_appeal=int(self.n_after[i]),
        )


@dataclass(frozen=True)
class SimulatedUser:
    id: str
    group: Group
    pps: float
    toxic: bool
    appeal_text: str
    will_complete: bool
    responds: bool
    grant: bool
    messages_after_appeal: int


def _lexicon_tiers(table: dict[str, float]) -> tuple[list[str], list[str]]:
    mild = sorted(t for t, w in table.items() if 0 < w < 0.5)
    strong = sorted(t for t, w in table.items() if w >= 0.8)
    return mild, strong


def appeal_text(rng: np.random.Generator, pps: float, toxic: bool, mild: list[str], strong: list[str]) -> str:
    """Token soup whose good/bad mix tracks ``pps``; toxic users add 2-4 strong lexicon terms."""
    n = int(rng.integers(8, 17))
    p_good = 0.15 + 0.7 * pps
    words = [
        GOOD_TOKENS[rng.integers(len(GOOD_TOKENS))] if rng.random() < p_good
        else BAD_TOKENS[rng.integers(len(BAD_TOKENS))]
        for _ in range(n)
    ]
    if toxic:
        extra = [strong[rng.integers(len(strong))] for _ in range(int(rng.integers(2, 5)))]
    elif mild and rng.random() < 0.3:
        extra = [mild[rng.integers(len(mild))]]
    else:
        extra = []
    for term in extra:
        words.insert(int(rng.integers(len(words) + 1)), term)
    return "i was banned " + " ".join(words)


def generate_population(config: BehaviorConfig, *, texts: bool = True,
                        lexicon: dict[str, float] | None = None) -> Population:
    cfg = config
    n = cfg.n_users
    rng = np.random.default_rng(cfg.seed)
    users = [f"sim{cfg.seed}-{i:06d}" for i in range(n)]
    treatment = np.array([hash_unit(cfg.seed, u) < cfg.ratio for u in users], dtype=bool)
    pps = rng.beta(cfg.pps_alpha, cfg.pps_beta, n)
    toxic = rng.random(n) < cfg.toxic_prob
    missing = rng.random(n) < cfg.missing_reason_prob
    p_complete = sigmoid(cfg.beta0 + cfg.beta1 * pps + cfg.beta_tox * toxic)
    will_complete = rng.random(n) < p_complete
    visible = ~treatment | missing | will_complete
    r = np.where(treatment, cfg.response_treatment, cfg.response_control)
    responds = visible & (rng.random(n) < r)
    k = np.where(treatment, cfg.grant_scale_treatment, cfg.grant_scale_control)
    grants = responds & (rng.random(n) < np.minimum(1.0, k * pps))
    n_after = rng.geometric(cfg.message_geometric_p, n)
    durations = np.exp(math.log(cfg.completion_median_seconds) + cfg.completion_sigma * rng.standard_normal(n))
    probes = treatment & ~missing & ~will_complete & (rng.random(n) < cfg.probe_prob)
    arrivals = np.cumsum(rng.exponential(cfg.arrival_mean_seconds, n))
    pop = Population(cfg, users, treatment, pps, toxic, missing, will_complete & treatment & ~missing,
                     visible, responds, grants, n_after, durations, probes, arrivals)
    if texts:
        mild, strong = _lexicon_tiers(lexicon if lexicon is not None else load_lexicon())
        trng = np.random.default_rng([cfg.seed, 1])
        pop.texts = [appeal_text(trng, float(pps[i]), bool(toxic[i]), mild, strong) for i in range(n)]
    return pop


# running


def _body_of_length(size: int, offset: int) -> str:
    size = max(size, 1)
    text = FILLER * (2 + size // len(FILLER))
    start = offset % len(FILLER)
    body = text[start:start + size]
    if body[0] == " ":
        body = "W" + body[1:]
    return body[:-1] + "." if body[-1] == " " else body


@dataclass
class SimulationResult:
    log: EventLog
    runtime: Runtime
    population: Population


def run_simulation(
    population: Population,
    *,
    scorer=None,
    templates=None,
    pps_fn: Callable[[str, str], float] | None = None,
    audit: bool = True,
) -> SimulationResult:
    """Drive the runtime through the population's plan in simulated time.

    Records get each user's true PPS unless ``pps_fn`` is given; the true
    value is always logged as a ``true_pps`` score on the appeal message.
    """
    cfg = population.config
    pop = population
    if not pop.texts:
        raise ValueError("population was generated without appeal texts")
    truth = {u: float(p) for u, p in zip(pop.users, pop.pps)}
    rt = Runtime(seed=cfg.seed, ratio=cfg.ratio, templates=templates,
                 pps_fn=pps_fn or (lambda user, text: truth[user]))
    bot = AppealBot(rt, scorer=scorer or LexiconScorer())
    plat, forms, clock = rt.platform, rt.forms, rt.clock
    rng = np.random.default_rng([cfg.seed, 2])
    mild, strong = _lexicon_tiers(load_lexicon())
    conv_of: dict[str, str] = {}
    queue: list = []
    counter = 0

    def at(t: float, fn, *args):
        nonlocal counter
        counter += 1
        heapq.heappush(queue, (t, counter, fn, args))

    def followup_text(i: int) -> str:
        p = cfg.followup_toxic_prob_toxic if pop.toxic[i] else cfg.followup_toxic_prob_other
        if rng.random() < p:
            return f"you are all {strong[rng.integers(len(strong))]} {strong[rng.integers(len(strong))]}"
        return NEUTRAL_FOLLOWUPS[rng.integers(len(NEUTRAL_FOLLOWUPS))]

    def conversation(i: int, start: float):
        """Moderator and user messages alternate, moderator first, then a decision."""
        t = start
        user = pop.users[i]
        if pop.responds[i]:
            for j in range(int(pop.n_after[i])):
                t += float(rng.exponential(1800.0)) + 1.0
                if j % 2 == 0:
                    size = int(max(20, round(cfg.moderator_chars_median
                                             * math.exp(cfg.moderator_chars_sigma * rng.standard_normal()))))
                    at(t, mod_message, user, _body_of_length(size, int(rng.integers(len(FILLER)))))
                else:
                    at(t, user_message, user, followup_text(i))
            at(t + 3600.0, decide, user, "granted" if pop.grants[i] else "denied")
        else:
            at(t + 3 * 86400.0, decide, user, "ignored")

    def ban(i):
        plat.ban(pop.users[i], None if pop.missing_reason[i] else "Rule 2: be civil")

    def appeal(i):
        user = pop.users[i]
        msg = plat.user_message(user, pop.texts[i])
        rt.emit("score", conversation=msg.conversation, user=user,
                payload={"message_id": msg.id, "kind": "true_pps", "value": float(pop.pps[i])})
        bot.step()
        rec = rt.engine.latest_record(user)
        conv_of[user] = rec.conversation
        if bool(pop.treatment[i]) != (rec.group is Group.TREATMENT):
            raise RuntimeError(f"engine assigned {user} to {rec.group.value}, plan disagrees")
        now = clock.now
        if not pop.treatment[i] or pop.missing_reason[i]:
            conversation(i, now)
        elif pop.will_complete[i]:
            at(now + 60.0 + float(pop.durations[i]), submit, i)
        elif pop.probes[i]:
            at(now + float(rng.uniform(3600.0, 86400.0)), user_message, user, PROBE)

    def submit(i):
        user = pop.users[i]
        d = float(pop.durations[i])
        forms.submit(user, _ANSWERS, started_at=clock.now - d)
        bot.step()
        conversation(i, clock.now)

    def user_message(user, body):
        plat.user_message(user, body, conv_of[user])
        bot.step()

    def mod_message(user, body):
        plat.moderator_message(conv_of[user], body)

    def decide(user, decision):
        plat.decide(conv_of[user], decision)
        bot.step()

    for i in range(len(pop)):
        t = float(pop.arrivals[i])
        at(t, ban, i)
        at(t + float(rng.uniform(60.0, 3600.0)), appeal, i)
    while queue:
        t, _, fn, args = heapq.heappop(queue)
        clock.set(max(t, clock.now))
        fn(*args)
    if audit:
        violations = audit_log(rt.log)
        if violations:
            raise InvariantViolation(violations)
    return SimulationResult(rt.log, rt, pop)


_ANSWERS = {
    "copy_ban_reason": "Rule 2: be civil",
    "actions_and_circumstances": "I lost my temper in a heated thread and insulted another user.",
    "future_steps": "I will walk away from arguments instead of replying angrily.",
    "rule_in_own_words": "Treat other people with basic respect.",
    "comment_labeling": ["d", "e"],
}


# parameter recovery


def parameter_recovery(source: EventLog | Population, *, adjust_for_toxicity: bool = True,
                       threshold: float = 0.7) -> RegressionTable:
    """Logistic regression of completion on true PPS over treatment users.

    The generative model includes a toxicity shift, so the default also
    conditions on the toxic flag; leaving it out attenuates the PPS slope.
    """
    if isinstance(source, Population):
        keep = source.treatment & ~source.missing_reason
        pps = source.pps[keep]
        toxic = source.toxic[keep].astype(float)
        done = source.will_complete[keep].astype(float)
    else:
        rt = Runtime.replay(source)
        rows = []
        for rec in rt.engine.records.values():
            if rec.group is not Group.TREATMENT or rec.bypassed:
                continue
            true = rt.scores.get(rec.first_message_id, "true_pps")
            tox = rt.scores.get(rec.first_message_id, "toxicity")
            if true is None or tox is None:
                raise ValueError(f"appeal {rec.id} lacks recorded true PPS or toxicity")
            rows.append((true, float(classify(tox, threshold)), float(rec.completed_at is not None)))
        if not rows:
            raise ValueError("no treatment appeals in log")
        pps, toxic, done = (np.array(c) for c in zip(*rows))
    if adjust_for_toxicity:
        return logit_inference(np.column_stack([pps, toxic]), done, ["PPS", "toxic"], dependent="completed")
    return logit_inference(pps, done, ["PPS"], dependent="completed")
