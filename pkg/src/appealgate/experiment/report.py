"""Hypothesis report computed from an event log.

Definitions used throughout:

* an appeal (episode) starts with the user's first message after a ban and
  owns every message in its conversations until the user's next episode;
* visible: control appeals always; treatment appeals once completed, or from
  the start when the ban reason was missing (bypassed);
* responded: at least one moderator message (not a private note) sent while
  the appeal was visible;
* conversation measures (messages, moderator messages, moderator characters)
  count user and moderator messages, never bot messages or notes, and are
  summarized over responded appeals only.
"""

from __future__ import annotations

import csv
import os
import statistics
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from appealgate.core import AppealRecord, Decision
from appealgate.experiment.assignment import Group
from appealgate.experiment.eventlog import EventLog
from appealgate.platform import Message, Role
from appealgate.stats import (
    ContingencyTable2x2,
    DegenerateDataError,
    RegressionTable,
    TestResult,
    chi2_yates,
    logit_inference,
    proportion_ci,
    t_test_independent,
)
from appealgate.toxicity import (
    DEFAULT_THRESHOLDS,
    ScoredAppeal,
    SweepRow,
    classify,
    threshold_sweep,
    truncated_percent,
)

# Externally reported reference values that the tabulated counts do not reproduce.
REFERENCE_VALUES = {"H1a": 437.55, "H2b": 1.57}


class ReportError(ValueError):
    pass


class MissingScoresError(ReportError):
    def __init__(self, kind: str, offenders: Sequence[str]):
        shown = ", ".join(offenders[:20]) + (" ..." if len(offenders) > 20 else "")
        super().__init__(f"missing {kind} for {len(offenders)} appeal(s): {shown}")
        self.offenders = list(offenders)


@dataclass
class AppealFacts:
    record: AppealRecord
    toxicity: float
    pps: float | None
    visible: bool
    responded: bool
    messages: int
    moderator_messages: int
    moderator_chars: int
    followups: list[float]  # toxicity scores of user follow-ups while visible
    duration: float | None = None

    @property
    def group(self) -> Group:
        return self.record.group

    @property
    def granted(self) -> bool:
        return self.record.decision is Decision.GRANTED

    @property
    def completed(self) -> bool:
        return self.record.completed_at is not None

    @property
    def back_and_forth(self) -> bool:
        return bool(self.followups) and self.moderator_messages > 0


@dataclass
class GroupSummary:
    total: int
    visible: int
    responded: int
    granted: int
    completed: int
    bypassed: int
    median_messages: float | None
    median_moderator_messages: float | None
    median_moderator_chars: float | None

    @property
    def response_rate(self) -> Fraction | None:
        return Fraction(self.responded, self.visible) if self.visible else None


@dataclass
class HypothesisTest:
    name: str
    measure: str
    result: TestResult
    table: ContingencyTable2x2 | None = None
    reference: float | None = None
    note: str = ""
    kind: str = "chi-squared (Yates)"


@dataclass
class CompletionByToxicity:
    threshold: float
    non_toxic: tuple[int, int]  # (completed, total)
    toxic: tuple[int, int]

    @staticmethod
    def _rate(pair):
        done, n = pair
        if n == 0:
            return None
        return Fraction(done, n), proportion_ci(done, n)

    @property
    def non_toxic_rate(self):
        return self._rate(self.non_toxic)

    @property
    def toxic_rate(self):
        return self._rate(self.toxic)


@dataclass
class ExperimentReport:
    threshold: float
    control: GroupSummary
    treatment: GroupSummary
    tests: dict[str, HypothesisTest]
    regression: RegressionTable | None
    sweep: list[SweepRow]
    completion: CompletionByToxicity
    median_completion_seconds: float | None
    manual_labels: tuple[int, int] = (0, 0)  # (labeled toxic, labeled)
    notes: list[str] = field(default_factory=list)


def _median(values: list[float]) -> float | None:
    return float(statistics.median(values)) if values else None


def _message_seq(message_id: str) -> int:
    return int(message_id[1:])


def _collect(
    log: EventLog,
    threshold: float,
    pps_fn: Callable[[str], float] | None,
    scorer,
    require_pps: bool = True,
) -> tuple[list[AppealFacts], "object"]:
    from appealgate.runtime import Runtime

    rt = Runtime.replay(log)
    records = sorted(rt.engine.records.values(), key=lambda r: _message_seq(r.first_message_id))
    if not records:
        raise ReportError("log contains no appeals")
    next_start: dict[str, float] = {}
    window_end: dict[str, float] = {}
    for rec in reversed(records):
        window_end[rec.id] = next_start.get(rec.user, float("inf"))
        next_start[rec.user] = _message_seq(rec.first_message_id)

    def toxicity_of(msg: Message) -> float | None:
        value = rt.scores.get(msg.id, "toxicity")
        if value is None and scorer is not None:
            value = float(scorer.score(msg.body))
        return value

    facts, missing_tox, missing_pps = [], [], []
    for rec in records:
        start, end = _message_seq(rec.first_message_id), window_end[rec.id]
        msgs: list[Message] = []
        for cid in rec.conversations:
            msgs += [
                m for m in rt.platform.conversation(cid).messages
                if start <= m.seq < end and not m.private_note and m.sender is not Role.BOT
            ]
        msgs.sort(key=lambda m: m.seq)
        first = next(m for m in msgs if m.id == rec.first_message_id)
        visible_at = rec.visible_at
        visible = visible_at is not None
        mod = [m for m in msgs if m.sender is Role.MODERATOR]
        responded = visible and any(m.sent_at >= visible_at for m in mod)
        tox = toxicity_of(first)
        if tox is None:
            missing_tox.append(rec.id)
            continue
        followups = []
        if visible:
            for m in msgs:
                if m.sender is Role.USER and m.id != rec.first_message_id and m.sent_at >= visible_at:
                    s = toxicity_of(m)
                    if s is None:
                        missing_tox.append(f"{rec.id}/{m.id}")
                        continue
                    followups.append(s)
        pps = rec.pps
        if pps is None and pps_fn is not None:
            pps = float(pps_fn(first.body))
        if pps is None and rec.group is Group.TREATMENT and not rec.bypassed:
            missing_pps.append(rec.id)
        sub = rt.forms.submission_of(rec.user)
        duration = sub.duration if (sub is not None and rec.completed_at == sub.submitted_at) else None
        facts.append(
            AppealFacts(
                record=rec, toxicity=tox, pps=pps, visible=visible, responded=responded,
                messages=len(msgs), moderator_messages=len(mod),
                moderator_chars=sum(len(m.body) for m in mod), followups=followups, duration=duration,
            )
        )
    if missing_tox:
        raise MissingScoresError("toxicity scores", missing_tox)
    if missing_pps and require_pps:
        raise MissingScoresError("PPS", missing_pps)
    return facts, rt


def _summary(facts: list[AppealFacts]) -> GroupSummary:
    resp = [f for f in facts if f.responded]
    return GroupSummary(
        total=len(facts),
        visible=sum(f.visible for f in facts),
        responded=len(resp),
        granted=sum(f.granted for f in facts),
        completed=sum(f.completed for f in facts),
        bypassed=sum(f.record.bypassed for f in facts),
        median_messages=_median([f.messages for f in resp]),
        median_moderator_messages=_median([f.moderator_messages for f in resp]),
        median_moderator_chars=_median([f.moderator_chars for f in resp]),
    )


def _chi(name: str, measure: str, rows) -> HypothesisTest:
    if sum(map(sum, rows)) == 0:
        return HypothesisTest(name, measure, TestResult(float("nan"), 1, float("nan"), 0),
                              note="no observations")
    table = ContingencyTable2x2.from_rows(rows)
    try:
        result = chi2_yates(table)
    except DegenerateDataError:
        result = TestResult(float("nan"), 1, float("nan"), table.n)
    ref = REFERENCE_VALUES.get(name)
    note = ""
    if ref is not None and not (abs(result.statistic - ref) <= 0.05):
        note = (
            f"Reference value {ref} is not reproducible from these counts; "
            f"the statistic shown is computed from the counts."
        )
    return HypothesisTest(name, measure, result, table, ref, note)


def completion_rates_by_toxicity(
    facts: EventLog | Iterable[AppealFacts], threshold: float = 0.7, *, scorer=None
) -> CompletionByToxicity:
    """Treatment completion rate (with Wilson CI) among non-toxic and toxic appeals."""
    if isinstance(facts, EventLog):
        facts, _ = _collect(facts, threshold, None, scorer, require_pps=False)
    nt_done = nt_n = t_done = t_n = 0
    for f in facts:
        if f.group is not Group.TREATMENT or f.record.bypassed:
            continue
        if classify(f.toxicity, threshold):
            t_n += 1
            t_done += f.completed
        else:
            nt_n += 1
            nt_done += f.completed
    return CompletionByToxicity(threshold, (nt_done, nt_n), (t_done, t_n))


def build_report(
    log: EventLog,
    threshold: float = 0.7,
    pps_model=None,
    *,
    scorer=None,
    sweep_thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
) -> ExperimentReport:
    """Every table of the report, computed from ``log`` alone.

    ``pps_model`` (a trained :class:`appealgate.pps.LogisticModel`) fills in
    PPS for appeals whose record carries none; ``scorer`` likewise fills in
    missing toxicity scores.
    """
    if len(log) == 0:
        raise ReportError("empty log")
    pps_fn = None
    if pps_model is not None:
        from appealgate.pps import predict_pps

        pps_fn = lambda text: predict_pps(pps_model, text)  # noqa: E731
    facts, rt = _collect(log, threshold, pps_fn, scorer)
    ctl = [f for f in facts if f.group is Group.CONTROL]
    trt = [f for f in facts if f.group is Group.TREATMENT]
    c, t = _summary(ctl), _summary(trt)

    tests: dict[str, HypothesisTest] = {}
    tests["H1a"] = _chi("H1a", "appeals visible to moderators",
                        [[c.visible, c.total - c.visible], [t.visible, t.total - t.visible]])
    tests["H1b"] = _chi("H1b", "appeals moderators responded to",
                        [[c.responded, c.total - c.responded], [t.responded, t.total - t.responded]])
    ctox = sum(classify(f.toxicity, threshold) for f in ctl if f.visible)
    ttox = sum(classify(f.toxicity, threshold) for f in trt if f.visible)
    tests["H2a"] = _chi("H2a", "toxic appeals among visible appeals",
                        [[ctox, c.visible - ctox], [ttox, t.visible - ttox]])
    fu = []
    for group in (ctl, trt):
        scores = [s for f in group if f.back_and_forth for s in f.followups]
        toxic = sum(classify(s, threshold) for s in scores)
        fu.append([toxic, len(scores) - toxic])
    tests["H2b"] = _chi("H2b", "toxic follow-up messages in back-and-forth conversations", fu)
    tests["H3a"] = _chi("H3a", "appeals granted",
                        [[c.granted, c.total - c.granted], [t.granted, t.total - t.granted]])
    tests["H3b"] = _chi("H3b", "response rate among visible appeals",
                        [[c.responded, c.visible - c.responded], [t.responded, t.visible - t.responded]])
    for key, attr, label in (
        ("H3b-messages", "messages", "messages per responded conversation"),
        ("H3b-mod-messages", "moderator_messages", "moderator messages per responded conversation"),
        ("H3b-mod-chars", "moderator_chars", "moderator characters per responded conversation"),
    ):
        a = [getattr(f, attr) for f in ctl if f.responded]
        b = [getattr(f, attr) for f in trt if f.responded]
        try:
            result = t_test_independent(a, b)
        except (ValueError, DegenerateDataError):
            result = TestResult(float("nan"), max(len(a) + len(b) - 2, 0), float("nan"), len(a) + len(b))
        tests[key] = HypothesisTest(key, label, result, kind="t-test (pooled)")

    eligible = [f for f in trt if not f.record.bypassed]
    regression = None
    notes = []
    if eligible:
        X = np.array([f.pps for f in eligible])
        y = np.array([float(f.completed) for f in eligible])
        try:
            regression = logit_inference(X, y, ["PPS"], dependent="completed")
        except (DegenerateDataError, ArithmeticError, RuntimeError) as exc:
            notes.append(f"Completion regression not estimable: {exc}")
    if t.bypassed:
        notes.append(
            f"{t.bypassed} treatment appeal(s) had no ban reason and bypassed the form; they count as "
            f"visible and stay in the treatment totals, but are excluded from completion rates and the regression."
        )

    ths = list(sweep_thresholds)
    if threshold not in ths:
        ths.append(threshold)
    sweep = threshold_sweep(
        (ScoredAppeal(f.toxicity, f.group.value, f.visible, f.completed) for f in facts), sorted(ths)
    )
    durations = [f.duration for f in trt if f.duration is not None]
    labels = rt.forms.state_.manual_labels
    return ExperimentReport(
        threshold=threshold,
        control=c,
        treatment=t,
        tests=tests,
        regression=regression,
        sweep=sweep,
        completion=completion_rates_by_toxicity(facts, threshold),
        median_completion_seconds=_median(durations),
        manual_labels=(sum(labels.values()), len(labels)),
        notes=notes,
    )


# rendering


def pct(fr: Fraction | None) -> str:
    return "n/a" if fr is None else f"{truncated_percent(fr)}%"


def _num(x: float | None, digits: int = 3) -> str:
    if x is None or x != x:
        return "n/a"
    if float(x).is_integer():
        return str(int(x))
    return f"{x:.{digits}f}"


def _p(p: float) -> str:
    if p != p:
        return "n/a"
    return f"{p:.3g}"


def _duration(seconds: float | None) -> str:
    if seconds is None:
        return "n/a"
    m, s = divmod(int(round(seconds)), 60)
    return f"{m} min {s} s"


def table_rows(report: ExperimentReport) -> dict[str, list[list[str]]]:
    """Every report table as header + rows of strings (shared by markdown and CSV)."""
    c, t = report.control, report.treatment
    workload = [
        ["group", "appeals", "visible", "responded", "completed", "bypassed"],
        ["control", c.total, c.visible, c.responded, c.completed, c.bypassed],
        ["treatment", t.total, t.visible, t.responded, t.completed, t.bypassed],
    ]
    outcomes = [
        ["group", "response_rate", "median_messages", "median_moderator_messages",
         "median_moderator_chars", "granted"],
        ["control", pct(c.response_rate), _num(c.median_messages), _num(c.median_moderator_messages),
         _num(c.median_moderator_chars), c.granted],
        ["treatment", pct(t.response_rate), _num(t.median_messages), _num(t.median_moderator_messages),
         _num(t.median_moderator_chars), t.granted],
    ]
    hyp = [["hypothesis", "measure", "test", "counts", "statistic", "df", "n", "p", "note"]]
    for h in report.tests.values():
        counts = str(h.table.rows()) if h.table is not None else ""
        hyp.append([h.name, h.measure, h.kind, counts, _num(h.result.statistic), h.result.df,
                    h.result.n, _p(h.result.p), h.note])
    reg = [["term", "estimate", "se", "z", "p", "stars"]]
    if report.regression is not None:
        for co in report.regression.coefficients:
            reg.append([co.name, f"{co.estimate:.3f}", f"{co.se:.3f}", f"{co.z:.3f}", _p(co.p), co.stars])
        reg.append(["AIC", f"{report.regression.aic:.3f}", "", "", "", ""])
        reg.append(["n", report.regression.n, "", "", "", ""])
    sweep = [["threshold", "control_toxic", "treatment_toxic", "completed_toxic",
              "rate_control", "rate_after_process"]]
    for r in report.sweep:
        sweep.append([r.threshold, r.control_toxic, r.treatment_toxic, r.completed_toxic,
                      pct(r.rate_control), pct(r.rate_after)])
    comp = [["class", "completed", "total", "rate", "ci_low", "ci_high"]]
    for name, pair, rate in (
        ("non-toxic", report.completion.non_toxic, report.completion.non_toxic_rate),
        ("toxic", report.completion.toxic, report.completion.toxic_rate),
    ):
        if rate is None:
            comp.append([name, pair[0], pair[1], "n/a", "", ""])
        else:
            fr, (lo, hi) = rate
            comp.append([name, pair[0], pair[1], pct(fr), f"{lo:.4f}", f"{hi:.4f}"])
    return {
        "workload": workload,
        "outcomes": outcomes,
        "hypotheses": hyp,
        "regression": reg,
        "sweep": sweep,
        "completion": comp,
    }


def _md_table(rows: list[list]) -> list[str]:
    head, *body = rows
    out = ["| " + " | ".join(map(str, head)) + " |", "|" + "---|" * len(head)]
    out += ["| " + " | ".join(map(str, r)) + " |" for r in body]
    return out


def to_markdown(report: ExperimentReport) -> str:
    tables = table_rows(report)
    lines = ["# Appeal experiment report", "", f"Toxicity threshold: {report.threshold}", ""]
    sections = (
        ("Workload", "workload"),
        ("Outcomes (medians over responded conversations)", "outcomes"),
        ("Hypothesis tests", "hypotheses"),
        ("Completion regressed on PPS", "regression"),
        ("Toxicity threshold sweep", "sweep"),
        ("Completion rate by appeal toxicity", "completion"),
    )
    for title, key in sections:
        lines += [f"## {title}", ""] + _md_table(tables[key]) + [""]
    lines.append(f"Median form completion time: {_duration(report.median_completion_seconds)}")
    labeled_toxic, labeled = report.manual_labels
    if labeled:
        lines.append(f"Manually rated form responses: {labeled_toxic} toxic of {labeled}")
    footnotes = [h for h in report.tests.values() if h.note]
    if footnotes or report.notes:
        lines += ["", "## Notes", ""]
        for i, h in enumerate(footnotes, start=1):
            lines.append(f"{i}. {h.name}: {h.note}")
        for j, note in enumerate(report.notes, start=len(footnotes) + 1):
            lines.append(f"{j}. {note}")
    return "\n".join(lines) + "\n"


def write_report(report: ExperimentReport, out_dir: str | os.PathLike) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = [out / "report.md"]
    written[0].write_text(to_markdown(report), encoding="utf-8")
    for name, rows in table_rows(report).items():
        path = out / f"{name}.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            csv.writer(fh).writerows(rows)
        written.append(path)
    return written


__all__ = [
    "AppealFacts",
    "CompletionByToxicity",
    "ExperimentReport",
    "GroupSummary",
    "HypothesisTest",
    "MissingScoresError",
    "REFERENCE_VALUES",
    "ReportError",
    "build_report",
    "completion_rates_by_toxicity",
    "pct",
    "table_rows",
    "to_markdown",
    "write_report",
]
