"""Appeal webform: access grants, single immutable submission, polling.

The form service stands in for a hosted survey tool. Access is granted per
user by the bot, each granted user may submit exactly once, and the bot learns
about completions only by polling with a cursor. A simulated outage makes the
poll fail until it is cleared; nothing submitted in the meantime is lost.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from types import MappingProxyType
from typing import Any, Mapping, Sequence


class FormError(Exception):
    pass


class FormAccessError(FormError, PermissionError):
    pass


class AlreadySubmittedError(FormError):
    pass


class FormValidationError(FormError, ValueError):
    pass


class FormServiceUnavailable(FormError):
    """Retryable: the form backend is down."""

    retryable = True


class QuestionKind(str, Enum):
    OPEN_TEXT = "open_text"
    MULTIPLE_CHOICE = "multiple_choice"


@dataclass(frozen=True)
class Option:
    id: str
    text: str
    permissible: bool = False


@dataclass(frozen=True)
class Question:
    id: str
    prompt: str
    kind: QuestionKind = QuestionKind.OPEN_TEXT
    options: tuple[Option, ...] = ()

    def option(self, option_id: str) -> Option:
        for opt in self.options:
            if opt.id == option_id:
                return opt
        raise KeyError(option_id)


REQUIRED_QUESTION_IDS = (
    "copy_ban_reason",
    "actions_and_circumstances",
    "future_steps",
    "rule_in_own_words",
    "comment_labeling",
)


@dataclass(frozen=True)
class FormDefinition:
    questions: tuple[Question, ...]

    def __post_init__(self):
        ids = tuple(q.id for q in self.questions)
        if ids != REQUIRED_QUESTION_IDS:
            raise ValueError(f"form must have exactly the questions {REQUIRED_QUESTION_IDS}, got {ids}")
        for q in self.questions[:4]:
            if q.kind is not QuestionKind.OPEN_TEXT:
                raise ValueError(f"question {q.id} must be open text")
        labeling = self.questions[4]
        if labeling.kind is not QuestionKind.MULTIPLE_CHOICE or len(labeling.options) != 5:
            raise ValueError("comment_labeling must be multiple choice over 5 options")
        if sum(o.permissible for o in labeling.options) != 2:
            raise ValueError("exactly 2 comment_labeling options must be keyed permissible")
        if len({o.id for o in labeling.options}) != 5:
            raise ValueError("comment_labeling option ids must be unique")

    def question(self, qid: str) -> Question:
        for q in self.questions:
            if q.id == qid:
                return q
        raise KeyError(qid)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "FormDefinition":
        questions = []
        for q in data["questions"]:
            options = tuple(
                Option(o["id"], o["text"], bool(o.get("permissible", False))) for o in q.get("options", ())
            )
            questions.append(Question(q["id"], q["prompt"], QuestionKind(q.get("kind", "open_text")), options))
        return cls(tuple(questions))

    def to_dict(self) -> dict[str, Any]:
        return {
            "questions": [
                {
                    "id": q.id,
                    "prompt": q.prompt,
                    "kind": q.kind.value,
                    "options": [{"id": o.id, "text": o.text, "permissible": o.permissible} for o in q.options],
                }
                for q in self.questions
            ]
        }


def default_form() -> FormDefinition:
    return FormDefinition(
        (
            Question(
                "copy_ban_reason",
                "Copy and paste the ban reason exactly as it appears in the ban message you received.",
            ),
            Question(
                "actions_and_circumstances",
                "What did you do that led to the ban, and what was going on at the time?",
            ),
            Question(
                "future_steps",
                "What will you do differently so that this does not happen again?",
            ),
            Question(
                "rule_in_own_words",
                "In your own words, which community rule did you break? The full rules are on the wiki.",
            ),
            Question(
                "comment_labeling",
                "Which of these comments should be allowed in the community? Select all that apply.",
                QuestionKind.MULTIPLE_CHOICE,
                (
                    Option("a", "Nobody asked for your opinion, go crawl back under your rock, loser."),
                    Option("b", "People like you should be thrown off the internet for good. Disgusting."),
                    Option("c", "I know where you live, so be careful what you post next."),
                    Option(
                        "d",
                        "Your landlord sounds awful, but wrecking his property will only make things worse for you.",
                        True,
                    ),
                    Option("e", "Screw that guy. You deserve friends who actually show up for you.", True),
                ),
            ),
        )
    )


def _normalize(text: str) -> str:
    return text.replace("\r\n", "\n").replace("\r", "\n").strip()


def validate_answers(definition: FormDefinition, answers: Mapping[str, Any]) -> dict[str, Any]:
    """Return normalized answers or raise :class:`FormValidationError`."""
    unknown = set(answers) - {q.id for q in definition.questions}
    if unknown:
        raise FormValidationError(f"unknown questions: {sorted(unknown)}")
    clean: dict[str, Any] = {}
    for q in definition.questions:
        if q.id not in answers:
            raise FormValidationError(f"missing answer for {q.id}")
        value = answers[q.id]
        if q.kind is QuestionKind.OPEN_TEXT:
            if not isinstance(value, str) or not _normalize(value):
                raise FormValidationError(f"answer to {q.id} must be non-empty text")
            clean[q.id] = _normalize(value)
        else:
            if isinstance(value, str) or not isinstance(value, Sequence):
                raise FormValidationError(f"answer to {q.id} must be a list of option ids")
            valid = [o.id for o in q.options]
            chosen = [v for v in valid if v in set(value)]
            if len(set(value)) != len(chosen):
                raise FormValidationError(f"unknown option in answer to {q.id}: {list(value)}")
            if not chosen:
                raise FormValidationError(f"select at least one option for {q.id}")
            clean[q.id] = tuple(chosen)
    return clean


@dataclass(frozen=True)
class FormSubmission:
    user: str
    answers: Mapping[str, Any]
    started_at: float
    submitted_at: float
    index: int = 0

    @property
    def duration(self) -> float:
        return self.submitted_at - self.started_at

    def to_payload(self) -> dict:
        return {
            "answers": {k: list(v) if isinstance(v, tuple) else v for k, v in self.answers.items()},
            "started_at": self.started_at,
        }


@dataclass
class FormServiceState:
    granted: set[str] = field(default_factory=set)
    submissions: list[FormSubmission] = field(default_factory=list)
    by_user: dict[str, FormSubmission] = field(default_factory=dict)
    manual_labels: dict[str, bool] = field(default_factory=dict)
    outage: bool = False
    outage_seq: int | None = None  # seq of the event that started the current outage


class FormService:
    def __init__(self, definition: FormDefinition | None = None, emit=None, clock=None):
        self.definition = definition or default_form()
        self._emit = emit
        self._clock = clock
        self.state_ = FormServiceState()

    @property
    def outage(self) -> bool:
        return self.state_.outage

    @property
    def outage_seq(self) -> int | None:
        return self.state_.outage_seq

    def has_access(self, user: str) -> bool:
        return user in self.state_.granted

    def submission_of(self, user: str) -> FormSubmission | None:
        return self.state_.by_user.get(user)

    def grant_access(self, user: str) -> None:
        if user not in self.state_.granted:
            self._emit("form_grant", user=user)

    def submit(self, user: str, answers: Mapping[str, Any], started_at: float | None = None) -> FormSubmission:
        if user not in self.state_.granted:
            raise FormAccessError(f"user {user!r} has no access to the form")
        if user in self.state_.by_user:
            raise AlreadySubmittedError(f"user {user!r} already submitted")
        clean = validate_answers(self.definition, answers)
        now = self._clock.now
        started_at = now if started_at is None else float(started_at)
        if started_at > now:
            raise FormValidationError("started_at lies in the future")
        sub = FormSubmission(user, MappingProxyType(clean), started_at, now)
        self._emit("form_submit", user=user, payload=sub.to_payload())
        return self.state_.by_user[user]

    def set_manual_label(self, user: str, toxic: bool) -> None:
        if user not in self.state_.by_user:
            raise KeyError(f"no submission for {user!r}")
        self._emit("form_label", user=user, payload={"toxic": bool(toxic)})

    def manual_label(self, user: str) -> bool | None:
        return self.state_.manual_labels.get(user)

    def set_outage(self, active: bool) -> None:
        if bool(active) != self.state_.outage:
            self._emit("outage", payload={"active": bool(active)})

    def poll_completed(self, since: int) -> tuple[list[FormSubmission], int]:
        """Submissions with index >= ``since``; raises while the service is down."""
        if self.state_.outage:
            raise FormServiceUnavailable("form service unavailable")
        if since < 0 or since > len(self.state_.submissions):
            raise ValueError(f"invalid form cursor {since}")
        subs = self.state_.submissions[since:]
        return list(subs), len(self.state_.submissions)

    def apply(self, rec) -> None:
        st = self.state_
        if rec.type == "form_grant":
            st.granted.add(rec.user)
        elif rec.type == "form_submit":
            answers = {
                k: tuple(v) if isinstance(v, list) else v for k, v in rec.payload["answers"].items()
            }
            sub = FormSubmission(
                rec.user, MappingProxyType(answers), rec.payload["started_at"], rec.ts, len(st.submissions)
            )
            st.submissions.append(sub)
            st.by_user[rec.user] = sub
        elif rec.type == "form_label":
            st.manual_labels[rec.user] = rec.payload["toxic"]
        elif rec.type == "outage":
            st.outage = rec.payload["active"]
            st.outage_seq = rec.seq if st.outage else None

    handled_types = ("form_grant", "form_submit", "form_label", "outage")

    def state(self) -> dict:
        st = self.state_
        return {
            "granted": sorted(st.granted),
            "submissions": [
                (s.user, s.to_payload(), s.submitted_at, s.index) for s in st.submissions
            ],
            "labels": dict(sorted(st.manual_labels.items())),
            "outage": st.outage,
            "outage_seq": st.outage_seq,
        }
