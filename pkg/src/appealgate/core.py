"""Appeal state machine.

Every inbound platform event (a user message, a moderator decision) and every
form completion is turned into an ordered list of :class:`BotAction` plus an
optional record transition. The pair is committed as a single ``bot_action``
log record keyed by the event that caused it; a cause that has already been
committed is a no-op, which is what makes replays idempotent.

State diagram::

    first message ──control──────────────► ControlOpen ─┐
                  ├─treatment, no reason─► Bypassed ────┤
                  └─treatment────────────► AwaitingForm │
                                               │ form   │
                                               ▼        │
                                           Completed ───┴──► Decided(decision)
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable

from appealgate.experiment.assignment import AssignmentStore, Group
from appealgate.experiment.eventlog import EventRecord
from appealgate.platform import MAX_MUTE_DAYS, Message, Role, SimulatedPlatform
from appealgate.webform import FormDefinition, FormSubmission, QuestionKind, default_form


class AppealError(Exception):
    pass


class OrphanEventError(AppealError):
    def __init__(self, detail: str):
        super().__init__(f"orphan event: {detail}")


class AlreadyDecidedError(AppealError):
    def __init__(self, record_id: str):
        super().__init__(f"already decided: {record_id}")


class DecisionValidationError(AppealError, ValueError):
    pass


class FormRejectedError(AppealError):
    pass


class AppealState(str, Enum):
    CONTROL_OPEN = "control_open"
    BYPASSED = "bypassed"
    AWAITING_FORM = "treatment_awaiting_form"
    COMPLETED = "treatment_completed"
    DECIDED = "decided"


class Decision(str, Enum):
    GRANTED = "granted"
    DENIED = "denied"
    IGNORED = "ignored"
    MUTED = "muted"


class ActionKind(str, Enum):
    REPLY = "reply"
    ARCHIVE = "archive"
    UNARCHIVE = "unarchive"
    NOTE = "note"


@dataclass(frozen=True)
class BotAction:
    kind: ActionKind
    conversation: str
    body: str | None = None

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "conversation": self.conversation, "body": self.body}

    @classmethod
    def from_dict(cls, d: dict) -> "BotAction":
        return cls(ActionKind(d["kind"]), d["conversation"], d.get("body"))


@dataclass(frozen=True)
class AppealRecord:
    id: str
    user: str
    conversation: str
    group: Group
    state: AppealState
    first_message_id: str
    created_at: float
    pps: float | None = None
    completed_at: float | None = None
    decided_at: float | None = None
    decision: Decision | None = None
    mute_days: int | None = None
    bypassed: bool = False
    conversations: tuple[str, ...] = ()

    def __post_init__(self):
        if self.pps is not None and not 0.0 <= self.pps <= 1.0:
            raise ValueError(f"pps must lie in [0, 1], got {self.pps}")

    @property
    def is_open(self) -> bool:
        return self.state is not AppealState.DECIDED

    @property
    def visible_at(self) -> float | None:
        """When moderators could first see the appeal (None if never)."""
        if self.group is Group.CONTROL or self.bypassed:
            return self.created_at
        return self.completed_at

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        d["group"] = self.group.value
        d["state"] = self.state.value
        d["decision"] = self.decision.value if self.decision else None
        d["conversations"] = list(self.conversations)
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "AppealRecord":
        d = dict(d)
        d["group"] = Group(d["group"])
        d["state"] = AppealState(d["state"])
        d["decision"] = Decision(d["decision"]) if d.get("decision") else None
        d["conversations"] = tuple(d.get("conversations") or ())
        return cls(**d)


@dataclass(frozen=True)
class FormCompletion:
    """Notification that a polled form submission arrived."""

    submission: FormSubmission

    @property
    def cause(self) -> str:
        return f"form:{self.submission.index}"


@dataclass
class Transition:
    actions: list[BotAction] = field(default_factory=list)
    record: AppealRecord | None = None
    previous: AppealState | None = None
    cause: str | None = None

    @property
    def entered(self) -> AppealState | None:
        if self.record is None or self.record.state is self.previous:
            return None
        return self.record.state


@dataclass(frozen=True)
class BotTemplates:
    """User-facing copy. Placeholders: ``{user}`` and ``{form_url}``."""

    form_url: str = "https://forms.example.org/appeal?user={user}"
    invitation: str = (
        "Hi u/{user}, thanks for reaching out about your ban. Before the moderators review "
        "your appeal, please answer a few short questions here: {form_url}\n\n"
        "Your appeal will be passed to the moderators as soon as the form is submitted."
    )
    reminder: str = (
        "Your appeal has not been passed to the moderators yet. Please complete the form "
        "first: {form_url}"
    )
    handover: str = (
        "Thanks for completing the form. Your appeal has now been handed over to the "
        "moderators, who will review it and reply here."
    )
    outage_note: str = (
        "The appeal form service is currently unreachable, so completed forms cannot be "
        "retrieved. They will be delivered automatically once the service is back."
    )
    outage_user: str = (
        "We are having technical trouble retrieving appeal forms right now. If you already "
        "submitted yours, it is safe and will reach the moderators shortly. Thanks for your patience."
    )
    notify_users_on_outage: bool = True

    def render(self, name: str, user: str) -> str:
        template = getattr(self, name)
        return template.format(user=user, form_url=self.form_url.format(user=user))


def _format_duration(seconds: float) -> str:
    seconds = int(round(seconds))
    minutes, secs = divmod(seconds, 60)
    return f"{minutes} min {secs} s" if minutes else f"{secs} s"


def render_summary_note(submission: FormSubmission, definition: FormDefinition | None = None) -> str:
    """Markdown summary of a submission for the moderators' private note."""
    definition = definition or default_form()
    lines = ["**Appeal form responses**", "", f"_Completed in {_format_duration(submission.duration)}._"]
    for q in definition.questions:
        lines += ["", f"**{q.prompt}**", ""]
        answer = submission.answers[q.id]
        if q.kind is QuestionKind.OPEN_TEXT:
            lines.append(answer.replace("\r\n", "\n").replace("\r", "\n").strip())
        else:
            chosen = set(answer)
            for opt in q.options:
                if opt.id in chosen:
                    lines.append(f"- {opt.text}")
            keyed = {o.id for o in q.options if o.permissible}
            others = {o.id for o in q.options} - keyed
            lines += [
                "",
                f"Answer key: {len(chosen & keyed)} of {len(keyed)} permissible comments selected; "
                f"{len(chosen & others)} of {len(others)} non-permissible comments selected.",
            ]
    return "\n".join(lines) + "\n"


class AppealEngine:
    def __init__(
        self,
        platform: SimulatedPlatform,
        assignments: AssignmentStore,
        emit,
        clock,
        *,
        templates: BotTemplates | None = None,
        definition: FormDefinition | None = None,
        pps_fn: Callable[[str, str], float | None] | None = None,
    ):
        self.platform = platform
        self.assignments = assignments
        self._emit = emit
        self._clock = clock
        self.templates = templates or BotTemplates()
        self.definition = definition or default_form()
        self.pps_fn = pps_fn
        self.records: dict[str, AppealRecord] = {}
        self.processed: dict[str, int] = {}
        self._by_conversation: dict[str, str] = {}
        self._latest_by_user: dict[str, str] = {}
        # derived from committed causes so replay restores them
        self.event_cursor = 0
        self.form_cursor = 0

    # lookups

    def record_for_conversation(self, conversation: str) -> AppealRecord | None:
        rid = self._by_conversation.get(conversation)
        return self.records[rid] if rid else None

    def latest_record(self, user: str) -> AppealRecord | None:
        rid = self._latest_by_user.get(user)
        return self.records[rid] if rid else None

    # pure transition rules

    def on_first_appeal(self, user: str, message: Message) -> tuple[AppealRecord, list[BotAction]]:
        ban = self.platform.ban_of(user)
        group = self.assignments.assign(user).group
        pps = self.pps_fn(user, message.body) if self.pps_fn else None
        base = AppealRecord(
            id=f"appeal-{len(self.records) + 1}",
            user=user,
            conversation=message.conversation,
            group=group,
            state=AppealState.CONTROL_OPEN,
            first_message_id=message.id,
            created_at=message.sent_at,
            pps=pps,
            conversations=(message.conversation,),
        )
        if group is Group.CONTROL:
            return base, []
        if ban is None or not (ban.reason or "").strip():
            return dataclasses.replace(base, state=AppealState.BYPASSED, bypassed=True), []
        conv = message.conversation
        actions = [
            BotAction(ActionKind.REPLY, conv, self.templates.render("invitation", user)),
            BotAction(ActionKind.ARCHIVE, conv),
        ]
        return dataclasses.replace(base, state=AppealState.AWAITING_FORM), actions

    def on_subsequent_message(self, record: AppealRecord, message: Message) -> list[BotAction]:
        if record.state is not AppealState.AWAITING_FORM:
            return []
        conv = message.conversation
        return [
            BotAction(ActionKind.REPLY, conv, self.templates.render("reminder", record.user)),
            BotAction(ActionKind.ARCHIVE, conv),
        ]

    def on_form_completed(
        self, record: AppealRecord, submission: FormSubmission
    ) -> tuple[AppealRecord | None, list[BotAction]]:
        if submission.user != record.user:
            raise FormRejectedError("submission does not belong to this appeal")
        if record.group is not Group.TREATMENT or record.bypassed:
            raise FormRejectedError(f"appeal {record.id} is not in the form process")
        if record.state is not AppealState.AWAITING_FORM:
            return None, []
        updated = dataclasses.replace(
            record, state=AppealState.COMPLETED, completed_at=submission.submitted_at
        )
        conv = record.conversation
        actions = [BotAction(ActionKind.UNARCHIVE, c) for c in record.conversations]
        actions += [
            BotAction(ActionKind.NOTE, conv, render_summary_note(submission, self.definition)),
            BotAction(ActionKind.REPLY, conv, self.templates.render("handover", record.user)),
        ]
        return updated, actions

    def record_decision(
        self, record: AppealRecord, decision: Decision | str, mute_days: int | None = None,
        *, at: float | None = None,
    ) -> AppealRecord:
        decision = Decision(decision)
        if record.state is AppealState.DECIDED:
            raise AlreadyDecidedError(record.id)
        if decision is Decision.MUTED:
            if isinstance(mute_days, bool) or mute_days is None or int(mute_days) != mute_days \
                    or not 1 <= mute_days <= MAX_MUTE_DAYS:
                raise DecisionValidationError(
                    f"mute_days must be an integer in [1, {MAX_MUTE_DAYS}], got {mute_days!r}"
                )
        elif mute_days is not None:
            raise DecisionValidationError("mute_days only applies to a mute decision")
        return dataclasses.replace(
            record,
            state=AppealState.DECIDED,
            decision=decision,
            mute_days=mute_days,
            decided_at=self._clock.now if at is None else at,
        )

    # event handling

    def handle_event(self, event: EventRecord | FormCompletion) -> Transition:
        if isinstance(event, FormCompletion):
            cause = event.cause
        else:
            cause = f"evt:{event.seq}"
        if cause in self.processed:
            return Transition(cause=cause)
        if isinstance(event, FormCompletion):
            return self._handle_form(cause, event.submission)
        if event.type == "message":
            if event.payload.get("sender") != Role.USER.value:
                return Transition(cause=cause)
            return self._handle_message(cause, event)
        if event.type == "decision":
            return self._handle_decision(cause, event)
        raise AppealError(f"engine cannot handle event type {event.type!r}")

    def _message(self, event: EventRecord) -> Message:
        return Message(
            f"m{event.seq}", event.conversation, Role.USER, event.payload["body"], False, event.ts, event.seq
        )

    def _handle_message(self, cause: str, event: EventRecord) -> Transition:
        user = event.user
        message = self._message(event)
        latest = self.latest_record(user)
        if latest is not None and latest.is_open:
            return self._subsequent(cause, latest, message)
        ban = self.platform.ban_of(user)
        if self.platform.is_banned(user) and (latest is None or ban.banned_at > latest.decided_at):
            record, actions = self.on_first_appeal(user, message)
            return self.commit(cause, record, actions, previous=None, conversation=event.conversation)
        if latest is not None and event.conversation in latest.conversations:
            return self._subsequent(cause, latest, message)
        return self.commit(cause, None, [], conversation=event.conversation, user=user)

    def _subsequent(self, cause: str, record: AppealRecord, message: Message) -> Transition:
        actions = self.on_subsequent_message(record, message)
        updated = None
        if message.conversation not in record.conversations:
            updated = dataclasses.replace(
                record, conversations=record.conversations + (message.conversation,)
            )
        return self.commit(cause, updated, actions, previous=record.state,
                           conversation=message.conversation, user=record.user)

    def _handle_form(self, cause: str, submission: FormSubmission) -> Transition:
        record = self.latest_record(submission.user)
        if record is None:
            raise OrphanEventError(f"form submission from {submission.user!r} without an appeal")
        updated, actions = self.on_form_completed(record, submission)
        return self.commit(cause, updated, actions, previous=record.state,
                           conversation=record.conversation, user=record.user)

    def _handle_decision(self, cause: str, event: EventRecord) -> Transition:
        record = self.record_for_conversation(event.conversation)
        if record is None:
            raise OrphanEventError(f"decision in unknown conversation {event.conversation!r}")
        updated = self.record_decision(
            record, event.payload["decision"], event.payload.get("mute_days"), at=event.ts
        )
        return self.commit(cause, updated, [], previous=record.state,
                           conversation=event.conversation, user=record.user)

    def commit(
        self,
        cause: str,
        record: AppealRecord | None,
        actions: list[BotAction],
        *,
        previous: AppealState | None = None,
        conversation: str | None = None,
        user: str | None = None,
        error: str | None = None,
    ) -> Transition:
        """Append the transition and its actions as one ``bot_action`` record."""
        if cause in self.processed:
            return Transition(cause=cause)
        payload: dict[str, Any] = {
            "cause": cause,
            "record": record.to_dict() if record is not None else None,
            "actions": [a.to_dict() for a in actions],
        }
        if error is not None:
            payload["error"] = error
        self._emit(
            "bot_action",
            conversation=conversation if conversation is not None else (record.conversation if record else None),
            user=user if user is not None else (record.user if record else None),
            payload=payload,
        )
        return Transition(list(actions), record, previous, cause)

    def apply(self, rec: EventRecord) -> None:
        payload = rec.payload
        cause = payload["cause"]
        self.processed[cause] = rec.seq
        kind, _, ref = cause.partition(":")
        if kind == "evt":
            self.event_cursor = max(self.event_cursor, int(ref))
        elif kind == "form":
            self.form_cursor = max(self.form_cursor, int(ref) + 1)
        data = payload.get("record")
        if data is None:
            return
        record = AppealRecord.from_dict(data)
        if record.id not in self.records:
            self._latest_by_user[record.user] = record.id
        self.records[record.id] = record
        for conv in record.conversations:
            self._by_conversation[conv] = record.id

    handled_types = ("bot_action",)

    def state(self) -> dict:
        return {
            "records": {k: v.to_dict() for k, v in sorted(self.records.items())},
            "processed": dict(sorted(self.processed.items())),
        }


__all__ = [
    "ActionKind",
    "AlreadyDecidedError",
    "AppealEngine",
    "AppealError",
    "AppealRecord",
    "AppealState",
    "BotAction",
    "BotTemplates",
    "Decision",
    "DecisionValidationError",
    "FormCompletion",
    "FormRejectedError",
    "OrphanEventError",
    "Transition",
    "render_summary_note",
]
