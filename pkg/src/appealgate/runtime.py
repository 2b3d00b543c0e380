"""Wiring: one event log, the stores that fold it, and the polling bot.

Every state change goes through :meth:`Runtime.emit`, which appends a record
and immediately applies it to the stores that own that record type. Rebuilding
a runtime from a log applies the same records in the same order, so a replayed
runtime is indistinguishable from the live one.
"""

from __future__ import annotations

import logging
from typing import Any, Callable, Iterable, Mapping

from appealgate.clock import Clock
from appealgate.core import (
    ActionKind,
    AppealEngine,
    AppealError,
    AppealState,
    BotAction,
    BotTemplates,
    FormCompletion,
    Transition,
)
from appealgate.experiment.assignment import AssignmentStore
from appealgate.experiment.eventlog import EventLog, EventRecord
from appealgate.platform import MOD_DISCUSSION, SimulatedPlatform
from appealgate.webform import FormDefinition, FormService, FormServiceUnavailable

log = logging.getLogger(__name__)


class ScoreStore:
    """Per-message scores (``score`` records), keyed by message id then kind."""

    handled_types = ("score",)

    def __init__(self):
        self.by_message: dict[str, dict[str, float]] = {}

    def apply(self, rec: EventRecord) -> None:
        p = rec.payload
        self.by_message.setdefault(p["message_id"], {})[p["kind"]] = p["value"]

    def get(self, message_id: str, kind: str = "toxicity") -> float | None:
        return self.by_message.get(message_id, {}).get(kind)

    def state(self) -> dict:
        return {k: dict(sorted(v.items())) for k, v in sorted(self.by_message.items())}


class ScriptError(ValueError):
    """A scripted step could not be applied; the message names the step."""


class Runtime:
    def __init__(
        self,
        *,
        seed: int | str = 0,
        ratio: float = 0.5,
        templates: BotTemplates | None = None,
        definition: FormDefinition | None = None,
        pps_fn: Callable[[str, str], float | None] | None = None,
        start: float = 0.0,
    ):
        self.log = EventLog()
        self.clock = Clock(start)
        self.assignments = AssignmentStore(self.emit, self.clock, ratio=ratio, seed=seed)
        self.platform = SimulatedPlatform(self.emit, self.clock, self.log)
        self.forms = FormService(definition, self.emit, self.clock)
        self.scores = ScoreStore()
        self.engine = AppealEngine(
            self.platform, self.assignments, self.emit, self.clock,
            templates=templates, definition=self.forms.definition, pps_fn=pps_fn,
        )
        self._routes: dict[str, list] = {"assignment": [self.assignments]}
        for store in (self.platform, self.forms, self.scores, self.engine):
            for t in store.handled_types:
                self._routes.setdefault(t, []).append(store)

    def emit(self, type: str, conversation: str | None = None, user: str | None = None,
             payload: Mapping[str, Any] | None = None) -> EventRecord:
        rec = self.log.append(type, self.clock.now, conversation, user, dict(payload or {}))
        self._apply(rec)
        return rec

    def _apply(self, rec: EventRecord) -> None:
        for store in self._routes.get(rec.type, ()):
            store.apply(rec)

    @classmethod
    def replay(cls, records: Iterable[EventRecord], **kwargs) -> "Runtime":
        """Fresh runtime with every record of ``records`` applied in order."""
        rt = cls(**kwargs)
        for rec in records:
            rt.log.append_record(rec)
            if rec.ts > rt.clock.now:
                rt.clock.set(rec.ts)
            rt._apply(rec)
        return rt

    def state(self) -> dict:
        return {
            "assignments": self.assignments.state(),
            "platform": self.platform.state(),
            "forms": self.forms.state(),
            "scores": self.scores.state(),
            "engine": self.engine.state(),
            "last_seq": self.log.last_seq,
        }


class AppealBot:
    """Polls the platform and the form service and executes engine actions."""

    def __init__(self, runtime: Runtime, scorer=None):
        self.rt = runtime
        self.scorer = scorer

    @property
    def engine(self) -> AppealEngine:
        return self.rt.engine

    def step(self) -> list[Transition]:
        """One polling round: inbound platform events, then form completions."""
        events, _ = self.rt.platform.fetch_new_events(self.engine.event_cursor)
        done = [self._handle(ev) for ev in events]
        done += self.poll_forms()
        return done

    def handle(self, event: EventRecord | FormCompletion) -> Transition:
        """Process one event, first catching up on anything pending before it.

        The engine's cursors only move forward, so an event delivered ahead
        of its predecessors would otherwise make them unreachable.
        """
        if isinstance(event, FormCompletion):
            for sub in self.rt.forms.state_.submissions[self.engine.form_cursor:event.submission.index]:
                self._handle(FormCompletion(sub))
        elif event.seq > self.engine.event_cursor + 1:
            pending, _ = self.rt.platform.fetch_new_events(self.engine.event_cursor)
            for ev in pending:
                if ev.seq >= event.seq:
                    break
                self._handle(ev)
        return self._handle(event)

    def _handle(self, event: EventRecord | FormCompletion) -> Transition:
        if isinstance(event, EventRecord) and event.type == "message" and self.scorer is not None:
            mid = f"m{event.seq}"
            if self.rt.scores.get(mid) is None:
                value = float(self.scorer.score(event.payload["body"]))
                self.rt.emit("score", conversation=event.conversation, user=event.user,
                             payload={"message_id": mid, "kind": "toxicity", "value": value})
        try:
            tr = self.engine.handle_event(event)
        except AppealError as exc:
            cause = event.cause if isinstance(event, FormCompletion) else f"evt:{event.seq}"
            log.warning("event %s rejected: %s", cause, exc)
            user = event.submission.user if isinstance(event, FormCompletion) else event.user
            conv = None if isinstance(event, FormCompletion) else event.conversation
            return self.engine.commit(cause, None, [], conversation=conv, user=user, error=str(exc))
        self.execute(tr)
        return tr

    def execute(self, tr: Transition) -> None:
        p = self.rt.platform
        for action in tr.actions:
            if action.kind is ActionKind.REPLY:
                p.send_message(action.conversation, action.body)
            elif action.kind is ActionKind.ARCHIVE:
                p.archive(action.conversation)
            elif action.kind is ActionKind.UNARCHIVE:
                p.unarchive(action.conversation)
            elif action.kind is ActionKind.NOTE:
                p.add_private_note(action.conversation, action.body)
        if tr.entered is AppealState.AWAITING_FORM:
            self.rt.forms.grant_access(tr.record.user)

    def poll_forms(self) -> list[Transition]:
        try:
            subs, _ = self.rt.forms.poll_completed(self.engine.form_cursor)
        except FormServiceUnavailable:
            tr = self._outage_notice()
            return [tr] if tr is not None else []
        return [self._handle(FormCompletion(s)) for s in subs]

    def _outage_notice(self) -> Transition | None:
        cause = f"outage:{self.rt.forms.outage_seq}"
        if cause in self.engine.processed:
            return None
        templates = self.engine.templates
        actions = [BotAction(ActionKind.NOTE, MOD_DISCUSSION, templates.outage_note)]
        if templates.notify_users_on_outage:
            for rec in self.engine.records.values():
                if rec.state is AppealState.AWAITING_FORM:
                    actions.append(
                        BotAction(ActionKind.REPLY, rec.conversation, templates.render("outage_user", rec.user))
                    )
        tr = self.engine.commit(cause, None, actions, conversation=MOD_DISCUSSION)
        self.execute(tr)
        return tr


def run_script(runtime: Runtime, bot: AppealBot, steps: Iterable[Mapping[str, Any]]) -> list[Transition]:
    """Drive the platform from a list of scripted steps, stepping the bot after each.

    Step forms (``at`` optionally moves the clock to an absolute time first)::

        {"op": "ban", "user": "u1", "reason": "rule 2"}
        {"op": "message", "user": "u1", "body": "...", "conversation": "conv-1"}
        {"op": "moderator_message", "conversation": "conv-1", "body": "..."}
        {"op": "note", "conversation": "conv-1", "body": "..."}
        {"op": "submit", "user": "u1", "answers": {...}, "started_at": 0}
        {"op": "decide", "conversation": "conv-1", "decision": "muted", "mute_days": 7}
        {"op": "outage", "active": true}
        {"op": "advance", "seconds": 60}
    """
    p, forms = runtime.platform, runtime.forms
    out: list[Transition] = []
    for i, step in enumerate(steps):
        try:
            out += _run_step(runtime, bot, p, forms, dict(step))
        except ScriptError:
            raise
        except Exception as exc:
            raise ScriptError(f"step {i}: {exc}") from exc
    return out


def _run_step(runtime: Runtime, bot: AppealBot, p, forms, step: dict) -> list[Transition]:
    op = step.pop("op", None)
    if "at" in step:
        runtime.clock.set(float(step.pop("at")))
    if op == "ban":
        p.ban(step["user"], step.get("reason"), permanent=step.get("permanent", True))
    elif op == "message":
        p.user_message(step["user"], step["body"], step.get("conversation"))
    elif op == "moderator_message":
        p.moderator_message(step["conversation"], step["body"])
    elif op == "note":
        p.moderator_note(step["conversation"], step["body"])
    elif op == "submit":
        forms.submit(step["user"], step["answers"], step.get("started_at"))
    elif op == "decide":
        p.decide(step["conversation"], step["decision"], step.get("mute_days"))
    elif op == "outage":
        forms.set_outage(bool(step["active"]))
    elif op == "advance":
        runtime.clock.advance(float(step["seconds"]))
    else:
        raise ValueError(f"unknown op {op!r}")
    return bot.step()
