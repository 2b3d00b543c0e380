"""Log auditor for the engine's safety properties.

Checked properties:

* visibility: once the bot has finished reacting to an event, no conversation
  attached to an appeal that still waits for its form is unarchived;
* control silence: the bot never acts in a control user's conversation;
* assignment immutability: one assignment per user, and every appeal record
  carries that group;
* idempotence: each cause is committed at most once.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

from appealgate.core import AppealState
from appealgate.experiment.eventlog import EventRecord


@dataclass(frozen=True)
class Violation:
    kind: str
    seq: int
    detail: str

    def __str__(self):
        return f"[{self.kind}] seq {self.seq}: {self.detail}"


class InvariantViolation(AssertionError):
    def __init__(self, violations: list[Violation]):
        shown = "; ".join(str(v) for v in violations[:5])
        more = f" (+{len(violations) - 5} more)" if len(violations) > 5 else ""
        super().__init__(f"{len(violations)} invariant violation(s): {shown}{more}")
        self.violations = violations


_BOT_EFFECTS = ("archive", "unarchive")


def audit_log(records: Iterable[EventRecord]) -> list[Violation]:
    out: list[Violation] = []
    archived: dict[str, bool] = {}
    participant: dict[str, str | None] = {}
    groups: dict[str, str] = {}
    awaiting: dict[str, tuple[str, ...]] = {}  # record id -> conversations while awaiting form
    record_user: dict[str, str] = {}
    conv_record: dict[str, str] = {}
    causes: set[str] = set()
    dirty: set[str] = set()
    last_seq = 0

    def check_visibility(seq: int) -> None:
        for conv in dirty:
            rid = conv_record.get(conv)
            if rid in awaiting and not archived.get(conv, False):
                out.append(Violation("visibility", seq, f"{conv} of {rid} is visible while awaiting the form"))
        dirty.clear()

    for rec in records:
        last_seq = rec.seq
        t = rec.type
        if t == "bot_action":
            check_visibility(rec.seq)
            p = rec.payload
            cause = p["cause"]
            if cause in causes:
                out.append(Violation("idempotence", rec.seq, f"cause {cause} committed twice"))
            causes.add(cause)
            data = p.get("record")
            if data is not None:
                rid, user, group = data["id"], data["user"], data["group"]
                if groups.get(user) != group:
                    out.append(Violation("assignment", rec.seq,
                                         f"{rid} has group {group}, assignment is {groups.get(user)}"))
                record_user[rid] = user
                for conv in data["conversations"]:
                    conv_record[conv] = rid
                    dirty.add(conv)
                if data["state"] == AppealState.AWAITING_FORM.value:
                    awaiting[rid] = tuple(data["conversations"])
                else:
                    awaiting.pop(rid, None)
            for action in p["actions"]:
                conv = action["conversation"]
                if groups.get(participant.get(conv)) == "control":
                    out.append(Violation("control-silence", rec.seq,
                                         f"bot action {action['kind']} in control conversation {conv}"))
        elif t == "assignment":
            if rec.user in groups:
                out.append(Violation("assignment", rec.seq, f"user {rec.user} assigned twice"))
            else:
                groups[rec.user] = rec.payload["group"]
        elif t in ("message", "note"):
            participant.setdefault(rec.conversation, rec.user)
            archived.setdefault(rec.conversation, False)
            if rec.payload.get("sender") == "bot" and groups.get(rec.user) == "control":
                out.append(Violation("control-silence", rec.seq, f"bot {t} to control user {rec.user}"))
        elif t in _BOT_EFFECTS:
            archived[rec.conversation] = t == "archive"
            dirty.add(rec.conversation)
            if rec.payload.get("actor") == "bot" and groups.get(rec.user) == "control":
                out.append(Violation("control-silence", rec.seq, f"bot {t} of control user {rec.user}"))
    check_visibility(last_seq + 1)
    return out


def assert_clean(records: Iterable[EventRecord]) -> None:
    violations = audit_log(records)
    if violations:
        raise InvariantViolation(violations)
