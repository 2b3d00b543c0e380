"""Modmail platform: adapter contract and a deterministic in-memory simulation.

A production adapter would wrap the community platform's API with moderator
privileges (read modmail, reply, archive/unarchive, private notes, mute). The
simulated platform implements the same surface on top of the event log, so
replaying the log rebuilds every conversation exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Protocol

from appealgate.clock import DAY, Clock
from appealgate.experiment.eventlog import EventLog, EventRecord

MAX_MUTE_DAYS = 28
MOD_DISCUSSION = "mod-discussion"
INBOUND_TYPES = ("message", "decision")


class PlatformError(Exception):
    pass


class UnknownConversationError(PlatformError, KeyError):
    def __str__(self):
        return f"unknown conversation {self.args[0]!r}"


class InvalidCursorError(PlatformError, ValueError):
    pass


class MuteValidationError(PlatformError, ValueError):
    pass


class Role(str, Enum):
    USER = "user"
    MODERATOR = "moderator"
    BOT = "bot"


@dataclass(frozen=True, slots=True)
class Message:
    id: str
    conversation: str
    sender: Role
    body: str
    private_note: bool
    sent_at: float
    seq: int = 0

    def __post_init__(self):
        if self.private_note and self.sender is Role.USER:
            raise ValueError("users cannot post private notes")
        if not self.body:
            raise ValueError("message body must be non-empty")


@dataclass
class BanRecord:
    user: str
    reason: str | None
    permanent: bool
    banned_at: float
    active: bool = True


@dataclass
class Conversation:
    id: str
    participant: str | None
    messages: list[Message] = field(default_factory=list)
    archived: bool = False
    muted_until: float | None = None
    bumped: int = 0  # seq of the last event that moved it to the top of the inbox

    def state(self) -> dict:
        return {
            "participant": self.participant,
            "archived": self.archived,
            "muted_until": self.muted_until,
            "bumped": self.bumped,
            "messages": [
                (m.id, m.sender.value, m.body, m.private_note, m.sent_at) for m in self.messages
            ],
        }


def validate_mute_days(days) -> int:
    if isinstance(days, bool) or not isinstance(days, (int, float)) or int(days) != days \
            or not 1 <= days <= MAX_MUTE_DAYS:
        raise MuteValidationError(f"mute days must be an integer in [1, {MAX_MUTE_DAYS}], got {days!r}")
    return int(days)


class PlatformOps(Protocol):
    """Operations the bot needs from a modmail platform."""

    def fetch_new_events(self, cursor: int) -> tuple[list[EventRecord], int]: ...

    def send_message(self, conversation: str, body: str) -> Message: ...

    def archive(self, conversation: str) -> Conversation: ...

    def unarchive(self, conversation: str) -> Conversation: ...

    def add_private_note(self, conversation: str, body: str) -> Message: ...

    def mute(self, user: str, days: int) -> None: ...


class SimulatedPlatform:
    """In-memory modmail whose only source of truth is the event log."""

    def __init__(self, emit, clock: Clock, log: EventLog):
        self._emit = emit
        self._clock = clock
        self._log = log
        self.conversations: dict[str, Conversation] = {}
        self.bans: dict[str, BanRecord] = {}
        self.mutes: dict[str, float] = {}
        self._by_user: dict[str, list[str]] = {}

    # queries

    def conversation(self, conversation_id: str) -> Conversation:
        try:
            return self.conversations[conversation_id]
        except KeyError:
            raise UnknownConversationError(conversation_id) from None

    def conversations_of(self, user: str) -> list[Conversation]:
        return [self.conversations[c] for c in self._by_user.get(user, ())]

    def ban_of(self, user: str) -> BanRecord | None:
        return self.bans.get(user)

    def is_banned(self, user: str) -> bool:
        ban = self.bans.get(user)
        return ban is not None and ban.active and ban.permanent

    def is_muted(self, user: str, at: float | None = None) -> bool:
        until = self.mutes.get(user)
        at = self._clock.now if at is None else at
        return until is not None and at < until

    def moderator_inbox(self) -> list[Conversation]:
        """Unarchived conversations, most recently bumped first."""
        visible = [c for c in self.conversations.values() if not c.archived]
        return sorted(visible, key=lambda c: -c.bumped)

    # driver-side injection (users and moderators acting on the platform)

    def ban(self, user: str, reason: str | None = None, *, permanent: bool = True) -> BanRecord:
        if not user:
            raise ValueError("user id must be non-empty")
        self._emit("ban", user=user, payload={"reason": reason, "permanent": permanent})
        return self.bans[user]

    def user_message(self, user: str, body: str, conversation: str | None = None) -> Message | None:
        """Deliver a message from ``user``; returns None if it was suppressed by a mute."""
        if not body or not body.strip():
            raise ValueError("message body must be non-empty")
        if self.is_muted(user):
            self._emit("suppressed", conversation=conversation, user=user,
                       payload={"body": body, "until": self.mutes[user]})
            return None
        if conversation is None:
            conversation = f"conv-{len(self.conversations) + 1}"
        elif conversation in self.conversations:
            owner = self.conversations[conversation].participant
            if owner != user:
                raise PlatformError(f"conversation {conversation!r} belongs to {owner!r}")
        self._emit("message", conversation=conversation, user=user,
                         payload={"sender": Role.USER.value, "body": body})
        return self.conversations[conversation].messages[-1]

    def moderator_message(self, conversation: str, body: str) -> Message:
        conv = self.conversation(conversation)
        self._emit("message", conversation=conversation, user=conv.participant,
                   payload={"sender": Role.MODERATOR.value, "body": body})
        return conv.messages[-1]

    def moderator_note(self, conversation: str, body: str) -> Message:
        conv = self.conversation(conversation)
        self._emit("note", conversation=conversation, user=conv.participant,
                   payload={"sender": Role.MODERATOR.value, "body": body})
        return conv.messages[-1]

    def decide(self, conversation: str, decision: str, mute_days: int | None = None) -> EventRecord:
        """A moderator's final decision on the appeal in ``conversation``."""
        conv = self.conversation(conversation)
        decision = getattr(decision, "value", decision)
        if decision == "muted":
            mute_days = validate_mute_days(mute_days)
        elif mute_days is not None:
            raise MuteValidationError("mute_days only applies to a mute decision")
        return self._emit("decision", conversation=conversation, user=conv.participant,
                          payload={"decision": decision, "mute_days": mute_days})

    # PlatformOps

    def fetch_new_events(self, cursor: int) -> tuple[list[EventRecord], int]:
        """Inbound events (user messages, decisions) with seq > cursor."""
        if isinstance(cursor, bool) or not isinstance(cursor, int):
            raise InvalidCursorError(f"cursor must be an integer, got {cursor!r}")
        if not 0 <= cursor <= self._log.last_seq:
            raise InvalidCursorError(f"cursor {cursor} outside [0, {self._log.last_seq}]")
        events = [
            r for r in self._log.since(cursor)
            if r.type in INBOUND_TYPES
            and (r.type != "message" or r.payload["sender"] == Role.USER.value)
        ]
        return events, self._log.last_seq

    def send_message(self, conversation: str, body: str) -> Message:
        conv = self.conversation(conversation)
        self._emit("message", conversation=conversation, user=conv.participant,
                   payload={"sender": Role.BOT.value, "body": body})
        return conv.messages[-1]

    def archive(self, conversation: str, *, actor: str = "bot") -> Conversation:
        conv = self.conversation(conversation)
        if not conv.archived:
            self._emit("archive", conversation=conversation, user=conv.participant,
                       payload={"actor": actor})
        return conv

    def unarchive(self, conversation: str, *, actor: str = "bot") -> Conversation:
        conv = self.conversation(conversation)
        if conv.archived:
            self._emit("unarchive", conversation=conversation, user=conv.participant,
                       payload={"actor": actor})
        return conv

    def add_private_note(self, conversation: str, body: str) -> Message:
        if conversation == MOD_DISCUSSION and conversation not in self.conversations:
            participant = None
        else:
            participant = self.conversation(conversation).participant
        self._emit("note", conversation=conversation, user=participant,
                   payload={"sender": Role.BOT.value, "body": body})
        return self.conversations[conversation].messages[-1]

    def mute(self, user: str, days: int) -> None:
        days = validate_mute_days(days)
        self._emit("mute", user=user, payload={"days": days})

    # event application

    def _ensure(self, conv_id: str, participant: str | None, seq: int) -> Conversation:
        conv = self.conversations.get(conv_id)
        if conv is None:
            conv = Conversation(conv_id, participant, bumped=seq, muted_until=self.mutes.get(participant))
            self.conversations[conv_id] = conv
            if participant is not None:
                self._by_user.setdefault(participant, []).append(conv_id)
        return conv

    def _set_mute(self, user: str, until: float) -> None:
        self.mutes[user] = until
        for cid in self._by_user.get(user, ()):
            self.conversations[cid].muted_until = until

    def apply(self, rec: EventRecord) -> None:
        t = rec.type
        if t == "message" or t == "note":
            conv = self._ensure(rec.conversation, rec.user, rec.seq)
            sender = Role(rec.payload["sender"])
            conv.messages.append(
                Message(f"m{rec.seq}", rec.conversation, sender, rec.payload["body"],
                        t == "note", rec.ts, rec.seq)
            )
            if sender is not Role.BOT and not conv.archived:
                conv.bumped = rec.seq
        elif t == "archive":
            self.conversations[rec.conversation].archived = True
        elif t == "unarchive":
            conv = self.conversations[rec.conversation]
            conv.archived = False
            conv.bumped = rec.seq
        elif t == "ban":
            self.bans[rec.user] = BanRecord(
                rec.user, rec.payload.get("reason"), bool(rec.payload.get("permanent", True)), rec.ts
            )
        elif t == "mute":
            self._set_mute(rec.user, rec.ts + rec.payload["days"] * DAY)
        elif t == "decision":
            decision = rec.payload["decision"]
            if decision == "granted" and rec.user in self.bans:
                self.bans[rec.user].active = False
            elif decision == "muted":
                self._set_mute(rec.user, rec.ts + rec.payload["mute_days"] * DAY)

    handled_types = ("message", "note", "archive", "unarchive", "ban", "mute", "decision")

    def state(self) -> dict:
        return {
            "conversations": {k: v.state() for k, v in sorted(self.conversations.items())},
            "bans": {
                u: (b.reason, b.permanent, b.banned_at, b.active) for u, b in sorted(self.bans.items())
            },
            "mutes": dict(sorted(self.mutes.items())),
        }
