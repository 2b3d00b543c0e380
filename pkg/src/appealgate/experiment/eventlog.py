"""Append-only event log with a JSON Lines persistence format.

The first line of a log file is a header ``{"schema": ..., "version": ...}``;
every following line is one :class:`EventRecord`. Sequence numbers start at 1
and increase by exactly one, so a gap or regression means the file is corrupt.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Any, Iterable, Iterator

SCHEMA = "appealgate.eventlog"
SCHEMA_VERSION = 1

EVENT_TYPES = frozenset(
    {
        "ban",
        "message",
        "bot_action",
        "archive",
        "unarchive",
        "note",
        "mute",
        "suppressed",
        "decision",
        "form_grant",
        "form_submit",
        "form_label",
        "outage",
        "assignment",
        "score",
    }
)


class CorruptLogError(ValueError):
    """The log violates ordering or schema rules."""


@dataclass(frozen=True, slots=True)
class EventRecord:
    seq: int
    ts: float
    type: str
    conversation: str | None = None
    user: str | None = None
    payload: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "seq": self.seq,
            "ts": self.ts,
            "type": self.type,
            "conversation": self.conversation,
            "user": self.user,
            "payload": self.payload,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "EventRecord":
        try:
            rec = cls(
                seq=int(data["seq"]),
                ts=float(data["ts"]),
                type=str(data["type"]),
                conversation=data.get("conversation"),
                user=data.get("user"),
                payload=dict(data.get("payload") or {}),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise CorruptLogError(f"malformed event record: {data!r}") from exc
        if rec.type not in EVENT_TYPES:
            raise CorruptLogError(f"unknown event type {rec.type!r} at seq {rec.seq}")
        return rec


class EventLog:
    """In-memory log; records are immutable once appended."""

    def __init__(self, records: Iterable[EventRecord] = ()):
        self._records: list[EventRecord] = []
        for rec in records:
            self.append_record(rec)

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self) -> Iterator[EventRecord]:
        return iter(self._records)

    def __getitem__(self, index):
        return self._records[index]

    @property
    def last_seq(self) -> int:
        return self._records[-1].seq if self._records else 0

    @property
    def last_ts(self) -> float:
        return self._records[-1].ts if self._records else 0.0

    def append(self, type: str, ts: float, conversation=None, user=None, payload=None) -> EventRecord:
        if type not in EVENT_TYPES:
            raise ValueError(f"unknown event type {type!r}")
        if ts < self.last_ts:
            raise CorruptLogError(f"timestamp regression: {ts} < {self.last_ts}")
        rec = EventRecord(self.last_seq + 1, ts, type, conversation, user, payload or {})
        self._records.append(rec)
        return rec

    def append_record(self, rec: EventRecord) -> EventRecord:
        if rec.type not in EVENT_TYPES:
            raise CorruptLogError(f"unknown event type {rec.type!r} at seq {rec.seq}")
        expected = self.last_seq + 1
        if rec.seq != expected:
            raise CorruptLogError(f"corrupt log: expected seq {expected}, found {rec.seq}")
        if rec.ts < self.last_ts:
            raise CorruptLogError(f"corrupt log: timestamp regression at seq {rec.seq}")
        self._records.append(rec)
        return rec

    def since(self, cursor: int) -> list[EventRecord]:
        """Records with seq strictly greater than ``cursor``."""
        return self._records[cursor:]

    def truncated(self, last_seq: int) -> "EventLog":
        return EventLog(self._records[:last_seq])

    # persistence

    def write_jsonl(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps({"schema": SCHEMA, "version": SCHEMA_VERSION}) + "\n")
            for rec in self._records:
                fh.write(json.dumps(rec.to_dict(), ensure_ascii=False, sort_keys=True) + "\n")

    @classmethod
    def read_jsonl(cls, path: str | os.PathLike) -> "EventLog":
        with open(path, encoding="utf-8") as fh:
            return cls.from_lines(fh)

    @classmethod
    def from_lines(cls, lines: Iterable[str]) -> "EventLog":
        it = iter(lines)
        try:
            header = json.loads(next(it))
        except StopIteration:
            raise CorruptLogError("log file is empty (missing header)") from None
        except json.JSONDecodeError as exc:
            raise CorruptLogError("unreadable log header") from exc
        if not isinstance(header, dict) or header.get("schema") != SCHEMA:
            raise CorruptLogError("not an event log (bad header)")
        if header.get("version") != SCHEMA_VERSION:
            raise CorruptLogError(f"unsupported log version {header.get('version')!r}")
        log = cls()
        for lineno, line in enumerate(it, start=2):
            if not line.strip():
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorruptLogError(f"line {lineno}: invalid JSON") from exc
            log.append_record(EventRecord.from_dict(data))
        return log
