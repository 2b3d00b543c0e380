"""Persistent randomized group assignment.

A user's group is drawn once from a keyed hash of ``(seed, user)`` and then
stored; later episodes for the same user reuse the stored assignment.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from enum import Enum


class Group(str, Enum):
    CONTROL = "control"
    TREATMENT = "treatment"


@dataclass(frozen=True)
class Assignment:
    user: str
    group: Group
    assigned_at: float


def hash_unit(seed: int | str, user: str) -> float:
    """Map ``(seed, user)`` to a uniform value in [0, 1)."""
    digest = hashlib.blake2b(
        user.encode("utf-8"), key=str(seed).encode("utf-8")[:64], digest_size=8
    ).digest()
    return int.from_bytes(digest, "big") / 2.0**64


def draw_group(seed: int | str, user: str, ratio: float) -> Group:
    """Treatment with probability ``ratio``."""
    return Group.TREATMENT if hash_unit(seed, user) < ratio else Group.CONTROL


class AssignmentStore:
    """Assignments backed by the event log (``assignment`` records)."""

    def __init__(self, emit=None, clock=None, *, ratio: float = 0.5, seed: int | str = 0):
        if not 0.0 <= ratio <= 1.0:
            raise ValueError("ratio must lie in [0, 1]")
        self._emit = emit
        self._clock = clock
        self.ratio = ratio
        self.seed = seed
        self._by_user: dict[str, Assignment] = {}

    def get(self, user: str) -> Assignment | None:
        return self._by_user.get(user)

    def assign(self, user: str) -> Assignment:
        existing = self._by_user.get(user)
        if existing is not None:
            return existing
        group = draw_group(self.seed, user, self.ratio)
        now = self._clock.now if self._clock is not None else 0.0
        if self._emit is None:
            self._by_user[user] = Assignment(user, group, now)
        else:
            self._emit("assignment", user=user, payload={"group": group.value})
        return self._by_user[user]

    def apply(self, rec) -> None:
        if rec.user in self._by_user:
            return
        self._by_user[rec.user] = Assignment(rec.user, Group(rec.payload["group"]), rec.ts)

    def state(self) -> dict:
        return {u: (a.group.value, a.assigned_at) for u, a in sorted(self._by_user.items())}

    def __len__(self) -> int:
        return len(self._by_user)
