"""Logical clock advanced explicitly by whoever drives the system."""

from __future__ import annotations


class Clock:
    def __init__(self, start: float = 0.0):
        self._now = float(start)

    @property
    def now(self) -> float:
        return self._now

    def advance(self, seconds: float) -> float:
        if seconds < 0:
            raise ValueError("the clock only moves forward")
        self._now += seconds
        return self._now

    def set(self, t: float) -> float:
        if t < self._now:
            raise ValueError(f"cannot move clock back from {self._now} to {t}")
        self._now = float(t)
        return self._now


DAY = 86_400.0
