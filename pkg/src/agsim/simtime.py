"""Unified simulation clock value."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class SimTime:
    """A point on the lockstep clock. seconds is always tick * dt."""

    tick: int
    seconds: float

    @classmethod
    def at(cls, tick: int, dt: float) -> "SimTime":
        return cls(tick, tick * dt)
