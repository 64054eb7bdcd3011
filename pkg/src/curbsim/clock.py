"""Fixed-step simulation clock.

Time is held as an integer tick count so that `t == tick_count * dt`
holds bit-exactly forever; accumulating floats would drift and break
replay determinism.
"""

from __future__ import annotations


class SimClock:
    __slots__ = ("_dt", "_tick_count")

    def __init__(self, dt: float = 0.01):
        if dt <= 0.0:
            raise ValueError(f"dt must be positive, got {dt}")
        self._dt = float(dt)
        self._tick_count = 0

    @property
    def dt(self) -> float:
        return self._dt

    @property
    def tick_count(self) -> int:
        return self._tick_count

    @property
    def t(self) -> float:
        return self._tick_count * self._dt

    def advance(self, ticks: int = 1) -> float:
        if ticks < 0:
            raise ValueError("cannot step backwards")
        self._tick_count += ticks
        return self.t

    def reset(self) -> None:
        self._tick_count = 0

    def __repr__(self) -> str:
        return f"SimClock(t={self.t:.3f}, dt={self._dt}, tick={self._tick_count})"
