"""Entropy temperature schedules."""

from __future__ import annotations

import math
from dataclasses import dataclass

KINDS = ("constant", "exponential")


@dataclass
class TemperatureSchedule:
    """alpha_k = alpha0 (constant) or alpha0 * decay_rate**k (exponential).

    ``step()`` returns the current temperature and then advances ``k``.
    """

    kind: str = "constant"
    alpha0: float = 0.0
    decay_rate: float = 1.0
    k: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"schedule kind must be one of {KINDS}, got {self.kind!r}")
        if not (isinstance(self.alpha0, (int, float)) and math.isfinite(self.alpha0) and self.alpha0 >= 0):
            raise ValueError(f"alpha0 must be a finite value >= 0, got {self.alpha0!r}")
        if not 0.0 < self.decay_rate <= 1.0:
            raise ValueError(f"decay_rate must lie in (0, 1], got {self.decay_rate!r}")
        if self.k < 0:
            raise ValueError("step counter must be >= 0")

    @classmethod
    def constant(cls, alpha):
        return cls("constant", alpha)

    @classmethod
    def exponential(cls, alpha0, decay_rate=0.99):
        return cls("exponential", alpha0, decay_rate)

    def value(self, k=None) -> float:
        k = self.k if k is None else k
        if self.kind == "constant":
            return float(self.alpha0)
        return float(self.alpha0 * self.decay_rate**k)

    def step(self) -> float:
        alpha = self.value()
        self.k += 1
        return alpha

    def steps_below(self, threshold) -> int:
        """Smallest k with alpha_k < threshold; raises if the schedule never gets there."""
        if self.alpha0 < threshold:
            return 0
        if self.kind == "constant" or self.decay_rate == 1.0:
            raise ValueError("a non-decaying schedule never drops below its initial value")
        k = math.floor(math.log(threshold / self.alpha0) / math.log(self.decay_rate)) + 1
        while self.value(k) >= threshold:
            k += 1
        while k > 0 and self.value(k - 1) < threshold:
            k -= 1
        return k


def schedule_step(schedule: TemperatureSchedule) -> float:
    return schedule.step()
