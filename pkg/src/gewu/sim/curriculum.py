"""Assist-force curriculum: the decay schedule and the tilted support vector.

The assist fraction follows a piecewise-constant staircase::

    lam(t) = max(0, 1.0 - 0.2 * max(0, floor((t - 500_000) / 100_000)))

full support for the first 500k steps, then -0.2 per 100k steps, zero from
step 1,000,000 on.  Plateau values are computed in exact rational
arithmetic so the set {1.0, 0.8, 0.6, 0.4, 0.2, 0.0} holds bit-exactly.

The force itself is vertical with a small forward tilt along the robot's
heading: magnitude ``lam * 0.5 * m * g``, direction
``(sin(tilt)cos(yaw), sin(tilt)sin(yaw), cos(tilt))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np


def _plateau_levels(decrement: str) -> tuple[float, ...]:
    step = Fraction(decrement)
    if not 0 < step <= 1:
        raise ValueError(f"decrement {decrement} outside (0, 1]")
    levels = []
    value = Fraction(1)
    while value > 0:
        levels.append(float(value))
        value -= step
    levels.append(0.0)
    return tuple(levels)


@dataclass(frozen=True)
class CurriculumSchedule:
    start_step: int = 500_000
    step_interval: int = 100_000
    decrement: str = "0.2"
    assist_weight_fraction: float = 0.5
    tilt_deg: float = 5.0
    gravity: float = 9.81
    levels: tuple[float, ...] = field(init=False)

    def __post_init__(self) -> None:
        if self.start_step < 0 or self.step_interval < 1:
            raise ValueError("breakpoints must be positive")
        object.__setattr__(self, "levels", _plateau_levels(self.decrement))

    def compressed(self, divisor: float) -> "CurriculumSchedule":
        """Divide both breakpoints uniformly; plateau structure is preserved."""
        if divisor <= 0:
            raise ValueError("divisor must be positive")
        return CurriculumSchedule(
            start_step=max(1, int(self.start_step / divisor)),
            step_interval=max(1, int(self.step_interval / divisor)),
            decrement=self.decrement,
            assist_weight_fraction=self.assist_weight_fraction,
            tilt_deg=self.tilt_deg,
            gravity=self.gravity,
        )

    @property
    def zero_step(self) -> int:
        """First step at which the assist fraction reaches zero."""
        return self.start_step + (len(self.levels) - 1) * self.step_interval


DEFAULT_SCHEDULE = CurriculumSchedule()


def lambda_at(t: int, sched: CurriculumSchedule = DEFAULT_SCHEDULE) -> float:
    """Exact staircase evaluation; integer floor, no interpolation."""
    if t < 0:
        raise ValueError(f"training step {t} is negative")
    k = max(0, (int(t) - sched.start_step) // sched.step_interval)
    return sched.levels[min(k, len(sched.levels) - 1)]


def assist_direction(heading: float, sched: CurriculumSchedule) -> np.ndarray:
    tilt = math.radians(sched.tilt_deg)
    return np.array([
        math.sin(tilt) * math.cos(heading),
        math.sin(tilt) * math.sin(heading),
        math.cos(tilt),
    ])


def assist_force(body, lam: float, sched: CurriculumSchedule = DEFAULT_SCHEDULE
                 ) -> np.ndarray:
    """Support force on the torso in world (x, y, up) coordinates, newtons.

    ``body`` provides ``mass`` and ``heading``; anything duck-typed works.
    """
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"assist fraction {lam} outside [0, 1]")
    if lam == 0.0:
        return np.zeros(3)
    magnitude = lam * sched.assist_weight_fraction * body.mass * sched.gravity
    return magnitude * assist_direction(body.heading, sched)
