"""Maximum safe speed selection.

The safe speed is the largest candidate limit whose collision probability
stays strictly below an acceptance threshold.  Collision probability is
assumed non-decreasing in the limit (faster means sweeping more space before
being able to stop), which turns the selection into a binary search over the
level grid; the exhaustive scan is kept both as the search oracle and as a
runtime fallback for evaluations that break the assumption.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

THRESHOLD_KINDS = ("constant", "linear", "exponential")


@dataclass(frozen=True)
class ThresholdFunction:
    """Acceptable collision probability as a function of the speed limit.

    constant:     p0
    linear:       max(p_floor, p0 - k*v)
    exponential:  max(p_floor, p0 * exp(-k*v))

    Decreasing families demand more certainty at speed, which keeps the chosen
    limit from slamming between extremes when the estimate quality wobbles.
    """

    kind: str
    p0: float = 0.2
    k: float = 0.0
    p_floor: float = 0.0

    def __post_init__(self):
        if self.kind not in THRESHOLD_KINDS:
            raise ValueError(f"kind must be one of {THRESHOLD_KINDS}")
        if not (0.0 <= self.p0 <= 1.0):
            raise ValueError("p0 must lie in [0, 1]")
        if not (0.0 <= self.p_floor <= self.p0):
            raise ValueError("p_floor must lie in [0, p0]")
        if self.k < 0.0 or not math.isfinite(self.k):
            raise ValueError("k must be non-negative and finite")


def threshold(tf: ThresholdFunction, v: float) -> float:
    """Threshold value at speed v >= 0; non-increasing in v by construction."""
    if v < 0.0:
        raise ValueError("speed must be non-negative")
    if tf.kind == "constant":
        return tf.p0
    if tf.kind == "linear":
        return max(tf.p_floor, tf.p0 - tf.k * v)
    return max(tf.p_floor, tf.p0 * math.exp(-tf.k * v))


@dataclass(frozen=True)
class SpeedGrid:
    """Evenly spaced candidate limits from 0 to v_max inclusive."""

    v_max: float
    levels: int = 41

    def __post_init__(self):
        if not (self.v_max > 0.0 and math.isfinite(self.v_max)):
            raise ValueError("v_max must be positive and finite")
        if self.levels < 2:
            raise ValueError("need at least 2 levels")

    def level(self, i: int) -> float:
        return self.v_max * i / (self.levels - 1)

    def all_levels(self) -> tuple[float, ...]:
        return tuple(self.level(i) for i in range(self.levels))


def max_evaluations(levels: int) -> int:
    """Evaluation budget of the binary search: ceil(log2(levels)) + 1."""
    return math.ceil(math.log2(levels)) + 1


def find_safe_speed(evaluate: Callable[[float], float], tf: ThresholdFunction,
                    grid: SpeedGrid) -> tuple[float, int]:
    """Largest grid level whose collision probability is strictly below the
    threshold, by binary search.

    Assumes evaluate() is non-decreasing over the levels; a tie with the
    threshold is unsafe.  Returns (speed, evaluation count).  When even level 0
    fails the returned speed is 0.0 and it is the caller's job to treat that
    as unsafe-at-rest rather than as a usable limit.
    """
    lo = 0
    hi = grid.levels - 1
    best = -1
    used = 0
    while lo <= hi:
        mid = (lo + hi) // 2
        v = grid.level(mid)
        used += 1
        if evaluate(v) < threshold(tf, v):
            best = mid
            lo = mid + 1
        else:
            hi = mid - 1
    return (grid.level(best) if best >= 0 else 0.0), used


def brute_force_safe_speed(evaluate: Callable[[float], float], tf: ThresholdFunction,
                           grid: SpeedGrid) -> float:
    """Ascending exhaustive scan with prefix semantics.

    Returns the largest level below its threshold such that every lower level
    is also below threshold.  On a non-monotone evaluation this can differ from
    the binary search, which may leap over an unsafe pocket; on monotone
    evaluations the two agree exactly.
    """
    best = -1
    for i in range(grid.levels):
        v = grid.level(i)
        if evaluate(v) < threshold(tf, v):
            best = i
        else:
            break
    return grid.level(best) if best >= 0 else 0.0
