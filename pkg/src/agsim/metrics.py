"""Kinematic and error statistics behind every task report."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import EmptyLog, EmptySeries


@dataclass(frozen=True)
class TrajStats:
    duration: float
    total_length: float
    average_speed: float
    n_range: tuple[float, float]
    e_range: tuple[float, float]
    alt_range: tuple[float, float]  # altitude = -d, up-positive


@dataclass(frozen=True)
class ErrorStats:
    mean: float
    variance: float  # population variance (divide by N)
    max: float
    count: int


def traj_stats(samples) -> TrajStats:
    """Statistics of a stamped pose series of (seconds, n, e, d) tuples.

    total_length sums consecutive 3-D segment lengths; average_speed is
    exactly total_length / duration (0 for a single sample).
    """
    samples = list(samples)
    if not samples:
        raise EmptyLog("trajectory log has no samples")
    length = 0.0
    for (_, n0, e0, d0), (_, n1, e1, d1) in zip(samples, samples[1:]):
        length += math.sqrt((n1 - n0) ** 2 + (e1 - e0) ** 2 + (d1 - d0) ** 2)
    duration = samples[-1][0] - samples[0][0]
    speed = length / duration if duration > 0 else 0.0
    ns = [s[1] for s in samples]
    es = [s[2] for s in samples]
    alts = [-s[3] for s in samples]
    return TrajStats(duration, length, speed, (min(ns), max(ns)), (min(es), max(es)), (min(alts), max(alts)))


def error_stats(errors) -> ErrorStats:
    errors = list(errors)
    if not errors:
        raise EmptySeries("error series is empty")
    n = len(errors)
    mean = sum(errors) / n
    var = sum((x - mean) ** 2 for x in errors) / n
    return ErrorStats(mean, var, max(errors), n)


def traj_stats_dict(stats: TrajStats) -> dict:
    return {
        "duration_s": stats.duration,
        "total_length_m": stats.total_length,
        "average_speed_mps": stats.average_speed,
        "n_range_m": list(stats.n_range),
        "e_range_m": list(stats.e_range),
        "alt_range_m": list(stats.alt_range),
    }


def error_stats_dict(stats: ErrorStats) -> dict:
    return {
        "mean_m": stats.mean,
        "variance_m2": stats.variance,
        "max_m": stats.max,
        "count": stats.count,
    }
