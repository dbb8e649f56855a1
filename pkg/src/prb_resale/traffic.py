"""Truncated Pareto arrivals with the shape fitted to a target mean.

The density on ``[lower, upper]`` is proportional to ``x**(-shape - 1)``.
Negative shapes are allowed so that any mean strictly inside the interval is
reachable (``shape = -1`` is the uniform distribution).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import ArrivalClass

SHAPE_BRACKET = (-60.0, 500.0)


class InfeasibleMeanError(ValueError):
    pass


def truncated_pareto_mean(shape: float, lower: float, upper: float) -> float:
    log_r = math.log(upper / lower)
    if abs(shape) < 1e-12:
        return (upper - lower) / log_r
    if abs(shape - 1.0) < 1e-12:
        return lower * upper * log_r / (upper - lower)
    # both factors computed with expm1 to stay accurate near shape 0 and 1
    num = math.expm1((1.0 - shape) * log_r) / (1.0 - shape)
    den = -math.expm1(-shape * log_r) / shape
    return lower * num / den


def fit_pareto_shape(lower: float, upper: float, mean: float, tol: float = 1e-13) -> float:
    """Bisection on the shape until the analytic truncated mean hits ``mean``."""
    if not 0 < lower < upper:
        raise ValueError(f"need 0 < lower < upper, got {lower}, {upper}")
    if not lower < mean < upper:
        raise InfeasibleMeanError(f"mean {mean} outside ({lower}, {upper})")
    lo, hi = SHAPE_BRACKET
    # mean is decreasing in shape
    if not truncated_pareto_mean(hi, lower, upper) < mean < truncated_pareto_mean(lo, lower, upper):
        raise InfeasibleMeanError(
            f"no shape in {SHAPE_BRACKET} gives mean {mean} on [{lower}, {upper}]")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if truncated_pareto_mean(mid, lower, upper) > mean:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * max(1.0, abs(mid)):
            break
    return 0.5 * (lo + hi)


def sample_truncated_pareto(rng: np.random.Generator, shape: float, lower: float,
                            upper: float, size=None):
    u = rng.random(size)
    if abs(shape) < 1e-12:
        return lower * np.exp(u * math.log(upper / lower))
    tail = (lower / upper) ** shape
    return lower * (1.0 - u * (1.0 - tail)) ** (-1.0 / shape)


@dataclass(frozen=True)
class TrafficModel:
    arrival_class: ArrivalClass
    lower: float
    upper: float
    mean: float
    shape: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "shape", fit_pareto_shape(self.lower, self.upper, self.mean))

    def sample(self, rng: np.random.Generator, size=None):
        x = sample_truncated_pareto(rng, self.shape, self.lower, self.upper, size)
        return float(x) if size is None else x
