"""Buffer dynamics, loss/wastage accounting and the square-root utility family.

All data quantities are in bits. Trades ``a`` are real-valued RB counts
(positive when buying, negative when selling).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

MEGABIT = 1e6
GIGABIT = 1e9


class DegenerateDomainError(ValueError):
    """Raised when a utility slope is requested at or beyond ``d_max``."""


class ArrivalClass(str, enum.Enum):
    HIGH_BANDWIDTH = "HB"
    LOW_RATE = "LR"


@dataclass(frozen=True)
class UtilitySpec:
    sensitivity: float
    d_max: float

    def __post_init__(self):
        if not self.sensitivity > 0 or not self.d_max > 0:
            raise ValueError(f"sensitivity and d_max must be positive: {self}")


@dataclass(frozen=True)
class UserProfile:
    """Static per-user parameters."""

    id: int
    buffer_capacity: float
    quota: float
    sensitivity: float
    arrival_class: ArrivalClass
    d_max: float

    def __post_init__(self):
        if self.buffer_capacity <= 0:
            raise ValueError(f"user {self.id}: buffer_capacity must be > 0")
        if self.quota < 0:
            raise ValueError(f"user {self.id}: quota must be >= 0")
        if self.sensitivity <= 0 or self.d_max <= 0:
            raise ValueError(f"user {self.id}: sensitivity and d_max must be > 0")

    @property
    def utility_spec(self) -> UtilitySpec:
        return UtilitySpec(self.sensitivity, self.d_max)


@dataclass
class UserSlotState:
    occupied: float
    empty: float
    arrival: float = 0.0
    efficiency: float = 0.0
    loss: float = 0.0
    wastage: float = 0.0
    trade: float = 0.0


def net_change(arrival: float, efficiency: float, quota: float) -> float:
    """Arrivals minus quota throughput; negative when the quota covers the work."""
    return arrival - efficiency * quota


def settle_slot(occupied, capacity, change, efficiency, trade):
    """Apply one slot of FIFO buffer dynamics.

    ``change`` is the net change before trading and ``efficiency * trade`` the
    extra throughput bought (or given up). Returns ``(occupied_next, loss,
    wastage)``; overflow beyond ``capacity`` is lost and service beyond the
    buffered data is wasted.
    """
    x = change - efficiency * trade
    level = occupied + x
    loss = max(0.0, level - capacity)
    wastage = max(0.0, -level)
    return min(capacity, max(0.0, level)), loss, wastage


def utility(spec: UtilitySpec, loss: float) -> float:
    """``s * (sqrt(d_max - loss) - sqrt(d_max))``.

    Losses above ``d_max`` are clamped to ``d_max``. Negative arguments are
    accepted: the bidding predictors pass signed overflow, where a negative
    value is spare buffer room and yields a positive utility.
    """
    arg = spec.d_max - min(loss, spec.d_max)
    return spec.sensitivity * (math.sqrt(arg) - math.sqrt(spec.d_max))


def utility_slope(spec: UtilitySpec, loss: float) -> float:
    """Derivative of :func:`utility` with respect to loss (always negative)."""
    if loss >= spec.d_max:
        raise DegenerateDomainError(
            f"loss {loss!r} is at or beyond d_max {spec.d_max!r}; slope unbounded"
        )
    return -spec.sensitivity / (2.0 * math.sqrt(spec.d_max - loss))


def utility_gradient_wrt_trade(spec: UtilitySpec, predicted_loss: float,
                               efficiency: float, gain: float = 1.0) -> float:
    """dU/da when the predicted loss falls by ``gain * efficiency`` per RB.

    ``gain`` is 1 for the one-step predictor, ``1/(1-gamma)`` for the
    discounted one and 0 where the prediction is pinned (flat).
    """
    if gain == 0.0 or efficiency == 0.0:
        return 0.0
    return -utility_slope(spec, predicted_loss) * gain * efficiency
