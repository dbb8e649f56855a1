"""User-to-user resource block resale: buffer model, auction and scenario runs."""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    GIGABIT,
    MEGABIT,
    ArrivalClass,
    UserProfile,
    UtilitySpec,
    net_change,
    settle_slot,
    utility,
)
from .market import ClearingResult, MarketClosedError, Participant, Role, run_auction  # noqa: E402
from .oracle import solve_p1, verify_ne  # noqa: E402
from .simulation import RunMetrics, ScenarioConfig, Scheme, run_scenario  # noqa: E402

__all__ = [
    "GIGABIT", "MEGABIT", "ArrivalClass", "UserProfile", "UtilitySpec", "net_change",
    "settle_slot", "utility", "ClearingResult", "MarketClosedError", "Participant", "Role",
    "run_auction", "solve_p1", "verify_ne", "RunMetrics", "ScenarioConfig", "Scheme",
    "run_scenario",
]
