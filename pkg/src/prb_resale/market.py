"""Per-slot RB resale game: roles, bids, modified payoffs and the broker's
iterative price adjustment.

A buyer's bid ``b`` buys ``a = b / p`` RBs; a seller's bid is the money it
puts on the part of its quota it keeps, so ``a = b / p - q``. With the price
``p = sum(b) / sum(seller quotas)`` the market clears by construction, which
is what makes the game well posed.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .core import UtilitySpec, utility, utility_gradient_wrt_trade
from .numerics import OptimizerError, adaptive_simpson, golden_section_max
from .predictors import LossPredictor, one_step

DEFAULT_MAX_ROUNDS = 10_000


class Role(str, enum.Enum):
    BUYER = "buyer"
    SELLER = "seller"


class MarketClosedError(RuntimeError):
    """Fewer than one buyer or two sellers with a positive quota."""


class ZeroPriceError(ValueError):
    pass


@dataclass
class Participant:
    """One user's view of the market in a given slot.

    ``base_loss`` is the loss the predictor starts from when no RBs change
    hands; trade utility is ``utility(pl(a))`` with ``pl`` from ``predictor``.
    """

    id: int
    quota: float
    efficiency: float
    utility: UtilitySpec
    base_loss: float
    predictor: LossPredictor = field(default_factory=one_step)

    def predicted_loss(self, trade: float) -> float:
        return self.predictor.predict(self.base_loss, self.efficiency, trade)

    def trade_utility(self, trade: float) -> float:
        return utility(self.utility, self.predicted_loss(trade))

    def marginal_utility(self, trade: float) -> float:
        """dU/da, taken on the buying side at kinks of a floored predictor."""
        gain = self.predictor.rate(self.base_loss, self.efficiency, trade)
        return utility_gradient_wrt_trade(self.utility, self.predicted_loss(trade),
                                          self.efficiency, gain)

    @property
    def domain_floor(self) -> float:
        """Trade at which the predicted loss reaches ``d_max`` (-inf if never)."""
        slope = self.predictor.gain * self.efficiency
        if slope <= 0:
            return -math.inf
        return (self.base_loss - self.utility.d_max) / slope

    def trade_bounds(self, role: Role, seller_quota_total: float) -> tuple[float, float]:
        if role is Role.BUYER:
            return 0.0, seller_quota_total
        return max(-self.quota, self.domain_floor), 0.0


@dataclass(frozen=True)
class RoleAssignment:
    buyers: frozenset
    sellers: frozenset
    mean_willingness: float

    def role_of(self, uid) -> Role | None:
        if uid in self.buyers:
            return Role.BUYER
        if uid in self.sellers:
            return Role.SELLER
        return None

    @classmethod
    def from_roles(cls, roles: Mapping[int, Role], mean_willingness: float = math.nan):
        return cls(frozenset(u for u, r in roles.items() if r is Role.BUYER),
                   frozenset(u for u, r in roles.items() if r is Role.SELLER),
                   mean_willingness)


@dataclass
class MarketRound:
    index: int
    price: float
    bids: dict
    allocations: dict
    excess_demand: float
    buyer_bids: float = 0.0
    seller_bids: float = 0.0
    total_demand: float = 0.0
    total_supply: float = 0.0
    social_welfare: float = 0.0


@dataclass
class ClearingResult:
    clearing_price: float
    trades: dict
    bids: dict
    rounds_used: int
    converged: bool
    residual: float = 0.0
    supply: float = 0.0
    roles: dict = field(default_factory=dict)
    rounds: list = field(default_factory=list)


def willingness(participant: Participant) -> float:
    """Marginal utility of a first RB bought (utils per RB)."""
    return participant.marginal_utility(0.0)


def assign_roles(willingness_by_user: Mapping[int, float]) -> RoleAssignment:
    """Users strictly below the mean willingness sell; the rest buy."""
    if not willingness_by_user:
        raise ValueError("need at least one participant")
    mean = sum(willingness_by_user.values()) / len(willingness_by_user)
    sellers = frozenset(u for u, w in willingness_by_user.items() if w < mean)
    buyers = frozenset(willingness_by_user) - sellers
    return RoleAssignment(buyers, sellers, mean)


def allocation_from_bid(bid: float, price: float, role: Role, quota: float = 0.0,
                        cap: float = math.inf) -> float:
    if price <= 0:
        raise ZeroPriceError(f"price must be positive, got {price}")
    if role is Role.BUYER:
        return min(bid / price, cap)
    return min(bid / price - quota, cap)


def bid_from_allocation(trade: float, price: float, role: Role, quota: float = 0.0) -> float:
    if role is Role.BUYER:
        return price * trade
    return price * (trade + quota)


def integrated_trade_utility(participant: Participant, trade: float) -> float:
    """``integral_0^trade U(y) dy`` with U the trade utility.

    Closed form for the square-root family under an unfloored predictor,
    adaptive Simpson otherwise.
    """
    p = participant
    lo = min(0.0, trade)
    if p.predictor.is_linear and lo > p.domain_floor:
        s, d_max = p.utility.sensitivity, p.utility.d_max
        y0 = math.sqrt(d_max - p.base_loss)
        y1 = math.sqrt(d_max - p.predicted_loss(trade))
        # integral of sqrt(A + B y) over [0, a], written without cancellation
        root_part = 2.0 * trade / 3.0 * (y1 * y1 + y1 * y0 + y0 * y0) / (y1 + y0)
        return s * (root_part - trade * math.sqrt(d_max))
    return adaptive_simpson(p.trade_utility, 0.0, trade)


def modified_utility(participant: Participant, trade: float, share_base: float) -> float:
    """``(1 - a/Q) U(a) + (1/Q) int_0^a U``; its slope is ``(1 - a/Q) U'(a)``."""
    if not share_base > 0:
        raise ValueError(f"share base must be positive, got {share_base}")
    return ((1.0 - trade / share_base) * participant.trade_utility(trade)
            + integrated_trade_utility(participant, trade) / share_base)


def modified_marginal(participant: Participant, trade: float, share_base: float) -> float:
    return (1.0 - trade / share_base) * participant.marginal_utility(trade)


def modified_buyer_utility(trade: float, participant: Participant,
                           seller_quota_total: float) -> float:
    if not 0.0 <= trade <= seller_quota_total:
        raise ValueError(f"buyer trade {trade} outside [0, {seller_quota_total}]")
    return modified_utility(participant, trade, seller_quota_total)


def modified_seller_utility(trade: float, participant: Participant,
                            other_seller_quota: float) -> float:
    if other_seller_quota <= 0:
        raise MarketClosedError("a seller needs at least one competing seller")
    if not -participant.quota <= trade <= 0.0:
        raise ValueError(f"seller trade {trade} outside [{-participant.quota}, 0]")
    return modified_utility(participant, trade, other_seller_quota)


def share_base(participant: Participant, role: Role, seller_quota_total: float) -> float:
    if role is Role.BUYER:
        return seller_quota_total
    return seller_quota_total - participant.quota


def _closed_form_trade(p: Participant, price: float, share: float, lo: float, hi: float) -> float:
    # stationarity (1 - a/Q) C / sqrt(A + B a) = price, squared into a quadratic;
    # the smaller root is the one with 1 - a/Q >= 0
    gain_f = p.predictor.gain * p.efficiency
    if gain_f <= 0:
        return lo
    c = 0.5 * gain_f * p.utility.sensitivity
    a0 = p.utility.d_max - p.base_loss
    c2 = c * c
    disc = price * math.sqrt(4.0 * c2 * gain_f / share + (price * gain_f) ** 2
                             + 4.0 * c2 * a0 / (share * share))
    root = 2.0 * (c2 - price * price * a0) / (2.0 * c2 / share + price * price * gain_f + disc)
    return min(hi, max(lo, root))


def best_response_trade(participant: Participant, price: float, role: Role,
                        seller_quota_total: float, method: str = "auto") -> float:
    """Trade maximising the modified payoff ``Umod(a) - price * a`` at a fixed price."""
    if price <= 0:
        raise ZeroPriceError(f"price must be positive, got {price}")
    share = share_base(participant, role, seller_quota_total)
    if share <= 0:
        raise MarketClosedError("a seller needs at least one competing seller")
    lo, hi = participant.trade_bounds(role, seller_quota_total)
    if hi < lo:
        raise OptimizerError(f"empty feasible interval for user {participant.id}")
    if method == "auto":
        method = "closed" if participant.predictor.is_linear else "golden"
    if method == "closed":
        return _closed_form_trade(participant, price, share, lo, hi)
    if method != "golden":
        raise ValueError(f"unknown method {method!r}")

    def payoff(a):
        return modified_utility(participant, a, share) - price * a

    return golden_section_max(payoff, lo, hi)


def best_response_bid(participant: Participant, price: float, role: Role,
                      seller_quota_total: float, method: str = "auto") -> float:
    a = best_response_trade(participant, price, role, seller_quota_total, method)
    return max(0.0, bid_from_allocation(a, price, role, participant.quota))


def update_price(price: float, bids, seller_quota_total: float, delta: float) -> float:
    """One broker step: move the price along the excess demand, projected at 0.

    ``sum(bids) / price - supply`` is the signed excess demand in RBs; the
    price rises when buyers want more than sellers release.
    """
    total = bids if isinstance(bids, (int, float)) else sum(bids)
    return max(0.0, price + delta * (total / price - seller_quota_total))


def _ration(trades: dict, buyers, sellers) -> dict:
    """Scale the long side of the book so that trades sum to zero."""
    demand = sum(trades[u] for u in buyers)
    supply = -sum(trades[u] for u in sellers)
    out = dict(trades)
    if demand > supply:
        k = supply / demand
        for u in buyers:
            out[u] = trades[u] * k
    elif supply > demand:
        k = demand / supply
        for u in sellers:
            out[u] = trades[u] * k
    return out


def market_participants(participants: Sequence[Participant], roles) -> tuple[list, list]:
    """Split into (buyers, sellers); zero-quota sellers are left out."""
    if not isinstance(roles, RoleAssignment):
        roles = RoleAssignment.from_roles(roles)
    buyers = [p for p in participants if p.id in roles.buyers]
    sellers = [p for p in participants if p.id in roles.sellers and p.quota > 0]
    return buyers, sellers


def check_market_open(buyers, sellers) -> None:
    if len(buyers) < 1 or len(sellers) < 2:
        raise MarketClosedError(
            f"market closed: {len(buyers)} buyer(s), {len(sellers)} seller(s)")


def run_auction(participants: Sequence[Participant], roles, p0: float = 1.095,
                delta: float = 1e-6, eps: float = 1e-5,
                max_rounds: int = DEFAULT_MAX_ROUNDS, trace: bool = False,
                method: str = "auto") -> ClearingResult:
    """Iterative bidding until the relative price change drops to ``eps``.

    Raises :class:`MarketClosedError` unless there is at least one buyer and
    two sellers. On convergence the long side is rationed so trades sum to
    zero exactly and the bids are restated at the clearing price.
    """
    buyers, sellers = market_participants(participants, roles)
    check_market_open(buyers, sellers)
    if p0 <= 0 or delta <= 0:
        raise ValueError("initial price and step size must be positive")
    supply = sum(s.quota for s in sellers)
    book = [(p, Role.BUYER) for p in buyers] + [(p, Role.SELLER) for p in sellers]
    role_of = {p.id: r for p, r in book}
    responders = [_responder(p, r, supply, method) for p, r in book]
    buyer_ids = [p.id for p in buyers]
    seller_ids = [p.id for p in sellers]

    rounds = []
    price = p0
    k = 0
    converged = False
    while True:
        trades = {p.id: fn(price) for (p, _), fn in zip(book, responders)}
        excess = sum(trades.values())
        nxt = max(0.0, price + delta * excess)
        if trace:
            rounds.append(_round_record(k, price, trades, book, buyer_ids, seller_ids))
        k += 1
        if nxt == 0.0:
            break
        if abs(nxt - price) / price <= eps:
            price = nxt
            converged = True
            break
        price = nxt
        if k >= max_rounds:
            break

    if not converged:
        zeros = {p.id: 0.0 for p, _ in book}
        return ClearingResult(price, zeros, {}, k, False, excess, supply, role_of, rounds)

    trades = {p.id: fn(price) for (p, _), fn in zip(book, responders)}
    residual = sum(trades.values())
    trades = _ration(trades, buyer_ids, seller_ids)
    bids = {p.id: max(0.0, bid_from_allocation(trades[p.id], price, r, p.quota))
            for p, r in book}
    return ClearingResult(price, trades, bids, k, True, residual, supply, role_of, rounds)


def _responder(p: Participant, role: Role, supply: float, method: str):
    share = share_base(p, role, supply)
    lo, hi = p.trade_bounds(role, supply)
    if method == "auto":
        method = "closed" if p.predictor.is_linear else "golden"
    if method == "closed":
        return lambda price: _closed_form_trade(p, price, share, lo, hi)
    return lambda price: best_response_trade(p, price, role, supply, method)


def _round_record(k, price, trades, book, buyer_ids, seller_ids) -> MarketRound:
    bids = {p.id: max(0.0, bid_from_allocation(trades[p.id], price, r, p.quota))
            for p, r in book}
    demand = sum(trades[u] for u in buyer_ids)
    supply = -sum(trades[u] for u in seller_ids)
    rationed = _ration(trades, buyer_ids, seller_ids)
    welfare = sum(p.trade_utility(rationed[p.id]) for p, _ in book)
    return MarketRound(
        index=k, price=price, bids=bids, allocations=dict(trades),
        excess_demand=demand - supply,
        buyer_bids=sum(bids[u] for u in buyer_ids),
        seller_bids=sum(bids[u] for u in seller_ids),
        total_demand=demand, total_supply=supply, social_welfare=welfare)
