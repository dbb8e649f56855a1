"""Independent equilibrium computations.

``solve_p1`` finds the social optimum of the modified utilities by nested
bisection on the KKT system; it never calls the auction or the closed-form
best response. ``verify_ne`` checks unilateral deviations in the true game.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .market import (
    MarketClosedError,
    Participant,
    Role,
    RoleAssignment,
    allocation_from_bid,
    check_market_open,
    market_participants,
    modified_marginal,
    modified_utility,
    share_base,
)


class BracketError(ArithmeticError):
    pass


@dataclass
class KktSolution:
    trades: dict
    multiplier: float
    residual: float
    degenerate: bool = False
    multiplier_range: tuple = (math.nan, math.nan)


def _inner_trade(p: Participant, lam: float, share: float, lo: float, hi: float,
                 iters: int = 200) -> float:
    """Largest trade in [lo, hi] whose modified marginal still exceeds ``lam``.

    The modified marginal is non-increasing, so when no interior root exists
    the answer pins to the corner (``lo`` if even the first unit is worth less
    than ``lam``, ``hi`` if the last one is still worth more).
    """
    def g(a):
        if a <= p.domain_floor:
            return math.inf
        return modified_marginal(p, a, share) - lam

    if g(hi) > 0:
        return hi
    if g(lo) <= 0:
        return lo
    a, b = lo, hi
    for _ in range(iters):
        m = 0.5 * (a + b)
        if g(m) > 0:
            a = m
        else:
            b = m
        if b - a <= 1e-13 * max(1.0, abs(a), abs(b)):
            break
    return 0.5 * (a + b)


def solve_p1(participants, roles, tolerance: float = 1e-6) -> KktSolution:
    """Maximise the summed modified utilities subject to sum(a) = 0.

    Outer bisection on the multiplier ``lam``; for each candidate every user's
    stationarity condition ``(1 - a/Q) U'(a) = lam`` is solved by an inner
    bisection. ``tolerance`` is the admissible |sum(a)| in RBs.
    """
    buyers, sellers = market_participants(participants, roles)
    check_market_open(buyers, sellers)
    supply = sum(s.quota for s in sellers)
    book = []
    for p, role in [(b, Role.BUYER) for b in buyers] + [(s, Role.SELLER) for s in sellers]:
        lo, hi = p.trade_bounds(role, supply)
        book.append((p, share_base(p, role, supply), lo, hi))

    def trades_at(lam):
        return {p.id: _inner_trade(p, lam, q, lo, hi) for p, q, lo, hi in book}

    def excess(lam):
        return sum(trades_at(lam).values())

    lam_lo = 0.0
    corner = 0.0
    for p, q, lo, hi in book:
        for a in (lo, hi):
            if a > p.domain_floor:
                corner = max(corner, modified_marginal(p, a, q))
    lam_hi = max(corner, 1e-12)
    scanned = [lam_hi]
    while excess(lam_hi) > tolerance:
        lam_hi *= 2.0
        scanned.append(lam_hi)
        if len(scanned) > 200:
            raise BracketError(f"excess demand stays positive up to lam={lam_hi:.6g}")
    if excess(lam_lo) < -tolerance:
        raise BracketError(f"excess demand negative at lam=0 (scanned {scanned[0]:.6g}..)")

    if abs(excess(lam_lo)) <= tolerance:
        lam = lam_lo
    else:
        a, b = lam_lo, lam_hi
        lam = b
        for _ in range(400):
            m = 0.5 * (a + b)
            z = excess(m)
            lam = m
            if abs(z) <= tolerance:
                break
            if z > 0:
                a = m
            else:
                b = m
            if b - a <= 1e-15 * b:
                break
    trades = trades_at(lam)
    residual = sum(trades.values())
    lam_range = _zero_plateau(excess, lam, lam_lo, lam_hi, tolerance)
    degenerate = lam_range[1] - lam_range[0] > 1e-9 * max(1.0, lam)
    return KktSolution(trades, lam, residual, degenerate, lam_range)


def _zero_plateau(excess, lam, lo, hi, tol, iters=60):
    """Extent of the multiplier interval on which the market still clears."""
    def edge(inside, outside):
        for _ in range(iters):
            m = 0.5 * (inside + outside)
            if abs(excess(m)) <= tol:
                inside = m
            else:
                outside = m
        return inside
    left = lo if abs(excess(lo)) <= tol else edge(lam, lo)
    right = hi if abs(excess(hi)) <= tol else edge(lam, hi)
    return (left, right)


def p1_objective(participants, roles, trades) -> float:
    buyers, sellers = market_participants(participants, roles)
    supply = sum(s.quota for s in sellers)
    total = 0.0
    for p in buyers:
        total += modified_utility(p, trades[p.id], share_base(p, Role.BUYER, supply))
    for p in sellers:
        total += modified_utility(p, trades[p.id], share_base(p, Role.SELLER, supply))
    return total


def clearing_price_from_bids(bids, seller_quotas) -> float:
    supply = sum(seller_quotas)
    if supply <= 0:
        raise ValueError("total seller quota must be positive")
    return sum(bids) / supply


@dataclass
class NeReport:
    is_equilibrium: bool
    worst_user: int | None
    worst_gain: float
    worst_bid: float
    gains: dict = field(default_factory=dict)
    best_bids: dict = field(default_factory=dict)


def true_payoff(participant: Participant, role: Role, bids: dict, supply: float,
                uid=None) -> float:
    """Payoff ``U(a) - p a`` at the price implied by ``bids``.

    When nobody bids the price is 0 and no RBs change hands.
    """
    uid = participant.id if uid is None else uid
    total = sum(bids.values())
    if total <= 0:
        return participant.trade_utility(0.0)
    price = total / supply
    a = allocation_from_bid(bids[uid], price, role, participant.quota)
    return participant.trade_utility(a) - price * a


def verify_ne(participants, roles, bids: dict, rel_tol: float = 1e-3,
              abs_tol: float = 1e-9, grid_points: int = 401) -> NeReport:
    """Scan unilateral bid deviations; True when none gains more than the tolerance.

    Each user's deviations are its bid times a geometric grid over [0.5, 2],
    the zero bid and a tiny positive one, plus an even grid over its feasible
    bid range at the current price. Sellers only consider bids that keep
    their trade non-positive. All-zero bids mean no trade.
    """
    buyers, sellers = market_participants(participants, roles)
    check_market_open(buyers, sellers)
    supply = sum(s.quota for s in sellers)
    price = clearing_price_from_bids([bids[p.id] for p in buyers + sellers],
                                     [s.quota for s in sellers])
    factors = np.geomspace(0.5, 2.0, grid_points)
    book = [(p, Role.BUYER) for p in buyers] + [(p, Role.SELLER) for p in sellers]
    current = {p.id: bids[p.id] for p, _ in book}

    report = NeReport(True, None, 0.0, math.nan)
    for p, role in book:
        base = true_payoff(p, role, current, supply)
        tol = rel_tol * abs(base) + abs_tol
        span = price * (supply if role is Role.BUYER else p.quota)
        tiny = 1e-9 * max(span, 1e-300)
        candidates = list(current[p.id] * factors) + [0.0, tiny]
        if span > 0:
            candidates += list(np.linspace(0.0, span, 101)[1:])
        else:
            # nobody bids: probe absolute bid sizes instead
            candidates += list(np.geomspace(1e-9, 1e9, 181))
        trial = dict(current)
        if role is Role.SELLER:
            cap = _max_seller_bid(p, trial, supply)
            if math.isfinite(cap):
                candidates.append(cap)
        best_gain, best_bid = 0.0, current[p.id]
        for b in candidates:
            if role is Role.SELLER:
                # sellers cannot end up buying
                if b > _max_seller_bid(p, trial, supply) * (1 + 1e-12):
                    continue
                # keep the seller's trade inside its utility domain
                if p.domain_floor > -p.quota and price > 0 and b < _domain_bid(p, trial, supply):
                    continue
            trial[p.id] = float(b)
            if sum(trial.values()) <= 0:
                continue
            gain = true_payoff(p, role, trial, supply) - base
            if gain > best_gain:
                best_gain, best_bid = gain, float(b)
        trial[p.id] = current[p.id]
        report.gains[p.id] = best_gain
        report.best_bids[p.id] = best_bid
        if best_gain > tol:
            report.is_equilibrium = False
        if best_gain > report.worst_gain:
            report.worst_user, report.worst_gain, report.worst_bid = p.id, best_gain, best_bid
    return report


def _max_seller_bid(p: Participant, bids: dict, supply: float) -> float:
    # largest seller bid with a = b S / (b + others) - q still <= 0
    others = sum(v for k, v in bids.items() if k != p.id)
    rest = supply - p.quota
    return math.inf if rest <= 0 else p.quota * others / rest


def _domain_bid(p: Participant, bids: dict, supply: float) -> float:
    # smallest seller bid keeping a = b S / (b + others) - q above the domain floor
    others = sum(v for k, v in bids.items() if k != p.id)
    target = p.quota + p.domain_floor  # fraction of supply kept, times supply
    if target <= 0:
        return 0.0
    if target >= supply:
        return math.inf
    return target * others / (supply - target)


def single_seller_monotonicity(seller: Participant, buyer_bids, grid_points: int = 1000,
                               span: tuple = (1e-3, 1e3)) -> bool:
    """Whether a lone seller's payoff strictly increases with its own bid.

    With one seller the clearing price is ``(B + b) / q`` for total buyer bids
    ``B``, the seller's trade becomes ``-q B / (B + b)`` and its payoff
    ``U(-q B / (B + b)) + B``. The bid grid runs geometrically over ``span``
    times ``B``.
    """
    total = float(sum(buyer_bids))
    if total <= 0:
        raise ValueError("the lone-seller payoff is flat when buyers bid nothing")
    if seller.domain_floor >= -seller.quota:
        raise ValueError("seller's full-quota sale leaves the utility domain")
    b = np.geomspace(span[0] * total, span[1] * total, grid_points)
    q = seller.quota
    payoff = np.array([seller.trade_utility(-q * total / (total + x)) + total for x in b])
    return bool(np.all(np.diff(payoff) > 0))
