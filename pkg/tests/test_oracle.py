import random

import numpy as np
import pytest

from prb_resale.core import UtilitySpec
from prb_resale.market import Participant, Role, run_auction
from prb_resale.oracle import (
    clearing_price_from_bids,
    p1_objective,
    single_seller_monotonicity,
    solve_p1,
    verify_ne,
)

from instances import flat_participant, random_market


def test_symmetric_instance_gives_symmetric_solution():
    spec = UtilitySpec(22.0, 1.5e8)
    parts = [Participant(0, 4000, 3000.0, spec, 5e7), Participant(1, 4000, 3000.0, spec, 5e7),
             Participant(2, 30000, 3000.0, spec, -6e8), Participant(3, 30000, 3000.0, spec, -6e8)]
    roles = {0: Role.BUYER, 1: Role.BUYER, 2: Role.SELLER, 3: Role.SELLER}
    sol = solve_p1(parts, roles)
    assert sol.trades[0] == pytest.approx(sol.trades[1], rel=1e-9)
    assert sol.trades[2] == pytest.approx(sol.trades[3], rel=1e-9)
    assert sol.trades[0] > 0 and sol.trades[2] < 0
    assert sum(sol.trades.values()) == pytest.approx(0.0, abs=1e-6)


def test_flat_buyers_trade_nothing():
    parts = [flat_participant(0, 4000.0), flat_participant(1, 4000.0),
             Participant(2, 30000, 3000.0, UtilitySpec(24.0, 1e8), -6e8),
             Participant(3, 30000, 3000.0, UtilitySpec(24.0, 1e8), -7e8)]
    roles = {0: Role.BUYER, 1: Role.BUYER, 2: Role.SELLER, 3: Role.SELLER}
    sol = solve_p1(parts, roles)
    assert all(abs(a) < 1e-6 for a in sol.trades.values())
    assert sol.multiplier == 0.0


def _random_feasible(rng, parts, roles, supply):
    a = {}
    for p in parts:
        lo, hi = p.trade_bounds(roles[p.id], supply)
        a[p.id] = rng.uniform(lo, hi)
    # ration the long side so the trades sum to zero (stays inside the bounds)
    demand = sum(v for k, v in a.items() if roles[k] is Role.BUYER)
    offer = -sum(v for k, v in a.items() if roles[k] is Role.SELLER)
    side, k = (Role.BUYER, offer / demand) if demand > offer else (Role.SELLER, demand / offer)
    return {u: v * k if roles[u] is side else v for u, v in a.items()}


def test_p1_beats_random_feasible_points():
    rng = random.Random(21)
    parts, roles = random_market(rng, 2, 3)
    supply = sum(p.quota for p in parts if roles[p.id] is Role.SELLER)
    sol = solve_p1(parts, roles)
    best = p1_objective(parts, roles, sol.trades)
    for _ in range(10_000):
        trial = _random_feasible(rng, parts, roles, supply)
        assert p1_objective(parts, roles, trial) <= best + 1e-9 * abs(best)


def test_clearing_price_from_bids():
    assert clearing_price_from_bids([4.0, 6.0], [5.0]) == 2.0
    assert clearing_price_from_bids([0.0, 0.0], [3.0, 2.0]) == 0.0
    with pytest.raises(ValueError):
        clearing_price_from_bids([1.0], [0.0])


def test_multiplier_equals_clearing_price():
    rng = random.Random(3)
    parts, roles = random_market(rng)
    r = run_auction(parts, roles)
    sol = solve_p1(parts, roles)
    assert sol.multiplier == pytest.approx(r.clearing_price, rel=1e-2)


def test_auction_output_is_equilibrium_and_halved_bid_is_not():
    rng = random.Random(6)
    parts, roles = random_market(rng, 2, 2)
    r = run_auction(parts, roles)
    assert verify_ne(parts, roles, r.bids).is_equilibrium
    buyer = next(p.id for p in parts if roles[p.id] is Role.BUYER and r.bids[p.id] > 0)
    bent = dict(r.bids)
    bent[buyer] *= 0.5
    rep = verify_ne(parts, roles, bent)
    assert not rep.is_equilibrium
    assert rep.best_bids[buyer] == pytest.approx(r.bids[buyer], rel=0.05)


def test_no_trade_equilibrium():
    parts = [flat_participant(0, 4000.0), flat_participant(1, 5000.0), flat_participant(2, 6000.0)]
    roles = {0: Role.BUYER, 1: Role.SELLER, 2: Role.SELLER}
    bids = {0: 0.0, 1: 0.0, 2: 0.0}
    assert verify_ne(parts, roles, bids).is_equilibrium


def test_single_seller_payoff_increases_with_bid():
    rng = random.Random(9)
    for _ in range(10):
        parts, _ = random_market(rng, 2, 1)
        seller = parts[-1]
        buyer_bids = [rng.uniform(1e3, 1e5) for _ in range(2)]
        assert single_seller_monotonicity(seller, buyer_bids)
    with pytest.raises(ValueError):
        single_seller_monotonicity(parts[-1], [0.0, 0.0])


def test_single_seller_payoff_differences_positive():
    parts, _ = random_market(random.Random(1), 1, 1)
    seller = parts[-1]
    total = 2e4
    b = np.geomspace(1e-3 * total, 1e3 * total, 1000)
    pay = [seller.trade_utility(-seller.quota * total / (total + x)) + total for x in b]
    assert np.all(np.diff(pay) > 0)


def test_seller_deviations_stay_on_the_selling_side():
    # seller 2 keeps its whole quota here; bidding above p q would make it a buyer
    rng = random.Random(20260101)
    for _ in range(4):
        parts, roles = random_market(rng)
    r = run_auction(parts, roles)
    assert r.trades[2] == 0.0
    rep = verify_ne(parts, roles, r.bids)
    assert rep.is_equilibrium
    others = sum(b for u, b in r.bids.items() if u != 2)
    assert rep.best_bids[2] <= parts[2].quota * others / (r.supply - parts[2].quota) * (1 + 1e-12)
