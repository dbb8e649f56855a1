import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from prb_resale.core import UtilitySpec
from prb_resale.market import (
    MarketClosedError,
    Participant,
    Role,
    ZeroPriceError,
    allocation_from_bid,
    assign_roles,
    best_response_bid,
    best_response_trade,
    bid_from_allocation,
    integrated_trade_utility,
    modified_buyer_utility,
    modified_seller_utility,
    modified_utility,
    run_auction,
    update_price,
    willingness,
)
from prb_resale.numerics import adaptive_simpson
from prb_resale.predictors import LossPredictor, discounted, one_step

from instances import flat_participant, random_market


def small(base=36.0, predictor=None, quota=10.0):
    return Participant(0, quota, 1.0, UtilitySpec(2.0, 100.0), base,
                       predictor or one_step())


def test_willingness_examples():
    assert willingness(small()) == pytest.approx(0.125)
    assert willingness(small(predictor=discounted(0.9))) == pytest.approx(1.25)
    # pinned prediction: buying cannot lower a loss that is already zero
    assert willingness(small(base=-20.0, predictor=LossPredictor(floor=0.0))) == 0.0


def test_predictor_floor_and_rate():
    p = LossPredictor(gain=2.0, floor=0.0)
    assert p.predict(10.0, 1.0, 3.0) == 4.0
    assert p.predict(10.0, 1.0, 8.0) == 0.0
    assert p.rate(10.0, 1.0, 5.0) == 0.0
    assert p.rate(10.0, 1.0, 1.0) == 2.0
    with pytest.raises(ValueError):
        discounted(1.0)


@pytest.mark.parametrize("w, sellers, buyers", [
    ({1: 1.0, 2: 2.0, 3: 3.0}, {1}, {2, 3}),
    ({1: 5.0, 2: 5.0, 3: 5.0}, set(), {1, 2, 3}),
    ({1: 0.0, 2: 0.0, 3: 9.0}, {1, 2}, {3}),
])
def test_assign_roles(w, sellers, buyers):
    r = assign_roles(w)
    assert r.sellers == sellers and r.buyers == buyers


def test_allocation_examples():
    assert allocation_from_bid(5.0, 2.5, Role.BUYER) == pytest.approx(2.0)
    assert allocation_from_bid(5.0, 2.5, Role.SELLER, 10.0) == pytest.approx(-8.0)
    assert allocation_from_bid(0.0, 7.0, Role.SELLER, 10.0) == -10.0
    assert bid_from_allocation(-8.0, 2.5, Role.SELLER, 10.0) == pytest.approx(5.0)
    with pytest.raises(ZeroPriceError):
        allocation_from_bid(1.0, 0.0, Role.BUYER)


def test_modified_utilities_at_zero():
    p = small()
    assert modified_buyer_utility(0.0, p, 50.0) == p.trade_utility(0.0)
    # both share bases reduce to the unmodified utility when nothing is traded
    assert modified_seller_utility(0.0, p, 40.0) == p.trade_utility(0.0)
    with pytest.raises(MarketClosedError):
        modified_seller_utility(-1.0, p, 0.0)


def test_closed_form_integral_matches_quadrature():
    rng = random.Random(5)
    for parts, _ in (random_market(rng) for _ in range(10)):
        for p in parts:
            lo = max(-p.quota, p.domain_floor * 0.999)
            for a in (lo, 0.3 * lo, 0.0, 2000.0, 30000.0):
                ref = adaptive_simpson(p.trade_utility, 0.0, a, rel_tol=1e-12)
                assert integrated_trade_utility(p, a) == pytest.approx(ref, rel=1e-9, abs=1e-6)


def test_linear_utility_closed_form():
    # stub with U(a) = k f a; the modified utility is then k f (a - a^2 / 2Q)
    class Linear:
        predictor = LossPredictor(floor=-math.inf)
        domain_floor = -math.inf

        def trade_utility(self, a):
            return 0.7 * 3.0 * a

    for a in (0.0, 1.5, 4.0, -2.0):
        expected = 0.7 * 3.0 * (a - a * a / (2 * 8.0))
        assert modified_utility(Linear(), a, 8.0) == pytest.approx(expected, rel=1e-9, abs=1e-12)


def _fd_check(p, a, share):
    h = 1e-4 * max(1.0, abs(a))
    fd = (modified_utility(p, a + h, share) - modified_utility(p, a - h, share)) / (2 * h)
    return fd, (1 - a / share) * p.marginal_utility(a)


def test_derivative_identity_buyer_and_seller():
    rng = random.Random(11)
    for parts, roles in (random_market(rng) for _ in range(5)):
        supply = sum(p.quota for p in parts if roles[p.id] is Role.SELLER)
        for p in parts:
            if roles[p.id] is Role.BUYER:
                share, pts = supply, np.linspace(0.05, 0.95, 7) * supply
            else:
                share = supply - p.quota
                lo = max(-p.quota, p.domain_floor)
                pts = np.linspace(0.05, 0.95, 7) * lo
            for a in pts:
                fd, exact = _fd_check(p, float(a), share)
                assert fd == pytest.approx(exact, rel=1e-6)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 10_000), u=st.floats(0.0, 1.0), v=st.floats(0.0, 1.0))
def test_modified_marginal_non_increasing(seed, u, v):
    parts, roles = random_market(random.Random(seed))
    supply = sum(p.quota for p in parts if roles[p.id] is Role.SELLER)
    p = parts[0]
    a, b = sorted((u * supply, v * supply))
    from prb_resale.market import modified_marginal
    assert modified_marginal(p, a, supply) >= modified_marginal(p, b, supply) - 1e-12


def test_flat_buyer_bids_zero():
    p = flat_participant(0, 4000.0)
    for price in (0.1, 1.0, 10.0):
        assert best_response_bid(p, price, Role.BUYER, 20000.0) == 0.0


def test_expensive_seller_sells_everything():
    p = Participant(1, 5000.0, 3000.0, UtilitySpec(22.0, 1e8), -6e8)
    assert best_response_bid(p, 1e6, Role.SELLER, 20000.0) == pytest.approx(0.0, abs=1e-6)


def test_best_response_matches_grid_search():
    rng = random.Random(2)
    for parts, roles in (random_market(rng) for _ in range(6)):
        supply = sum(p.quota for p in parts if roles[p.id] is Role.SELLER)
        for p in parts:
            role = roles[p.id]
            share = supply if role is Role.BUYER else supply - p.quota
            lo, hi = p.trade_bounds(role, supply)
            price = rng.uniform(0.5, 4.0)
            grid = np.linspace(lo, hi, 100_001)
            vals = [modified_utility(p, float(a), share) - price * a for a in grid]
            k = int(np.argmax(vals))
            step = (hi - lo) / 100_000
            closed = best_response_trade(p, price, role, supply, "closed")
            golden = best_response_trade(p, price, role, supply, "golden")
            assert abs(closed - grid[k]) <= 1.01 * step
            assert golden == pytest.approx(closed, rel=1e-6, abs=1e-3)


def test_update_price():
    # excess demand 3/1 - 2 = 1 raises the price
    assert update_price(1.0, [3.0], 2.0, 0.1) == pytest.approx(1.1)
    assert update_price(2.0, [4.0], 2.0, 0.5) == 2.0
    assert update_price(1.0, [0.0], 2.0, 10.0) == 0.0


def test_market_closed_cases():
    rng = random.Random(0)
    parts, roles = random_market(rng, 2, 1)
    with pytest.raises(MarketClosedError):
        run_auction(parts, roles)
    parts, roles = random_market(rng, 0, 3)
    with pytest.raises(MarketClosedError):
        run_auction(parts, roles)
    parts, roles = random_market(rng, 2, 0)
    with pytest.raises(MarketClosedError):
        run_auction(parts, roles)


def test_auction_conserves_and_restates_bids():
    rng = random.Random(8)
    for _ in range(10):
        parts, roles = random_market(rng)
        r = run_auction(parts, roles)
        assert r.converged
        assert sum(r.trades.values()) == pytest.approx(0.0, abs=1e-6 * r.supply)
        for p in parts:
            a = r.trades[p.id]
            role = roles[p.id]
            if role is Role.BUYER:
                assert 0.0 <= a <= r.supply
            else:
                assert -p.quota <= a <= 0.0
            assert allocation_from_bid(r.bids[p.id], r.clearing_price, role, p.quota) == \
                pytest.approx(a, rel=1e-9, abs=1e-6)


def test_auction_non_convergence_settles_without_trades():
    parts, roles = random_market(random.Random(1))
    r = run_auction(parts, roles, max_rounds=2, trace=True)
    assert not r.converged
    assert r.rounds_used == 2 and len(r.rounds) == 2
    assert all(v == 0.0 for v in r.trades.values())


def test_auction_trace_gap_shrinks():
    parts, roles = random_market(random.Random(4))
    r = run_auction(parts, roles, delta=1e-7, trace=True)
    gaps = [abs(x.total_demand - x.total_supply) for x in r.rounds]
    assert gaps[-1] < 0.1 * gaps[0]
    assert len(r.rounds) == r.rounds_used
