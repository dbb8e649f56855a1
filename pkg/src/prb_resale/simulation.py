"""Multi-slot scenario runs: traffic, mobility, the four schemes and metrics."""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .channel import EnvironmentParams, MobilityState, random_point, rb_efficiency, step_mobility
from .core import (
    MEGABIT,
    GIGABIT,
    ArrivalClass,
    UserProfile,
    net_change,
    settle_slot,
    utility,
)
from .market import (
    DEFAULT_MAX_ROUNDS,
    MarketClosedError,
    Participant,
    Role,
    RoleAssignment,
    assign_roles,
    run_auction,
    willingness,
)
from .oracle import verify_ne
from .predictors import LossPredictor, discounted, one_step
from .traffic import TrafficModel

log = logging.getLogger(__name__)


class Scheme(str, enum.Enum):
    STATIC = "static"
    RANDOM = "random"
    HEURISTIC = "heuristic"
    FUTURE = "future"


@dataclass(frozen=True)
class ClassTemplate:
    """A block of identical-class users; ``d_max`` is the arrival upper bound."""

    arrival_class: ArrivalClass
    count: int
    quota: float
    s_min: float
    s_max: float
    arrival_lower: float
    arrival_upper: float
    arrival_mean: float
    buffer_capacity: float = 1 * GIGABIT

    def __post_init__(self):
        if self.count < 0:
            raise ValueError(f"{self.arrival_class.value}: count must be >= 0")
        if self.quota < 0:
            raise ValueError(f"{self.arrival_class.value}: quota must be >= 0")
        if not 0 < self.s_min <= self.s_max:
            raise ValueError(f"{self.arrival_class.value}: need 0 < s_min <= s_max")
        if not 0 < self.arrival_lower < self.arrival_mean < self.arrival_upper:
            raise ValueError(f"{self.arrival_class.value}: need lower < mean < upper")
        if self.buffer_capacity <= 0:
            raise ValueError(f"{self.arrival_class.value}: buffer capacity must be > 0")


def default_population() -> tuple[ClassTemplate, ...]:
    return (
        ClassTemplate(ArrivalClass.HIGH_BANDWIDTH, 5, 4000, 21, 23,
                      100 * MEGABIT, 150 * MEGABIT, 108 * MEGABIT),
        ClassTemplate(ArrivalClass.LOW_RATE, 5, 40000, 23, 25,
                      10 * MEGABIT, 100 * MEGABIT, 11 * MEGABIT),
    )


@dataclass(frozen=True)
class ScenarioConfig:
    env: EnvironmentParams = field(default_factory=EnvironmentParams)
    population: tuple = field(default_factory=default_population)
    slots: int = 4320
    scheme: Scheme = Scheme.HEURISTIC
    gamma: float | None = None
    delta: float = 1e-6
    eps: float = 1e-5
    p0: float = 1.095
    seed: int = 1
    rb_pool: float = 220_000
    initial_empty_range: tuple = (30 * MEGABIT, 70 * MEGABIT)
    speed: float = 10.0
    max_rounds: int = DEFAULT_MAX_ROUNDS
    warm_start: bool = False
    random_predictor: str = "one-step"

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        total = sum(t.count * t.quota for t in self.population)
        if not math.isclose(total, self.rb_pool, rel_tol=1e-12, abs_tol=1e-9):
            raise ValueError(f"quotas sum to {total:g} RBs but rb_pool is {self.rb_pool:g}")
        if self.scheme is Scheme.FUTURE or self.random_predictor == "discounted":
            if self.gamma is None:
                raise ValueError("gamma is required for the discounted predictor")
        if self.gamma is not None and not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if self.slots < 0:
            raise ValueError("slots must be >= 0")
        if self.delta <= 0 or self.eps <= 0 or self.p0 <= 0:
            raise ValueError("delta, eps and p0 must be positive")
        if self.speed < 0:
            raise ValueError("speed must be >= 0")
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be >= 1")
        lo, hi = self.initial_empty_range
        if not 0 <= lo <= hi:
            raise ValueError("initial_empty_range must satisfy 0 <= lo <= hi")
        if any(hi > t.buffer_capacity for t in self.population if t.count):
            raise ValueError("initial empty buffer exceeds a buffer capacity")
        if self.random_predictor not in ("one-step", "discounted"):
            raise ValueError(f"unknown random_predictor {self.random_predictor!r}")

    @property
    def n_users(self) -> int:
        return sum(t.count for t in self.population)

    def with_scheme(self, scheme) -> "ScenarioConfig":
        return replace(self, scheme=Scheme(scheme))


@dataclass
class SlotRecord:
    slot: int
    user: int
    role: str
    trade: float
    bid: float | None
    price: float | None
    occupied: float
    empty: float
    loss: float
    wastage: float
    willingness: float
    arrival: float
    efficiency: float


@dataclass
class RoundRecord:
    slot: int
    round: int
    price: float
    total_demand: float
    total_supply: float
    social_welfare: float
    buyer_bids: float
    seller_bids: float


@dataclass
class RunMetrics:
    scheme: str
    seed: int
    slots: int
    users: int
    loss_events: int = 0
    loss_amount: float = 0.0
    wastage_events: int = 0
    wastage_amount: float = 0.0
    welfare: float = 0.0
    welfare_delta: float | None = None
    markets_cleared: int = 0
    markets_closed: int = 0
    nonconverged: int = 0
    rounds_total: int = 0
    certified: int = 0
    certify_failures: int = 0


@dataclass
class ScenarioResult:
    config: ScenarioConfig
    metrics: RunMetrics
    slots: list = field(default_factory=list)
    rounds: list = field(default_factory=list)


def social_welfare(specs, losses) -> float:
    """Sum of user utilities at realised losses; payments cancel out."""
    return sum(utility(s, l) for s, l in zip(specs, losses))


def build_users(config: ScenarioConfig, rng: np.random.Generator):
    users, traffic = [], []
    uid = 0
    for t in config.population:
        model = TrafficModel(t.arrival_class, t.arrival_lower, t.arrival_upper, t.arrival_mean)
        for _ in range(t.count):
            s = float(rng.uniform(t.s_min, t.s_max))
            users.append(UserProfile(uid, t.buffer_capacity, t.quota, s,
                                     t.arrival_class, t.arrival_upper))
            traffic.append(model)
            uid += 1
    return users, traffic


def _streams(seed: int, n: int):
    root = np.random.SeedSequence(seed)
    profile, buffers, roles, mobility, traffic = root.spawn(5)
    return (np.random.default_rng(profile), np.random.default_rng(buffers),
            np.random.default_rng(roles),
            [np.random.default_rng(s) for s in mobility.spawn(n)],
            [np.random.default_rng(s) for s in traffic.spawn(n)])


def scheme_predictor(config: ScenarioConfig, scheme: Scheme) -> LossPredictor:
    if scheme is Scheme.FUTURE:
        return discounted(config.gamma)
    if scheme is Scheme.RANDOM and config.random_predictor == "discounted":
        return discounted(config.gamma)
    return one_step()


class Scenario:
    """Slot-by-slot state machine; :func:`run_scenario` drives it to the end."""

    def __init__(self, config: ScenarioConfig):
        self.config = config
        n = config.n_users
        (profile_rng, buffer_rng, self.role_rng,
         self.mobility_rng, self.traffic_rng) = _streams(config.seed, n)
        self.users, self.traffic = build_users(config, profile_rng)
        lo, hi = config.initial_empty_range
        self.occupied = [u.buffer_capacity - float(buffer_rng.uniform(lo, hi)) for u in self.users]
        arena = config.env.arena
        self.mobility = []
        for rng in self.mobility_rng:
            start = random_point(rng, arena)
            self.mobility.append(MobilityState(start, random_point(rng, arena), config.speed))
        self.predictor = scheme_predictor(config, config.scheme)
        self.specs = [u.utility_spec for u in self.users]
        self.slot = 0
        self.last_price = None

    def participants(self):
        """Draw this slot's arrivals and channel; returns participants and slot data."""
        env = self.config.env
        parts, data = [], []
        for i, u in enumerate(self.users):
            d = self.traffic[i].sample(self.traffic_rng[i])
            nxt = step_mobility(self.mobility[i], self.mobility_rng[i], env.arena)
            f = rb_efficiency(self.mobility[i].position, env, nxt.position)
            c = net_change(d, f, u.quota)
            empty = u.buffer_capacity - self.occupied[i]
            parts.append(Participant(u.id, u.quota, f, self.specs[i], c - empty, self.predictor))
            data.append((d, f, c, nxt))
        return parts, data

    def choose_roles(self, parts, will, draws):
        scheme = self.config.scheme
        if scheme is Scheme.STATIC:
            return None
        if scheme is Scheme.RANDOM:
            return RoleAssignment.from_roles(
                {p.id: Role.BUYER if x < 0.5 else Role.SELLER for p, x in zip(parts, draws)})
        return assign_roles({p.id: w for p, w in zip(parts, will)})

    def step(self, metrics: RunMetrics, trace_rounds=False, certify=False):
        cfg = self.config
        t = self.slot
        draws = self.role_rng.random(len(self.users))
        parts, data = self.participants()
        will = [willingness(p) for p in parts]
        roles = self.choose_roles(parts, will, draws)

        result = None
        if roles is not None:
            p0 = self.last_price if cfg.warm_start and self.last_price else cfg.p0
            try:
                result = run_auction(parts, roles, p0, cfg.delta, cfg.eps,
                                     cfg.max_rounds, trace=trace_rounds)
            except MarketClosedError:
                metrics.markets_closed += 1
            else:
                metrics.rounds_total += result.rounds_used
                if result.converged:
                    metrics.markets_cleared += 1
                    self.last_price = result.clearing_price
                else:
                    metrics.nonconverged += 1
                    log.warning("slot %d: auction did not converge in %d rounds",
                                t, result.rounds_used)
                if certify and result.converged:
                    rep = verify_ne(parts, roles, result.bids)
                    if rep.is_equilibrium:
                        metrics.certified += 1
                    else:
                        metrics.certify_failures += 1
        cleared = result is not None and result.converged

        slot_rows, losses = [], []
        for i, (u, p) in enumerate(zip(self.users, parts)):
            d, f, c, nxt = data[i]
            trade = result.trades.get(u.id, 0.0) if cleared else 0.0
            o = self.occupied[i]
            o_next, loss, waste = settle_slot(o, u.buffer_capacity, c, f, trade)
            role = roles.role_of(u.id) if roles is not None else None
            if cleared and u.id not in result.trades:
                role = None
            slot_rows.append(SlotRecord(
                slot=t, user=u.id, role=role.value if role else "none", trade=trade,
                bid=result.bids.get(u.id) if cleared else None,
                price=result.clearing_price if cleared else None,
                occupied=o, empty=u.buffer_capacity - o, loss=loss, wastage=waste,
                willingness=will[i], arrival=d, efficiency=f))
            losses.append(loss)
            if loss > 0:
                metrics.loss_events += 1
                metrics.loss_amount += loss
            if waste > 0:
                metrics.wastage_events += 1
                metrics.wastage_amount += waste
            self.occupied[i] = o_next
            self.mobility[i] = nxt
        metrics.welfare += social_welfare(self.specs, losses)

        round_rows = []
        if trace_rounds and result is not None:
            round_rows = [RoundRecord(t, r.index, r.price, r.total_demand, r.total_supply,
                                      r.social_welfare, r.buyer_bids, r.seller_bids)
                          for r in result.rounds]
        self.slot += 1
        return slot_rows, round_rows, result


def run_scenario(config: ScenarioConfig, trace_rounds: bool = False, certify: bool = False,
                 keep_slots: bool = True) -> ScenarioResult:
    """Run ``config.slots`` slots; deterministic given the config (seed included)."""
    sc = Scenario(config)
    metrics = RunMetrics(config.scheme.value, config.seed, config.slots, config.n_users)
    out = ScenarioResult(config, metrics)
    for _ in range(config.slots):
        rows, rounds, _ = sc.step(metrics, trace_rounds, certify)
        if keep_slots:
            out.slots.extend(rows)
        out.rounds.extend(rounds)
    return out


def attach_welfare_delta(result: ScenarioResult, baseline: ScenarioResult | None = None):
    """Fill ``welfare_delta`` against the Static run with the same seed."""
    if baseline is None:
        if result.config.scheme is Scheme.STATIC:
            result.metrics.welfare_delta = 0.0
            return result
        baseline = run_scenario(result.config.with_scheme(Scheme.STATIC), keep_slots=False)
    result.metrics.welfare_delta = result.metrics.welfare - baseline.metrics.welfare
    return result
