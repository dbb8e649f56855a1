"""Positions, Friis received power and per-slot transmission efficiency."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0) / 1000.0


@dataclass(frozen=True)
class EnvironmentParams:
    station_xy: tuple[float, float] = (50.0, 50.0)
    station_height: float = 10.0
    tx_power: float = 0.1
    noise: float = dbm_to_watts(-96.0)
    carrier: float = 2.4e9
    rb_bandwidth: float = 360e3
    slot_length: float = 10.0
    light_speed: float = 3.0e8
    arena: tuple[float, float, float, float] = (0.0, 0.0, 100.0, 100.0)
    # time span of a single RB; 11 RBs per 0.5 ms NR slot at 30 kHz spacing
    rb_duration: float = 0.5e-3
    midpoint_position: bool = False

    def __post_init__(self):
        scalars = (self.station_height, self.tx_power, self.noise, self.carrier,
                   self.rb_bandwidth, self.slot_length, self.light_speed, self.rb_duration)
        if any(not v > 0 for v in scalars):
            raise ValueError("environment parameters must be strictly positive")
        x0, y0, x1, y1 = self.arena
        if not (x1 > x0 and y1 > y0):
            raise ValueError(f"degenerate arena {self.arena}")
        sx, sy = self.station_xy
        if not (x0 <= sx <= x1 and y0 <= sy <= y1):
            raise ValueError("station must lie inside the arena")
        if self.rb_duration > self.slot_length:
            raise ValueError("rb_duration cannot exceed the slot length")

    @property
    def wavelength(self) -> float:
        return self.light_speed / self.carrier


def distance(pos, env: EnvironmentParams) -> float:
    dx = pos[0] - env.station_xy[0]
    dy = pos[1] - env.station_xy[1]
    return math.sqrt(dx * dx + dy * dy + env.station_height ** 2)


def received_power(d: float, env: EnvironmentParams) -> float:
    """Friis free-space power with unit antenna gains."""
    if d <= 0:
        raise ValueError("distance must be positive")
    return env.tx_power * (env.wavelength / (4.0 * math.pi * d)) ** 2


def snr(pos, env: EnvironmentParams) -> float:
    return received_power(distance(pos, env), env) / env.noise


def efficiency_factor(start, env: EnvironmentParams, end=None) -> float:
    """Bits one RB-wide channel carries over a whole slot.

    The rate is held at the slot-start position, or at the midpoint of
    ``start`` and ``end`` when ``env.midpoint_position`` is set, so the
    integral reduces to ``T * W * log2(1 + SNR)``.
    """
    pos = start
    if env.midpoint_position and end is not None:
        pos = ((start[0] + end[0]) / 2.0, (start[1] + end[1]) / 2.0)
    return env.slot_length * env.rb_bandwidth * math.log2(1.0 + snr(pos, env))


def rb_efficiency(start, env: EnvironmentParams, end=None) -> float:
    """Bits carried by one tradable RB during the slot (the ``f`` of the game)."""
    return efficiency_factor(start, env, end) * env.rb_duration / env.slot_length


@dataclass(frozen=True)
class MobilityState:
    position: tuple[float, float]
    waypoint: tuple[float, float]
    speed: float = 10.0


def random_point(rng: np.random.Generator, arena) -> tuple[float, float]:
    x0, y0, x1, y1 = arena
    return (float(rng.uniform(x0, x1)), float(rng.uniform(y0, y1)))


def step_mobility(state: MobilityState, rng: np.random.Generator, arena) -> MobilityState:
    """Advance one slot along the random-waypoint path.

    Reaching (or passing) the waypoint stops exactly on it and draws the next
    one; there are no pause times.
    """
    px, py = state.position
    wx, wy = state.waypoint
    gap = math.hypot(wx - px, wy - py)
    if gap <= state.speed:
        return replace(state, position=(wx, wy), waypoint=random_point(rng, arena))
    k = state.speed / gap
    return replace(state, position=(px + k * (wx - px), py + k * (wy - py)))
