"""Flat ``key = value`` scenario files.

Units: distances in metres, power in watts except ``noise_dbm`` (dBm),
frequencies in Hz, times in seconds, data sizes in decimal megabits
(``*_mb``, 1 Mb = 1e6 bits) or gigabits (``*_gb``, 1 Gb = 1e9 bits).
Per-class keys carry an ``hb_`` or ``lr_`` prefix. Lines starting with
``#`` are comments; every key may appear at most once; unknown keys are
rejected. Omitted keys take the built-in defaults.
"""

from __future__ import annotations

import math
from pathlib import Path

from .channel import EnvironmentParams, dbm_to_watts
from .core import GIGABIT, MEGABIT, ArrivalClass
from .simulation import ClassTemplate, ScenarioConfig, Scheme, default_population


class ConfigError(ValueError):
    """Parse or validation failure; ``line`` and ``key`` locate it when known."""

    def __init__(self, message, line=None, key=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"field '{key}'")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.line = line
        self.key = key


def watts_to_dbm(w: float) -> float:
    return 10.0 * math.log10(w) + 30.0


def _parse_bool(text):
    low = text.lower()
    if low in ("true", "yes", "1"):
        return True
    if low in ("false", "no", "0"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _parse_optional_float(text):
    return None if text.lower() == "none" else float(text)


def _parse_int(text):
    v = float(text)
    if not v.is_integer():
        raise ValueError(f"expected an integer, got {text!r}")
    return int(v)


# key -> parser; the grouping below mirrors the dataclasses
_ENV_KEYS = {
    "station_x_m": float, "station_y_m": float, "station_height_m": float,
    "tx_power_w": float, "noise_dbm": float, "carrier_hz": float,
    "rb_bandwidth_hz": float, "slot_length_s": float, "rb_duration_s": float,
    "light_speed_mps": float, "arena_width_m": float, "arena_height_m": float,
    "midpoint_position": _parse_bool,
}
_RUN_KEYS = {
    "scheme": Scheme, "gamma": _parse_optional_float, "delta": float,
    "epsilon": float, "p0": float, "seed": _parse_int, "slots": _parse_int,
    "rb_pool": float, "initial_empty_min_mb": float, "initial_empty_max_mb": float,
    "speed_m_per_slot": float, "max_rounds": _parse_int, "warm_start": _parse_bool,
    "random_predictor": str,
}
_CLASS_KEYS = {
    "count": _parse_int, "quota": float, "s_min": float, "s_max": float,
    "arrival_min_mb": float, "arrival_max_mb": float, "arrival_mean_mb": float,
    "buffer_gb": float,
}
_PREFIX = {"hb": ArrivalClass.HIGH_BANDWIDTH, "lr": ArrivalClass.LOW_RATE}


def _schema():
    keys = dict(_ENV_KEYS)
    keys.update(_RUN_KEYS)
    for prefix in _PREFIX:
        keys.update({f"{prefix}_{k}": v for k, v in _CLASS_KEYS.items()})
    return keys


SCHEMA = _schema()


def read_pairs(text: str) -> dict:
    """Raw ``key -> (line, value text)`` with syntax checks only."""
    pairs = {}
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("expected 'key = value'", line=n)
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError("empty key", line=n)
        if key not in SCHEMA:
            raise ConfigError("unknown key", line=n, key=key)
        if key in pairs:
            raise ConfigError(f"duplicate key (first on line {pairs[key][0]})", line=n, key=key)
        if not value:
            raise ConfigError("missing value", line=n, key=key)
        pairs[key] = (n, value)
    return pairs


def _typed(pairs):
    out = {}
    for key, (n, text) in pairs.items():
        try:
            out[key] = SCHEMA[key](text)
        except ValueError as exc:
            raise ConfigError(str(exc), line=n, key=key) from None
        if isinstance(out[key], float) and not math.isfinite(out[key]):
            raise ConfigError("value must be finite", line=n, key=key)
    return out


def config_from_mapping(values: dict) -> ScenarioConfig:
    """Build a validated config from typed values keyed as in the file schema."""
    base_env = EnvironmentParams()
    env_kw = {}
    sx, sy = base_env.station_xy
    if "station_x_m" in values or "station_y_m" in values:
        env_kw["station_xy"] = (values.get("station_x_m", sx), values.get("station_y_m", sy))
    if "arena_width_m" in values or "arena_height_m" in values:
        env_kw["arena"] = (0.0, 0.0, values.get("arena_width_m", base_env.arena[2]),
                           values.get("arena_height_m", base_env.arena[3]))
    simple = {"station_height_m": "station_height", "tx_power_w": "tx_power",
              "carrier_hz": "carrier", "rb_bandwidth_hz": "rb_bandwidth",
              "slot_length_s": "slot_length", "rb_duration_s": "rb_duration",
              "light_speed_mps": "light_speed", "midpoint_position": "midpoint_position"}
    for key, name in simple.items():
        if key in values:
            env_kw[name] = values[key]
    if "noise_dbm" in values:
        env_kw["noise"] = dbm_to_watts(values["noise_dbm"])
    try:
        env = EnvironmentParams(**env_kw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    defaults = {t.arrival_class: t for t in default_population()}
    population = []
    for prefix, cls in _PREFIX.items():
        d = defaults[cls]
        get = lambda k, fallback: values.get(f"{prefix}_{k}", fallback)
        try:
            population.append(ClassTemplate(
                cls, get("count", d.count), get("quota", d.quota),
                get("s_min", d.s_min), get("s_max", d.s_max),
                get("arrival_min_mb", d.arrival_lower / MEGABIT) * MEGABIT,
                get("arrival_max_mb", d.arrival_upper / MEGABIT) * MEGABIT,
                get("arrival_mean_mb", d.arrival_mean / MEGABIT) * MEGABIT,
                get("buffer_gb", d.buffer_capacity / GIGABIT) * GIGABIT))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    kw = {"env": env, "population": tuple(population)}
    renames = {"epsilon": "eps", "speed_m_per_slot": "speed"}
    for key in _RUN_KEYS:
        if key in values and key not in ("initial_empty_min_mb", "initial_empty_max_mb"):
            kw[renames.get(key, key)] = values[key]
    lo, hi = ScenarioConfig().initial_empty_range
    kw["initial_empty_range"] = (values.get("initial_empty_min_mb", lo / MEGABIT) * MEGABIT,
                                 values.get("initial_empty_max_mb", hi / MEGABIT) * MEGABIT)
    # gamma has no default: it must be given whenever the Future scheme is used
    kw["gamma"] = values.get("gamma")
    try:
        return ScenarioConfig(**kw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def parse_config_text(text: str) -> ScenarioConfig:
    return config_from_mapping(_typed(read_pairs(text)))


def parse_config(path) -> ScenarioConfig:
    return parse_config_text(Path(path).read_text(encoding="utf-8"))


def _preimage(target, forward, guess):
    """Float ``x`` near ``guess`` with ``forward(x) == target`` when one is close by."""
    x = guess
    for _ in range(8):
        y = forward(x)
        if y == target:
            return x
        x = math.nextafter(x, math.inf if y < target else -math.inf)
    return guess


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if v is None:
        return "none"
    if isinstance(v, Scheme):
        return v.value
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def config_to_mapping(cfg: ScenarioConfig) -> dict:
    """Inverse of :func:`config_from_mapping`, in file units."""
    env = cfg.env
    if env.arena[0] != 0.0 or env.arena[1] != 0.0:
        raise ConfigError("only arenas anchored at the origin can be written")
    mb = lambda bits: _preimage(bits, lambda x: x * MEGABIT, bits / MEGABIT)
    gb = lambda bits: _preimage(bits, lambda x: x * GIGABIT, bits / GIGABIT)
    out = {
        "station_x_m": env.station_xy[0], "station_y_m": env.station_xy[1],
        "station_height_m": env.station_height, "tx_power_w": env.tx_power,
        "noise_dbm": _preimage(env.noise, dbm_to_watts, watts_to_dbm(env.noise)),
        "carrier_hz": env.carrier, "rb_bandwidth_hz": env.rb_bandwidth,
        "slot_length_s": env.slot_length, "rb_duration_s": env.rb_duration,
        "light_speed_mps": env.light_speed, "arena_width_m": env.arena[2],
        "arena_height_m": env.arena[3], "midpoint_position": env.midpoint_position,
        "scheme": cfg.scheme, "gamma": cfg.gamma, "delta": cfg.delta, "epsilon": cfg.eps,
        "p0": cfg.p0, "seed": cfg.seed, "slots": cfg.slots, "rb_pool": cfg.rb_pool,
        "initial_empty_min_mb": mb(cfg.initial_empty_range[0]),
        "initial_empty_max_mb": mb(cfg.initial_empty_range[1]),
        "speed_m_per_slot": cfg.speed, "max_rounds": cfg.max_rounds,
        "warm_start": cfg.warm_start, "random_predictor": cfg.random_predictor,
    }
    prefix_of = {v: k for k, v in _PREFIX.items()}
    seen = set()
    for t in cfg.population:
        prefix = prefix_of[t.arrival_class]
        if prefix in seen:
            raise ConfigError(f"more than one {prefix} class cannot be written")
        seen.add(prefix)
        out.update({
            f"{prefix}_count": t.count, f"{prefix}_quota": t.quota,
            f"{prefix}_s_min": t.s_min, f"{prefix}_s_max": t.s_max,
            f"{prefix}_arrival_min_mb": mb(t.arrival_lower),
            f"{prefix}_arrival_max_mb": mb(t.arrival_upper),
            f"{prefix}_arrival_mean_mb": mb(t.arrival_mean),
            f"{prefix}_buffer_gb": gb(t.buffer_capacity),
        })
    if seen != set(_PREFIX):
        raise ConfigError("both hb and lr classes are required to write a config")
    return out


def format_config(cfg: ScenarioConfig) -> str:
    lines = ["# prb-resale scenario; sizes in decimal Mb/Gb, noise in dBm"]
    lines += [f"{k} = {_fmt(v)}" for k, v in config_to_mapping(cfg).items()]
    return "\n".join(lines) + "\n"


def bundled_config_path(name: str = "table1.cfg") -> Path:
    return Path(__file__).with_name("data") / name


def load_bundled(name: str = "table1.cfg") -> ScenarioConfig:
    return parse_config(bundled_config_path(name))
