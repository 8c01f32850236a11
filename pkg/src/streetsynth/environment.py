"""Per-frame time of day, weather and visibility range."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from .scene import ConfigError

WEATHERS = ("clear", "rain", "snow", "dust", "heatwave", "night")
# "fog" is accepted wherever a weather name is and behaves like dust
ALIASES = {"fog": "dust"}
MODES = ("fixed", "per_frame_random", "cyclic")

DEFAULT_VISIBILITY = {
    "clear": None, "heatwave": None,
    "rain": 300.0, "snow": 200.0, "dust": 150.0, "night": 250.0,
}


def canonical_weather(name: str) -> str:
    name = name.strip().lower()
    name = ALIASES.get(name, name)
    if name not in WEATHERS:
        raise ValueError(f"unknown weather {name!r}")
    return name


@dataclass(frozen=True)
class EnvironmentState:
    time_of_day: float
    weather: str
    sun_dir: tuple[float, float, float]
    visibility_limit: Optional[float] = None  # metres; None means unlimited

    def to_dict(self) -> dict:
        return {
            "time_of_day": self.time_of_day,
            "weather": self.weather,
            "sun_dir": list(self.sun_dir),
            "visibility_limit": self.visibility_limit,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EnvironmentState":
        return cls(d["time_of_day"], d["weather"], tuple(d["sun_dir"]), d["visibility_limit"])


@dataclass(frozen=True)
class EnvironmentSchedule:
    mode: str = "per_frame_random"
    weights: Mapping[str, float] = field(default_factory=lambda: {w: 1.0 for w in WEATHERS})
    time_range: tuple[float, float] = (7.0, 17.0)
    fixed_time: float = 12.0
    fixed_weather: str = "clear"
    visibility: Mapping[str, Optional[float]] = field(default_factory=dict)

    def validate(self, prefix: str = "environment") -> None:
        if self.mode not in MODES:
            raise ConfigError(f"{prefix}.mode", f"must be one of {MODES}")
        for name, w in self.weights.items():
            try:
                canonical_weather(name)
            except ValueError:
                raise ConfigError(f"{prefix}.weights.{name}", "unknown weather") from None
            if not w >= 0:
                raise ConfigError(f"{prefix}.weights.{name}", "must be non-negative")
        if sum(self.weights.values()) <= 0:
            raise ConfigError(f"{prefix}.weights", "at least one weight must be positive")
        lo, hi = self.time_range
        if not 0 <= lo < hi <= 24:
            raise ConfigError(f"{prefix}.time_range", "must satisfy 0 <= lo < hi <= 24")
        if not 0 <= self.fixed_time < 24:
            raise ConfigError(f"{prefix}.fixed_time", "must lie in [0, 24)")
        try:
            canonical_weather(self.fixed_weather)
        except ValueError:
            raise ConfigError(f"{prefix}.fixed_weather", "unknown weather") from None
        for name, dist in self.visibility.items():
            try:
                canonical_weather(name)
            except ValueError:
                raise ConfigError(f"{prefix}.visibility.{name}", "unknown weather") from None
            if dist is not None and not dist > 0:
                raise ConfigError(f"{prefix}.visibility.{name}", "must be positive or null")

    def probabilities(self) -> np.ndarray:
        w = np.zeros(len(WEATHERS))
        for name, val in self.weights.items():
            w[WEATHERS.index(canonical_weather(name))] += val
        return w / w.sum()


def sun_elevation(time_of_day: float) -> float:
    """Solar elevation in degrees: 0 at 06:00 and 18:00, 90 at noon.

    Equal to ``90 * sin(pi * (t - 6) / 12)``, evaluated on the folded angle so
    the horizon crossings come out exactly zero.
    """
    x = math.fmod(time_of_day - 6.0, 24.0)
    if x < 0.0:
        x += 24.0
    if x <= 12.0:
        return 90.0 * math.sin(math.pi * min(x, 12.0 - x) / 12.0)
    return -90.0 * math.sin(math.pi * min(x - 12.0, 24.0 - x) / 12.0)


def sun_direction(time_of_day: float) -> tuple[float, float, float]:
    """Unit direction sunlight travels, in world coordinates (x east, y north, z up).

    Azimuth advances 15 degrees per hour and points due east at 06:00.
    """
    if not 0.0 <= time_of_day < 24.0:
        raise ValueError("time_of_day must lie in [0, 24)")
    elev = math.radians(sun_elevation(time_of_day))
    azim = math.radians(90.0 + 15.0 * (time_of_day - 6.0))  # clockwise from north
    to_sun = (math.cos(elev) * math.sin(azim), math.cos(elev) * math.cos(azim), math.sin(elev))
    norm = math.sqrt(sum(c * c for c in to_sun))
    return tuple(-c / norm for c in to_sun)


def visibility_limit(env: EnvironmentState | str,
                     overrides: Optional[Mapping[str, Optional[float]]] = None) -> Optional[float]:
    weather = env if isinstance(env, str) else env.weather
    weather = canonical_weather(weather)
    table = dict(DEFAULT_VISIBILITY)
    for name, dist in (overrides or {}).items():
        table[canonical_weather(name)] = dist
    return table[weather]


_NIGHT_HOURS = 12.0  # length of [18, 30) wrapped to [18, 24) + [0, 6)


def _make_state(time_of_day: float, weather: str, schedule: EnvironmentSchedule) -> EnvironmentState:
    if sun_elevation(time_of_day) <= 0.0:
        weather = "night"
    return EnvironmentState(time_of_day, weather, sun_direction(time_of_day),
                            visibility_limit(weather, schedule.visibility))


def next_environment(rng: np.random.Generator, schedule: EnvironmentSchedule,
                     index: int = 0) -> EnvironmentState:
    """Environment for the next captured frame.

    ``per_frame_random`` draws the weather by weight, then the hour: uniform in
    ``time_range`` for daytime weathers, uniform over the night hours for
    ``night``. A daytime draw whose sun sits at or below the horizon is reported
    as night. ``cyclic`` walks the positively weighted weathers in order using
    ``index``; ``fixed`` ignores both ``rng`` and ``index``.
    """
    if schedule.mode == "fixed":
        return _make_state(schedule.fixed_time, canonical_weather(schedule.fixed_weather), schedule)
    probs = schedule.probabilities()
    lo, hi = schedule.time_range
    if schedule.mode == "cyclic":
        active = [w for w, p in zip(WEATHERS, probs) if p > 0]
        weather = active[index % len(active)]
        if weather == "night":
            hour = 0.0
        else:
            hour = (lo + hi) / 2.0
        return _make_state(hour, weather, schedule)
    weather = WEATHERS[int(rng.choice(len(WEATHERS), p=probs))]
    u = float(rng.random())
    if weather == "night":
        hour = math.fmod(18.0 + u * _NIGHT_HOURS, 24.0)
    else:
        hour = lo + u * (hi - lo)
        if hour >= 24.0:
            hour = math.nextafter(24.0, 0.0)
    return _make_state(hour, weather, schedule)
