"""Seeded traffic: signal controller, speed-capped car following, crosswalk pedestrians.

Actor state is kept column-wise (one numpy array per attribute, rows sorted by
actor id) so the per-step update runs as a single compiled kernel.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional

import numpy as np

from . import _accel
from .scene import (APPROACHES, AXIS, PEDESTRIAN, VEHICLE, ActorClass, Actor, ConfigError,
                    IntersectionMap, default_catalog, route_pose)

GREEN, YELLOW, RED = "green", "yellow", "red"
_STATE_CODE = {GREEN: 0, YELLOW: 1, RED: 2}
KIND_CODE = {PEDESTRIAN: 0, VEHICLE: 1}
KIND_NAME = {0: PEDESTRIAN, 1: VEHICLE}


@dataclass(frozen=True)
class LightCycle:
    green_s: float = 20.0
    yellow_s: float = 3.0
    all_red_s: float = 2.0

    def validate(self, prefix: str = "traffic.light") -> None:
        for name in ("green_s", "yellow_s", "all_red_s"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{prefix}.{name}", "must be positive")

    @property
    def half(self) -> float:
        return self.green_s + self.yellow_s + self.all_red_s

    @property
    def period(self) -> float:
        return 2.0 * self.half


def axis_states(t: float, cycle: LightCycle) -> tuple[str, str]:
    """(NS, EW) signal states at time ``t``; every window is half-open."""
    if t < 0:
        raise ValueError("time must be non-negative")
    tm = math.fmod(t, cycle.period)
    half = cycle.half
    g, y = cycle.green_s, cycle.green_s + cycle.yellow_s
    if tm < half:
        ns = GREEN if tm < g else YELLOW if tm < y else RED
        return ns, RED
    tm -= half
    ew = GREEN if tm < g else YELLOW if tm < y else RED
    return RED, ew


def light_phase(t: float, cycle: LightCycle) -> dict[str, str]:
    """Per-approach signal state: NS green, yellow, all-red, then the same for EW."""
    ns, ew = axis_states(t, cycle)
    return {a: (ns if AXIS[a] == "NS" else ew) for a in APPROACHES}


def time_until_released(t: float, cycle: LightCycle, axis: str) -> float:
    """Seconds from ``t`` until ``axis`` next leaves red (0 if it is not red)."""
    ns, ew = axis_states(t, cycle)
    if (ns if axis == "NS" else ew) != RED:
        return 0.0
    start = 0.0 if axis == "NS" else cycle.half
    return math.fmod(start - math.fmod(t, cycle.period) + cycle.period, cycle.period)


@dataclass(frozen=True)
class TrafficParams:
    targets: Mapping[str, int] = field(default_factory=lambda: {VEHICLE: 20, PEDESTRIAN: 30})
    vehicle_speed: float = 10.0
    pedestrian_speed: float = 1.4
    min_gap: float = 2.0
    accel: float = 2.5
    decel: float = 4.0
    dt: float = 0.05
    light: LightCycle = LightCycle()

    def validate(self, prefix: str = "traffic") -> None:
        for kind, n in self.targets.items():
            if kind not in KIND_CODE:
                raise ConfigError(f"{prefix}.targets.{kind}", "unknown actor class")
            if not isinstance(n, int) or isinstance(n, bool) or n < 0:
                raise ConfigError(f"{prefix}.targets.{kind}", "must be a non-negative integer")
        for name in ("vehicle_speed", "pedestrian_speed", "accel", "decel"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{prefix}.{name}", "must be positive")
        if self.min_gap < 0:
            raise ConfigError(f"{prefix}.min_gap", "must be non-negative")
        if not 0 < self.dt <= 0.1:
            raise ConfigError(f"{prefix}.dt", "must lie in (0, 0.1]")
        self.light.validate(f"{prefix}.light")


_INT_COLS = ("ids", "kinds", "routes")
_FLOAT_COLS = ("progress", "speed", "desired", "lateral")


@dataclass(frozen=True, eq=False)
class WorldState:
    """Immutable snapshot of the dynamic scene.

    Rows of the per-actor columns are sorted by ``ids``. ``committed`` marks
    vehicles past their stop line and pedestrians already on the crosswalk;
    both ignore the signal from then on.
    """

    t: float
    ids: np.ndarray
    kinds: np.ndarray
    routes: np.ndarray
    progress: np.ndarray
    speed: np.ndarray
    desired: np.ndarray
    lateral: np.ndarray
    committed: np.ndarray
    next_id: int = 0
    rng_state: Optional[dict] = None
    params: TrafficParams = TrafficParams()

    @classmethod
    def empty(cls, params: TrafficParams = TrafficParams(), t: float = 0.0,
              rng_state: Optional[dict] = None) -> "WorldState":
        z = np.zeros(0)
        return cls(t, np.zeros(0, np.int64), np.zeros(0, np.int8), np.zeros(0, np.int32),
                   z, z, z, z, np.zeros(0, bool), 0, rng_state, params)

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def light_phase(self) -> dict[str, str]:
        return light_phase(self.t, self.params.light)

    def count(self, kind: str) -> int:
        return int(np.count_nonzero(self.kinds == KIND_CODE[kind]))

    def actors(self, imap: IntersectionMap, catalog: Mapping[str, ActorClass]) -> list[Actor]:
        out = []
        for i in range(len(self.ids)):
            route = imap.routes[int(self.routes[i])]
            out.append(Actor(
                id=int(self.ids[i]), actor_class=catalog[KIND_NAME[int(self.kinds[i])]],
                pose=route_pose(route, float(self.progress[i]), float(self.lateral[i])),
                speed=float(self.speed[i]), route=int(self.routes[i]),
                progress=float(self.progress[i]),
            ))
        return out

    def to_bytes(self) -> bytes:
        """Canonical serialization; equal states give identical bytes."""
        doc = {
            "t": repr(float(self.t)),
            "next_id": self.next_id,
            "rng_state": self.rng_state,
            "committed": self.committed.astype(int).tolist(),
        }
        for name in _INT_COLS:
            doc[name] = getattr(self, name).tolist()
        for name in _FLOAT_COLS:
            doc[name] = [repr(float(v)) for v in getattr(self, name)]
        return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()


@dataclass(frozen=True)
class _RouteTable:
    kind: np.ndarray
    length: np.ndarray
    hold: np.ndarray
    release: np.ndarray
    axis: np.ndarray  # 0 NS, 1 EW


def route_table(imap: IntersectionMap) -> _RouteTable:
    """Per-route arrays for the kernel, cached on the (immutable) map."""
    cached = imap.__dict__.get("_route_table")
    if cached is None:
        r = imap.routes
        cached = _RouteTable(
            np.array([KIND_CODE[x.kind] for x in r], np.int8),
            np.array([x.length for x in r]),
            np.array([x.hold for x in r]),
            np.array([x.release for x in r]),
            np.array([0 if x.axis == "NS" else 1 for x in r], np.int8),
        )
        object.__setattr__(imap, "_route_table", cached)
    return cached


def _advance_py(kinds, routes, progress, speed, desired, committed, length,
                r_hold, r_release, r_axis, states, release_in, dt, min_gap, accel, decel,
                out_progress, out_speed, out_committed):
    """One integration step for every actor.

    ``states[axis]`` is 0 green, 1 yellow, 2 red; ``release_in[axis]`` is the
    time until that axis leaves red. Leaders are found from the pre-step
    positions, so the result does not depend on update order.
    """
    n = kinds.shape[0]
    for i in range(n):
        p = progress[i]
        v = speed[i]
        rt = routes[i]
        hold = r_hold[rt]
        axis = r_axis[rt]
        out_committed[i] = committed[i]
        if kinds[i] == 1:
            half = 0.5 * length[i]
            vmax = min(desired[i], v + accel * dt)
            lead = -1
            for j in range(n):
                if j != i and kinds[j] == 1 and routes[j] == rt and progress[j] > p:
                    if lead < 0 or progress[j] < progress[lead]:
                        lead = j
            if lead >= 0:
                room = (progress[lead] - 0.5 * length[lead]) - (p + half) - min_gap
                if room < 0.0:
                    room = 0.0
                vmax = min(vmax, room / dt, math.sqrt(2.0 * decel * room))
            must_stop = False
            if not committed[i]:
                ds = hold - (p + half)
                st = states[axis]
                if st == 2 or (st == 1 and ds >= v * v / (2.0 * decel)):
                    must_stop = True
                    if ds < 0.0:
                        ds = 0.0
                    vmax = min(vmax, ds / dt, math.sqrt(2.0 * decel * ds))
            if vmax < 0.0:
                vmax = 0.0
            newp = p + vmax * dt
            if not committed[i]:
                if must_stop:
                    # rounding must never carry the bumper over the line
                    if newp + half > hold:
                        newp = p
                        vmax = 0.0
                elif newp + half > hold:
                    out_committed[i] = True
            out_progress[i] = newp
            out_speed[i] = vmax
        else:
            v = desired[i]
            newp = p + v * dt
            if not committed[i]:
                remaining = r_release[rt] - max(p, hold)
                if states[axis] == 2 and release_in[axis] * v >= remaining:
                    if newp > hold:
                        out_committed[i] = True
                elif newp > hold:
                    newp = max(p, hold)
            out_progress[i] = newp
            out_speed[i] = (newp - p) / dt


_advance_jit = _accel.njit(_advance_py)


def _lengths(world: WorldState, catalog: Mapping[str, ActorClass]) -> np.ndarray:
    veh = catalog[VEHICLE].dimensions[2]
    ped = catalog[PEDESTRIAN].dimensions[2]
    return np.where(world.kinds == 1, veh, ped)


def step(world: WorldState, imap: IntersectionMap, dt: Optional[float] = None,
         catalog: Optional[Mapping[str, ActorClass]] = None) -> WorldState:
    """Advance the world by ``dt`` seconds (default: the configured step)."""
    params = world.params
    dt = params.dt if dt is None else dt
    if not 0 < dt <= 0.1:
        raise ValueError("dt must lie in (0, 0.1]")
    catalog = catalog or _default_catalog(params)
    table = route_table(imap)
    ns, ew = axis_states(world.t, params.light)
    states = np.array([_STATE_CODE[ns], _STATE_CODE[ew]], np.int8)
    release_in = np.array([time_until_released(world.t, params.light, "NS"),
                           time_until_released(world.t, params.light, "EW")])
    n = len(world)
    out_p, out_v = np.empty(n), np.empty(n)
    out_c = np.empty(n, bool)
    kernel = _advance_jit if _accel.USE_NUMBA else _advance_py
    kernel(world.kinds, world.routes, world.progress, world.speed, world.desired,
           world.committed, _lengths(world, catalog), table.hold, table.release, table.axis,
           states, release_in, float(dt), float(params.min_gap), float(params.accel),
           float(params.decel), out_p, out_v, out_c)
    return replace(world, t=world.t + dt, progress=out_p, speed=out_v, committed=out_c)


_catalogs: dict = {}


def _default_catalog(params: TrafficParams) -> dict:
    key = (params.vehicle_speed, params.pedestrian_speed)
    if key not in _catalogs:
        _catalogs[key] = default_catalog(*key)
    return _catalogs[key]


def _entry_clear(world: WorldState, route: int, kind_code: int, length: float,
                 min_gap: float) -> bool:
    on_route = (world.routes == route) & (world.kinds == kind_code)
    if not on_route.any():
        return True
    nearest = world.progress[on_route].min()
    if kind_code == 1:
        return nearest >= length + min_gap + 1.0
    return nearest >= 2.0


def _place_ok(world: WorldState, route: int, kind_code: int, progress: float, length: float,
              min_gap: float) -> bool:
    if kind_code != 1:
        return True
    on_route = (world.routes == route) & (world.kinds == 1)
    return bool(np.all(np.abs(world.progress[on_route] - progress) >= length + min_gap + 1.0))


def spawn_despawn(world: WorldState, imap: IntersectionMap, rng: np.random.Generator,
                  targets: Optional[Mapping[str, int]] = None,
                  catalog: Optional[Mapping[str, ActorClass]] = None,
                  scatter: bool = False) -> WorldState:
    """Drop actors past their route end, then top each class up to its target.

    New actors enter at route starts whose entry is clear. With ``scatter`` they
    are placed at random progress instead (used for the opening frame).
    Vehicles are handled before pedestrians; every draw comes from ``rng``.
    """
    params = world.params
    targets = params.targets if targets is None else targets
    catalog = catalog or _default_catalog(params)
    table = route_table(imap)

    keep = world.progress <= table.length[world.routes] if len(world) else np.zeros(0, bool)
    if not keep.all():
        world = replace(world, **{name: getattr(world, name)[keep]
                                  for name in _INT_COLS + _FLOAT_COLS + ("committed",)})

    need = {k: int(targets.get(k, 0)) - world.count(k) for k in (VEHICLE, PEDESTRIAN)}
    if need[VEHICLE] <= 0 and need[PEDESTRIAN] <= 0:
        return world

    cols = {name: list(getattr(world, name)) for name in _INT_COLS + _FLOAT_COLS + ("committed",)}
    next_id = world.next_id
    drew = False
    for kind in (VEHICLE, PEDESTRIAN):
        code = KIND_CODE[kind]
        cls = catalog[kind]
        length = cls.dimensions[2]
        candidates = imap.routes_of(kind)
        for _ in range(max(need[kind], 0)):
            staged = _staged(cols, world)
            if scatter:
                placed = None
                for _attempt in range(20):
                    route = int(candidates[rng.integers(len(candidates))])
                    prog = float(rng.uniform(0.0, imap.routes[route].length))
                    drew = True
                    if _place_ok(staged, route, code, prog, length, params.min_gap):
                        placed = (route, prog)
                        break
                if placed is None:
                    continue
                route, prog = placed
            else:
                free = [r for r in candidates
                        if _entry_clear(staged, r, code, length, params.min_gap)]
                if not free:
                    break
                route = int(free[rng.integers(len(free))])
                prog = 0.0
                drew = True
            if kind == VEHICLE:
                desired = cls.nominal_speed * float(rng.uniform(0.85, 1.15))
                lateral = 0.0
                speed = 0.0 if scatter else desired
                past = prog + 0.5 * length > imap.routes[route].hold
            else:
                desired = cls.nominal_speed * float(rng.uniform(0.8, 1.2))
                lateral = float(rng.uniform(-0.25, 0.25)) * imap.config.sidewalk_width
                speed = desired
                past = prog > imap.routes[route].hold
            for name, val in (("ids", next_id), ("kinds", code), ("routes", route),
                              ("progress", prog), ("speed", speed), ("desired", desired),
                              ("lateral", lateral), ("committed", past)):
                cols[name].append(val)
            next_id += 1

    return replace(
        world,
        ids=np.array(cols["ids"], np.int64), kinds=np.array(cols["kinds"], np.int8),
        routes=np.array(cols["routes"], np.int32),
        progress=np.array(cols["progress"], np.float64), speed=np.array(cols["speed"], np.float64),
        desired=np.array(cols["desired"], np.float64), lateral=np.array(cols["lateral"], np.float64),
        committed=np.array(cols["committed"], bool), next_id=next_id,
        rng_state=rng.bit_generator.state if drew else world.rng_state,
    )


def _staged(cols: dict, world: WorldState) -> WorldState:
    return replace(world, routes=np.array(cols["routes"], np.int32),
                   kinds=np.array(cols["kinds"], np.int8),
                   progress=np.array(cols["progress"], np.float64))


def initial_world(imap: IntersectionMap, params: TrafficParams, rng: np.random.Generator,
                  catalog: Optional[Mapping[str, ActorClass]] = None) -> WorldState:
    """World at ``t = 0`` with every class scattered along its routes up to target."""
    world = WorldState.empty(params, rng_state=rng.bit_generator.state)
    return spawn_despawn(world, imap, rng, catalog=catalog, scatter=True)
