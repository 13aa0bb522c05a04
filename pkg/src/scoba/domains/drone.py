"""Multi-drone package delivery from fixed depots.

Times are in minutes, distances in km. Travel time between two points is
the Euclidean distance over a cruise speed; the realised time of a flight is
drawn from an Epanechnikov distribution centred on it with a third of it as
half-width. A drone dispatched at ``t`` arrives at ``t + X`` and delivers at
``max(arrival, window.lower)``; the delivery counts only if that is before
``window.upper``. It then flies back to its depot.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from scoba.completion import EpanechnikovCompletion, epan_cdf, epan_ppf
from scoba.core import Allocation, InputError, ProblemInstance, TaskSpec, TimeWindow

__all__ = [
    "CityModel",
    "DeliveryRequest",
    "Drone",
    "DroneWorld",
    "epan_cdf",
    "generate_requests",
    "request_windows",
    "sample_travel_time",
]

MIN_HALF_WIDTH = 1e-6
PENDING, ASSIGNED, DELIVERED, LATE = "pending", "assigned", "delivered", "late"

DEPOTS_3 = ((3.0, 3.5), (9.0, 3.5), (6.0, 9.5))
DEPOTS_5 = ((2.5, 2.5), (9.5, 2.5), (2.5, 10.0), (9.5, 10.0), (6.0, 6.25))


@dataclass
class CityModel:
    depots: tuple = DEPOTS_3
    box: tuple = (0.0, 0.0, 12.0, 12.5)  # x0, y0, x1, y1
    speed: float = 0.6  # km per minute
    range_limit: float = 10.0

    @classmethod
    def with_depots(cls, n: int, **kw) -> "CityModel":
        layouts = {3: DEPOTS_3, 5: DEPOTS_5}
        if n not in layouts:
            raise InputError(f"no built-in layout with {n} depots")
        return cls(layouts[n], **kw)

    def distance(self, p, q) -> float:
        return math.hypot(p[0] - q[0], p[1] - q[1])

    def travel_time(self, p, q) -> float:
        return self.distance(p, q) / self.speed

    def to_text(self) -> str:
        lines = [f"box {' '.join(repr(v) for v in self.box)}", f"speed {self.speed!r}", f"range {self.range_limit!r}"]
        lines += [f"depot {x!r} {y!r}" for x, y in self.depots]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "CityModel":
        kw, depots = {}, []
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].split()
            if not line:
                continue
            try:
                head, vals = line[0], [float(v) for v in line[1:]]
                if head == "box":
                    kw["box"] = tuple(vals[:4])
                elif head == "speed":
                    kw["speed"] = vals[0]
                elif head == "range":
                    kw["range_limit"] = vals[0]
                elif head == "depot":
                    depots.append((vals[0], vals[1]))
                else:
                    raise InputError(f"unknown record {head!r}")
            except (IndexError, ValueError) as exc:
                raise InputError(f"line {lineno}: {exc}") from exc
        if not depots:
            raise InputError("city layout has no depots")
        return cls(tuple(depots), **kw)

    @classmethod
    def load(cls, path) -> "CityModel":
        return cls.from_text(Path(path).read_text())


@dataclass
class DeliveryRequest:
    id: int
    location: tuple
    window: TimeWindow
    status: str = PENDING
    drone: Optional[int] = None
    delivered_at: Optional[float] = None


@dataclass
class Drone:
    id: int
    home_depot: int
    ready_at: float = 0.0  # back at the depot and free
    task: Optional[int] = None


def sample_travel_time(mu: float, r: float, rng: np.random.Generator) -> float:
    """One Epanechnikov draw by inverse CDF; ``mu`` itself when ``r`` is negligible."""
    if r < MIN_HALF_WIDTH:
        return mu
    return epan_ppf(mu, r, rng.random())


def flight_model(mu: float) -> EpanechnikovCompletion:
    return EpanechnikovCompletion(mu, max(mu / 3.0, MIN_HALF_WIDTH))


def request_windows(drone: Drone, request: DeliveryRequest, city: CityModel, now: int = 0):
    """``(window, completion model)`` for a drone-request pair, or None when out of range.

    The attempt window is the request window from ``now`` and from when the
    drone is back at its depot. A drone that cannot arrive before the window
    closes even on its fastest flight is not a candidate.
    """
    depot = city.depots[drone.home_depot]
    dist = city.distance(depot, request.location)
    if dist > city.range_limit:
        return None
    lo = max(request.window.lower, now, math.ceil(drone.ready_at - 1e-9))
    if lo >= request.window.upper:
        return None
    model = flight_model(dist / city.speed)
    if model.cdf(request.window.upper - lo) <= 0.0:
        return None
    return TimeWindow(lo, request.window.upper), model


def generate_requests(
    city: CityModel,
    new_request_prob: float,
    rng: np.random.Generator,
    now: int,
    next_id: int = 0,
    count: Optional[int] = None,
) -> list:
    """Bernoulli arrival at ``now`` (or exactly ``count`` requests when given)."""
    if count is None:
        count = int(rng.random() < new_request_prob)
    x0, y0, x1, y1 = city.box
    out = []
    for i in range(count):
        loc = (float(rng.uniform(x0, x1)), float(rng.uniform(y0, y1)))
        dur = int(rng.integers(15, 31))
        out.append(DeliveryRequest(next_id + i, loc, TimeWindow(now, now + dur)))
    return out


def initial_batch_size(n_drones: int) -> int:
    return int(round(1.5 * n_drones))


@dataclass
class Event:
    time: float
    kind: str
    request: Optional[int] = None
    drone: Optional[int] = None


Planner = Callable[[ProblemInstance, "DroneWorld"], Allocation]


class DroneWorld:
    """Depots, drones and requests. Drones are agents, requests are tasks."""

    def __init__(
        self,
        city: CityModel,
        n_drones: int,
        new_request_prob: float,
        gen_rng: np.random.Generator,
        exec_rng: np.random.Generator,
        noisy_return: bool = False,
    ):
        self.city = city
        self.new_request_prob = new_request_prob
        self.gen_rng = gen_rng
        self.exec_rng = exec_rng
        self.noisy_return = noisy_return
        nd = len(city.depots)
        self.drones = [Drone(i, i % nd) for i in range(n_drones)]
        self.requests: dict = {}
        self.targets: list = [None] * n_drones
        self.events: list = []
        self.t = 0
        self._next_id = 0
        self._schedule: list = []  # (time, kind, request, drone) pending log entries

    @property
    def agents(self) -> tuple:
        return tuple(d.id for d in self.drones)

    def _log(self, time, kind, req=None, drone=None):
        self.events.append(Event(time, kind, req, drone))

    def add_requests(self, reqs) -> None:
        for r in reqs:
            self.requests[r.id] = r
            self._next_id = max(self._next_id, r.id + 1)
            self._log(self.t, "arrival", r.id)

    def arrivals(self, generating: bool = True) -> list:
        new = []
        if self.t == 0 and not self.requests:
            new = generate_requests(self.city, 0.0, self.gen_rng, 0, 0, initial_batch_size(len(self.drones)))
            self.add_requests(new)
        if generating:
            more = generate_requests(self.city, self.new_request_prob, self.gen_rng, self.t, self._next_id)
            self.add_requests(more)
            new = new + more
        return new

    def pending(self) -> list:
        return [r for r in self.requests.values() if r.status == PENDING]

    def build_instance(self) -> ProblemInstance:
        """Planning problem over pending requests; a success keeps a drone busy for its return leg."""
        now = self.t
        reqs = self.pending()
        windows, completion, downtimes = {}, {}, {}
        horizon = now + 1
        for d in self.drones:
            for r in reqs:
                got = request_windows(d, r, self.city, now)
                if got is None:
                    continue
                w, model = got
                windows[(d.id, r.id)] = w
                completion[(d.id, r.id)] = model
                downtimes[(d.id, r.id)] = math.ceil(model.mu - 1e-9)
                horizon = max(horizon, w.upper)
        tasks = tuple(TaskSpec(r.id, 1.0, 0) for r in reqs)
        return ProblemInstance(self.agents, tasks, horizon, windows, completion, downtimes)

    def free_drones(self) -> list:
        return [d.id for d in self.drones if d.ready_at <= self.t]

    def _idle_with_work(self, inst: ProblemInstance) -> bool:
        return any(self.targets[a] is None and inst.feasible_tasks(a) for a in self.free_drones())

    def apply(self, alloc: Allocation) -> None:
        for d in self.drones:
            self.targets[d.id] = alloc.next_assignment(d.id)

    def step_execution(self) -> list:
        """Dispatch drones whose assignment starts now and resolve what is due."""
        t = self.t
        start = len(self.events)
        for d in self.drones:
            tgt = self.targets[d.id]
            if tgt is None or d.ready_at > t:
                continue
            k, s = tgt
            r = self.requests.get(k)
            if r is None or r.status != PENDING:
                self.targets[d.id] = None
                continue
            if s > t:
                continue
            depot = self.city.depots[d.home_depot]
            mu = self.city.travel_time(depot, r.location)
            if self.city.distance(depot, r.location) > self.city.range_limit:
                raise InputError(f"drone {d.id} assigned out-of-range request {k}")
            fly = sample_travel_time(mu, mu / 3.0, self.exec_rng)
            deliver = max(t + fly, r.window.lower)
            back = sample_travel_time(mu, mu / 3.0, self.exec_rng) if self.noisy_return else mu
            r.status, r.drone = ASSIGNED, d.id
            r.delivered_at = deliver
            d.ready_at, d.task = deliver + back, k
            self.targets[d.id] = None
            self._log(t, "dispatch", k, d.id)
            kind = "delivered" if deliver < r.window.upper else "late"
            self._schedule.append((deliver, kind, k, d.id))
            self._schedule.append((d.ready_at, "return", None, d.id))
        for r in self.pending():
            if r.window.upper <= t + 1:
                r.status = LATE
                self._log(t, "expired", r.id)
        due = [e for e in self._schedule if e[0] < t + 1]
        self._schedule = [e for e in self._schedule if e[0] >= t + 1]
        for when, kind, k, di in sorted(due, key=lambda e: (e[0], e[1])):
            if kind == "return":
                self.drones[di].task = None
            else:
                self.requests[k].status = DELIVERED if kind == "delivered" else LATE
            self._log(when, kind, k, di)
        self.t += 1
        return self.events[start:]

    def run(self, planner: Planner, steps: int, drain: bool = True, on_plan=None) -> "DroneResult":
        dirty = True
        while self.t < steps or (drain and (self.pending() or self._schedule)):
            if self.arrivals(self.t < steps):
                dirty = True
            free = any(d.ready_at <= self.t for d in self.drones)
            if dirty and free and self.pending():
                inst = self.build_instance()
                alloc = planner(inst, self)
                if on_plan is not None:
                    on_plan(inst, alloc)
                self.apply(alloc)
                idle = self._idle_with_work(inst)
            else:
                idle = False
            # a free drone left without work is planned again next minute
            dirty = bool(self.step_execution()) or idle
        return DroneResult.from_world(self)

    def write_delivery_log(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time", "event", "request", "drone"])
            for e in self.events:
                w.writerow([f"{e.time:.6g}", e.kind, "" if e.request is None else e.request, "" if e.drone is None else e.drone])


@dataclass
class DroneResult:
    total: int
    delivered: int
    late: int

    @property
    def late_fraction(self) -> float:
        return self.late / self.total if self.total else 0.0

    @classmethod
    def from_world(cls, world: DroneWorld) -> "DroneResult":
        rs = list(world.requests.values())
        return cls(len(rs), sum(r.status == DELIVERED for r in rs), sum(r.status == LATE for r in rs))
