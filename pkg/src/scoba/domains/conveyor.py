"""Conveyor-belt pick-and-place.

Objects ride a unit-length belt at constant speed past a line of arms with
adjacent, non-overlapping workspaces. Positions are continuous, time is
discrete. An object's position at step ``t`` is ``speed * (t - crossing)``
where ``crossing`` is the real-valued time it passed ``x = 0``.

New objects come from a mirrored generator: virtual arms sit at the
reflection of each real workspace across ``x = 0`` and drop objects there,
so every object lands where a matching real arm can pick it. Drops are spaced
so the mirror strategy (real arm ``i`` picks everything virtual arm ``i``
dropped) is always executable with perfect grasping.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from scoba.completion import GeometricCompletion, geometric_cdf
from scoba.core import Allocation, ProblemInstance, TaskSpec, TimeWindow

EPS = 1e-9
ON_BELT, PICKED, MISSED = "on_belt", "picked", "missed"


def grasp_cdf(p: float, t: int) -> float:
    """Probability that an arm with per-step grasp probability ``p`` succeeds within ``t`` steps."""
    return geometric_cdf(p, t)


@dataclass
class ArmSpec:
    workspace: tuple
    grasp_prob: float = 0.75
    busy_until: int = 0

    def __post_init__(self):
        lo, hi = self.workspace
        if not 0.0 <= lo < hi <= 1.0:
            raise ValueError(f"bad workspace {self.workspace}")
        if not 0.0 <= self.grasp_prob <= 1.0:
            raise ValueError(f"grasp probability out of range: {self.grasp_prob}")


DEFAULT_WORKSPACES = ((0.05, 0.35), (0.35, 0.65), (0.65, 0.95))


def default_arms(grasp_prob: float = 0.75) -> list:
    return [ArmSpec(ws, grasp_prob) for ws in DEFAULT_WORKSPACES]


@dataclass
class BeltConfig:
    speed: float = 0.07
    new_object_prob: float = 0.75
    downtime: int = 2
    arms: list = field(default_factory=default_arms)
    length: float = 1.0

    def __post_init__(self):
        if self.speed <= 0:
            raise ValueError("belt speed must be positive")
        spans = sorted(a.workspace for a in self.arms)
        if any(b[0] < a[1] - EPS for a, b in zip(spans, spans[1:])):
            raise ValueError("arm workspaces overlap")


@dataclass
class BeltObject:
    id: int
    crossing: float
    arrival_time: int
    status: str = ON_BELT
    picked_by: Optional[int] = None
    resolved_at: Optional[int] = None

    def position(self, t: float, speed: float) -> float:
        return speed * (t - self.crossing)


def _span(ws, obj_crossing, speed):
    lo = math.ceil(obj_crossing + ws[0] / speed - EPS)
    hi = math.floor(obj_crossing + ws[1] / speed + EPS)
    return lo, hi


def window_for(arm: ArmSpec, obj: BeltObject, speed: float, now: int = 0) -> Optional[TimeWindow]:
    """Steps at which ``obj`` is inside ``arm``'s workspace, from ``now`` on."""
    lo, hi = _span(arm.workspace, obj.crossing, speed)
    lo = max(lo, now)
    if lo >= hi:
        return None
    return TimeWindow(lo, hi)


# ---------------------------------------------------------------------------
# mirrored generator


@dataclass
class _VirtualArm:
    last_drop: float = -math.inf
    real_free: float = -math.inf


@dataclass
class GeneratorState:
    virtual: list
    pending: list = field(default_factory=list)  # (materialise_step, crossing, arm)
    next_id: int = 0
    mirror_plan: dict = field(default_factory=dict)  # object id -> (arm, pick step)

    @classmethod
    def for_config(cls, config: BeltConfig) -> "GeneratorState":
        return cls([_VirtualArm() for _ in config.arms])


def generate_step(state: GeneratorState, config: BeltConfig, rng: np.random.Generator, t: int) -> list:
    """Advance the virtual arms by one step and return the objects appearing at ``t``."""
    v, dt = config.speed, config.downtime
    if config.new_object_prob > 0:
        for i, (arm, va) in enumerate(zip(config.arms, state.virtual)):
            lo, hi = arm.workspace
            if t < va.last_drop + dt + 1 or math.ceil(t + 2 * lo / v - EPS) < va.real_free:
                continue
            if rng.random() >= config.new_object_prob:
                continue
            x = rng.uniform(lo, hi)
            crossing = t + x / v
            w_lo, w_hi = _span(arm.workspace, crossing, v)
            pick = min(max(math.ceil(t + 2 * x / v - EPS), w_lo), w_hi - 1)
            va.last_drop = t
            va.real_free = pick + dt + 1
            state.pending.append((math.ceil(crossing - EPS), crossing, i, pick))
    out, keep = [], []
    for item in state.pending:
        if item[0] <= t:
            obj = BeltObject(state.next_id, item[1], t)
            state.mirror_plan[obj.id] = (item[2], item[3])
            state.next_id += 1
            out.append(obj)
        else:
            keep.append(item)
    state.pending = keep
    out.sort(key=lambda o: o.crossing)
    return out


# ---------------------------------------------------------------------------
# world


@dataclass
class Event:
    time: int
    kind: str
    obj: Optional[int] = None
    arm: Optional[int] = None


Planner = Callable[[ProblemInstance, "ConveyorWorld"], Allocation]


class ConveyorWorld:
    """Belt state, arms and execution. Arms are agents ``0 .. n-1``, objects are tasks."""

    def __init__(self, config: BeltConfig, gen_rng: np.random.Generator, exec_rng: np.random.Generator):
        self.config = config
        self.gen_rng = gen_rng
        self.exec_rng = exec_rng
        self.gen = GeneratorState.for_config(config)
        self.t = 0
        self.objects: dict = {}
        self._live: dict = {}
        self.busy_until = [0] * len(config.arms)
        self.targets: list = [None] * len(config.arms)
        self.events: list = []
        self.generating = True

    @property
    def agents(self) -> tuple:
        return tuple(range(len(self.config.arms)))

    def on_belt(self) -> list:
        return list(self._live.values())

    def in_workspace(self, i: int, obj: BeltObject, t: Optional[int] = None) -> bool:
        lo, hi = _span(self.config.arms[i].workspace, obj.crossing, self.config.speed)
        return lo <= (self.t if t is None else t) < hi

    def arm_window(self, i: int, obj: BeltObject, now: int) -> Optional[TimeWindow]:
        w = window_for(self.config.arms[i], obj, self.config.speed, max(now, self.busy_until[i]))
        return w

    def build_instance(self, now: Optional[int] = None) -> ProblemInstance:
        """Planning problem over the objects on the belt, as seen at ``now``.

        An arm still in downtime has its windows clipped to when it is free.
        """
        now = self.t if now is None else now
        objs = self.on_belt()
        windows, completion = {}, {}
        horizon = now + 1
        for i, arm in enumerate(self.config.arms):
            model = GeometricCompletion(arm.grasp_prob)
            for o in objs:
                w = self.arm_window(i, o, now)
                if w is not None:
                    windows[(i, o.id)] = w
                    completion[(i, o.id)] = model
                    horizon = max(horizon, w.upper)
        tasks = tuple(TaskSpec(o.id, 1.0, self.config.downtime) for o in objs)
        return ProblemInstance(self.agents, tasks, horizon, windows, completion)

    def slot_of(self, obj_id, now: Optional[int] = None, size: float = 0.02) -> int:
        now = self.t if now is None else now
        return int(math.floor(self.objects[obj_id].position(now, self.config.speed) / size))

    def _log(self, kind, obj=None, arm=None):
        self.events.append(Event(self.t, kind, obj, arm))

    def arrivals(self) -> list:
        if not self.generating:
            return []
        new = generate_step(self.gen, self.config, self.gen_rng, self.t)
        for o in new:
            self.objects[o.id] = o
            self._live[o.id] = o
            self._log("arrival", o.id)
        return new

    def apply(self, alloc: Allocation) -> None:
        for i in self.agents:
            nxt = alloc.next_assignment(i)
            self.targets[i] = nxt

    def step_execution(self) -> list:
        """Run one time step of grasp attempts; returns the events it produced."""
        t, cfg = self.t, self.config
        start = len(self.events)
        for i, arm in enumerate(cfg.arms):
            tgt = self.targets[i]
            if tgt is None or self.busy_until[i] > t:
                continue
            k, s = tgt
            obj = self.objects.get(k)
            if obj is None or obj.status != ON_BELT:
                self.targets[i] = None
                continue
            if s > t:
                continue
            lo, hi = _span(arm.workspace, obj.crossing, cfg.speed)
            if not lo <= t < hi:
                if t >= hi:
                    self.targets[i] = None
                continue
            if self.exec_rng.random() < arm.grasp_prob:
                obj.status, obj.picked_by, obj.resolved_at = PICKED, i, t
                del self._live[k]
                self.busy_until[i] = t + 1 + cfg.downtime
                self.targets[i] = None
                self._log("success", k, i)
            elif t + 1 >= hi:
                self.targets[i] = None
                self._log("failure", k, i)
        last = cfg.arms[-1].workspace
        for o in self.on_belt():
            if _span(last, o.crossing, cfg.speed)[1] <= t + 1:
                o.status, o.resolved_at = MISSED, t
                del self._live[o.id]
                self._log("miss", o.id)
        self.t += 1
        return self.events[start:]

    def run(
        self, planner: Planner, steps: int, drain: bool = True, on_plan=None, every_step: bool = False
    ) -> "ConveyorResult":
        """Interleave planning and execution.

        Replans whenever something happened (arrival, success, failure, miss),
        or at every step with ``every_step``.
        """
        dirty = True
        while self.t < steps or (drain and self.on_belt()):
            self.generating = self.t < steps
            if self.arrivals():
                dirty = True
            if dirty and self.on_belt():
                inst = self.build_instance()
                alloc = planner(inst, self)
                if on_plan is not None:
                    on_plan(inst, alloc)
                self.apply(alloc)
            dirty = bool(self.step_execution()) or every_step
        return ConveyorResult.from_world(self)

    def write_event_log(self, path) -> None:
        write_event_log(self.events, path)


@dataclass
class ConveyorResult:
    total: int
    picked: int
    missed: int

    @property
    def miss_fraction(self) -> float:
        return self.missed / self.total if self.total else 0.0

    @classmethod
    def from_world(cls, world: ConveyorWorld) -> "ConveyorResult":
        objs = list(world.objects.values())
        return cls(len(objs), sum(o.status == PICKED for o in objs), sum(o.status == MISSED for o in objs))


def write_event_log(events, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time", "event", "object", "arm"])
        for e in events:
            w.writerow([e.time, e.kind, "" if e.obj is None else e.obj, "" if e.arm is None else e.arm])


def mirror_planner(inst: ProblemInstance, world: ConveyorWorld) -> Allocation:
    """Full-lookahead oracle: each arm picks exactly the objects its virtual twin dropped."""
    out = {a: [] for a in inst.agents}
    for k in (t.id for t in inst.tasks):
        arm, pick = world.gen.mirror_plan[k]
        if pick >= world.t:
            out[arm].append((k, pick))
    return Allocation(out)
