"""Planner wall-clock reports.

Conveyor: one arm's policy tree over a growing set of objects drawn from the
belt generator. Drone: allocation for the whole fleet over a batch of
requests, with the reactive and MCTS baselines timed on the same instances.
Times cover the planner call only, never simulation or trace logging.
"""

from __future__ import annotations

import math
import time

import numpy as np

from scoba.baselines.hungarian import AssignmentMatrix, hungarian_assign
from scoba.baselines.mcts import MctsConfig, mcts_plan
from scoba.cbs import search
from scoba.core import ProblemInstance, TaskSpec
from scoba.domains.conveyor import BeltConfig, GeneratorState, default_arms, generate_step, window_for
from scoba.completion import GeometricCompletion
from scoba.domains.drone import CityModel, DroneWorld, generate_requests
from scoba.policy_tree import plan_tree

CONVEYOR_OBJECTS = (40, 80, 120, 160, 200)
DRONE_FLEETS = ((3, 18), (5, 15), (5, 30))
DRONE_REQUESTS = (20, 50, 100)


def belt_objects(n: int, rng, belt: BeltConfig = None) -> list:
    """The first ``n`` objects from the belt generator."""
    belt = belt or BeltConfig()
    state = GeneratorState.for_config(belt)
    out, t = [], 0
    while len(out) < n:
        out.extend(generate_step(state, belt, rng, t))
        t += 1
    return out[:n]


def single_arm_instance(n: int, rng, belt: BeltConfig = None) -> ProblemInstance:
    belt = belt or BeltConfig(arms=default_arms())
    arm = belt.arms[0]
    objs = belt_objects(n, rng, belt)
    windows, completion, horizon = {}, {}, 1
    model = GeometricCompletion(arm.grasp_prob)
    for o in objs:
        w = window_for(arm, o, belt.speed, 0)
        windows[(0, o.id)] = w
        completion[(0, o.id)] = model
        horizon = max(horizon, w.upper)
    tasks = tuple(TaskSpec(o.id, 1.0, belt.downtime) for o in objs)
    return ProblemInstance((0,), tasks, horizon, windows, completion)


def _stats(xs):
    xs = np.asarray(xs, dtype=float)
    se = float(xs.std(ddof=1) / math.sqrt(len(xs))) if len(xs) > 1 else 0.0
    return float(xs.mean()), se


def conveyor_timing(objects=CONVEYOR_OBJECTS, reps: int = 10, seed: int = 0) -> list:
    rows = []
    for n in objects:
        sizes, times = [], []
        for r in range(reps):
            inst = single_arm_instance(n, np.random.default_rng((seed, n, r)))
            t0 = time.perf_counter()
            tree = plan_tree(0, inst.feasible_tasks(0), None, inst)
            times.append(time.perf_counter() - t0)
            sizes.append(tree.size)
        (ms, _), (mt, st) = _stats(sizes), _stats(times)
        rows.append({"domain": "conveyor", "setting": "1 arm", "tasks": n, "planner": "scoba", "tree_size": ms, "mean_s": mt, "stderr_s": st})
    return rows


def drone_instance(depots: int, drones: int, requests: int, rng) -> ProblemInstance:
    world = DroneWorld(CityModel.with_depots(depots), drones, 0.0, rng, rng)
    world.add_requests(generate_requests(world.city, 0.0, rng, 0, 0, requests))
    return world.build_instance()


def drone_timing(fleets=DRONE_FLEETS, requests=DRONE_REQUESTS, reps: int = 10, seed: int = 0, baselines: bool = True) -> list:
    rows = []
    for d, n in fleets:
        for k in requests:
            times = {"scoba": [], "hungarian": [], "mcts": []}
            for r in range(reps):
                inst = drone_instance(d, n, k, np.random.default_rng((seed, d, n, k, r)))
                t0 = time.perf_counter()
                search(inst)
                times["scoba"].append(time.perf_counter() - t0)
                if baselines:
                    t0 = time.perf_counter()
                    hungarian_assign(AssignmentMatrix.from_instance(inst, now=0), inst)
                    times["hungarian"].append(time.perf_counter() - t0)
                    t0 = time.perf_counter()
                    mcts_plan(inst, 0, MctsConfig(), seed=r)
                    times["mcts"].append(time.perf_counter() - t0)
            for name, ts in times.items():
                if ts:
                    m, s = _stats(ts)
                    rows.append({"domain": "drone", "setting": f"{d}x{n}", "tasks": k, "planner": name, "tree_size": "", "mean_s": m, "stderr_s": s})
    return rows


TIMING_COLUMNS = ("domain", "setting", "tasks", "planner", "tree_size", "mean_s", "stderr_s")


def timing_report(domain: str = "both", reps: int = 10, seed: int = 0, **kw) -> list:
    rows = []
    if domain in ("conveyor", "both"):
        rows += conveyor_timing(reps=reps, seed=seed)
    if domain in ("drone", "both"):
        rows += drone_timing(reps=reps, seed=seed, **kw)
    return rows
