"""Online trials: interleave planning and execution, collect miss or late fractions.

Each trial draws three independent streams from ``SeedSequence((seed, trial, purpose))``:
task generation, execution outcomes and planner randomness. Every planner
sees the same generation stream for a given (seed, trial), so sweeps compare
planners on paired task sequences.
"""

from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from typing import Iterable, Optional

import numpy as np

from scoba.baselines.edd import edd_assign
from scoba.baselines.hungarian import AssignmentMatrix, hungarian_assign
from scoba.baselines.mcts import MctsConfig, mcts_plan
from scoba.cbs import search
from scoba.domains.conveyor import BeltConfig, ConveyorWorld, default_arms
from scoba.domains.drone import CityModel, DroneWorld
from scoba.harness.config import TrialConfig

GENERATION, EXECUTION, PLANNER = 0, 1, 2


def streams(seed: int, trial: int) -> tuple:
    return tuple(np.random.default_rng(np.random.SeedSequence((seed, trial, p))) for p in (GENERATION, EXECUTION, PLANNER))


@dataclass
class TrialMetrics:
    total_tasks: int
    unsuccessful: int
    planner_time_mean: float
    planner_time_max: float
    plans: int
    seed: int
    trial: int

    @property
    def fraction(self) -> float:
        return self.unsuccessful / self.total_tasks if self.total_tasks else 0.0


class _Timed:
    """Wraps a planner and records wall-clock per invocation."""

    def __init__(self, fn):
        self.fn = fn
        self.times: list = []

    def __call__(self, inst, world):
        t0 = time.perf_counter()
        out = self.fn(inst, world)
        self.times.append(time.perf_counter() - t0)
        return out


_QCACHE: dict = {}


def _qpolicy(cfg: TrialConfig, belt: BeltConfig):
    from scoba.baselines.qlearning import QLearnConfig, load_policy, qlearn_train

    qc = QLearnConfig(cfg.q_learning_rate, cfg.q_epsilon_decay, cfg.q_training_steps, cfg.q_cell)
    if cfg.q_table:
        return load_policy(cfg.q_table, belt, qc)
    key = (cfg.seed, cfg.grasp_prob, cfg.speed, cfg.new_object_prob, cfg.downtime, qc)
    if key not in _QCACHE:
        _QCACHE[key] = qlearn_train(belt, qc, seed=cfg.seed)
    return _QCACHE[key]


def make_planner(cfg: TrialConfig, world, rng: np.random.Generator, belt: Optional[BeltConfig] = None):
    """Planner callable ``(instance, world) -> Allocation`` for the configured method."""
    drone = cfg.domain == "drone"

    def free(inst, w):
        if drone:
            return w.free_drones()
        return [a for a in inst.agents if w.busy_until[a] <= w.t]

    if cfg.planner == "scoba":

        def plan(inst, w):
            agents = w.free_drones() if drone else None
            return search(
                inst, cfg.conflict_budget, agents=agents, truncate=cfg.truncate, scope=cfg.conflict_scope
            ).allocation

        return plan
    if cfg.planner == "edd":
        return lambda inst, w: edd_assign(inst, free(inst, w), now=w.t)
    if cfg.planner == "hungarian":
        return lambda inst, w: hungarian_assign(AssignmentMatrix.from_instance(inst, free(inst, w), now=w.t), inst)
    if cfg.planner == "mcts":
        mc = MctsConfig(cfg.mcts_iterations, cfg.mcts_depth, cfg.mcts_c)

        def plan(inst, w):
            seed = int(rng.integers(2**63))
            slot = None if drone else (lambda k: w.slot_of(k))
            return mcts_plan(inst, w.t, mc, seed, agents=free(inst, w), slot_of=slot)

        return plan
    return _qpolicy(cfg, belt).planner


def build_world(cfg: TrialConfig, gen_rng, exec_rng):
    if cfg.domain == "conveyor":
        belt = BeltConfig(cfg.speed, cfg.new_object_prob, cfg.downtime, default_arms(cfg.grasp_prob))
        return ConveyorWorld(belt, gen_rng, exec_rng), belt
    city = CityModel.load(cfg.city) if cfg.city else CityModel.with_depots(cfg.depots)
    return DroneWorld(city, cfg.drones, cfg.new_request_prob, gen_rng, exec_rng, cfg.noisy_return), None


def run_trial(cfg: TrialConfig, trial: int = 0, event_log: Optional[str] = None) -> TrialMetrics:
    """One simulated trial; identical (config, trial) gives identical metrics."""
    gen_rng, exec_rng, plan_rng = streams(cfg.seed, trial)
    world, belt = build_world(cfg, gen_rng, exec_rng)
    planner = _Timed(make_planner(cfg, world, plan_rng, belt))
    if cfg.domain == "conveyor":
        res = world.run(planner, cfg.steps, every_step=cfg.planner == "qlearning")
        total, bad = res.total, res.missed
    else:
        res = world.run(planner, cfg.steps) if cfg.steps > 0 else None
        total, bad = (res.total, res.late) if res else (0, 0)
    if event_log:
        (world.write_event_log if cfg.domain == "conveyor" else world.write_delivery_log)(event_log)
    times = planner.times or [0.0]
    return TrialMetrics(total, bad, float(np.mean(times)), float(max(times)), len(planner.times), cfg.seed, trial)


def _run_one(args):
    cfg, trial = args
    return run_trial(cfg, trial)


def run_trials(cfg: TrialConfig, trials: Optional[int] = None, threads: int = 1) -> list:
    n = cfg.trials if trials is None else trials
    jobs = [(cfg, i) for i in range(n)]
    if threads > 1 and n > 1:
        with ProcessPoolExecutor(threads) as pool:
            out = list(pool.map(_run_one, jobs))
    else:
        out = [_run_one(j) for j in jobs]
    return sorted(out, key=lambda m: m.trial)


def summarize(metrics: Iterable[TrialMetrics]) -> dict:
    ms = list(metrics)
    fr = np.array([m.fraction for m in ms]) if ms else np.zeros(0)
    n = len(fr)
    return {
        "trials": n,
        "mean_fraction": float(fr.mean()) if n else 0.0,
        "stderr": float(fr.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0,
        "mean_planner_time": float(np.mean([m.planner_time_mean for m in ms])) if n else 0.0,
        "total_tasks": int(sum(m.total_tasks for m in ms)),
        "unsuccessful": int(sum(m.unsuccessful for m in ms)),
    }


SWEEP_COLUMNS = ("domain", "planner", "param", "value", "trials", "mean_fraction", "stderr", "mean_planner_time")


def run_sweep(configs: Iterable[TrialConfig], out=None, threads: int = 1) -> list:
    """One summary row per config, in the given order; optionally written as CSV."""
    rows = []
    for cfg in configs:
        s = summarize(run_trials(cfg, threads=threads))
        rows.append(
            {
                "domain": cfg.domain,
                "planner": cfg.planner,
                "param": cfg.label.get("param", ""),
                "value": cfg.label.get("value", ""),
                "trials": s["trials"],
                "mean_fraction": s["mean_fraction"],
                "stderr": s["stderr"],
                "mean_planner_time": s["mean_planner_time"],
            }
        )
    if out is not None:
        write_rows(rows, out, SWEEP_COLUMNS)
    return rows


def write_rows(rows, path, columns) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(columns))
        w.writeheader()
        for r in rows:
            w.writerow({k: r[k] for k in columns})


def write_metrics(metrics, path) -> None:
    cols = ("seed", "trial", "total_tasks", "unsuccessful", "fraction", "planner_time_mean", "planner_time_max", "plans")
    rows = [dict(asdict(m), fraction=m.fraction) for m in metrics]
    write_rows(rows, path, cols)
