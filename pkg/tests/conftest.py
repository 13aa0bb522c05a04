import random

import pytest

from scoba.completion import GeometricCompletion
from scoba.core import ProblemInstance, TaskSpec, TimeWindow


def random_instance(rng: random.Random, max_agents=3, max_tasks=4, max_horizon=12) -> ProblemInstance:
    """Small static instance; each task has one window shared by the agents that can do it."""
    n = rng.randint(1, max_agents)
    K = rng.randint(0, max_tasks)
    T = rng.randint(3, max_horizon)
    agents = tuple(f"n{i}" for i in range(n))
    tasks = tuple(TaskSpec(f"k{j}", 1.0, rng.randint(0, 2)) for j in range(K))
    windows, models = {}, {}
    for t in tasks:
        lo = rng.randint(0, T - 1)
        hi = rng.randint(lo + 1, T)
        for a in agents:
            if rng.random() < 0.8:
                windows[(a, t.id)] = TimeWindow(lo, hi)
                models[(a, t.id)] = GeometricCompletion(round(rng.random(), 2))
    return ProblemInstance(agents, tasks, T, windows, models)


def random_instances(count: int, seed: int = 1, **kw) -> list:
    rng = random.Random(seed)
    return [random_instance(rng, **kw) for _ in range(count)]


def contested_instance() -> ProblemInstance:
    """n1 and n3 both want k1; n3 is the better picker and its fallback k3 is nearly hopeless.

    Root costs 0.2 + 1.1 + 0.5 = 1.8 with a conflict on k1. Excluding k1 for
    n1 costs 1.0 + 1.1 + 0.5 = 2.6; excluding it for n3 costs 0.2 + 1.95 + 0.5.
    """
    w = TimeWindow(0, 1)
    windows = {("n1", "k1"): w, ("n3", "k1"): w, ("n3", "k3"): w, ("n2", "k2"): w}
    models = {
        ("n1", "k1"): GeometricCompletion(0.8),
        ("n3", "k1"): GeometricCompletion(0.9),
        ("n3", "k3"): GeometricCompletion(0.05),
        ("n2", "k2"): GeometricCompletion(0.5),
    }
    tasks = tuple(TaskSpec(k) for k in ("k1", "k2", "k3"))
    return ProblemInstance(("n1", "n2", "n3"), tasks, 2, windows, models)


def staggered_instance() -> ProblemInstance:
    """k2 opens while k1 is running; k3 opens after both have resolved."""
    windows = {("n1", "k1"): TimeWindow(0, 4), ("n1", "k2"): TimeWindow(2, 10), ("n1", "k3"): TimeWindow(14, 18)}
    models = {key: GeometricCompletion(0.3) for key in windows}
    tasks = (TaskSpec("k1", 1.0, 2), TaskSpec("k2", 1.0, 2), TaskSpec("k3", 1.0, 2))
    return ProblemInstance(("n1",), tasks, 18, windows, models)


def single(p: float, window=(0, 1), agent="a", task="k") -> ProblemInstance:
    return ProblemInstance(
        (agent,), (TaskSpec(task),), window[1], {(agent, task): TimeWindow(*window)}, {(agent, task): GeometricCompletion(p)}
    )


@pytest.fixture
def contested():
    return contested_instance()


@pytest.fixture
def staggered():
    return staggered_instance()


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "REPORT", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
