import numpy as np
import pytest

from conftest import single
from scoba.cbs import search
from scoba.completion import GeometricCompletion
from scoba.coordination import CoordinationGraph, allocate_by_components, build_graph, components, topological_allocate
from scoba.core import InputError, ProblemInstance, TaskSpec, TimeWindow, detect_conflicts
from scoba.domains.conveyor import BeltConfig, ConveyorWorld


def belt_instance(seed=0, steps=40):
    world = ConveyorWorld(BeltConfig(), np.random.default_rng([seed, 0]), np.random.default_rng([seed, 1]))
    for _ in range(steps):
        world.arrivals()
        world.t += 1
    return world.build_instance()


def instance_with(feasible: dict, window=(0, 4)) -> ProblemInstance:
    tasks = sorted({k for ks in feasible.values() for k in ks})
    windows = {(a, k): TimeWindow(*window) for a, ks in feasible.items() for k in ks}
    models = {key: GeometricCompletion(0.5) for key in windows}
    return ProblemInstance(tuple(feasible), tuple(TaskSpec(k) for k in tasks), window[1], windows, models)


class TestBuildGraph:
    def test_conveyor_chain(self):
        chains = 0
        for steps in range(5, 60, 5):
            g = build_graph(belt_instance(0, steps), directed=True)
            assert g.edges <= {(0, 1), (1, 2)}
            chains += g.edges == {(0, 1), (1, 2)}
            if g.edges == {(0, 1), (1, 2)}:
                assert g.ancestors(2) == {0, 1}
        assert chains > 0

    def test_far_apart_drones(self):
        g = build_graph(instance_with({"d1": ["a", "b"], "d2": ["c"]}))
        assert g.edges == frozenset()

    def test_shared_task_complete(self):
        g = build_graph(instance_with({"x": ["k"], "y": ["k"], "z": ["k"]}))
        assert len(g.edges) == 3

    def test_bad_order(self):
        with pytest.raises(InputError):
            build_graph(instance_with({"x": ["k"]}), order=["y"])


class TestComponents:
    def test_chain(self):
        g = CoordinationGraph(frozenset({1, 2, 3}), frozenset({(1, 2), (2, 3)}), True)
        assert components(g) == [{1, 2, 3}]

    def test_isolated(self):
        g = CoordinationGraph(frozenset(range(5)), frozenset())
        assert components(g) == [{0}, {1}, {2}, {3}, {4}]

    def test_two_pairs(self):
        g = CoordinationGraph(frozenset("abcd"), frozenset({("a", "b"), ("c", "d")}))
        assert components(g) == [{"a", "b"}, {"c", "d"}]


class TestTopological:
    def test_matches_full_search_on_belt(self):
        for seed in range(4):
            for steps in (10, 25, 40):
                inst = belt_instance(seed, steps)
                alloc = topological_allocate(inst, build_graph(inst, directed=True))
                full = search(inst, None)
                assert sum(t.value for t in alloc.trees.values()) == full.cost
                assert not detect_conflicts(inst, alloc)

    def test_single_agent(self):
        inst = single(0.5, (0, 3))
        alloc = topological_allocate(inst, build_graph(inst, directed=True))
        assert alloc.assignments["a"] == [("k", 0)]

    def test_independent_agents(self):
        inst = instance_with({"x": ["a"], "y": ["b"]})
        alloc = topological_allocate(inst, build_graph(inst, directed=True))
        assert alloc.assignments == {"x": [("a", 0)], "y": [("b", 0)]}

    def test_cycle_rejected(self):
        inst = instance_with({"x": ["k"], "y": ["k"]})
        g = CoordinationGraph(frozenset({"x", "y"}), frozenset({("x", "y"), ("y", "x")}), True)
        with pytest.raises(InputError):
            topological_allocate(inst, g)

    def test_undirected_rejected(self):
        inst = instance_with({"x": ["k"]})
        with pytest.raises(InputError):
            topological_allocate(inst, build_graph(inst))


def test_components_allocation_matches_joint_search():
    inst = instance_with({"a": ["k1", "k2"], "b": ["k2"], "c": ["k3"], "d": ["k3", "k4"]})
    joint = search(inst, None)
    for threads in (1, 2):
        split = allocate_by_components(inst, threads=threads, conflict_budget=None)
        assert sum(t.value for t in split.trees.values()) == joint.cost
        assert not detect_conflicts(inst, split)
