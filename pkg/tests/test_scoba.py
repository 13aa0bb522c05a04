import io
import math

import pytest

from conftest import random_instances, single
from scoba import allocate, expand_conflicts, generate_child, search, tie_break
from scoba.cbs import ConflictIndex, TreePlanner, root_node
from scoba.completion import GeometricCompletion
from scoba.core import (
    Allocation,
    InputError,
    ProblemInstance,
    TaskSpec,
    TimeWindow,
    brute_force_optimal,
    detect_conflicts,
    evaluate_expected_penalty,
)
from scoba.policy_tree import extract_assignment, plan_tree


def shared_task(n_agents: int, p=0.5) -> ProblemInstance:
    agents = tuple(f"n{i}" for i in range(1, n_agents + 1))
    windows = {(a, "k"): TimeWindow(0, 3) for a in agents}
    return ProblemInstance(agents, (TaskSpec("k"),), 3, windows, {key: GeometricCompletion(p) for key in windows})


class TestContested:
    def test_left_child_returned(self, contested):
        res = search(contested, None)
        assert math.isclose(res.cost, 2.6, abs_tol=1e-12)
        assert res.node.constraints["n1"] == {"k1"}
        assert res.allocation.assignments == {"n1": [], "n2": [("k2", 0)], "n3": [("k1", 0)]}
        assert res.expansions == 1 and res.generated == 2

    def test_children(self, contested):
        planner = TreePlanner(contested)
        root = root_node(contested, planner, contested.agents)
        assert math.isclose(root.cost, 1.8, abs_tol=1e-12)
        left, right = expand_conflicts(root, contested, planner)
        assert left.constraints["n1"] == {"k1"} and right.constraints["n3"] == {"k1"}
        assert math.isclose(left.cost, 2.6, abs_tol=1e-12)
        assert math.isclose(right.cost, 2.65, abs_tol=1e-12)
        assert not detect_conflicts(contested, left.allocation)
        assert not detect_conflicts(contested, right.allocation)
        # only the constrained agent is re-planned
        assert left.trees["n3"] is root.trees["n3"] and left.trees["n2"] is root.trees["n2"]

    def test_trace(self, contested):
        buf = io.StringIO()
        search(contested, None, trace=buf)
        lines = buf.getvalue().splitlines()
        assert lines[0].startswith("cost=1.8 constraints=0 conflict=k1:n1-n3")
        assert lines[-1].endswith("conflict=none")


class TestGenerateChild:
    def test_unattempted_task_keeps_cost(self, contested):
        planner = TreePlanner(contested)
        root = root_node(contested, planner, contested.agents)
        child = generate_child(root, "n3", "k3", contested, planner)
        assert child.cost == root.cost

    def test_only_task_becomes_residual(self, contested):
        planner = TreePlanner(contested)
        root = root_node(contested, planner, contested.agents)
        child = generate_child(root, "n2", "k2", contested, planner)
        assert child.trees["n2"].value == 1.0
        assert child.trees["n2"].value == plan_tree("n2", [], None, contested, excluded=["k2"]).value


class TestExpand:
    def test_three_agents(self):
        inst = shared_task(3)
        planner = TreePlanner(inst)
        root = root_node(inst, planner, inst.agents)
        assert len(expand_conflicts(root, inst, planner)) == 3

    def test_conflict_free_rejected(self, contested):
        planner = TreePlanner(contested)
        root = root_node(contested, planner, ("n1", "n2"))
        with pytest.raises(InputError):
            expand_conflicts(root, contested, planner)


class TestTieBreak:
    def test_lowest_id_keeps(self, contested):
        alloc = Allocation({"n1": [("k1", 0)], "n2": [("k2", 0)], "n3": [("k1", 0)]})
        out, unassigned = tie_break(alloc, contested)
        assert out.assignments["n1"] == [("k1", 0)] and out.assignments["n3"] == []
        assert unassigned == {"n3"}
        assert not detect_conflicts(contested, out)

    def test_conflict_free_unchanged(self, contested):
        alloc = Allocation({"n1": [("k1", 0)], "n2": [("k2", 0)]})
        out, unassigned = tie_break(alloc, contested)
        assert out is alloc and unassigned == set()

    def test_three_way(self):
        inst = shared_task(3)
        alloc = Allocation({a: [("k", 0)] for a in inst.agents})
        out, unassigned = tie_break(alloc, inst)
        assert sum(bool(v) for v in out.assignments.values()) == 1
        assert unassigned == {"n2", "n3"}

    def test_budget_exhaustion_uses_tie_break(self):
        inst = shared_task(3)
        res = search(inst, conflict_budget=0)
        assert res.budget_exceeded
        assert res.allocation.assignments["n1"] and res.unassigned == {"n2", "n3"}
        assert not detect_conflicts(inst, res.allocation)


def test_single_agent_matches_tree():
    inst = single(0.6, (0, 3))
    res = search(inst, None)
    assert res.generated == 0 and res.expansions == 0
    assert res.allocation.next_assignment("a") == extract_assignment(plan_tree("a", ["k"], None, inst))


def test_symmetric_agents_expand_once():
    # interchangeable agents: the two children of the root are the same up to relabelling
    res = search(shared_task(2), None)
    assert res.generated == 1
    assert math.isclose(res.cost, 0.125 + 1.0, abs_tol=1e-12)


def test_unknown_scope():
    with pytest.raises(InputError):
        search(single(0.5), scope="bogus")


def test_next_scope_is_conflict_free_on_first_moves(contested):
    res = search(contested, None, scope="next")
    firsts = [res.allocation.next_assignment(a) for a in contested.agents]
    tasks = [f[0] for f in firsts if f is not None]
    assert len(tasks) == len(set(tasks))


def test_conflict_index_agrees_with_detection():
    for inst in random_instances(150, seed=21):
        planner = TreePlanner(inst)
        index = ConflictIndex(inst)
        node = root_node(inst, planner, inst.agents)
        for _ in range(4):
            assert index.conflicts(node) == detect_conflicts(inst, node.allocation)
            found = index.earliest(node)
            if found is None:
                break
            node = expand_conflicts(node, inst, planner)[-1]


def test_oracle_equivalence_two_agents():
    n = 0
    for inst in random_instances(220, seed=7, max_agents=2, max_tasks=3, max_horizon=10):
        _, best = brute_force_optimal(inst)
        alloc = allocate(inst, None)
        assert not detect_conflicts(inst, alloc)
        assert abs(evaluate_expected_penalty(inst, alloc.policy()) - best) <= 1e-9
        n += 1
    assert n >= 200


def test_best_first_costs_non_decreasing():
    for inst in random_instances(100, seed=4):
        res = search(inst, None)
        assert all(a <= b + 1e-12 for a, b in zip(res.popped_costs, res.popped_costs[1:]))


def test_deterministic(contested):
    a, b = search(contested, None), search(contested, None)
    assert a.allocation.assignments == b.allocation.assignments and a.cost == b.cost
