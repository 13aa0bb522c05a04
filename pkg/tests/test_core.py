import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import contested_instance, random_instances, single
from scoba.completion import GeometricCompletion, TabularCompletion
from scoba.core import (
    Allocation,
    Attempt,
    Conflict,
    InputError,
    ProblemInstance,
    ResourceError,
    TaskSpec,
    TimeWindow,
    attempt_feasible,
    brute_force_optimal,
    completion_upper_bound,
    detect_conflicts,
    evaluate_expected_penalty,
)
from scoba import instance_io


def two_agent_shared(w1=(0, 5), w2=(0, 5), p1=0.5, p2=0.5) -> ProblemInstance:
    windows = {("a", "k"): TimeWindow(*w1), ("b", "k"): TimeWindow(*w2)}
    models = {("a", "k"): GeometricCompletion(p1), ("b", "k"): GeometricCompletion(p2)}
    return ProblemInstance(("a", "b"), (TaskSpec("k"),), 10, windows, models)


class TestWindows:
    def test_lower_inclusive_upper_exclusive(self):
        inst = single(0.5, (2, 7))
        assert attempt_feasible(inst, "a", "k", 2)
        assert not attempt_feasible(inst, "a", "k", 7)
        assert not attempt_feasible(inst, "a", "k", 1)

    def test_missing_pair(self):
        inst = ProblemInstance(
            ("a", "b"), (TaskSpec("k"),), 10, {("a", "k"): TimeWindow(2, 7)}, {("a", "k"): GeometricCompletion(0.5)}
        )
        assert not attempt_feasible(inst, "b", "k", 3)

    def test_unknown_ids(self):
        inst = single(0.5, (2, 7))
        with pytest.raises(InputError):
            attempt_feasible(inst, "zz", "k", 3)
        with pytest.raises(InputError):
            attempt_feasible(inst, "a", "zz", 3)

    def test_empty_window_rejected(self):
        with pytest.raises(InputError):
            TimeWindow(3, 3)


class TestInstanceValidation:
    def test_window_beyond_horizon(self):
        with pytest.raises(InputError):
            ProblemInstance(("a",), (TaskSpec("k"),), 4, {("a", "k"): TimeWindow(0, 5)}, {("a", "k"): GeometricCompletion(1)})

    def test_missing_model(self):
        with pytest.raises(InputError):
            ProblemInstance(("a",), (TaskSpec("k"),), 5, {("a", "k"): TimeWindow(0, 5)}, {})

    def test_duplicates_and_negatives(self):
        with pytest.raises(InputError):
            ProblemInstance(("a", "a"), (), 5, {}, {})
        with pytest.raises(InputError):
            TaskSpec("k", penalty=-1)


class TestUpperBound:
    def test_geometric(self):
        assert completion_upper_bound(single(0.75, (0, 2)), "a", "k") == 0.9375

    def test_saturated(self):
        inst = ProblemInstance(
            ("a",), (TaskSpec("k"),), 5, {("a", "k"): TimeWindow(0, 5)}, {("a", "k"): TabularCompletion((0.0, 1.0))}
        )
        assert completion_upper_bound(inst, "a", "k") == 1.0


class TestConflicts:
    def test_contested_root(self, contested):
        alloc = Allocation({"n1": [("k1", 0)], "n2": [("k2", 0)], "n3": [("k1", 0)]})
        assert detect_conflicts(contested, alloc) == [Conflict(("n1", "n3"), "k1", (0, 0))]

    def test_distinct_tasks(self, contested):
        assert detect_conflicts(contested, Allocation({"n1": [("k1", 0)], "n3": [("k3", 0)]})) == []

    def test_disjoint_windows(self):
        inst = two_agent_shared((0, 3), (5, 9))
        assert detect_conflicts(inst, Allocation({"a": [("k", 0)], "b": [("k", 5)]})) == []

    def test_one_side_inside(self):
        inst = two_agent_shared((0, 6), (5, 9))
        got = detect_conflicts(inst, Allocation({"a": [("k", 0)], "b": [("k", 5)]}))
        assert [c.task for c in got] == ["k"]


class TestExpectedPenalty:
    def test_single_attempt(self):
        inst = single(0.75, (0, 2))
        assert math.isclose(evaluate_expected_penalty(inst, {"a": Attempt("k", 0)}), 0.0625, abs_tol=1e-15)

    def test_empty_policy(self):
        inst = ProblemInstance(("a",), tuple(TaskSpec(f"k{i}") for i in range(3)), 1, {}, {})
        assert evaluate_expected_penalty(inst, {"a": None}) == 3.0

    def test_two_independent_attempts(self):
        windows = {("a", "x"): TimeWindow(0, 1), ("b", "y"): TimeWindow(0, 1)}
        models = {("a", "x"): GeometricCompletion(0.75), ("b", "y"): GeometricCompletion(0.5)}
        inst = ProblemInstance(("a", "b"), (TaskSpec("x"), TaskSpec("y")), 1, windows, models)
        got = evaluate_expected_penalty(inst, {"a": Attempt("x", 0), "b": Attempt("y", 0)})
        assert math.isclose(got, 0.75, abs_tol=1e-15)

    def test_success_shared_across_agents(self):
        # both attempt the same task: it is missed only if both fail
        inst = two_agent_shared((0, 1), (0, 1), 0.5, 0.5)
        assert evaluate_expected_penalty(inst, {"a": Attempt("k", 0), "b": Attempt("k", 0)}) == 0.25

    def test_budget(self):
        inst = single(0.5)
        with pytest.raises(ResourceError):
            evaluate_expected_penalty(inst, {"a": Attempt("k", 0)}, budget=1)


class TestOracle:
    def test_single(self):
        _, v = brute_force_optimal(single(0.9))
        assert math.isclose(v, 0.1, abs_tol=1e-15)

    def test_no_tasks(self):
        inst = ProblemInstance(("a",), (), 3, {}, {})
        assert brute_force_optimal(inst)[1] == 0.0

    def test_shared_task_goes_to_better_agent(self):
        inst = two_agent_shared((0, 1), (0, 1), 0.9, 0.5)
        policy, v = brute_force_optimal(inst)
        assert math.isclose(v, 0.1, abs_tol=1e-15)
        assert policy["a"] == Attempt("k", 0) and policy["b"] is None

    def test_policy_value_matches_evaluation(self):
        for inst in random_instances(40, seed=5):
            policy, v = brute_force_optimal(inst)
            assert math.isclose(evaluate_expected_penalty(inst, policy), v, abs_tol=1e-9)

    def test_budget(self):
        with pytest.raises(ResourceError):
            brute_force_optimal(contested_instance(), budget=2)


class TestAllocation:
    def test_sorted_and_deduplicated(self):
        alloc = Allocation({"a": [("y", 3), ("x", 1), ("x", 1)]})
        assert alloc.assignments["a"] == [("x", 1), ("y", 3)]
        assert alloc.next_assignment("a") == ("x", 1)
        assert alloc.tasks_of("a") == {"x", "y"}

    def test_empty(self):
        assert Allocation.empty(["a", "b"]).is_empty()


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000))
def test_instance_text_roundtrip(seed):
    inst = random_instances(1, seed=seed)[0]
    back = instance_io.loads(instance_io.dumps(inst))
    assert instance_io.dumps(back) == instance_io.dumps(inst)
    assert brute_force_optimal(back)[1] == brute_force_optimal(inst)[1]
