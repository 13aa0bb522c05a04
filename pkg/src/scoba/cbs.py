"""High-level coordination: best-first search over the constraint tree.

Each node carries per-agent task exclusions, the per-agent policy trees
planned under them, and the summed root values. Conflicts are detected on
each agent's allocated (task, time) pairs; with ``scope="plan"`` those are all
attempts reachable in the agent's optimal contingent policy, with
``scope="next"`` only its next assignment.
"""

from __future__ import annotations

import heapq
import itertools
import logging
from dataclasses import dataclass, field
from typing import Iterable, Optional, TextIO

from scoba.core import Allocation, Conflict, InputError, ProblemInstance, detect_conflicts, id_key
from scoba.policy_tree import PolicyTree, plan_tree

log = logging.getLogger(__name__)

DEFAULT_CONFLICT_BUDGET = 500
SCOPES = ("plan", "next")


class TreePlanner:
    """Plans policy trees and caches them by the data that determines them.

    Two agents with identical windows, completion models and downtimes over
    the same tasks get the same (shared, read-only) tree.
    """

    def __init__(self, instance: ProblemInstance, horizon: Optional[int] = None, truncate: bool = False):
        self.instance = instance
        self.horizon = horizon
        self.truncate = truncate
        self._cache: dict = {}
        self._mine: dict = {}
        self.builds = 0
        self._pair_sig: dict = {}

    def _sig(self, agent, k):
        key = (agent, k)
        s = self._pair_sig.get(key)
        if s is None:
            inst = self.instance
            w = inst.window(agent, k)
            s = (k, w.lower, w.upper, inst.completion[key], inst.downtime(agent, k), inst.penalty(k))
            self._pair_sig[key] = s
        return s

    def agent_class(self, agent) -> tuple:
        return tuple(self._sig(agent, k) for k in self.instance.feasible_tasks(agent))

    def tree(self, agent, excluded: frozenset = frozenset()) -> PolicyTree:
        tasks = [k for k in self.instance.feasible_tasks(agent) if k not in excluded]
        key = (tuple(self._sig(agent, k) for k in tasks), tuple(sorted(excluded, key=id_key)))
        mine = self._mine.get((agent, key))
        if mine is not None:
            return mine
        hit = self._cache.get(key)
        if hit is not None:
            tree = PolicyTree(hit.root, agent, hit.considered_tasks, hit.excluded, hit.size)
        else:
            tree = plan_tree(agent, tasks, self.horizon, self.instance, self.truncate, excluded)
            self.builds += 1
            self._cache[key] = tree
        self._mine[(agent, key)] = tree
        return tree


@dataclass
class ConstraintTreeNode:
    constraints: dict
    trees: dict
    allocation: Allocation
    cost: float
    depth: int = 0

    @property
    def n_constraints(self) -> int:
        return sum(len(c) for c in self.constraints.values())


@dataclass
class SearchResult:
    allocation: Allocation
    node: ConstraintTreeNode
    expansions: int
    generated: int
    budget_exceeded: bool
    unassigned: set = field(default_factory=set)
    popped_costs: list = field(default_factory=list)

    @property
    def cost(self) -> float:
        return self.node.cost


def _allocation(trees: dict, scope: str) -> Allocation:
    if scope == "plan":
        assignments = {a: t.reachable_assignments() for a, t in trees.items()}
    else:
        assignments = {}
        for a, t in trees.items():
            first = t.first_assignment()
            assignments[a] = [first] if first is not None else []
    return Allocation.presorted(assignments, dict(trees))


def _make_node(constraints, trees, scope, depth) -> ConstraintTreeNode:
    cost = sum(t.value for t in trees.values())
    return ConstraintTreeNode(constraints, trees, _allocation(trees, scope), cost, depth)


def root_node(instance, planner: TreePlanner, agents, scope="plan") -> ConstraintTreeNode:
    constraints = {a: frozenset() for a in agents}
    trees = {a: planner.tree(a) for a in agents}
    return _make_node(constraints, trees, scope, 0)


def generate_child(
    parent: ConstraintTreeNode,
    agent,
    task,
    instance: ProblemInstance,
    planner: Optional[TreePlanner] = None,
    scope: str = "plan",
) -> ConstraintTreeNode:
    """Child with ``task`` excluded for ``agent``; only that agent is re-planned."""
    planner = planner or TreePlanner(instance)
    constraints = dict(parent.constraints)
    constraints[agent] = constraints.get(agent, frozenset()) | {task}
    trees = dict(parent.trees)
    trees[agent] = planner.tree(agent, constraints[agent])
    return _make_node(constraints, trees, scope, parent.depth + 1)


def _select_conflict(conflicts):
    first = min(conflicts, key=_conflict_key)
    involved = set()
    for c in conflicts:
        if c.task == first.task:
            involved.update(c.agents)
    return first, sorted(involved, key=id_key)


def expand_conflicts(
    node: ConstraintTreeNode,
    instance: ProblemInstance,
    planner: Optional[TreePlanner] = None,
    scope: str = "plan",
) -> list:
    """One child per agent involved in the earliest conflict, each excluding its task."""
    conflicts = detect_conflicts(instance, node.allocation)
    if not conflicts:
        raise InputError("node has no conflicts to expand")
    first, involved = _select_conflict(conflicts)
    return [generate_child(node, a, first.task, instance, planner, scope) for a in involved]


def tie_break(alloc: Allocation, instance: ProblemInstance):
    """Resolve remaining conflicts: the lowest agent id keeps each contested task.

    Returns ``(allocation, unassigned)`` where ``unassigned`` holds the agents
    that lost at least one entry.
    """
    conflicts = detect_conflicts(instance, alloc)
    if not conflicts:
        return alloc, set()
    involved: dict = {}
    for c in conflicts:
        involved.setdefault(c.task, set()).update(c.agents)
    assignments = {a: list(p) for a, p in alloc.assignments.items()}
    unassigned = set()
    for k, agents in involved.items():
        keeper = min(agents, key=id_key)
        for a in agents:
            if a == keeper:
                continue
            assignments[a] = [p for p in assignments[a] if p[0] != k]
            unassigned.add(a)
    return Allocation(assignments, trees=alloc.trees), unassigned


class ConflictIndex:
    """Conflict detection for search nodes, cached per pair of agent plans.

    Gives the same result as :func:`scoba.core.detect_conflicts`. A child
    re-plans a single agent, so most agent pairs are looked up, not recomputed.
    Plans are identified by their (shared, cached) tree roots, which the
    planner keeps alive for the whole search.
    """

    def __init__(self, instance: ProblemInstance):
        self.instance = instance
        self._pairs: dict = {}
        self._held: dict = {}

    def _holdings(self, agent, root_id, pairs) -> dict:
        key = (agent, root_id)
        hit = self._held.get(key)
        if hit is None:
            hit = {}
            for k, t in pairs:
                hit.setdefault(k, []).append(t)
            self._held[key] = hit
        return hit

    def _pair(self, a1, h1, a2, h2) -> list:
        win = self.instance.windows
        out = []
        for k in h1.keys() & h2.keys():
            w1, w2 = win[(a1, k)], win[(a2, k)]
            best = None
            for t1 in h1[k]:
                for t2 in h2[k]:
                    if w1.lower <= t2 < w1.upper or w2.lower <= t1 < w2.upper:
                        if best is None or min(t1, t2) < min(best):
                            best = (t1, t2)
            if best is not None:
                out.append(Conflict((a1, a2), k, best))
        return out

    def _all(self, node: ConstraintTreeNode):
        assignments = node.allocation.assignments
        agents = sorted(assignments, key=id_key)
        held = []
        for a in agents:
            rid = id(node.trees[a].root)
            h = self._holdings(a, rid, assignments[a])
            if h:
                held.append((a, rid, h))
        for i, (a1, r1, h1) in enumerate(held):
            for a2, r2, h2 in held[i + 1 :]:
                key = (a1, r1, a2, r2)
                hit = self._pairs.get(key)
                if hit is None:
                    hit = self._pairs[key] = [(_conflict_key(c), c) for c in self._pair(a1, h1, a2, h2)]
                yield from hit

    def conflicts(self, node: ConstraintTreeNode) -> list:
        return [c for _, c in sorted(self._all(node), key=lambda kc: kc[0])]

    def earliest(self, node: ConstraintTreeNode):
        """``(conflict, involved agents)`` for the earliest conflict, or None."""
        found = list(self._all(node))
        if not found:
            return None
        key, first = min(found, key=lambda kc: kc[0])
        involved = set()
        for _, c in found:
            if c.task == first.task:
                involved.update(c.agents)
        return first, sorted(involved, key=id_key)


def _conflict_key(c: Conflict) -> tuple:
    return (min(c.times), id_key(c.task), id_key(c.agents[0]), id_key(c.agents[1]))


class ScobaSearch:
    """Best-first search over constraint-tree nodes (cost, then insertion order).

    Nodes whose constraint maps are equal up to a permutation of
    interchangeable agents (identical planning data) are generated once.
    """

    def __init__(
        self,
        instance: ProblemInstance,
        conflict_budget: Optional[int] = DEFAULT_CONFLICT_BUDGET,
        *,
        agents: Optional[Iterable] = None,
        truncate: bool = False,
        horizon: Optional[int] = None,
        scope: str = "plan",
        planner: Optional[TreePlanner] = None,
        trace: Optional[TextIO] = None,
    ):
        if scope not in SCOPES:
            raise InputError(f"unknown conflict scope {scope!r}")
        self.instance = instance
        self.conflict_budget = conflict_budget
        self.agents = tuple(sorted(instance.agents if agents is None else agents, key=id_key))
        self.scope = scope
        self.planner = planner or TreePlanner(instance, horizon, truncate)
        self.trace = trace
        self.index = ConflictIndex(instance)
        classes: dict = {}
        self._class_of = {}
        for a in self.agents:
            self._class_of[a] = classes.setdefault(self.planner.agent_class(a), len(classes))

    def _canonical(self, constraints) -> tuple:
        groups: dict = {}
        for a, c in constraints.items():
            groups.setdefault(self._class_of[a], []).append(tuple(sorted(c, key=id_key)))
        return tuple(sorted((cls, tuple(sorted(v, key=repr))) for cls, v in groups.items()))

    def _log(self, node, conflict):
        if self.trace is not None:
            what = "none" if conflict is None else f"{conflict.task}:{conflict.agents[0]}-{conflict.agents[1]}"
            self.trace.write(f"cost={node.cost:.9g} constraints={node.n_constraints} conflict={what}\n")

    def run(self) -> SearchResult:
        inst = self.instance
        root = root_node(inst, self.planner, self.agents, self.scope)
        counter = itertools.count()
        open_list = [(root.cost, next(counter), root)]
        seen = {self._canonical(root.constraints)}
        expansions = generated = 0
        popped = []
        while open_list:
            _, _, node = heapq.heappop(open_list)
            popped.append(node.cost)
            found = self.index.earliest(node)
            if found is None:
                self._log(node, None)
                return SearchResult(node.allocation, node, expansions, generated, False, set(), popped)
            first, involved = found
            if self.conflict_budget is not None and expansions >= self.conflict_budget:
                self._log(node, first)
                alloc, unassigned = tie_break(node.allocation, inst)
                log.debug("conflict budget %s exhausted at cost %.4f", self.conflict_budget, node.cost)
                return SearchResult(alloc, node, expansions, generated, True, unassigned, popped)
            self._log(node, first)
            expansions += 1
            for a in involved:
                cons = dict(node.constraints)
                cons[a] = cons[a] | {first.task}
                key = self._canonical(cons)
                if key in seen:
                    continue
                seen.add(key)
                child = generate_child(node, a, first.task, inst, self.planner, self.scope)
                generated += 1
                heapq.heappush(open_list, (child.cost, next(counter), child))
        # every branch closed by duplicate detection; cannot happen while the root is valid
        raise RuntimeError("constraint tree exhausted without a conflict-free node")


def search(instance: ProblemInstance, conflict_budget=DEFAULT_CONFLICT_BUDGET, **kw) -> SearchResult:
    return ScobaSearch(instance, conflict_budget, **kw).run()


def allocate(instance: ProblemInstance, conflict_budget: Optional[int] = DEFAULT_CONFLICT_BUDGET, **kw) -> Allocation:
    """Conflict-free allocation of minimum summed cost (tie-broken if the budget runs out)."""
    return search(instance, conflict_budget, **kw).allocation
