"""Coordination graphs: decomposition into components and ordered planning.

An edge joins two agents whose feasible task sets intersect, so a missing
edge certifies the agents can never compete for a task.
"""

from __future__ import annotations

import graphlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

from scoba.cbs import TreePlanner, search
from scoba.core import Allocation, InputError, ProblemInstance, id_key

EXCLUSION_RULES = ("overlap", "all")


@dataclass(frozen=True)
class CoordinationGraph:
    nodes: frozenset
    edges: frozenset
    directed: bool = False

    def neighbours(self, a) -> set:
        out = set()
        for u, v in self.edges:
            if u == a:
                out.add(v)
            elif v == a:
                out.add(u)
        return out

    def predecessors(self, a) -> set:
        if not self.directed:
            raise InputError("predecessors are only defined on a directed graph")
        return {u for u, v in self.edges if v == a}

    def ancestors(self, a) -> set:
        seen, stack = set(), [a]
        while stack:
            for p in self.predecessors(stack.pop()):
                if p not in seen:
                    seen.add(p)
                    stack.append(p)
        return seen


def _reduce(nodes, edges) -> set:
    # transitive reduction of an acyclic edge set
    succ = {n: set() for n in nodes}
    for u, v in edges:
        succ[u].add(v)

    def reach(u, skip):
        seen, stack = set(), [w for w in succ[u] if w != skip]
        while stack:
            w = stack.pop()
            if w not in seen:
                seen.add(w)
                stack.extend(succ[w])
        return seen

    return {(u, v) for u, v in edges if v not in reach(u, v)}


def build_graph(instance: ProblemInstance, directed: bool = False, order: Optional[Sequence] = None) -> CoordinationGraph:
    """Edge between agents iff their feasible task sets intersect.

    A directed graph orients each edge along ``order`` (upstream first, default
    the instance's agent order) and keeps only the transitive reduction, so a
    conveyor line becomes the chain arm1 -> arm2 -> arm3.
    """
    agents = list(instance.agents if order is None else order)
    if set(agents) != set(instance.agents) or len(agents) != len(instance.agents):
        raise InputError("order must list every agent exactly once")
    rank = {a: i for i, a in enumerate(agents)}
    sets = {a: set(instance.feasible_tasks(a)) for a in agents}
    edges = set()
    for i, u in enumerate(agents):
        for v in agents[i + 1 :]:
            if sets[u] & sets[v]:
                edges.add((u, v) if rank[u] < rank[v] else (v, u))
    if directed:
        edges = _reduce(agents, edges)
    return CoordinationGraph(frozenset(agents), frozenset(edges), directed)


def components(graph: CoordinationGraph) -> list:
    """Connected components, ignoring direction, ordered by their smallest agent id."""
    parent = {n: n for n in graph.nodes}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for u, v in graph.edges:
        ru, rv = find(u), find(v)
        if ru != rv:
            parent[ru] = rv
    groups: dict = {}
    for n in graph.nodes:
        groups.setdefault(find(n), set()).add(n)
    return sorted(groups.values(), key=lambda g: min(id_key(a) for a in g))


def _could_conflict(instance, a, b, k) -> bool:
    wa, wb = instance.window(a, k), instance.window(b, k)
    return wa is not None and wb is not None and wa.lower < wb.upper and wb.lower < wa.upper


def topological_allocate(
    instance: ProblemInstance,
    graph: CoordinationGraph,
    *,
    exclusion: str = "overlap",
    truncate: bool = False,
    horizon: Optional[int] = None,
) -> Allocation:
    """Plan agents along a topological order, excluding tasks held by their ancestors.

    With ``exclusion="overlap"`` an ancestor's task is excluded only when the
    two windows overlap, which is exactly when a conflict could arise; with
    ``"all"`` every ancestor task is excluded. Either way the result is
    conflict-free without any constraint-tree search.
    """
    if not graph.directed:
        raise InputError("topological allocation needs a directed graph")
    if exclusion not in EXCLUSION_RULES:
        raise InputError(f"unknown exclusion rule {exclusion!r}")
    sorter = graphlib.TopologicalSorter({n: graph.predecessors(n) for n in graph.nodes})
    try:
        order = list(sorter.static_order())
    except graphlib.CycleError as exc:
        raise InputError(f"coordination graph has a cycle: {exc.args[1]}") from None
    planner = TreePlanner(instance, horizon, truncate)
    trees, assignments = {}, {}
    for a in order:
        excluded = set()
        for p in graph.ancestors(a):
            for k, _ in assignments[p]:
                if exclusion == "all" or _could_conflict(instance, p, a, k):
                    excluded.add(k)
        excluded &= set(instance.feasible_tasks(a))
        tree = planner.tree(a, frozenset(excluded))
        trees[a] = tree
        assignments[a] = tree.reachable_assignments()
    return Allocation(assignments, trees=trees)


def allocate_by_components(
    instance: ProblemInstance,
    graph: Optional[CoordinationGraph] = None,
    threads: int = 1,
    **kw,
) -> Allocation:
    """Run the conflict-based search on each connected component and merge."""
    graph = graph or build_graph(instance)
    parts = components(graph)
    budget = kw.pop("conflict_budget", 500)

    def run(agents):
        return search(instance, budget, agents=agents, **kw).allocation

    if threads > 1 and len(parts) > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(run, parts))
    else:
        results = [run(p) for p in parts]
    assignments, trees = {}, {}
    for r in results:
        assignments.update(r.assignments)
        trees.update(r.trees or {})
    return Allocation(assignments, trees=trees)
