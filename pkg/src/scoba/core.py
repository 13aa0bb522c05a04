"""Problem model, feasibility and conflict predicates, expected-penalty evaluation.

Time is discrete. Windows are half-open ``[lower, upper)``: an attempt at ``t``
starts at ``t`` and its outcome is observed at ``upper``. A missing
(agent, task) window means the agent can never attempt that task.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Any, Hashable, Iterable, Mapping, Optional, Sequence

from scoba.completion import CompletionModel

AgentId = Hashable
TaskId = Hashable

DEFAULT_BRANCH_BUDGET = 10**7


class InputError(ValueError):
    """Malformed instance, unknown id, or a policy that breaks the window rules."""


class StructuralError(ValueError):
    """A policy tree whose sibling pairs are malformed."""


class ResourceError(RuntimeError):
    """An enumeration exceeded its configured budget."""


def id_key(x: Any):
    """Sort key that orders ints before strings and never compares across types."""
    return (isinstance(x, str), x)


@dataclass(frozen=True)
class TimeWindow:
    lower: int
    upper: int

    def __post_init__(self):
        if not self.lower < self.upper:
            raise InputError(f"empty window [{self.lower}, {self.upper})")

    def __contains__(self, t: int) -> bool:
        return self.lower <= t < self.upper

    @property
    def length(self) -> int:
        return self.upper - self.lower


@dataclass(frozen=True)
class TaskSpec:
    id: TaskId
    penalty: float = 1.0
    downtime: int = 0

    def __post_init__(self):
        if self.penalty < 0:
            raise InputError(f"task {self.id!r}: negative penalty")
        if self.downtime < 0:
            raise InputError(f"task {self.id!r}: negative downtime")


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    """Agents, tasks, horizon, per-pair windows and completion models.

    ``downtimes`` optionally overrides :attr:`TaskSpec.downtime` for a single
    (agent, task) pair, e.g. a drone's return leg to its own depot.
    """

    agents: tuple
    tasks: tuple
    horizon: int
    windows: Mapping[tuple, TimeWindow]
    completion: Mapping[tuple, CompletionModel]
    downtimes: Mapping[tuple, int] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "agents", tuple(self.agents))
        object.__setattr__(self, "tasks", tuple(self.tasks))
        if self.horizon < 1:
            raise InputError("horizon must be at least 1")
        if len(set(self.agents)) != len(self.agents):
            raise InputError("duplicate agent ids")
        by_id = {t.id: t for t in self.tasks}
        if len(by_id) != len(self.tasks):
            raise InputError("duplicate task ids")
        agent_set = set(self.agents)
        feasible: dict = {a: [] for a in self.agents}
        for (a, k), w in self.windows.items():
            if a not in agent_set or k not in by_id:
                raise InputError(f"window for unknown pair ({a!r}, {k!r})")
            if w.lower < 0 or w.upper > self.horizon:
                raise InputError(f"window {w} for ({a!r}, {k!r}) outside [0, {self.horizon}]")
            if (a, k) not in self.completion:
                raise InputError(f"no completion model for ({a!r}, {k!r})")
            feasible[a].append(k)
        for key, d in self.downtimes.items():
            if key not in self.windows or d < 0:
                raise InputError(f"bad downtime override for {key!r}")
        object.__setattr__(self, "_by_id", by_id)
        object.__setattr__(
            self, "_feasible", {a: tuple(sorted(ks, key=id_key)) for a, ks in feasible.items()}
        )

    def task(self, k: TaskId) -> TaskSpec:
        try:
            return self._by_id[k]
        except KeyError:
            raise InputError(f"unknown task {k!r}") from None

    def check_agent(self, a: AgentId) -> None:
        if a not in self._feasible:
            raise InputError(f"unknown agent {a!r}")

    def window(self, a: AgentId, k: TaskId) -> Optional[TimeWindow]:
        return self.windows.get((a, k))

    def feasible_tasks(self, a: AgentId) -> tuple:
        self.check_agent(a)
        return self._feasible[a]

    def downtime(self, a: AgentId, k: TaskId) -> int:
        d = self.downtimes.get((a, k))
        return self.task(k).downtime if d is None else d

    def penalty(self, k: TaskId) -> float:
        return self.task(k).penalty

    def success_prob(self, a: AgentId, k: TaskId, start: int) -> float:
        """Probability that an attempt starting at ``start`` finishes inside the window."""
        w = self.windows[(a, k)]
        if start >= w.upper:
            return 0.0
        return self.completion[(a, k)].cdf(w.upper - start)

    @property
    def total_penalty(self) -> float:
        return float(sum(t.penalty for t in self.tasks))


@dataclass(frozen=True)
class Conflict:
    agents: tuple
    task: TaskId
    times: tuple


@dataclass(frozen=True)
class Attempt:
    """One node of a contingent single-agent plan.

    ``on_fail`` / ``on_success`` are the continuations (``None`` = do nothing
    more). Outcomes are observed at the end of the attempted window.
    """

    task: TaskId
    time: int
    on_fail: Optional["Attempt"] = None
    on_success: Optional["Attempt"] = None

    def pairs(self) -> set:
        """All (task, time) pairs reachable in this plan."""
        out, stack, seen = set(), [self], set()
        while stack:
            node = stack.pop()
            if node is None or id(node) in seen:
                continue
            seen.add(id(node))
            out.add((node.task, node.time))
            stack.extend((node.on_fail, node.on_success))
        return out


def chain_plan(pairs: Sequence[tuple]) -> Optional[Attempt]:
    """Plan that attempts ``pairs`` in order whatever the outcomes."""
    plan = None
    for task, t in reversed(list(pairs)):
        plan = Attempt(task, t, plan, plan)
    return plan


@dataclass
class Allocation:
    """Per-agent ordered (task, attempt-time) lists.

    When produced by the policy-tree planner, ``trees`` keeps each agent's
    :class:`~scoba.policy_tree.PolicyTree`, so the full contingent policy and
    the next assignment are available. Lists are sorted by (time, task); a task
    may appear at several times when different contingency branches reach it.
    """

    assignments: dict
    trees: Optional[dict] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        self.assignments = {
            a: sorted(set(map(tuple, lst)), key=lambda p: (p[1], id_key(p[0])))
            for a, lst in self.assignments.items()
        }

    @classmethod
    def presorted(cls, assignments: dict, trees: Optional[dict] = None) -> "Allocation":
        """Build without re-sorting; lists must already be unique and in (time, task) order."""
        obj = cls.__new__(cls)
        obj.assignments, obj.trees = assignments, trees
        return obj

    @classmethod
    def empty(cls, agents: Iterable) -> "Allocation":
        return cls({a: [] for a in agents})

    def tasks_of(self, a: AgentId) -> set:
        return {k for k, _ in self.assignments.get(a, ())}

    def next_assignment(self, a: AgentId) -> Optional[tuple]:
        pairs = self.assignments.get(a, [])
        if self.trees is not None and a in self.trees:
            first = self.trees[a].first_assignment()
            return first if first is not None and first in pairs else None
        return pairs[0] if pairs else None

    def policy(self) -> dict:
        """Contingent policy per agent, suitable for :func:`evaluate_expected_penalty`."""
        out = {}
        for a, pairs in self.assignments.items():
            if self.trees is not None and a in self.trees:
                out[a] = _prune_plan(self.trees[a].plan(), set(pairs))
            else:
                out[a] = chain_plan(pairs)
        return out

    def is_empty(self) -> bool:
        return not any(self.assignments.values())


def _prune_plan(plan: Optional[Attempt], allowed: set) -> Optional[Attempt]:
    # Attempts dropped by tie-breaking become skips; their continuation is the fail branch.
    memo: dict = {}

    def walk(node):
        if node is None:
            return None
        if id(node) in memo:
            return memo[id(node)]
        if (node.task, node.time) in allowed:
            out = Attempt(node.task, node.time, walk(node.on_fail), walk(node.on_success))
        else:
            out = walk(node.on_fail)
        memo[id(node)] = out
        return out

    return walk(plan)


# ---------------------------------------------------------------------------
# predicates


def attempt_feasible(instance: ProblemInstance, agent: AgentId, task: TaskId, t: int) -> bool:
    instance.check_agent(agent)
    instance.task(task)
    w = instance.window(agent, task)
    return w is not None and t in w


def completion_upper_bound(instance: ProblemInstance, agent: AgentId, task: TaskId) -> float:
    """Best achievable success probability for the pair: cdf of the full window length."""
    instance.check_agent(agent)
    instance.task(task)
    w = instance.window(agent, task)
    if w is None:
        raise InputError(f"no window for ({agent!r}, {task!r})")
    return instance.completion[(agent, task)].cdf(w.length)


def _in_window(instance, a, k, t) -> bool:
    w = instance.window(a, k)
    return w is not None and t in w


def detect_conflicts(instance: ProblemInstance, alloc: Allocation) -> list:
    """One :class:`Conflict` per agent pair and shared task whose attempts overlap.

    Agents ``n1``, ``n2`` conflict on ``k`` when ``(k, t1)`` and ``(k, t2)`` are
    allocated to them and ``t2`` lies in ``n1``'s window or ``t1`` in ``n2``'s.
    Sorted by earliest attempt time, then task, then agents.
    """
    by_task: dict = {}
    for a, pairs in alloc.assignments.items():
        for k, t in pairs:
            by_task.setdefault(k, {}).setdefault(a, []).append(t)
    out = []
    for k, holders in by_task.items():
        if len(holders) < 2:
            continue
        agents = sorted(holders, key=id_key)
        for a1, a2 in itertools.combinations(agents, 2):
            hit = None
            for t1 in holders[a1]:
                for t2 in holders[a2]:
                    if _in_window(instance, a1, k, t2) or _in_window(instance, a2, k, t1):
                        if hit is None or min(t1, t2) < min(hit):
                            hit = (t1, t2)
            if hit is not None:
                out.append(Conflict((a1, a2), k, hit))
    out.sort(key=lambda c: (min(c.times), id_key(c.task), id_key(c.agents[0]), id_key(c.agents[1])))
    return out


# ---------------------------------------------------------------------------
# exact evaluation


def _agent_branches(instance, agent, plan, budget) -> list:
    """Enumerate outcome branches of one agent's plan as (prob, successes) pairs."""
    out = []
    # stack entries: node, prob, busy-until, successes, tasks already tried on this branch
    stack = [(plan, 1.0, -math.inf, frozenset(), frozenset())]
    while stack:
        node, prob, busy, succ, tried = stack.pop()
        if node is None:
            out.append((prob, succ))
            if len(out) > budget:
                raise ResourceError("outcome enumeration exceeded branch budget")
            continue
        k, t = node.task, node.time
        if not attempt_feasible(instance, agent, k, t):
            raise InputError(f"agent {agent!r} attempts {k!r} at {t} outside its window")
        if t < busy:
            raise InputError(f"agent {agent!r} attempts {k!r} at {t} while busy until {busy}")
        if k in tried:
            raise InputError(f"agent {agent!r} attempts {k!r} twice on one branch")
        w = instance.window(agent, k)
        q = instance.success_prob(agent, k, t)
        tried2 = tried | {k}
        if q > 0.0:
            stack.append((node.on_success, prob * q, w.upper + instance.downtime(agent, k), succ | {k}, tried2))
        if q < 1.0:
            stack.append((node.on_fail, prob * (1.0 - q), w.upper, succ, tried2))
    return out


def evaluate_expected_penalty(
    instance: ProblemInstance, policy: Mapping, budget: int = DEFAULT_BRANCH_BUDGET
) -> float:
    """Exact expected penalty of a contingent multi-agent policy.

    ``policy`` maps agent -> root :class:`Attempt` (or ``None``). Every joint
    outcome branch is enumerated and weighted by the product of its outcome
    probabilities; a task is penalised on a branch when no agent succeeded on it.
    """
    per_agent = []
    count = 1
    for a, plan in policy.items():
        instance.check_agent(a)
        branches = _agent_branches(instance, a, plan, budget)
        per_agent.append(branches)
        count *= len(branches)
        if count > budget:
            raise ResourceError(f"joint enumeration needs {count} branches (budget {budget})")
    total = 0.0
    penalties = {t.id: t.penalty for t in instance.tasks}
    all_pen = sum(penalties.values())
    for combo in itertools.product(*per_agent):
        prob = 1.0
        done: set = set()
        for p, succ in combo:
            prob *= p
            done |= succ
        total += prob * (all_pen - sum(penalties[k] for k in done))
    return total


# ---------------------------------------------------------------------------
# brute-force oracle


class _Budget:
    def __init__(self, limit):
        self.limit = limit
        self.used = 0

    def tick(self):
        self.used += 1
        if self.used > self.limit:
            raise ResourceError(f"oracle exceeded its branch budget of {self.limit}")


def _decision_order(instance, owner):
    entries = []
    for k, a in owner.items():
        if a is not None:
            w = instance.window(a, k)
            entries.append((w.lower, id_key(k), k, a))
    entries.sort(key=lambda e: (e[0], e[1]))
    return [(k, a) for _, _, k, a in entries]


def _joint_value(instance, order, agents, budget) -> float:
    """Expectimin over the joint state (next decision, every agent's busy-until)."""
    index = {a: i for i, a in enumerate(agents)}

    def rec(i, busy):
        if i == len(order):
            budget.tick()
            return 0.0
        k, a = order[i]
        w = instance.window(a, k)
        J = instance.penalty(k)
        slot = index[a]
        leave = J + rec(i + 1, busy)
        start = max(w.lower, busy[slot])
        if start >= w.upper:
            return leave
        q = instance.success_prob(a, k, start)
        after_fail = busy[:slot] + (w.upper,) + busy[slot + 1 :]
        after_succ = busy[:slot] + (w.upper + instance.downtime(a, k),) + busy[slot + 1 :]
        attempt = (1.0 - q) * (J + rec(i + 1, after_fail)) + q * rec(i + 1, after_succ)
        return min(attempt, leave)

    return rec(0, tuple(-math.inf for _ in agents))


def _single_plan(instance, agent, tasks):
    """Optimal plan for ``agent`` over ``tasks`` (earliest-attempt, window-start order)."""
    order = sorted(tasks, key=lambda k: (instance.window(agent, k).lower, id_key(k)))

    def rec(i, busy):
        if i == len(order):
            return 0.0, None
        k = order[i]
        w = instance.window(agent, k)
        J = instance.penalty(k)
        lv, lplan = rec(i + 1, busy)
        leave = (J + lv, lplan)
        start = max(w.lower, busy)
        if start >= w.upper:
            return leave
        q = instance.success_prob(agent, k, start)
        fv, fplan = rec(i + 1, w.upper)
        sv, splan = rec(i + 1, w.upper + instance.downtime(agent, k))
        att = (1.0 - q) * (J + fv) + q * sv
        if att <= leave[0]:
            return att, Attempt(k, start, fplan, splan)
        return leave

    return rec(0, -math.inf)[1]


def brute_force_optimal(instance: ProblemInstance, budget: int = DEFAULT_BRANCH_BUDGET):
    """Exhaustive optimum over conflict-free contingent multi-agent policies.

    Enumerates every ownership map (each task to one capable agent or to
    nobody) and, for each, runs an expectimin recursion over the joint state
    of all agents with outcomes resolved at window ends. Agents attempt as
    early as possible and decide tasks in window-start order. Returns
    ``(policy, value)`` where ``policy`` maps agent -> :class:`Attempt`.
    """
    agents = tuple(sorted(instance.agents, key=id_key))
    task_ids = [t.id for t in instance.tasks]
    choices = []
    for k in task_ids:
        capable = [a for a in agents if instance.window(a, k) is not None]
        choices.append([None] + capable)
    n_maps = math.prod(len(c) for c in choices)
    if n_maps > budget:
        raise ResourceError(f"{n_maps} ownership maps exceed the budget of {budget}")
    meter = _Budget(budget)
    best_val, best_owner = math.inf, None
    for combo in itertools.product(*choices):
        owner = dict(zip(task_ids, combo))
        order = _decision_order(instance, owner)
        unowned = sum(instance.penalty(k) for k, a in owner.items() if a is None)
        val = unowned + _joint_value(instance, order, agents, meter)
        if val < best_val - 1e-12:
            best_val, best_owner = val, owner
    policy = {}
    for a in agents:
        mine = [k for k, o in best_owner.items() if o == a]
        policy[a] = _single_plan(instance, a, mine)
    return policy, best_val
