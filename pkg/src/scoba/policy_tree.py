"""Single-agent policy tree: sweep, construction, value propagation, extraction.

Tasks are visited in window-start order. At each task the agent either
attempts it as early as possible or leaves it; an attempt resolves at the
window end as Fail or Success. The earliest start on a branch is
``max(window.lower, busy_until)`` where busy-until becomes ``upper`` after a
failure and ``upper + downtime`` after a success.

Subtrees reached with the same (task index, effective busy-until) are shared,
so the structure is a DAG. Node values are costs-to-go: a node's value is its
own penalty (``J(k)`` for Fail and Leave nodes) plus the aggregate of its
children. The root carries the penalty of tasks excluded by constraints, so
``V(root)`` is the agent's full expected penalty over its feasible tasks.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from scoba.core import Attempt, InputError, ProblemInstance, StructuralError, id_key


class EventKind(enum.IntEnum):
    # value = tie order at equal times
    WINDOW_END = 0
    WINDOW_START = 1
    DOWNTIME_END = 2


@dataclass(frozen=True)
class EventPoint:
    time: int
    kind: EventKind
    task: object


class NodeKind(enum.Enum):
    ROOT = "root"
    ATTEMPT = "attempt"
    LEAVE = "leave"
    SUCCESS = "success"
    FAIL = "fail"
    LEAF = "leaf"


class PolicyTreeNode:
    __slots__ = ("kind", "task", "value", "outcome_prob", "earliest_attempt", "children", "penalty")

    def __init__(self, kind, task=None, penalty=0.0, outcome_prob=None, earliest_attempt=None):
        self.kind = kind
        self.task = task
        self.penalty = penalty
        self.outcome_prob = outcome_prob
        self.earliest_attempt = earliest_attempt
        self.children: tuple = ()
        self.value = math.nan

    def __repr__(self):
        return f"PolicyTreeNode({self.kind.value}, task={self.task!r}, value={self.value:.6g})"


@dataclass
class PolicyTree:
    root: PolicyTreeNode
    agent: object
    considered_tasks: tuple
    excluded: frozenset = frozenset()
    size: int = 0
    _plan: Optional[Attempt] = field(default=None, repr=False)
    _reachable: Optional[list] = field(default=None, repr=False)

    @property
    def value(self) -> float:
        return self.root.value

    def first_assignment(self):
        return extract_assignment(self)

    def reachable_assignments(self) -> list:
        """(task, time) for every Attempt node reachable under the optimal policy."""
        if self._reachable is None:
            out, seen, stack = set(), set(), [self.root]
            while stack:
                node = stack.pop()
                if id(node) in seen:
                    continue
                seen.add(id(node))
                if node.kind is NodeKind.ATTEMPT:
                    out.add((node.task, node.earliest_attempt))
                    stack.extend(node.children)
                else:
                    nxt = _best_child(node)
                    if nxt is not None:
                        stack.append(nxt)
            self._reachable = sorted(out, key=lambda p: (p[1], id_key(p[0])))
        return self._reachable

    def plan(self) -> Optional[Attempt]:
        """Optimal contingent policy as an :class:`~scoba.core.Attempt` chain."""
        if self._plan is None:
            self._plan = _to_plan(self.root, {})
        return self._plan


def _best_child(node: PolicyTreeNode):
    # decision pairs: Attempt preferred on ties
    ch = node.children
    if not ch:
        return None
    if len(ch) == 1:
        return ch[0]
    a, b = ch
    if a.kind is NodeKind.ATTEMPT:
        return a if a.value <= b.value else b
    return None


def _to_plan(node: PolicyTreeNode, memo: dict) -> Optional[Attempt]:
    key = id(node)
    if key in memo:
        return memo[key]
    nxt = _best_child(node)
    if nxt is None:
        out = None
    elif nxt.kind is NodeKind.ATTEMPT:
        fail, succ = nxt.children
        out = Attempt(nxt.task, nxt.earliest_attempt, _to_plan(fail, memo), _to_plan(succ, memo))
    else:
        out = _to_plan(nxt, memo)
    memo[key] = out
    return out


# ---------------------------------------------------------------------------


def _windows_for(agent, tasks, instance):
    out = {}
    for k in tasks:
        w = instance.window(agent, k)
        if w is None:
            raise InputError(f"agent {agent!r} has no window for task {k!r}")
        out[k] = w
    return out


def event_sweep(agent, tasks: Iterable, instance: ProblemInstance) -> list:
    """Window start/end and downtime-end events, sorted by time.

    Ties at equal times: WindowEnd, then WindowStart, then DowntimeEnd, then task id.
    """
    instance.check_agent(agent)
    tasks = list(tasks)
    windows = _windows_for(agent, tasks, instance)
    events = []
    for k in tasks:
        w = windows[k]
        events.append(EventPoint(w.lower, EventKind.WINDOW_START, k))
        events.append(EventPoint(w.upper, EventKind.WINDOW_END, k))
        events.append(EventPoint(w.upper + instance.downtime(agent, k), EventKind.DOWNTIME_END, k))
    events.sort(key=lambda e: (e.time, e.kind, id_key(e.task)))
    return events


def _start_order(agent, tasks, instance) -> list:
    return [e.task for e in event_sweep(agent, tasks, instance) if e.kind is EventKind.WINDOW_START]


def truncation_point(agent, tasks: Sequence, instance: ProblemInstance) -> int:
    """Length of the leading block of tasks coupled through windows and downtime.

    ``tasks`` must be sorted by window start. The block ends at the first task
    whose window opens no earlier than every earlier task's end plus downtime.
    """
    if not tasks:
        return 0
    reach = -math.inf
    for m, k in enumerate(tasks):
        w = instance.window(agent, k)
        if m > 0 and w.lower >= reach:
            return m
        reach = max(reach, w.upper + instance.downtime(agent, k))
    return len(tasks)


def plan_tree(
    agent,
    tasks: Iterable,
    horizon: Optional[int],
    instance: ProblemInstance,
    truncate: bool = False,
    excluded: Iterable = (),
) -> PolicyTree:
    """Build the policy tree for ``agent`` over ``tasks`` and propagate values.

    ``excluded`` lists constrained-out tasks: they cannot be attempted and
    their penalties are charged at the root. Windows are clipped to ``horizon``.
    """
    instance.check_agent(agent)
    excluded = frozenset(excluded)
    order = [k for k in _start_order(agent, [k for k in tasks if k not in excluded], instance)]
    if truncate:
        order = order[: truncation_point(agent, order, instance)]
    spans = []
    for k in order:
        w = instance.window(agent, k)
        upper = w.upper if horizon is None else min(w.upper, horizon)
        spans.append((w.lower, upper))
    residual = sum(instance.penalty(k) for k in excluded)
    return _build(agent, order, spans, instance, residual, excluded)


def _build(agent, order, spans, instance, residual, excluded) -> PolicyTree:
    n = len(order)
    penalties = [instance.penalty(k) for k in order]
    downtimes = [instance.downtime(agent, k) for k in order]
    models = [instance.completion[(agent, k)] for k in order]
    memo: dict = {}
    count = [0]

    def pair(i, busy):
        # children of a node whose next decision is task i, with agent busy until `busy`
        if i == n:
            return ()
        lower, upper = spans[i]
        if busy is not None and busy <= lower:
            busy = None
        key = (i, busy)
        hit = memo.get(key)
        if hit is not None:
            return hit
        k = order[i]
        J = penalties[i]
        leave = PolicyTreeNode(NodeKind.LEAVE, k, penalty=J)
        leave.children = pair(i + 1, busy)
        start = lower if busy is None else busy
        if start < upper:
            p_fail = 1.0 - models[i].cdf(upper - start)
            att = PolicyTreeNode(NodeKind.ATTEMPT, k, outcome_prob=p_fail, earliest_attempt=start)
            fail = PolicyTreeNode(NodeKind.FAIL, k, penalty=J, outcome_prob=p_fail)
            fail.children = pair(i + 1, upper)
            succ = PolicyTreeNode(NodeKind.SUCCESS, k, outcome_prob=p_fail)
            succ.children = pair(i + 1, upper + downtimes[i])
            att.children = (fail, succ)
            out = (att, leave)
            count[0] += 4
        else:
            out = (leave,)
            count[0] += 1
        memo[key] = out
        return out

    if n == 0:
        root = PolicyTreeNode(NodeKind.LEAF, penalty=residual)
    else:
        root = PolicyTreeNode(NodeKind.ROOT, penalty=residual)
        root.children = pair(0, None)
    tree = PolicyTree(root, agent, tuple(order), excluded, size=count[0] + 1)
    propagate_values(tree)
    return tree


def propagate_values(tree: PolicyTree) -> float:
    """Bottom-up dynamic programming; returns V(root).

    Outcome pairs: ``p * V(Fail) + (1 - p) * V(Success)``.
    Decision pairs: ``min(V(Attempt), V(Leave))``.
    """
    done: set = set()
    stack = [(tree.root, False)]
    while stack:
        node, expanded = stack.pop()
        if id(node) in done:
            continue
        if not expanded:
            stack.append((node, True))
            for c in node.children:
                if id(c) not in done:
                    stack.append((c, False))
            continue
        node.value = node.penalty + _aggregate(node)
        done.add(id(node))
    return tree.root.value


def _aggregate(node: PolicyTreeNode) -> float:
    ch = node.children
    if not ch:
        return 0.0
    kinds = tuple(c.kind for c in ch)
    if kinds == (NodeKind.FAIL, NodeKind.SUCCESS):
        p = ch[0].outcome_prob
        if p is None or ch[1].outcome_prob != p or not 0.0 <= p <= 1.0:
            raise StructuralError(f"outcome pair under {node!r} has inconsistent probabilities")
        return p * ch[0].value + (1.0 - p) * ch[1].value
    if kinds == (NodeKind.ATTEMPT, NodeKind.LEAVE):
        return min(ch[0].value, ch[1].value)
    if kinds == (NodeKind.LEAVE,):
        return ch[0].value
    raise StructuralError(f"malformed children {kinds} under {node!r}")


def extract_assignment(tree: PolicyTree):
    """First attempt on the minimum-value path, as (task, time), or None."""
    node = tree.root
    while True:
        nxt = _best_child(node)
        if nxt is None:
            return None
        if nxt.kind is NodeKind.ATTEMPT:
            return (nxt.task, nxt.earliest_attempt)
        node = nxt


def dump_tree(tree: PolicyTree, max_nodes: int = 10_000) -> str:
    """Indented text view (shared subtrees are printed at every occurrence)."""
    lines = [f"# agent {tree.agent} tasks {list(tree.considered_tasks)}"]
    stack = [(tree.root, 0)]
    while stack:
        node, depth = stack.pop()
        if len(lines) > max_nodes:
            lines.append("...")
            break
        label = node.kind.value if node.task is None else f"{node.kind.value} {node.task}"
        extra = ""
        if node.kind is NodeKind.ATTEMPT:
            extra = f" t={node.earliest_attempt}"
        if node.kind in (NodeKind.FAIL, NodeKind.SUCCESS):
            extra = f" p={node.outcome_prob:.6g}"
        lines.append(f"{'  ' * depth}{label}{extra} V={node.value:.6g}")
        for c in reversed(node.children):
            stack.append((c, depth + 1))
    return "\n".join(lines) + "\n"
