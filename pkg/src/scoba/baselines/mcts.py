"""UCT planning with EDD rollouts and a fixed priority order over agents.

Each agent plans in turn against a single-agent generative model of the
current problem: tasks claimed by higher-priority agents are removed, an
attempt succeeds after a duration drawn from the agent's completion model
(or fails when the window closes first), and every task whose window passes
unserved costs its penalty. The tree is open-loop: nodes are keyed by the
action taken and whether it succeeded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Optional

import numpy as np

from scoba.core import Allocation, ProblemInstance, id_key

ROLLOUTS = ("edd",)


@dataclass(frozen=True)
class MctsConfig:
    iterations: int = 100
    depth: int = 20
    exploration_constant: float = 1.0
    rollout: str = "edd"

    def __post_init__(self):
        if self.rollout not in ROLLOUTS:
            raise ValueError(f"unknown rollout policy {self.rollout!r}")
        if self.iterations < 0 or self.depth < 1:
            raise ValueError("iterations must be >= 0 and depth >= 1")


class _Model:
    """Single-agent generative model: state is (time, remaining tasks)."""

    def __init__(self, instance: ProblemInstance, agent, tasks: Iterable):
        self.agent = agent
        self.win = {k: instance.window(agent, k) for k in tasks}
        self.cdf = {k: instance.completion[(agent, k)] for k in tasks}
        self.down = {k: instance.downtime(agent, k) for k in tasks}
        self.pen = {k: instance.penalty(k) for k in tasks}

    def actions(self, t, remaining) -> list:
        return sorted(
            (k for k in remaining if max(t, self.win[k].lower) < self.win[k].upper),
            key=lambda k: (self.win[k].upper, id_key(k)),
        )

    def step(self, t, remaining, k, rng):
        """Attempt ``k``; returns (new time, new remaining, reward, succeeded)."""
        w = self.win[k]
        s = max(t, w.lower)
        u = rng.random()
        done = None
        for d in range(1, w.upper - s + 1):
            if self.cdf[k].cdf(d) >= u:
                done = d
                break
        if done is not None:
            t2, reward, ok = s + done + self.down[k], 0.0, True
        else:
            t2, reward, ok = w.upper, -self.pen[k], False
        rest = remaining - {k}
        lapsed = [j for j in rest if self.win[j].upper <= t2 or max(t2, self.win[j].lower) >= self.win[j].upper]
        reward -= sum(self.pen[j] for j in lapsed)
        return t2, rest.difference(lapsed), reward, ok


class _Node:
    __slots__ = ("visits", "value", "children")

    def __init__(self):
        self.visits = 0
        self.value = 0.0
        self.children: dict = {}  # (action, succeeded) -> _Node


def _edd(model, t, remaining):
    acts = model.actions(t, remaining)
    return acts[0] if acts else None


def _rollout(model, t, remaining, depth, rng) -> float:
    total = 0.0
    for _ in range(depth):
        k = _edd(model, t, remaining)
        if k is None:
            break
        t, remaining, r, _ = model.step(t, remaining, k, rng)
        total += r
    return total


def _stats(node, action):
    n = v = 0.0
    for (a, _), ch in node.children.items():
        if a == action:
            n += ch.visits
            v += ch.value * ch.visits
    return n, (v / n if n else 0.0)


def uct_action(model: _Model, now: int, remaining: frozenset, config: MctsConfig, rng, root_actions=None):
    """Most-visited root action after ``config.iterations`` simulations."""
    first = root_actions if root_actions is not None else model.actions(now, remaining)
    if not first:
        return None
    if config.iterations == 0:
        return first[0]
    root = _Node()
    c = config.exploration_constant
    for _ in range(config.iterations):
        t, rem, node, path, total = now, remaining, root, [root], 0.0
        for depth in range(config.depth):
            acts = first if node is root else model.actions(t, rem)
            if not acts:
                break
            tried = {a for a, _ in node.children}
            fresh = [a for a in acts if a not in tried]
            if fresh:
                a = fresh[0]
            else:
                logn = math.log(max(node.visits, 1))
                best, a = -math.inf, acts[0]
                for cand in acts:
                    n, mean = _stats(node, cand)
                    score = mean + c * math.sqrt(logn / n)
                    if score > best:
                        best, a = score, cand
            t, rem, r, ok = model.step(t, rem, a, rng)
            total += r
            child = node.children.get((a, ok))
            new = child is None
            if new:
                child = node.children[(a, ok)] = _Node()
            node = child
            path.append(node)
            if new:
                total += _rollout(model, t, rem, config.depth - depth - 1, rng)
                break
        for nd in path:
            nd.visits += 1
            nd.value += (total - nd.value) / nd.visits
    best, pick = -1.0, first[0]
    for a in first:
        n, _ = _stats(root, a)
        if n > best:
            best, pick = n, a
    return pick


def mcts_plan(
    instance: ProblemInstance,
    now: int = 0,
    config: MctsConfig = MctsConfig(),
    seed=0,
    agents: Optional[Iterable] = None,
    slot_of: Optional[Callable] = None,
) -> Allocation:
    """Joint next action: one (task, time) per agent, chosen in agent-id priority order.

    ``slot_of`` maps a task to a discrete position slot; when given, the root
    actions are slots and each slot stands for its earliest-deadline task.
    """
    rng = np.random.default_rng(seed)
    order = sorted(instance.agents if agents is None else agents, key=id_key)
    claimed: set = set()
    out = {a: [] for a in instance.agents}
    for a in order:
        tasks = [k for k in instance.feasible_tasks(a) if k not in claimed]
        model = _Model(instance, a, tasks)
        remaining = frozenset(tasks)
        acts = model.actions(now, remaining)
        if slot_of is not None:
            by_slot: dict = {}
            for k in acts:
                by_slot.setdefault(slot_of(k), k)  # acts are in deadline order
            acts = sorted(by_slot.values(), key=lambda k: (model.win[k].upper, id_key(k)))
        k = uct_action(model, now, remaining, config, rng, acts)
        if k is not None:
            claimed.add(k)
            out[a] = [(k, max(now, model.win[k].lower))]
    return Allocation(out)
