"""Earliest-due-date dispatch: each free agent takes the open task closing soonest."""

from __future__ import annotations

from typing import Iterable, Optional

from scoba.core import Allocation, ProblemInstance, id_key


def attemptable(instance: ProblemInstance, agent, k, now: Optional[int]) -> bool:
    # reactive rules only look at tasks that can be started right now
    w = instance.window(agent, k)
    if w is None:
        return False
    if now is None:
        return True
    return w.lower <= now < w.upper


def edd_assign(
    instance: ProblemInstance,
    free_agents: Optional[Iterable] = None,
    now: Optional[int] = None,
    claimed: Iterable = (),
) -> Allocation:
    """One task per free agent, chosen greedily in agent-id order.

    ``now`` restricts candidates to windows already open at ``now``;
    ``claimed`` tasks are skipped (e.g. ones already being attempted).
    """
    agents = instance.agents if free_agents is None else free_agents
    taken = set(claimed)
    out = {a: [] for a in instance.agents}
    for a in sorted(agents, key=id_key):
        best = None
        for k in instance.feasible_tasks(a):
            if k in taken or not attemptable(instance, a, k, now):
                continue
            w = instance.window(a, k)
            key = (w.upper, id_key(k))
            if best is None or key < best[0]:
                best = (key, k, w.lower if now is None else max(w.lower, now))
        if best is not None:
            taken.add(best[1])
            out[a] = [(best[1], best[2])]
    return Allocation(out)
