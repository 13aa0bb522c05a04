"""Maximum-weight matching of agents to tasks, one task per agent."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np
from scipy.optimize import linear_sum_assignment

from scoba.baselines.edd import attemptable
from scoba.core import Allocation, ProblemInstance, id_key


@dataclass
class AssignmentMatrix:
    """Rows are agents, columns tasks, weights success probabilities.

    ``times[i][j]`` is the attempt time used if row i is matched to column j.
    """

    rows: list
    cols: list
    weights: np.ndarray
    times: Optional[np.ndarray] = None

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.shape != (len(self.rows), len(self.cols)):
            raise ValueError(f"weights shape {self.weights.shape} does not match {len(self.rows)}x{len(self.cols)}")
        if self.times is None:
            self.times = np.zeros(self.weights.shape, dtype=int)

    @classmethod
    def from_instance(
        cls,
        instance: ProblemInstance,
        agents: Optional[Iterable] = None,
        now: Optional[int] = None,
        claimed: Iterable = (),
    ) -> "AssignmentMatrix":
        rows = sorted(instance.agents if agents is None else agents, key=id_key)
        skip = set(claimed)
        cols = [t.id for t in instance.tasks if t.id not in skip]
        w = np.zeros((len(rows), len(cols)))
        times = np.zeros(w.shape, dtype=int)
        for i, a in enumerate(rows):
            for j, k in enumerate(cols):
                if not attemptable(instance, a, k, now):
                    continue
                lo = instance.window(a, k).lower
                start = lo if now is None else max(lo, now)
                w[i, j] = instance.success_prob(a, k, start)
                times[i, j] = start
        return cls(rows, cols, w, times)


def hungarian_assign(matrix: AssignmentMatrix, instance: Optional[ProblemInstance] = None) -> Allocation:
    """Maximum total weight one-to-one matching; zero-weight pairs stay unmatched."""
    agents = instance.agents if instance is not None else matrix.rows
    out = {a: [] for a in agents}
    if matrix.weights.size == 0:
        return Allocation(out)
    ri, ci = linear_sum_assignment(matrix.weights, maximize=True)
    for i, j in zip(ri, ci):
        if matrix.weights[i, j] > 0:
            out[matrix.rows[i]] = [(matrix.cols[j], int(matrix.times[i, j]))]
    return Allocation(out)


def matching_weight(matrix: AssignmentMatrix, alloc: Allocation) -> float:
    col = {k: j for j, k in enumerate(matrix.cols)}
    total = 0.0
    for i, a in enumerate(matrix.rows):
        for k, _ in alloc.assignments.get(a, []):
            total += matrix.weights[i, col[k]]
    return total
