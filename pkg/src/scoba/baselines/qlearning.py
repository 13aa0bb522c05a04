"""Tabular Q-learning for conveyor arms, one table shared by all arms.

An arm sees its own workspace cut into slots (occupied or not) and how many
downtime steps it has left. Actions: 0 idles, ``j`` in 1..slots grasps at
slot ``j``. Grasping at an empty slot is masked out, so an arm with nothing
in reach always idles. Each object that leaves the arm's workspace unpicked
costs -1.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from scoba.core import Allocation, ProblemInstance, ResourceError
from scoba.domains.conveyor import ON_BELT, PICKED, BeltConfig, ConveyorWorld


@dataclass(frozen=True)
class QLearnConfig:
    learning_rate: float = 0.01
    epsilon_decay: float = 0.9995
    training_steps: int = 100_000
    belt_discretization: float = 0.05
    gamma: float = 0.95
    epsilon_min: float = 0.01
    state_cap: int = 1_000_000


class ArmEncoder:
    """Maps an arm's local view to a state index."""

    def __init__(self, belt: BeltConfig, cell: float, state_cap: int):
        widths = [a.workspace[1] - a.workspace[0] for a in belt.arms]
        self.slots = max(int(round(w / cell)) for w in widths)
        self.cell = cell
        self.levels = belt.downtime + 1
        self.n_states = (2**self.slots) * self.levels
        if self.n_states > state_cap:
            raise ResourceError(f"{self.n_states} discretised states exceed the cap of {state_cap}")
        self.n_actions = self.slots + 1

    def inside(self, world: ConveyorWorld, i: int) -> list:
        return [o.id for o in world.on_belt() if world.in_workspace(i, o)]

    def slot_objects(self, world: ConveyorWorld, i: int) -> dict:
        lo = world.config.arms[i].workspace[0]
        out: dict = {}
        for o in world.on_belt():
            if world.in_workspace(i, o):
                x = o.position(world.t, world.config.speed)
                j = min(max(int((x - lo) / self.cell), 0), self.slots - 1)
                out.setdefault(j, o.id)
        return out

    def encode(self, world: ConveyorWorld, i: int, slots: dict) -> int:
        bits = 0
        for j in slots:
            bits |= 1 << j
        wait = min(max(world.busy_until[i] - world.t, 0), self.levels - 1)
        return bits * self.levels + wait

    def valid_actions(self, state: int) -> list:
        bits = state // self.levels
        return [0] + [j + 1 for j in range(self.slots) if bits >> j & 1]


@dataclass
class QPolicy:
    table: np.ndarray
    encoder: ArmEncoder

    def act(self, state: int) -> int:
        valid = self.encoder.valid_actions(state)
        return valid[int(np.argmax(self.table[state, valid]))]  # ties -> lowest index

    def save(self, path) -> None:
        save_table(self.table, path)

    def planner(self, inst: ProblemInstance, world: ConveyorWorld) -> Allocation:
        out = {a: [] for a in inst.agents}
        for i in inst.agents:
            slots = self.encoder.slot_objects(world, i)
            a = self.act(self.encoder.encode(world, i, slots))
            if a > 0 and (a - 1) in slots:
                out[i] = [(slots[a - 1], world.t)]
        return Allocation(out)


def save_table(table: np.ndarray, path) -> None:
    """Text dump: a header line, then one row per state: ``state q0 q1 ...``."""
    lines = [f"# qtable states={table.shape[0]} actions={table.shape[1]}"]
    for s, row in enumerate(table):
        lines.append(f"{s} " + " ".join(repr(float(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def load_table(path) -> np.ndarray:
    rows = {}
    for line in Path(path).read_text().splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        tok = line.split()
        rows[int(tok[0])] = [float(v) for v in tok[1:]]
    table = np.zeros((max(rows) + 1, len(next(iter(rows.values())))))
    for s, row in rows.items():
        table[s] = row
    return table


def _leaving(world: ConveyorWorld, i: int, before: list) -> int:
    # objects in the workspace last step that have now left it without a pick
    lost = 0
    for oid in before:
        o = world.objects[oid]
        if o.status != PICKED and (o.status != ON_BELT or not world.in_workspace(i, o)):
            lost += 1
    return lost


def qlearn_train(belt: BeltConfig, config: QLearnConfig = QLearnConfig(), seed=0) -> QPolicy:
    """Train the shared table by running the conveyor with epsilon-greedy arms."""
    enc = ArmEncoder(belt, config.belt_discretization, config.state_cap)
    q = np.zeros((enc.n_states, enc.n_actions))
    ss = np.random.SeedSequence(seed)
    g_seed, e_seed, a_seed = ss.spawn(3)
    rng = np.random.default_rng(a_seed)
    world = ConveyorWorld(belt, np.random.default_rng(g_seed), np.random.default_rng(e_seed))
    eps = 1.0
    n = len(belt.arms)
    for _ in range(config.training_steps):
        world.arrivals()
        slots = [enc.slot_objects(world, i) for i in range(n)]
        inside = [enc.inside(world, i) for i in range(n)]
        states = [enc.encode(world, i, slots[i]) for i in range(n)]
        acts = []
        for i in range(n):
            valid = enc.valid_actions(states[i])
            if rng.random() < eps:
                a = valid[int(rng.integers(len(valid)))]
            else:
                a = valid[int(np.argmax(q[states[i], valid]))]
            acts.append(a)
            world.targets[i] = (slots[i][a - 1], world.t) if a > 0 and (a - 1) in slots[i] else None
        world.step_execution()
        for i in range(n):
            r = -float(_leaving(world, i, inside[i]))
            nxt = enc.encode(world, i, enc.slot_objects(world, i))
            target = r + config.gamma * q[nxt, enc.valid_actions(nxt)].max()
            q[states[i], acts[i]] += config.learning_rate * (target - q[states[i], acts[i]])
        eps = max(config.epsilon_min, eps * config.epsilon_decay)
    return QPolicy(q, enc)


def load_policy(path, belt: BeltConfig, config: QLearnConfig = QLearnConfig()) -> QPolicy:
    enc = ArmEncoder(belt, config.belt_discretization, config.state_cap)
    table = load_table(path)
    if table.shape != (enc.n_states, enc.n_actions):
        raise ValueError(f"table shape {table.shape} does not fit {enc.n_states}x{enc.n_actions}")
    return QPolicy(table, enc)
