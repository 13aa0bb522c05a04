"""Trial configuration and its plain-text ``key = value`` file format.

Blank lines and ``#`` comments are ignored. Unknown keys are errors.
Example::

    domain = conveyor
    planner = scoba
    trials = 100
    speed = 0.07

Sweep files use the same format plus ``planners``, ``vary`` and ``values``::

    planners = scoba, edd, hungarian
    vary = speed
    values = 0.04, 0.07, 0.1
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

DOMAINS = ("conveyor", "drone")
PLANNERS = ("scoba", "edd", "hungarian", "mcts", "qlearning")
SCOPES = ("plan", "next")


class ConfigError(ValueError):
    """Bad key, value or combination in a trial or sweep configuration."""


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


@dataclass(frozen=True)
class TrialConfig:
    domain: str = "conveyor"
    planner: str = "scoba"
    horizon: Optional[int] = None  # 500 steps on the belt, 100 minutes for drones
    trials: int = 100
    seed: int = 0
    # conveyor
    grasp_prob: float = 0.75
    speed: float = 0.07
    new_object_prob: float = 0.75
    downtime: int = 2
    # drone
    depots: int = 3
    drones: int = 18
    new_request_prob: float = 0.5
    city: Optional[str] = None
    noisy_return: bool = False
    # planner
    conflict_budget: Optional[int] = 500
    truncate: bool = True
    scope: Optional[str] = None  # conflicts on full plans (belt) or next assignments (drones)
    mcts_iterations: int = 100
    mcts_depth: int = 20
    mcts_c: float = 1.0
    q_learning_rate: float = 0.01
    q_epsilon_decay: float = 0.9995
    q_training_steps: int = 100_000
    q_cell: float = 0.05
    q_table: Optional[str] = None
    label: dict = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        if self.domain not in DOMAINS:
            raise ConfigError(f"unknown domain {self.domain!r}")
        if self.planner not in PLANNERS:
            raise ConfigError(f"unknown planner {self.planner!r}")
        if self.planner == "qlearning" and self.domain != "conveyor":
            raise ConfigError("q-learning is only available on the conveyor")
        if self.scope is not None and self.scope not in SCOPES:
            raise ConfigError(f"unknown conflict scope {self.scope!r}")
        if self.trials < 0 or (self.horizon is not None and self.horizon < 0):
            raise ConfigError("trials and horizon must be non-negative")

    @property
    def steps(self) -> int:
        if self.horizon is not None:
            return self.horizon
        return 500 if self.domain == "conveyor" else 100

    @property
    def conflict_scope(self) -> str:
        if self.scope is not None:
            return self.scope
        return "plan" if self.domain == "conveyor" else "next"

    def replace(self, **kw) -> "TrialConfig":
        return dataclasses.replace(self, **kw)


_FIELDS = {f.name: f for f in dataclasses.fields(TrialConfig) if f.name != "label"}


def _convert(name: str, raw: str):
    f = _FIELDS[name]
    kind = f.type if isinstance(f.type, str) else getattr(f.type, "__name__", str(f.type))
    raw = raw.strip()
    if "Optional" in kind and raw.lower() in ("none", ""):
        return None
    if "bool" in kind:
        return _bool(raw)
    if "int" in kind:
        return int(raw)
    if "float" in kind:
        return float(raw)
    return raw


def parse_pairs(text: str) -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, val = (p.strip() for p in line.split("=", 1))
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = val
    return out


def config_from_pairs(pairs: dict, **overrides) -> TrialConfig:
    kw = {}
    for key, val in pairs.items():
        if key not in _FIELDS:
            raise ConfigError(f"unknown key {key!r}")
        try:
            kw[key] = _convert(key, val)
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}") from None
    kw.update({k: v for k, v in overrides.items() if v is not None})
    return TrialConfig(**kw)


def loads_config(text: str, **overrides) -> TrialConfig:
    return config_from_pairs(parse_pairs(text), **overrides)


def load_config(path, **overrides) -> TrialConfig:
    return loads_config(Path(path).read_text(), **overrides)


def dumps_config(cfg: TrialConfig) -> str:
    lines = []
    for name in _FIELDS:
        v = getattr(cfg, name)
        lines.append(f"{name} = {'none' if v is None else v}")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class SweepSpec:
    base: TrialConfig
    planners: tuple
    vary: Optional[str]
    values: tuple

    def configs(self) -> list:
        out = []
        values = self.values if self.vary else (None,)
        for v in values:
            for p in self.planners:
                kw = {"planner": p}
                if self.vary == "fleet":
                    d, n = v.split("x")
                    kw.update(depots=int(d), drones=int(n))
                elif self.vary:
                    kw[self.vary] = _convert(self.vary, v)
                cfg = self.base.replace(**kw)
                out.append(cfg.replace(label={"param": self.vary or "", "value": v if v is not None else ""}))
        return out


def loads_sweep(text: str, **overrides) -> SweepSpec:
    pairs = parse_pairs(text)
    planners = tuple(p.strip() for p in pairs.pop("planners", "scoba").split(",") if p.strip())
    vary = pairs.pop("vary", None)
    values = tuple(v.strip() for v in pairs.pop("values", "").split(",") if v.strip())
    if vary is not None and vary != "fleet" and vary not in _FIELDS:
        raise ConfigError(f"cannot vary unknown key {vary!r}")
    if vary is not None and not values:
        raise ConfigError("'vary' needs a 'values' list")
    base = config_from_pairs(pairs, **overrides)
    for p in planners:
        if p not in PLANNERS:
            raise ConfigError(f"unknown planner {p!r}")
    return SweepSpec(base, planners, vary, values)


def load_sweep(path, **overrides) -> SweepSpec:
    return loads_sweep(Path(path).read_text(), **overrides)
