"""Task-completion models: cumulative probability of finishing within t steps."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence


def geometric_cdf(p: float, t: float) -> float:
    """Probability that a per-step Bernoulli(p) process succeeds within t steps."""
    if t <= 0:
        return 0.0
    return 1.0 - (1.0 - p) ** t


def epan_cdf(mu: float, r: float, t: float) -> float:
    """CDF of the Epanechnikov distribution centred at mu with half-width r."""
    if r <= 0:
        raise ValueError(f"half-width must be positive, got {r}")
    if t <= mu - r:
        return 0.0
    if t >= mu + r:
        return 1.0
    u = (t - mu) / r
    return 0.75 * (u - u**3 / 3.0) + 0.5


def epan_ppf(mu: float, r: float, q: float) -> float:
    """Inverse of :func:`epan_cdf` (closed-form root of the cubic)."""
    q = min(max(q, 0.0), 1.0)
    return mu + r * 2.0 * math.sin(math.asin(2.0 * q - 1.0) / 3.0)


class CompletionModel:
    """Base class. Subclasses are frozen dataclasses so they hash by value."""

    name = "abstract"

    def cdf(self, t: int) -> float:
        raise NotImplementedError

    def __call__(self, t: int) -> float:
        return self.cdf(t)

    def params(self) -> tuple[float, ...]:
        raise NotImplementedError


@dataclass(frozen=True)
class GeometricCompletion(CompletionModel):
    p: float
    name = "geometric"

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"probability out of range: {self.p}")

    def cdf(self, t: int) -> float:
        return geometric_cdf(self.p, t)

    def params(self):
        return (self.p,)


@dataclass(frozen=True)
class EpanechnikovCompletion(CompletionModel):
    mu: float
    r: float
    name = "epanechnikov"

    def __post_init__(self):
        if self.r <= 0:
            raise ValueError(f"half-width must be positive, got {self.r}")

    def cdf(self, t: int) -> float:
        if t <= 0:
            return 0.0
        return epan_cdf(self.mu, self.r, t)

    def params(self):
        return (self.mu, self.r)


@dataclass(frozen=True)
class TabularCompletion(CompletionModel):
    """Explicit CDF values for t = 0, 1, ...; saturates at the last entry."""

    values: tuple[float, ...]
    name = "table"

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        object.__setattr__(self, "values", vals)
        if not vals or vals[0] != 0.0:
            raise ValueError("table must start with cdf(0) = 0")
        if any(b < a for a, b in zip(vals, vals[1:])) or vals[-1] > 1.0:
            raise ValueError("table must be non-decreasing and bounded by 1")

    def cdf(self, t: int) -> float:
        if t <= 0:
            return 0.0
        return self.values[min(int(t), len(self.values) - 1)]

    def params(self):
        return self.values


_MODELS = {
    "geometric": lambda args: GeometricCompletion(*args),
    "epanechnikov": lambda args: EpanechnikovCompletion(*args),
    "table": lambda args: TabularCompletion(tuple(args)),
}


def model_from_spec(name: str, params: Sequence[float]) -> CompletionModel:
    """Build a completion model from its serialized name and parameters."""
    try:
        factory = _MODELS[name]
    except KeyError:
        raise ValueError(f"unknown completion model {name!r}") from None
    return factory([float(p) for p in params])
