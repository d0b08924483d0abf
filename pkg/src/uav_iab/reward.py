"""The six MC-user service metrics and the weighted-sum reward."""

from __future__ import annotations

import math
from dataclasses import astuple, dataclass, fields

FEATURES = ("beta_dl", "beta_ul", "a_dl50", "a_ul50", "a_dl5", "a_ul5")


@dataclass(frozen=True)
class MetricsVector:
    """Drop rates are fractions; throughput percentiles are Mbit/s unless ``normalized``."""

    beta_dl: float
    beta_ul: float
    a_dl50: float
    a_ul50: float
    a_dl5: float
    a_ul5: float
    normalized: bool = False

    def __post_init__(self):
        values = self.values()
        if not all(math.isfinite(v) for v in values):
            raise ValueError(f"non-finite metric in {values}")
        for name in ("beta_dl", "beta_ul"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {getattr(self, name)}")
        if self.normalized and not all(0.0 <= v <= 1.0 for v in values):
            raise ValueError(f"normalized metrics must lie in [0, 1], got {values}")
        if any(v < 0 for v in values):
            raise ValueError(f"metrics must be non-negative, got {values}")

    def values(self) -> tuple[float, ...]:
        return astuple(self)[:len(FEATURES)]

    @classmethod
    def from_values(cls, values, normalized: bool = False) -> "MetricsVector":
        return cls(*(float(v) for v in values), normalized=normalized)


@dataclass(frozen=True)
class RewardWeights:
    w_drop: float = 0.5
    w_p5: float = 0.3
    w_p50: float = 0.2

    def __post_init__(self):
        ws = (self.w_drop, self.w_p5, self.w_p50)
        if any(w < 0 for w in ws):
            raise ValueError(f"weights must be non-negative, got {ws}")
        if abs(sum(ws) - 1.0) > 1e-12:
            raise ValueError(f"weights must sum to 1, got {sum(ws)!r}")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.w_drop, self.w_p5, self.w_p50)

    @classmethod
    def parse(cls, text: str) -> "RewardWeights":
        parts = [float(p) for p in text.split(",")]
        if len(parts) != 3:
            raise ValueError(f"expected three comma-separated weights, got {text!r}")
        return cls(*parts)

    def __str__(self):
        return ",".join(f"{w:g}" for w in self.as_tuple())


def reward(m: MetricsVector, w: RewardWeights = RewardWeights()) -> float:
    """R = w1*((1-b_dl)+(1-b_ul))/2 + w2*(a_ul5+a_dl5)/2 + w3*(a_ul50+a_dl50)/2."""
    if not m.normalized:
        raise ValueError("reward needs normalized metrics; call dataset.normalize first")
    bad = [f.name for f in fields(MetricsVector)[:len(FEATURES)] if not 0.0 <= getattr(m, f.name) <= 1.0]
    if bad:
        raise ValueError(f"metrics outside [0, 1]: {bad}")
    return (w.w_drop * ((1.0 - m.beta_dl) + (1.0 - m.beta_ul)) / 2.0
            + w.w_p5 * (m.a_ul5 + m.a_dl5) / 2.0
            + w.w_p50 * (m.a_ul50 + m.a_dl50) / 2.0)
