"""Exhaustive grid search for the reward-optimal UAV configuration."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

from .dataset import Bounds, Dataset, canonical_load, normalization_bounds, normalize, require_complete
from .mdp import N_STATES, UavState, enumerate_states
from .reward import FEATURES, MetricsVector, RewardWeights, reward


@dataclass(frozen=True)
class RankedState:
    state_index: int
    state: UavState
    raw: MetricsVector
    normalized: MetricsVector
    reward: float


@dataclass(frozen=True)
class OracleResult:
    load: str
    best_state: UavState
    best_reward: float
    ranking: tuple[RankedState, ...]   # reward descending, ties by state index


def grid_search(dataset: Dataset, bounds: Bounds | None = None,
                weights: RewardWeights = RewardWeights(), load: str | None = None) -> OracleResult:
    if load is None:
        loads = dataset.loads()
        if len(loads) != 1:
            raise ValueError(f"dataset holds loads {loads}; pass load=")
        load = loads[0]
    load = canonical_load(load)
    require_complete(dataset, load)
    if bounds is None:
        bounds = normalization_bounds(dataset)
    table = dataset.for_load(load)
    ranked = []
    for idx, state in enumerate(enumerate_states()):
        raw = table[idx].metrics
        norm = normalize(raw, bounds, load)
        ranked.append(RankedState(idx, state, raw, norm, reward(norm, weights)))
    ranked.sort(key=lambda r: (-r.reward, r.state_index))
    best = ranked[0]
    assert len(ranked) == N_STATES and all(best.reward >= r.reward for r in ranked)
    return OracleResult(load, best.state, best.reward, tuple(ranked))


RANKING_HEADER = (("rank", "load", "tilt_deg", "x_m", "y_m", "z_m")
                  + FEATURES + tuple(f"norm_{f}" for f in FEATURES) + ("reward",))


def save_ranking(result: OracleResult, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RANKING_HEADER)
        for rank, r in enumerate(result.ranking, start=1):
            s = r.state
            writer.writerow([rank, result.load, s.tilt, s.x, s.y, s.z,
                             *(f"{v:.9g}" for v in r.raw.values()),
                             *(f"{v:.9g}" for v in r.normalized.values()),
                             f"{r.reward:.17g}"])
