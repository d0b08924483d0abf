import numpy as np
import pytest

from uav_iab.dataset import Dataset, DatasetError, StateRecord, normalization_bounds
from uav_iab.mdp import enumerate_states
from uav_iab.oracle import RANKING_HEADER, grid_search, save_ranking
from uav_iab.reward import MetricsVector, RewardWeights


def _synthetic(load="Light", seed=0, special=None):
    rng = np.random.default_rng(seed)
    recs = []
    for i, s in enumerate(enumerate_states()):
        v = [rng.uniform(0.05, 0.9), rng.uniform(0.05, 0.9), *rng.uniform(1.0, 50.0, 4)]
        if special and i in special:
            v = special[i]
        recs.append(StateRecord(load, s, MetricsVector(*v), 1))
    return Dataset(recs)


def test_dominant_row_wins_with_reward_one():
    ds = _synthetic(special={321: [0.0, 0.0, 60.0, 60.0, 60.0, 60.0]})
    res = grid_search(ds)
    assert res.best_state == enumerate_states()[321]
    assert res.best_reward == pytest.approx(1.0)


def test_drop_only_weights_pick_zero_drop_state():
    ds = _synthetic(seed=1, special={77: [0.0, 0.0, 1.0, 1.0, 1.0, 1.0]})
    res = grid_search(ds, weights=RewardWeights(1.0, 0.0, 0.0))
    assert res.ranking[0].state_index == 77
    assert grid_search(ds).ranking[0].state_index != 77


def test_alpha_scale_invariance():
    ds = _synthetic(seed=2)
    scaled = Dataset([StateRecord(r.load, r.state, MetricsVector(
        *r.metrics.values()[:2], *(3.7 * v for v in r.metrics.values()[2:])), 1) for r in ds])
    assert grid_search(ds).best_state == grid_search(scaled).best_state


def test_ranking_sorted_and_complete(heavy_dataset):
    res = grid_search(heavy_dataset)
    rewards = [r.reward for r in res.ranking]
    assert len(rewards) == 700
    assert rewards == sorted(rewards, reverse=True)
    assert res.best_reward == max(rewards)


def test_incomplete_dataset_lists_missing():
    ds = _synthetic()
    partial = Dataset(ds.records[:-2])
    with pytest.raises(DatasetError, match=r"2 of 700 states missing.*\{\+30deg, 350, 350, 30\}"):
        grid_search(partial, bounds=normalization_bounds(ds))


def test_two_loads_need_explicit_choice(light_dataset, heavy_dataset):
    both = Dataset(light_dataset.records + heavy_dataset.records)
    with pytest.raises(ValueError):
        grid_search(both)
    assert grid_search(both, load="heavy").best_state == grid_search(heavy_dataset).best_state


def test_save_ranking(tmp_path, light_dataset):
    res = grid_search(light_dataset)
    path = tmp_path / "rank.csv"
    save_ranking(res, path)
    lines = path.read_text().splitlines()
    assert lines[0].split(",") == list(RANKING_HEADER)
    assert len(lines) == 701
    assert float(lines[1].split(",")[-1]) == res.best_reward
