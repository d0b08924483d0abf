"""Acceptance criteria, one test each; every test prints a PASS/FAIL line."""

import csv
import filecmp
import random
import time

import numpy as np
import pytest

from conftest import DATA, ROOT
from mutations import random_mutations
from uav_iab.agent import (DatasetEnv, evaluate_policy, init_params, load_hyperparams, loss_and_grad,
                           train)
from uav_iab.cli import main
from uav_iab.config import Config
from uav_iab.dataset import normalization_bounds
from uav_iab.mdp import (CANDIDATES, HOLD, N_ACTIONS, N_STATES, apply_action, decode_action, encode_action,
                         enumerate_states, feature_table, state_index)
from uav_iab.oracle import grid_search
from uav_iab.reward import MetricsVector, reward
from uav_iab.scenario import build_deployment, drop_users, load_profile
from uav_iab.signaling import run_procedure, validate_log
from uav_iab.simulator import kpis_to_metrics, run_drop

RL_SEEDS = (0, 1, 2)
EVAL_EPISODES = 100
EVAL_STEPS = 100


@pytest.fixture
def report(capsys):
    def emit(name, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
        return ok
    return emit


def test_mdp_exhaustive_closure(report):
    t0 = time.perf_counter()
    states = enumerate_states()
    grid = set(states)
    closed = all(apply_action(s, a) in grid for s in states for a in range(N_ACTIONS))
    bijection = (sorted(encode_action(decode_action(i)) for i in range(N_ACTIONS)) == list(range(N_ACTIONS))
                 and len({decode_action(i) for i in range(N_ACTIONS)}) == N_ACTIONS)
    identity = all(apply_action(s, HOLD) == s for s in states)
    dt = time.perf_counter() - t0
    ok = closed and bijection and identity and len(states) == N_STATES and dt < 1.0
    assert report("MDP closure", ok, f"closed={closed} bijection={bijection} identity={identity} {dt:.3f}s")


def test_reward_arithmetic(report):
    t0 = time.perf_counter()
    ex = reward(MetricsVector(0.1, 0.2, 0.5, 0.7, 0.4, 0.6, normalized=True))
    hi = reward(MetricsVector(0, 0, 1, 1, 1, 1, normalized=True))
    lo = reward(MetricsVector(1, 1, 0, 0, 0, 0, normalized=True))
    rng = np.random.default_rng(2024)
    violations = 0
    for _ in range(10_000):
        v = rng.random(6)
        k = rng.integers(6)
        w = v.copy()
        w[k] = v[k] + (1.0 - v[k]) * rng.random()
        r0 = reward(MetricsVector(*v, normalized=True))
        r1 = reward(MetricsVector(*w, normalized=True))
        if (k < 2 and r1 > r0 + 1e-12) or (k >= 2 and r1 < r0 - 1e-12) or not 0.0 <= r0 <= 1.0:
            violations += 1
    dt = time.perf_counter() - t0
    ok = abs(ex - 0.695) < 1e-12 and hi == 1.0 and lo == 0.0 and violations == 0 and dt < 1.0
    assert report("reward arithmetic", ok,
                  f"example={ex:.12f} bounds=({lo},{hi}) monotone_violations={violations}/10000 {dt:.3f}s")


def test_gradient_check(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(99)
    feats = feature_table()
    worst = 0.0
    h = 1e-6
    for _ in range(100):
        p = init_params(rng)
        p = p.with_flat(p.flat() + rng.normal(0, 0.05, p.flat().size))
        n = int(rng.integers(1, 33))
        x = feats[rng.integers(0, N_STATES, n)]
        acts = rng.integers(0, N_ACTIONS, n)
        targets = rng.random(n)
        _, grad = loss_and_grad(p, x, acts, targets)
        flat, g = p.flat(), grad.flat()
        # one random direction plus three of the largest-gradient coordinates
        d = rng.normal(size=flat.size)
        checks = [(d, g @ d)]
        for i in np.argsort(-np.abs(g))[:3]:
            e = np.zeros(flat.size)
            e[i] = 1.0
            checks.append((e, g[i]))
        for direction, analytic in checks:
            lp, _ = loss_and_grad(p.with_flat(flat + h * direction), x, acts, targets)
            lm, _ = loss_and_grad(p.with_flat(flat - h * direction), x, acts, targets)
            numeric = (lp - lm) / (2 * h)
            rel = abs(numeric - analytic) / max(abs(numeric), abs(analytic), 1e-8)
            worst = max(worst, rel)
    dt = time.perf_counter() - t0
    ok = worst <= 1e-4 and dt < 30.0
    assert report("gradient check", ok, f"worst relative error {worst:.2e} over 100 draws, {dt:.1f}s")


def _brute_force(path):
    """Independent pass: raw CSV rows, inline min-max scaling and weighted sum."""
    with open(path, newline="") as fh:
        body = list(csv.DictReader(fh))
    cols = ("a_dl50", "a_ul50", "a_dl5", "a_ul5")
    lo = {c: min(float(r[c]) for r in body) for c in cols}
    hi = {c: max(float(r[c]) for r in body) for c in cols}

    def scaled(r, c):
        span = hi[c] - lo[c]
        return min(max((float(r[c]) - lo[c]) / span, 0.0), 1.0) if span > 0 else 0.0

    best, best_key = None, None
    for r in body:
        value = (0.5 * ((1.0 - float(r["beta_dl"])) + (1.0 - float(r["beta_ul"]))) / 2.0
                 + 0.3 * (scaled(r, "a_ul5") + scaled(r, "a_dl5")) / 2.0
                 + 0.2 * (scaled(r, "a_ul50") + scaled(r, "a_dl50")) / 2.0)
        key = tuple(int(r[k]) for k in ("tilt_deg", "x_m", "y_m", "z_m"))
        order = tuple(CANDIDATES[j].index(key[j]) for j in range(4))
        if best is None or value > best or (value == best and order < best_order):
            best, best_key, best_order = value, key, order
    return best_key, best


def test_oracle_equivalence(report, light_dataset, heavy_dataset):
    t0 = time.perf_counter()
    details, ok = [], True
    for name, ds in (("light", light_dataset), ("heavy", heavy_dataset)):
        res = grid_search(ds)
        key, value = _brute_force(DATA / f"{name}.csv")
        same = res.best_state.as_tuple() == key and res.best_reward == value
        ok &= same
        details.append(f"{name} {res.best_state} {res.best_reward!r} vs {key} {value!r}")
    dt = time.perf_counter() - t0
    ok &= dt < 5.0
    assert report("oracle equivalence", ok, "; ".join(details) + f" {dt:.2f}s")


@pytest.fixture(scope="module")
def rl_runs(light_dataset, heavy_dataset):
    """Train three seeds per load with the tuned hyperparameters and evaluate greedily."""
    hyper = load_hyperparams(ROOT / "configs" / "dqn_tuned.yaml")
    starts = np.random.default_rng(np.random.SeedSequence([0, 0xE7A1])).integers(N_STATES, size=EVAL_EPISODES)
    out = {}
    t0 = time.perf_counter()
    for name, ds in (("light", light_dataset), ("heavy", heavy_dataset)):
        env = DatasetEnv(ds, name, normalization_bounds(ds))
        best = grid_search(ds).best_reward
        runs = []
        for seed in RL_SEEDS:
            params, trace = train(env, hyper, seed)
            mean = float(np.mean([evaluate_policy(params, env, EVAL_STEPS, int(s)).reward for s in starts]))
            runs.append((mean, np.array([r.reward for r in trace])))
        out[name] = (best, runs)
    return out, time.perf_counter() - t0


def test_rl_vs_oracle_ratio(report, rl_runs):
    runs, dt = rl_runs
    ok, details = dt < 600.0, []
    for name, (best, seeds) in runs.items():
        mean = float(np.mean([m for m, _ in seeds]))
        ratio = mean / best
        ok &= ratio >= 0.90
        details.append(f"{name} mean {mean:.4f} / best {best:.4f} = {ratio:.3f} "
                       f"(seeds {', '.join(f'{m / best:.3f}' for m, _ in seeds)})")
    assert report("RL-vs-oracle ratio >= 0.90", ok, "; ".join(details) + f"; {dt:.0f}s")


def test_convergence_shape(report, rl_runs):
    runs, _ = rl_runs
    ok, details = True, []
    for name, (_, seeds) in runs.items():
        wins = 0
        for _, rewards in seeds:
            ma = np.convolve(rewards, np.ones(100) / 100, mode="valid")
            wins += ma[-1] > ma[0]
        ok &= wins >= 2
        details.append(f"{name} {wins}/3 seeds improve")
    assert report("convergence shape", ok, "; ".join(details))


# the tilt x height sweep at the disaster-area centre, at the configured drop duration
LOAD_STATES = [(t, 0, 0, z) for t in (-30, -20, -10, 0, 10, 20, 30) for z in (10, 20, 30, 35)]
LOAD_SEEDS = range(10)


@pytest.fixture(scope="module")
def load_runs():
    from uav_iab.mdp import UavState
    cfg = Config()
    dep = build_deployment(cfg)
    t0 = time.perf_counter()
    samples = {}
    for load in ("light", "heavy"):
        prof = load_profile(cfg, load)
        for seed in LOAD_SEEDS:
            users = drop_users(dep, prof, seed)
            for st in LOAD_STATES:
                samples[(load, st, seed)] = run_drop(dep, UavState(*st), prof, seed, users=users)
    return samples, time.perf_counter() - t0


def test_load_trends(report, load_runs):
    samples, dt = load_runs

    def per_state(load, st):
        se = np.mean([samples[(load, st, s)].backhaul_mean_se for s in LOAD_SEEDS])
        m = [kpis_to_metrics(samples[(load, st, s)]) for s in LOAD_SEEDS]
        return se, np.mean([(x.beta_dl + x.beta_ul) / 2 for x in m])

    light = np.array([per_state("light", st) for st in LOAD_STATES])
    heavy = np.array([per_state("heavy", st) for st in LOAD_STATES])
    (se_l, dr_l), (se_h, dr_h) = light.mean(axis=0), heavy.mean(axis=0)
    ok = se_h < se_l and dr_h > dr_l and dt < 300.0
    detail = (f"{len(LOAD_STATES)} states x {len(LOAD_SEEDS)} seeds, {dt:.1f}s; backhaul SE {se_l:.3f} -> "
              f"{se_h:.3f}; MC drop {dr_l:.4f} -> {dr_h:.4f}; per state: SE lower in "
              f"{int((heavy[:, 0] < light[:, 0]).sum())}, drop higher in {int((heavy[:, 1] > light[:, 1]).sum())}, "
              f"both saturated in {int(((heavy[:, 1] == 1) & (light[:, 1] == 1)).sum())}")
    assert report("load trends", ok, detail)


def test_bottleneck_invariant(report, load_runs):
    samples, _ = load_runs
    worst, served = -np.inf, 0
    for s in samples.values():
        for thr in s.uav_throughputs:
            served += 1
            worst = max(worst, thr - s.backhaul_peak_rate_mbps)
    ok = served > 0 and worst <= 1e-9
    assert report("bottleneck invariant", ok,
                  f"{served} UAV-served flows over {len(samples)} drops; max(throughput - backhaul rate) = "
                  f"{worst:.3g} Mbit/s")


def test_determinism(report, tmp_path, light_dataset):
    gen = ["gen-dataset", "--load", "light", "--seeds", "2", "--duration", "0.02"]
    codes = [main(gen + ["--out", str(tmp_path / f"d{k}.csv")]) for k in (1, 2)]
    same_csv = codes == [0, 0] and filecmp.cmp(tmp_path / "d1.csv", tmp_path / "d2.csv", shallow=False)
    tr = ["train", "--dataset", str(DATA / "light.csv"), "--hyper", str(ROOT / "configs" / "dqn_tuned.yaml"),
          "--seed", "7", "--no-figure"]
    codes = [main(tr + ["--out", str(tmp_path / f"m{k}.json"), "--trace", str(tmp_path / f"t{k}.csv")])
             for k in (1, 2)]
    same_trace = codes == [0, 0] and filecmp.cmp(tmp_path / "t1.csv", tmp_path / "t2.csv", shallow=False)
    ok = same_csv and same_trace
    assert report("determinism", ok, f"dataset bytes identical={same_csv} train trace identical={same_trace}")


def test_signaling_conformance(report):
    t0 = time.perf_counter()
    accepted = all(validate_log(run_procedure(n)) for n in range(1, 21))
    rng = random.Random(20)
    mutants = []
    for n in rng.sample(range(1, 21), 20):
        mutants += random_mutations(run_procedure(n), 1, rng)
    rejected = sum(not validate_log(m) for m in mutants)
    dt = time.perf_counter() - t0
    ok = accepted and rejected == 20 and dt < 1.0
    assert report("signaling conformance", ok,
                  f"rounds 1..20 accepted={accepted}; rejected {rejected}/20 mutants; {dt:.3f}s")
