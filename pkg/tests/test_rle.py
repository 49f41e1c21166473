import math
from collections import Counter

import numpy as np
import pytest

from tabirl.data import collect_dataset
from tabirl.explore import Environment, OccupancyOracle, PolicyMixture
from tabirl.instances import random_mdp
from tabirl.mdp import MdpCore, Policy, ValidationError
from tabirl.reward_mapping import ParamSet, ground_truth_reward, sample_theta
from tabirl.rle import RleConfig, default_exploration_budget, rle_run, subsample, trim_target


def point_mass_oracle(H, S, A, K=1):
    d1 = np.zeros(S)
    d1[0] = 1.0
    P = np.zeros((H, S, A, S))
    P[..., 0] = 1.0
    return OccupancyOracle(d1, P, xi=0.0, N=1, K=K)


def test_trim_target_zero_occupancy():
    oracle = point_mass_oracle(2, 2, 1)
    targets = trim_target(oracle, PolicyMixture.single(np.zeros((2, 2), dtype=int), 1), 1000, 0.0, 10, 0.1)
    assert np.all(targets[:, 1] == 0)


def test_trim_target_worked_example():
    # one stage, two actions split 50/50 at the only state, K = 1000
    oracle = point_mass_oracle(1, 1, 2)
    mix = PolicyMixture([np.zeros((1, 1), dtype=int), np.ones((1, 1), dtype=int)], [0.5, 0.5], 2)
    log_term = 3 * math.log(10 * 1 * 1 * 2 / 0.1)
    targets = trim_target(oracle, mix, 1000, 1e-9, 10**6, 0.1)
    assert log_term == pytest.approx(15.9, abs=0.1)
    assert np.all(targets == 250)  # min(250, 500 - 15.9)


def test_trim_target_never_exceeds_quarter_k():
    mdp, _ = random_mdp(3, 3, 2, 0)
    oracle = OccupancyOracle.exact(mdp)
    mix = PolicyMixture.single(np.zeros((3, 3), dtype=int), 2)
    for K in (10, 100, 10_000):
        t = trim_target(oracle, mix, K, 0.0, 10, 0.1)
        assert t.min() >= 0 and t.max() <= K // 4


def dataset(K=400, seed=0):
    mdp, expert = random_mdp(3, 2, 2, 1)
    return collect_dataset(mdp, Policy.uniform(3, 2, 2), expert, 1, K, seed)


def multiset(tr):
    return Counter(zip(tr.h.tolist(), tr.s.tolist(), tr.a.tolist(), tr.s_next.tolist(), tr.e.tolist()))


def test_subsample_identity_and_empty():
    ds = dataset()
    full = ds.transitions()
    kept = subsample(ds, np.full((3, 2, 2), 10**6), 0)
    assert multiset(kept) == multiset(full)
    assert len(subsample(ds, np.zeros((3, 2, 2), dtype=int), 0)) == 0


def test_subsample_half_cell_is_exact_subset():
    ds = dataset()
    full = ds.transitions()
    cell_counts = np.zeros((3, 2, 2), dtype=int)
    np.add.at(cell_counts, (full.h, full.s, full.a), 1)
    targets = np.full((3, 2, 2), 10**6)
    targets[1, 0, 1] = cell_counts[1, 0, 1] // 2
    kept = subsample(ds, targets, 5)
    kept_counts = np.zeros((3, 2, 2), dtype=int)
    np.add.at(kept_counts, (kept.h, kept.s, kept.a), 1)
    assert np.array_equal(kept_counts, np.minimum(targets, cell_counts))
    assert not (multiset(kept) - multiset(full))


def test_subsample_is_seed_deterministic_and_seed_sensitive():
    ds = dataset(K=2000)
    targets = np.full((3, 2, 2), 50)
    a, b, c = subsample(ds, targets, 1), subsample(ds, targets, 1), subsample(ds, targets, 2)
    assert multiset(a) == multiset(b)
    assert multiset(a) != multiset(c)


def test_budget_schedule_and_cap():
    assert default_exploration_budget(3, 3, 2, 1024) == 3 * 1024
    assert default_exploration_budget(1, 1, 1, 4) == 2
    assert RleConfig(K=1024).budget(3, 3, 2) == 3072
    with pytest.raises(ValidationError):
        RleConfig(K=1024, paper_faithful=True).budget(3, 3, 2)
    with pytest.raises(ValidationError):
        RleConfig(K=10, N=100).budget(3, 3, 2)
    assert RleConfig(K=10, paper_faithful=True).threshold(3, 3, 2) == pytest.approx(18**3 * math.log(1800))


def test_episode_accounting_and_summary():
    mdp, expert = random_mdp(3, 3, 2, 3)
    env = Environment(mdp, expert)
    thetas = ParamSet.finite([sample_theta(3, 3, 2, i) for i in range(3)])
    handle = rle_run(env, thetas, RleConfig(K=500, N=400), seed=1)
    s = handle.summary
    assert s["episodes_explore"] == 400 * 3 and s["episodes_main"] == 500
    assert env.episodes == 500 + 400 * 3
    assert 0.0 <= s["trim_retention_fraction"] <= 1.0
    assert set(s) >= {"episodes_explore", "episodes_main", "trim_retention_fraction", "metric_estimates"}
    cfg = handle.model.config
    assert cfg.delta == pytest.approx(0.01) and cfg.eps == pytest.approx(0.01)


def test_same_seed_same_outputs():
    mdp, expert = random_mdp(3, 3, 2, 3)
    thetas = ParamSet.finite([sample_theta(3, 3, 2, 0)])
    h1 = rle_run(Environment(mdp, expert), thetas, RleConfig(K=300), seed=9)
    h2 = rle_run(Environment(mdp, expert), thetas, RleConfig(K=300), seed=9)
    assert np.array_equal(h1(thetas.params[0]).r, h2(thetas.params[0]).r)


def test_single_state_environment():
    mdp = MdpCore(np.ones((2, 1, 2, 1)))
    expert = Policy.deterministic(np.zeros((2, 1), dtype=int), 2)
    theta = sample_theta(2, 1, 2, 0)
    handle = rle_run(Environment(mdp, expert), ParamSet.finite([theta]), RleConfig(K=4000), seed=0)
    truth = ground_truth_reward(mdp, expert, theta).r
    gap = truth - handle(theta).r
    b = handle.model.bonus(theta)
    visited = handle.model.counts.N_b_sa > 0
    assert np.all(gap[visited] >= -1e-12)
    assert np.allclose(gap[visited], b[visited], atol=1e-12)


def test_pessimism_on_online_path():
    hits = 0
    for seed in range(20):
        mdp, expert = random_mdp(3, 3, 2, 700 + seed)
        thetas = ParamSet.finite([sample_theta(3, 3, 2, seed * 10 + i) for i in range(5)])
        handle = rle_run(Environment(mdp, expert), thetas, RleConfig(K=1000), seed)
        hits += all(np.all(handle(t).r <= ground_truth_reward(mdp, expert, t).r) for t in thetas)
    assert hits >= 18


def test_option_mismatch():
    mdp, expert = random_mdp(2, 2, 2, 0)
    with pytest.raises(ValidationError):
        rle_run(Environment(mdp, expert, option=2), ParamSet.finite([sample_theta(2, 2, 2, 0)]), RleConfig(K=10), 0)
