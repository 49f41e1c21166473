"""End-to-end acceptance checks, one test per criterion.

Each test carries a ``criterion`` marker; conftest prints a PASS/FAIL line per
criterion at the end of the run. Wall-clock budgets are asserted as well.
"""

import itertools
import time

import numpy as np
import pytest

from tabirl.data import Transitions, collect_dataset, counts
from tabirl.harness import preset, run_experiment
from tabirl.instances import (
    HardInstanceSpec,
    hard_offline,
    packing_set,
    random_deterministic_policy,
    random_mdp,
    random_policy,
    random_w,
)
from tabirl.mdp import MdpCore, Policy, evaluate_policy, is_optimal, occupancy, optimal_policy, sample_batch, episode_seeds, validate_mdp
from tabirl.metrics import D_pi_Theta, concentrability, d_all_bruteforce, d_all_surrogate, d_pi, hausdorff
from tabirl.reward_mapping import ParamSet, ground_truth_mapping, ground_truth_reward, sample_theta
from tabirl.rlp import RlpConfig, fit_empirical, rlp_run

from oracles import empirical_by_loops, recount


class Budget:
    def __init__(self, seconds):
        self.seconds = seconds

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0
        if exc[0] is None:
            assert self.elapsed < self.seconds, f"took {self.elapsed:.1f}s, budget {self.seconds}s"


def random_support_expert(H, S, A, rng):
    """Stochastic expert whose support is a random nonempty action subset per state."""
    mask = rng.uniform(size=(H, S, A)) < 0.5
    mask[..., 0] |= ~mask.any(-1)
    probs = rng.uniform(0.1, 1.0, size=(H, S, A)) * mask
    return Policy(probs / probs.sum(-1, keepdims=True))


@pytest.mark.criterion(1, "feasibility of mapped rewards")
def test_feasibility():
    rng = np.random.default_rng(0)
    checked = 0
    with Budget(30):
        for i in range(100):
            H, S, A = int(rng.integers(1, 6)), int(rng.integers(1, 7)), int(rng.integers(1, 5))
            mdp, expert = random_mdp(H, S, A, 1000 + i)
            if i % 2:
                expert = random_support_expert(H, S, A, rng)
            for j in range(20):
                theta = sample_theta(H, S, A, 100 * i + j)
                reward = ground_truth_reward(mdp, expert, theta)
                assert is_optimal(mdp, reward, expert, 1e-9), (i, j)
                assert np.abs(reward.r).max() <= 3 * H, (i, j)
                checked += 1
    assert checked == 2000


@pytest.mark.criterion(2, "monotonicity of the offline estimate")
def test_monotonicity():
    H, S, A = 4, 4, 3
    hits = 0
    with Budget(120):
        for seed in range(50):
            mdp, expert = random_mdp(H, S, A, 2000 + seed)
            thetas = ParamSet.finite([sample_theta(H, S, A, 10 * seed + i) for i in range(10)])
            data = collect_dataset(mdp, Policy.uniform(H, S, A), expert, 1, 5000, seed)
            handle = rlp_run(data, thetas, RlpConfig(delta=0.1, C=1.0))
            hits += all(np.all(handle(t).r <= ground_truth_reward(mdp, expert, t).r) for t in thetas)
    print(f"monotone seeds: {hits}/50")
    assert hits >= 0.9 * 50


def check_rate(name):
    config = preset(name)
    with Budget(600):
        result = run_experiment(config)
    s = result.summary
    print(f"{name}: medians {s['medians']} slope {s['slope']:.4f} monotone {s['monotone_fraction']:.3f}")
    return result


@pytest.mark.criterion(3, "offline rate shape, uniform behavior")
def test_offline_rate():
    result = check_rate("offline_rate")
    med = list(result.medians().values())
    assert all(b <= a for a, b in zip(med, med[1:])), med
    assert -0.65 <= result.summary["slope"] <= -0.35
    assert not result.summary["acceptance_failures"]


@pytest.mark.criterion(4, "offline rate shape, expert behavior")
def test_offline_expert_eval_rate():
    result = check_rate("offline_expert_eval_rate")
    med = list(result.medians().values())
    assert all(b <= a for a, b in zip(med, med[1:])), med
    assert -0.65 <= result.summary["slope"] <= -0.35
    assert result.summary["monotone_fraction"] >= 0.9
    assert not result.summary["acceptance_failures"]


@pytest.mark.criterion(5, "online pipeline rate and coverage")
def test_online_rate():
    config = preset("online_rate")
    with Budget(600):
        result = run_experiment(config)
    med = list(result.medians().values())
    certs = [e["certificate"] for e in result.extras]
    H, S, A = 3, 3, 2
    print(f"online medians {med}; largest certificate {max(certs):.4f} of {2 * H * S * A}")
    assert all(b <= a for a, b in zip(med, med[1:])), med
    assert max(certs) <= 2 * H * S * A
    assert all(e["final_converged"] for e in result.extras)
    assert not result.summary["acceptance_failures"]


@pytest.mark.criterion(6, "metric oracles")
def test_metric_oracles():
    with Budget(60):
        for i in range(200):
            mdp, _ = random_mdp(2, 2, 2, 3000 + i)
            rng = np.random.default_rng(i)
            r1, r2 = rng.uniform(-2, 2, size=(2, 2, 2, 2))
            assert d_all_surrogate(mdp, r1, r2).value >= d_all_bruteforce(mdp, r1, r2).value - 1e-9
        for i in range(100):
            mdp, expert = random_mdp(3, 3, 2, 4000 + i)
            other, _ = random_mdp(3, 3, 2, 5000 + i)
            tilted = MdpCore(0.7 * mdp.P + 0.3 * other.P)
            truth, estimate = ground_truth_mapping(mdp, expert), ground_truth_mapping(tilted, expert)
            thetas = [sample_theta(3, 3, 2, 10 * i + j) for j in range(5)]
            D_h = hausdorff(mdp, expert, [truth(t) for t in thetas], [estimate(t) for t in thetas]).value
            assert D_h <= D_pi_Theta(mdp, expert, truth, estimate, thetas).value + 1e-9


@pytest.mark.criterion(7, "planning with an estimated reward")
def test_planning_inequality():
    s_init = 0
    with Budget(60):
        for i in range(200):
            rng = np.random.default_rng(i)
            H, S, A = int(rng.integers(1, 5)), int(rng.integers(1, 5)), int(rng.integers(1, 4))
            mdp, _ = random_mdp(H, S, A, 6000 + i)
            r = rng.uniform(-1, 1, size=(H, S, A))
            noise = rng.exponential(rng.choice([0.01, 0.1, 1.0]), size=r.shape) * (rng.uniform(size=r.shape) < 0.7)
            r_hat = r - noise
            pi_star, v_star = optimal_policy(mdp, r)
            pi = pi_star if i % 3 == 0 else random_policy(H, S, A, 7000 + i)
            pi_hat = optimal_policy(mdp, r_hat)[0] if i % 2 == 0 else random_deterministic_policy(H, S, A, 8000 + i)
            v_hat_star = optimal_policy(mdp, r_hat)[1].V[0, s_init]
            eps = d_pi(mdp, pi, r, r_hat).value
            eps_bar = v_star.V[0, s_init] - evaluate_policy(mdp, r, pi).V[0, s_init]
            eps_prime = v_hat_star - evaluate_policy(mdp, r_hat, pi_hat).V[0, s_init]
            lhs = v_star.V[0, s_init] - evaluate_policy(mdp, r, pi_hat).V[0, s_init]
            assert lhs <= eps + eps_prime + 2 * eps_bar + 1e-8, i


@pytest.mark.criterion(8, "estimator oracles")
def test_estimator_oracles():
    with Budget(60):
        rng = np.random.default_rng(1)
        for i in range(50):
            H, S, A = int(rng.integers(1, 4)), int(rng.integers(1, 4)), int(rng.integers(1, 4))
            option = 1 + i % 2
            mdp, expert = random_mdp(H, S, A, 9000 + i)
            if i % 4 < 2:
                expert = random_support_expert(H, S, A, rng)
            data = collect_dataset(mdp, Policy.uniform(H, S, A), expert, option, int(rng.integers(1, 300)), i)
            model = fit_empirical(data, RlpConfig(option=option))
            ref = recount(data.states, data.actions, data.feedback, S, A, option)
            P_ref, pi_ref = empirical_by_loops(*ref, option)
            assert np.array_equal(model.P_hat, P_ref) and np.array_equal(model.pi_E_hat, pi_ref)
            assert np.array_equal(counts(data).N_b_sa, ref[0])

        # Monte Carlo value and occupancy against exact evaluation
        n = 200_000
        for i in range(5):
            mdp, _ = random_mdp(3, 3, 2, 9500 + i)
            pi = random_policy(3, 3, 2, i)
            r = np.random.default_rng(i).uniform(-1, 1, size=(3, 3, 2))
            states, actions = sample_batch(mdp, pi, episode_seeds(100 + i, n))
            hh = np.arange(3)
            returns = r[hh, states[:, :3], actions].sum(axis=1)
            exact_v = evaluate_policy(mdp, r, pi).V[0, 0]
            assert abs(returns.mean() - exact_v) <= 3 * returns.std() / np.sqrt(n)
            d = occupancy(mdp, pi).d_sa
            freq = np.zeros_like(d)
            for h in range(3):
                np.add.at(freq[h], (states[:, h], actions[:, h]), 1.0)
            freq /= n
            sigma = np.sqrt(np.maximum(d * (1 - d), 1e-300) / n)
            assert np.all(np.abs(freq - d) <= 3 * sigma)


@pytest.mark.criterion(9, "hard instances and packing sets")
def test_hard_instances():
    with Budget(30):
        for (H, S, A), C_star in itertools.product([(2, 8, 2), (3, 4, 3), (1, 2, 2), (4, 16, 4)], [2.0, 3.0, 10.0]):
            for seed in range(5):
                for i_star in range(min(S, A)):
                    spec = HardInstanceSpec(H, S, A, 0.25, random_w(H, S, A, seed), C_star=C_star, i_star=i_star)
                    mdp, _, pi_b, pi_eval = hard_offline(spec)
                    validate_mdp(mdp)
                    total = concentrability(mdp, pi_eval, pi_b, normalized=False)
                    assert total <= C_star * (2 * H + 2) * (2 * S + 1)
        for S, size in ((8, 5), (16, 30), (32, 60)):
            ps = packing_set(S, size, S)
            assert len(ps.members) == size
            for v, w in itertools.combinations(ps.members, 2):
                assert np.sum((v - w) ** 2) >= S / 8


def exhaustive_transitions(mdp, expert, option, reps):
    """``reps`` visits of every (h, s, a) with successors split exactly by the kernel."""
    H, S, A = mdp.shape
    rows = []
    for h, s, a in itertools.product(range(H), range(S), range(A)):
        succ = np.repeat(np.arange(S), np.round(mdp.P[h, s, a] * reps).astype(int))
        assert len(succ) == reps
        support = np.flatnonzero(expert.support[h, s])
        for k, t in enumerate(succ):
            e = int(expert.support[h, s, a]) if option == 2 else int(support[k % len(support)])
            rows.append((h, s, a, t, e))
    h, s, a, t, e = (np.array(c) for c in zip(*rows))
    return Transitions(H, S, A, option, h, s, a, t, e)


@pytest.mark.criterion(10, "zero-noise reduction")
def test_zero_noise_reduction():
    reps = 4
    with Budget(10):
        for i in range(20):
            rng = np.random.default_rng(i)
            H, S, A = int(rng.integers(1, 5)), int(rng.integers(1, 5)), int(rng.integers(1, 4))
            # kernels with entries on a 1/reps grid so counts reproduce them exactly
            P = rng.multinomial(reps, np.ones(S) / S, size=(H, S, A)) / reps
            mdp = MdpCore(P)
            expert = random_support_expert(H, S, A, rng)
            for option in (1, 2):
                data = exhaustive_transitions(mdp, expert, option, reps)
                thetas = ParamSet.finite([sample_theta(H, S, A, 50 * i + j) for j in range(10)])
                handle = rlp_run(data, thetas, RlpConfig(C=0.0, option=option, eps=1e-12))
                for t in thetas:
                    diff = handle(t).r - ground_truth_reward(mdp, expert, t).r
                    assert np.abs(diff).max() <= 1e-12
