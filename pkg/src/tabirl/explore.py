"""Reward-free exploration with Frank-Wolfe over mixtures of deterministic policies.

Occupancies are estimated stage by stage through empirical kernels whose rows
are zeroed when a pair was seen at most ``xi`` times. The missing mass is
routed to an absorbing auxiliary state in the augmented MDPs that drive the
Frank-Wolfe best responses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .data import EpisodeDataset, collect_dataset
from .mdp import MdpCore, Policy, RewardTable, episode_seeds, optimal_policy, sample_batch
from .seeding import categorical, mix64, uniforms

# counter slot for choosing a mixture atom; far above the per-step slots
ATOM_SLOT = 1 << 40
RESIDUAL_TOL = 1e-12


def default_xi(H: int, S: int, A: int, delta: float, c_xi: float = 1e-6) -> float:
    """c_xi * H^3 S^3 A^3 * log(10 HSA / delta); ``c_xi = 1`` is the literal constant."""
    return c_xi * (H * S * A) ** 3 * math.log(10 * H * S * A / delta)


class PolicyMixture:
    """A distribution over deterministic policies, sampled once per episode."""

    def __init__(self, atoms: Sequence[np.ndarray], weights: Sequence[float], A: int):
        self.atoms = [np.asarray(a, dtype=np.int64) for a in atoms]
        self.weights = np.asarray(weights, dtype=np.float64)
        self.A = A
        if not self.atoms:
            raise ValueError("a mixture needs at least one atom")
        if abs(self.weights.sum() - 1.0) > 1e-12 or np.any(self.weights < 0):
            raise ValueError("mixture weights must form a probability vector")

    @classmethod
    def single(cls, actions: np.ndarray, A: int) -> "PolicyMixture":
        return cls([actions], [1.0], A)

    def mix_in(self, actions: np.ndarray, alpha: float) -> "PolicyMixture":
        """(1 - alpha) * self + alpha * delta_actions, merging duplicate atoms."""
        weights = list((1.0 - alpha) * self.weights)
        atoms = list(self.atoms)
        for i, atom in enumerate(atoms):
            if np.array_equal(atom, actions):
                weights[i] += alpha
                break
        else:
            atoms.append(np.asarray(actions, dtype=np.int64))
            weights.append(alpha)
        w = np.asarray(weights)
        return PolicyMixture(atoms, w / w.sum(), self.A)

    def mean_policy(self) -> Policy:
        """The state-wise averaged Markov policy (for inspection; not how episodes are drawn)."""
        probs = sum(w * Policy.deterministic(a, self.A).probs for a, w in zip(self.atoms, self.weights))
        return Policy(probs)

    def atom_index(self, seeds: np.ndarray) -> np.ndarray:
        u = uniforms(seeds, ATOM_SLOT)
        return categorical(np.broadcast_to(self.weights, (len(u), len(self.weights))), u)

    def step_probs(self, h: int, s: np.ndarray, seeds: np.ndarray) -> np.ndarray:
        stacked = np.stack(self.atoms)  # (n_atoms, H, S)
        acts = stacked[self.atom_index(seeds), h, s]
        out = np.zeros((len(s), self.A))
        out[np.arange(len(s)), acts] = 1.0
        return out

    def __len__(self) -> int:
        return len(self.atoms)


@dataclass
class OccupancyOracle:
    d1_hat: np.ndarray  # (S,)
    P_trunc: np.ndarray  # (H, S, A, S)
    xi: float
    N: int
    K: int = 1
    visit_counts: Optional[np.ndarray] = None  # (H, S, A) exploration counts per stage

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.P_trunc.shape[:3]

    @classmethod
    def exact(cls, mdp: MdpCore, K: int = 1) -> "OccupancyOracle":
        """Oracle with the true kernels and no truncation."""
        d1 = np.zeros(mdp.S)
        d1[mdp.s_init] = 1.0
        return cls(d1, mdp.P.copy(), xi=0.0, N=0, K=K)


PolicyLike = Union[Policy, PolicyMixture, np.ndarray]


def _occ_deterministic(oracle: OccupancyOracle, actions: np.ndarray) -> np.ndarray:
    H, S, A = oracle.shape
    d_sa = np.zeros((H, S, A))
    d = oracle.d1_hat.copy()
    states = np.arange(S)
    for h in range(H):
        d_sa[h, states, actions[h]] = d
        if h + 1 < H:
            d = np.einsum("s,st->t", d, oracle.P_trunc[h, states, actions[h]])
    return d_sa


def occupancy_hat(oracle: OccupancyOracle, policy: PolicyLike) -> np.ndarray:
    """Estimated occupancy (H, S, A) via the truncated kernels; may sum to < 1."""
    if isinstance(policy, PolicyMixture):
        return sum(w * _occ_deterministic(oracle, a) for a, w in zip(policy.atoms, policy.weights))
    if isinstance(policy, np.ndarray):
        return _occ_deterministic(oracle, policy)
    H, S, A = oracle.shape
    d_sa = np.zeros((H, S, A))
    d = oracle.d1_hat.copy()
    for h in range(H):
        d_sa[h] = d[:, None] * policy.probs[h]
        if h + 1 < H:
            d = np.einsum("sa,sat->t", d_sa[h], oracle.P_trunc[h])
    return d_sa


def _stages(H: int, stage: Optional[int]) -> np.ndarray:
    mask = np.zeros(H, dtype=bool)
    if stage is None:
        mask[:] = True
    else:
        mask[stage] = True
    return mask


def g_value(d_pi: np.ndarray, m: np.ndarray, K: int, stage: Optional[int] = None) -> float:
    """sum over the active stages of (1/KH + d_pi) / (1/KH + m)."""
    H = d_pi.shape[0]
    c = 1.0 / (K * H)
    mask = _stages(H, stage)
    return float(np.sum((c + d_pi[mask]) / (c + m[mask])))


def fw_objective(m: np.ndarray, K: int, stage: Optional[int] = None) -> float:
    H = m.shape[0]
    mask = _stages(H, stage)
    return float(np.sum(np.log(1.0 / (K * H) + m[mask])))


def _augmented(oracle: OccupancyOracle, stage: Optional[int], m: np.ndarray, K: int) -> tuple[MdpCore, RewardTable]:
    H, S, A = oracle.shape
    aug = S
    P = np.zeros((H, S + 1, A, S + 1))
    for j in range(H):
        if stage is None or j <= stage:
            P[j, :S, :, :S] = oracle.P_trunc[j]
            residual = 1.0 - oracle.P_trunc[j].sum(axis=-1)
            # rounding noise from full rows is not real leaked mass
            P[j, :S, :, aug] = np.where(residual > RESIDUAL_TOL, residual, 0.0)
        else:
            P[j, :S, :, aug] = 1.0
        P[j, aug, :, aug] = 1.0
    r = np.zeros((H, S + 1, A))
    mask = _stages(H, stage)
    r[mask, :S] = 1.0 / (1.0 / (K * H) + m[mask])
    s0 = int(np.argmax(oracle.d1_hat))
    return MdpCore(P, s_init=s0), RewardTable(r, declared_bound=float(K * H))


def build_augmented(
    oracle: OccupancyOracle,
    stage_h: Optional[int],
    mixture: PolicyMixture,
    K: int,
) -> tuple[MdpCore, RewardTable]:
    """Augmented MDP over S + 1 states and its exploration reward.

    ``stage_h=None`` builds the final (all-stage) variant.
    """
    return _augmented(oracle, stage_h, occupancy_hat(oracle, mixture), K)


def best_response(
    oracle: OccupancyOracle, m: np.ndarray, K: int, stage: Optional[int] = None
) -> tuple[np.ndarray, np.ndarray, float]:
    """Deterministic policy maximizing g against mixture occupancy ``m``: (actions, its occupancy, g)."""
    S = oracle.shape[1]
    aug, reward = _augmented(oracle, stage, m, K)
    best, _ = optimal_policy(aug, reward)
    actions = best.actions[:, :S]
    d_t = _occ_deterministic(oracle, actions)
    return actions, d_t, g_value(d_t, m, K, stage)


def fw_step_size(g: float, M: int) -> float:
    """(g/M - 1) / (g - 1)."""
    return (g / M - 1.0) / (g - 1.0)


@dataclass
class FwResult:
    mixture: PolicyMixture
    g_exit: float
    iterations: int
    converged: bool
    objective_trace: list[float] = field(default_factory=list)


def fw_solve(
    oracle: OccupancyOracle,
    K: int,
    stage: Optional[int] = None,
    t_max: Optional[int] = None,
) -> FwResult:
    """Frank-Wolfe on sum log(1/KH + E_mu d_hat) for one stage (or all stages when ``stage`` is None).

    Exits once the best response has g <= 2M (M = SA per stage, HSA overall);
    otherwise stops after T_max = floor(50 M log(KH)) iterations and reports
    ``converged=False``.
    """
    H, S, A = oracle.shape
    M = S * A if stage is not None else H * S * A
    if t_max is None:
        t_max = int(math.floor(50 * M * math.log(max(K * H, 2))))
    init = np.zeros((H, S), dtype=np.int64)
    mixture = PolicyMixture.single(init, A)
    m = _occ_deterministic(oracle, init)
    trace = [fw_objective(m, K, stage)]
    g = np.inf
    for t in range(t_max + 1):
        actions, d_t, g = best_response(oracle, m, K, stage)
        if g <= 2 * M:
            return FwResult(mixture, g, t, True, trace)
        alpha = fw_step_size(g, M)
        mixture = mixture.mix_in(actions, alpha)
        m = (1.0 - alpha) * m + alpha * d_t
        trace.append(fw_objective(m, K, stage))
    return FwResult(mixture, g, t_max + 1, False, trace)


class Environment:
    """Episode access to a true MDP with expert feedback; counts every episode it serves."""

    def __init__(self, mdp: MdpCore, expert: Policy, option: int = 1):
        self._mdp = mdp
        self._expert = expert
        self.option = option
        self.episodes = 0
        self.initial_draws = 0

    @property
    def shape(self) -> tuple[int, int, int]:
        return self._mdp.shape

    def initial_states(self, n: int, seed: int) -> np.ndarray:
        self.episodes += n
        self.initial_draws += n
        states, _ = sample_batch(self._mdp, Policy.uniform(*self._mdp.shape), episode_seeds(seed, n), horizon=0)
        return states[:, 0]

    def rollout(self, policy, n: int, seed: int, horizon: Optional[int] = None) -> tuple[np.ndarray, np.ndarray]:
        self.episodes += n
        return sample_batch(self._mdp, policy, episode_seeds(seed, n), horizon=horizon)

    def collect(self, policy, K: int, seed: int) -> EpisodeDataset:
        self.episodes += K
        return collect_dataset(self._mdp, policy, self._expert, self.option, K, seed)


@dataclass
class ExploreResult:
    oracle: OccupancyOracle
    mixture: PolicyMixture
    summary: dict


def explore_run(
    env: Environment,
    N: int,
    K: int,
    xi: float,
    delta: float,
    seed: int,
    n_certificate: int = 100,
) -> ExploreResult:
    """Stage-wise exploration, then the final behavior mixture.

    Consumes N initial-state draws plus N rollouts for each of the first H - 1
    stages, i.e. N * H episodes in total. ``delta`` only enters through the
    caller's choice of ``xi``; it is recorded in the summary.
    """
    H, S, A = env.shape
    start = env.episodes
    init_states = env.initial_states(N, mix64(seed, 0))
    d1 = np.bincount(init_states, minlength=S) / max(N, 1)
    oracle = OccupancyOracle(d1, np.zeros((H, S, A, S)), xi=xi, N=N, K=K, visit_counts=np.zeros((H, S, A), dtype=np.int64))
    stage_g = []
    stage_converged = []
    for h in range(H - 1):
        res = fw_solve(oracle, K, stage=h)
        stage_g.append(res.g_exit)
        stage_converged.append(res.converged)
        states, actions = env.rollout(res.mixture, N, mix64(seed, h + 1), horizon=h + 1)
        s, a, s2 = states[:, h], actions[:, h], states[:, h + 1]
        n_sa = np.bincount(s * A + a, minlength=S * A).reshape(S, A)
        n_sas = np.bincount((s * A + a) * S + s2, minlength=S * A * S).reshape(S, A, S)
        keep = (n_sa > xi)[..., None]
        oracle.P_trunc[h] = np.where(keep, n_sas / np.maximum(n_sa, 1)[..., None], 0.0)
        oracle.visit_counts[h] = n_sa
    final = fw_solve(oracle, K, stage=None)
    truncated = (oracle.visit_counts[: H - 1] <= xi) if H > 1 else np.zeros(0, dtype=bool)
    summary = {
        "episodes": env.episodes - start,
        "initial_draws": N,
        "stage_g_exit": stage_g,
        "stage_converged": stage_converged,
        "final_g_exit": final.g_exit,
        "final_converged": final.converged,
        "final_iterations": final.iterations,
        "truncation_fraction": float(truncated.mean()) if truncated.size else 0.0,
        "degenerate": bool(truncated.size and truncated.all()),
        "xi": xi,
        "N": N,
        "delta": delta,
    }
    if n_certificate > 0:
        rng = np.random.default_rng(mix64(seed, H + 1))
        probes = [rng.integers(0, A, size=(H, S)) for _ in range(n_certificate)]
        summary["certificate"] = coverage_certificate(oracle, final.mixture, probes, K)
    return ExploreResult(oracle, final.mixture, summary)


def coverage_certificate(
    oracle: OccupancyOracle,
    mixture: PolicyMixture,
    sample_policies: Sequence[PolicyLike],
    K: Optional[int] = None,
) -> float:
    """Largest smoothed all-stage g value over the sampled policies."""
    if len(sample_policies) == 0:
        raise ValueError("need at least one policy to certify")
    K = oracle.K if K is None else K
    m = occupancy_hat(oracle, mixture)
    return max(g_value(occupancy_hat(oracle, p), m, K) for p in sample_policies)
