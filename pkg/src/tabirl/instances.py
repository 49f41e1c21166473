"""Instance generators: random MDPs, balanced packing sets and hard instances.

Hard-instance layout (0-based). With base sizes (H, S, A) and K = min(S, A):

* states: 0 = start, 1..S = the intermediate states s_1..s_S, S+1..2S = the
  absorbing sinks sbar_1..sbar_S (2S + 1 in total; no transition ever enters
  a separate root state, so none is allocated);
* actions a_0..a_A (A + 1 of them); horizon 2H + 2.

Writing t = h + 1 for the 1-based stage of internal step h:

* start, t <= H + 1: a_0 stays, a_i (i <= K) moves to s_i, a_k (k > K) moves
  uniformly over s_1..s_S;
* start, t >= H + 2: as above except a_0 also moves uniformly over s_1..s_S;
* s_i, 2 <= t <= H + 1, i <= K, k >= 1: sink j with probability
  (1 + eps' * w[t-2, i-1, k-1, j-1]) / S; every other (t, s_i, a) moves
  uniformly over the sinks;
* sinks are absorbing.

The perturbation block therefore spans stages 2..H+1 and the re-mixing block
starts at stage H+2. This is the one reading under which the stage-(H+1)
perturbation is both used by the offline behavior/evaluation pair and
reachable.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .mdp import MdpCore, Policy, ValidationError, optimal_policy, validate_mdp


def random_mdp(H: int, S: int, A: int, seed: int, concentration: float = 1.0) -> tuple[MdpCore, Policy]:
    """Dirichlet transition rows and a deterministic expert.

    The expert is the optimal policy of a uniform [-1, 1] reward, so it is
    deterministic and its smallest nonzero action probability is 1.
    """
    if min(H, S, A) < 1 or concentration <= 0:
        raise ValidationError(f"need H, S, A >= 1 and concentration > 0, got {(H, S, A, concentration)}")
    rng = np.random.default_rng(seed)
    P = rng.dirichlet(np.full(S, concentration), size=(H, S, A))
    mdp = MdpCore(P, s_init=0)
    reward = rng.uniform(-1.0, 1.0, size=(H, S, A))
    expert, _ = optimal_policy(mdp, reward)
    return mdp, expert


def random_deterministic_policy(H: int, S: int, A: int, seed: int) -> Policy:
    rng = np.random.default_rng(seed)
    return Policy.deterministic(rng.integers(0, A, size=(H, S)), A)


def random_policy(H: int, S: int, A: int, seed: int) -> Policy:
    rng = np.random.default_rng(seed)
    return Policy(rng.dirichlet(np.ones(A), size=(H, S)))


@dataclass
class PackingSet:
    members: list[np.ndarray]
    requested: int
    exhausted: bool = False  # True when the try budget ran out early

    def min_distance(self) -> float:
        best = np.inf
        for i in range(len(self.members)):
            for j in range(i + 1, len(self.members)):
                best = min(best, float(np.sum((self.members[i] - self.members[j]) ** 2)))
        return best


def balanced_sign_vector(S: int, rng: np.random.Generator) -> np.ndarray:
    v = np.ones(S)
    v[rng.permutation(S)[: S // 2]] = -1.0
    return v


def packing_set(S: int, count: int, seed: int, max_tries: int = 100_000) -> PackingSet:
    """Rejection-sample balanced +/-1 vectors with pairwise squared distance >= S/8."""
    if S % 2 or S < 8:
        raise ValidationError(f"packing sets need an even S >= 8, got {S}")
    rng = np.random.default_rng(seed)
    members: list[np.ndarray] = []
    tries = 0
    while len(members) < count and tries < max_tries:
        tries += 1
        v = balanced_sign_vector(S, rng)
        if all(np.sum((v - m) ** 2) >= S / 8 for m in members):
            members.append(v)
    return PackingSet(members, count, exhausted=len(members) < count)


@dataclass
class HardInstanceSpec:
    H: int
    S: int
    A: int
    eps_prime: float
    w: np.ndarray  # (H, K, A, S) balanced sign slices
    C_star: float = 2.0
    i_star: int = 0  # 0-based index in [0, K)

    @property
    def K(self) -> int:
        return min(self.S, self.A)

    def validate(self) -> None:
        K = self.K
        if self.w.shape != (self.H, K, self.A, self.S):
            raise ValidationError(f"w must have shape {(self.H, K, self.A, self.S)}, got {self.w.shape}")
        if not np.all(np.abs(self.w) == 1.0):
            raise ValidationError("w entries must be +1 or -1")
        if np.any(self.w.sum(axis=-1) != 0):
            raise ValidationError("every w slice must sum to zero")
        if not 0.0 <= self.eps_prime <= 0.5:
            raise ValidationError(f"eps_prime must lie in [0, 1/2], got {self.eps_prime}")
        if not 0 <= self.i_star < K:
            raise ValidationError(f"i_star must lie in [0, {K})")


def random_w(H: int, S: int, A: int, seed: int, pool: Optional[PackingSet] = None) -> np.ndarray:
    """A perturbation tensor whose slices come from ``pool`` or are fresh balanced vectors."""
    rng = np.random.default_rng(seed)
    K = min(S, A)
    w = np.empty((H, K, A, S))
    for idx in np.ndindex(H, K, A):
        if pool is not None and pool.members:
            w[idx] = pool.members[rng.integers(len(pool.members))]
        else:
            w[idx] = balanced_sign_vector(S, rng)
    return w


def _renormalize(P: np.ndarray) -> np.ndarray:
    sums = P.sum(axis=-1, keepdims=True)
    off = sums != 1.0
    if np.any(off):
        P = np.where(off, P / sums, P)
    return P


def hard_online(spec: HardInstanceSpec) -> tuple[MdpCore, Policy]:
    spec.validate()
    H, S, A, K = spec.H, spec.S, spec.A, spec.K
    n_states, n_actions, horizon = 2 * S + 1, A + 1, 2 * H + 2
    start = 0
    mid = np.arange(1, S + 1)
    sinks = np.arange(S + 1, 2 * S + 1)
    P = np.zeros((horizon, n_states, n_actions, n_states))
    for h in range(horizon):
        t = h + 1
        # start state
        if t <= H + 1:
            P[h, start, 0, start] = 1.0
        else:
            P[h, start, 0, mid] = 1.0 / S
        for k in range(1, n_actions):
            if k <= K:
                P[h, start, k, mid[k - 1]] = 1.0
            else:
                P[h, start, k, mid] = 1.0 / S
        # intermediate states
        for i in range(1, S + 1):
            for k in range(n_actions):
                if 2 <= t <= H + 1 and i <= K and k >= 1:
                    P[h, mid[i - 1], k, sinks] = (1.0 + spec.eps_prime * spec.w[t - 2, i - 1, k - 1]) / S
                else:
                    P[h, mid[i - 1], k, sinks] = 1.0 / S
        for j in sinks:
            P[h, j, :, j] = 1.0
    mdp = MdpCore(_renormalize(P), s_init=start)
    validate_mdp(mdp)
    expert = Policy.deterministic(np.zeros((horizon, n_states), dtype=np.int64), n_actions)
    return mdp, expert


def hard_offline(spec: HardInstanceSpec) -> tuple[MdpCore, Policy, Policy, Policy]:
    """Hard instance plus the behavior/evaluation pair with concentrability ~ C_star."""
    if spec.C_star < 2:
        raise ValidationError(f"C_star must be at least 2, got {spec.C_star}")
    mdp, expert = hard_online(spec)
    H, K = spec.H, spec.K
    horizon, n_states, n_actions = mdp.shape
    start = 0
    s_star = 1 + spec.i_star
    a_star = 1 + spec.i_star

    pi_b = np.zeros((horizon, n_states, n_actions))
    pi_b[..., 0] = 1.0
    # stage H (internal H - 1): spread over a_1..a_K
    pi_b[H - 1, start] = 0.0
    pi_b[H - 1, start, 1 : K + 1] = 1.0 / K
    # stage H + 1 (internal H): the distinguished state plays a_1 w.p. 1 / C_star
    pi_b[H, s_star, 0] = 1.0 - 1.0 / spec.C_star
    pi_b[H, s_star, 1] = 1.0 / spec.C_star

    eval_actions = np.zeros((horizon, n_states), dtype=np.int64)
    eval_actions[H - 1, start] = a_star
    eval_actions[H, s_star] = 1
    return mdp, expert, Policy(pi_b), Policy.deterministic(eval_actions, n_actions)
