"""Tabular episodic MDPs without reward.

Steps are indexed ``0..H-1``; a step ``h`` here is step ``h + 1`` in the usual
1-based write-up. The value after the last step is fixed to zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .seeding import categorical, mix64, uniforms

ROW_TOL = 1e-9
OPT_TOL = 1e-9

# counter slots used by the samplers: 3h action, 3h+1 transition, 3h+2 expert
SLOT_ACTION = 0
SLOT_TRANSITION = 1
SLOT_EXPERT = 2


class ValidationError(ValueError):
    """An input object violates its structural invariants."""


@dataclass(frozen=True)
class MdpCore:
    P: np.ndarray
    s_init: int = 0

    def __post_init__(self):
        object.__setattr__(self, "P", np.asarray(self.P, dtype=np.float64))
        object.__setattr__(self, "s_init", int(self.s_init))

    @property
    def H(self) -> int:
        return self.P.shape[0]

    @property
    def S(self) -> int:
        return self.P.shape[1]

    @property
    def A(self) -> int:
        return self.P.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.H, self.S, self.A


@dataclass(frozen=True)
class Policy:
    probs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "probs", np.asarray(self.probs, dtype=np.float64))

    @classmethod
    def deterministic(cls, actions, A: int) -> "Policy":
        actions = np.asarray(actions, dtype=np.int64)
        probs = np.zeros(actions.shape + (A,))
        np.put_along_axis(probs, actions[..., None], 1.0, axis=-1)
        return cls(probs)

    @classmethod
    def uniform(cls, H: int, S: int, A: int) -> "Policy":
        return cls(np.full((H, S, A), 1.0 / A))

    @property
    def is_deterministic(self) -> bool:
        return bool(np.all((self.probs == 0.0) | (self.probs == 1.0)))

    @property
    def actions(self) -> np.ndarray:
        """Greedy action per (h, s); the exact action for deterministic policies."""
        return np.argmax(self.probs, axis=-1)

    @property
    def support(self) -> np.ndarray:
        return self.probs > 0.0

    def step_probs(self, h: int, s: np.ndarray, seeds: np.ndarray) -> np.ndarray:
        return self.probs[h, s]


@dataclass(frozen=True)
class RewardTable:
    r: np.ndarray
    declared_bound: float = np.inf

    def __post_init__(self):
        object.__setattr__(self, "r", np.asarray(self.r, dtype=np.float64))


@dataclass(frozen=True)
class ValueTables:
    V: np.ndarray  # (H+1, S), V[H] == 0
    Q: np.ndarray  # (H, S, A)

    @property
    def Adv(self) -> np.ndarray:
        return self.Q - self.V[:-1, :, None]


@dataclass(frozen=True)
class Occupancy:
    d_sa: np.ndarray  # (H, S, A)

    @property
    def d_s(self) -> np.ndarray:
        return self.d_sa.sum(axis=-1)


RewardLike = Union[RewardTable, np.ndarray]


def reward_array(reward: RewardLike) -> np.ndarray:
    if isinstance(reward, RewardTable):
        return reward.r
    return np.asarray(reward, dtype=np.float64)


def validate_mdp(mdp: MdpCore, tol: float = ROW_TOL) -> None:
    P = mdp.P
    if P.ndim != 4 or P.shape[1] != P.shape[3]:
        raise ValidationError(f"transition tensor must be H x S x A x S, got {P.shape}")
    if min(P.shape) < 1:
        raise ValidationError(f"empty dimension in transition tensor {P.shape}")
    if not np.all(np.isfinite(P)):
        bad = tuple(int(i) for i in np.argwhere(~np.isfinite(P))[0])
        raise ValidationError(f"non-finite transition probability at {bad}")
    neg = np.argwhere(P < 0)
    if len(neg):
        h, s, a, s2 = (int(i) for i in neg[0])
        raise ValidationError(f"negative transition probability P[{h}][{s}][{a}][{s2}] = {P[h, s, a, s2]}")
    sums = P.sum(axis=-1)
    off = np.argwhere(np.abs(sums - 1.0) > tol)
    if len(off):
        h, s, a = (int(i) for i in off[0])
        raise ValidationError(f"row P[{h}][{s}][{a}] sums to {sums[h, s, a]!r}")
    if not 0 <= mdp.s_init < mdp.S:
        raise ValidationError(f"s_init={mdp.s_init} outside [0, {mdp.S})")


def validate_policy(policy: Policy, H: int, S: int, A: int, tol: float = ROW_TOL) -> None:
    p = policy.probs
    if p.shape != (H, S, A):
        raise ValidationError(f"policy shape {p.shape} does not match {(H, S, A)}")
    if np.any(p < 0):
        h, s, a = (int(i) for i in np.argwhere(p < 0)[0])
        raise ValidationError(f"negative action probability at ({h}, {s}, {a})")
    sums = p.sum(axis=-1)
    off = np.argwhere(np.abs(sums - 1.0) > tol)
    if len(off):
        h, s = (int(i) for i in off[0])
        raise ValidationError(f"policy row ({h}, {s}) sums to {sums[h, s]!r}")


def _check_shapes(mdp: MdpCore, *arrays: np.ndarray) -> None:
    for arr in arrays:
        if arr.shape != mdp.shape:
            raise ValidationError(f"shape {arr.shape} does not match MDP {mdp.shape}")


def evaluate_policy(mdp: MdpCore, reward: RewardLike, policy: Policy) -> ValueTables:
    """Exact policy evaluation by backward recursion."""
    r = reward_array(reward)
    _check_shapes(mdp, r, policy.probs)
    H, S, A = mdp.shape
    V = np.zeros((H + 1, S))
    Q = np.empty((H, S, A))
    for h in range(H - 1, -1, -1):
        Q[h] = r[h] + mdp.P[h] @ V[h + 1]
        V[h] = np.einsum("sa,sa->s", policy.probs[h], Q[h])
    return ValueTables(V=V, Q=Q)


def occupancy(mdp: MdpCore, policy: Policy) -> Occupancy:
    _check_shapes(mdp, policy.probs)
    H, S, A = mdp.shape
    d_sa = np.empty((H, S, A))
    d_s = np.zeros(S)
    d_s[mdp.s_init] = 1.0
    for h in range(H):
        d_sa[h] = d_s[:, None] * policy.probs[h]
        d_s = np.einsum("sa,sat->t", d_sa[h], mdp.P[h])
    return Occupancy(d_sa=d_sa)


def optimal_policy(mdp: MdpCore, reward: RewardLike) -> tuple[Policy, ValueTables]:
    """Backward value iteration; ties go to the lowest action index."""
    r = reward_array(reward)
    _check_shapes(mdp, r)
    H, S, A = mdp.shape
    V = np.zeros((H + 1, S))
    Q = np.empty((H, S, A))
    actions = np.empty((H, S), dtype=np.int64)
    for h in range(H - 1, -1, -1):
        Q[h] = r[h] + mdp.P[h] @ V[h + 1]
        actions[h] = np.argmax(Q[h], axis=-1)
        V[h] = np.take_along_axis(Q[h], actions[h][:, None], axis=-1)[:, 0]
    return Policy.deterministic(actions, A), ValueTables(V=V, Q=Q)


def is_optimal(mdp: MdpCore, reward: RewardLike, policy: Policy, tol: float = OPT_TOL) -> bool:
    """True iff the policy's own advantage is at most ``tol`` at every (h, s, a)."""
    values = evaluate_policy(mdp, reward, policy)
    return bool(np.max(values.Adv) <= tol)


def sample_batch(
    mdp: MdpCore,
    policy: Policy,
    seeds: np.ndarray,
    horizon: Optional[int] = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Roll out one episode per seed.

    ``policy`` is anything with ``step_probs(h, states, seeds)``, so episode-level
    mixtures sample through the same path. Returns ``states`` of shape
    (n, horizon + 1), whose last column is the state reached after the final
    step, and ``actions`` of shape (n, horizon). Episode ``i`` depends on
    ``seeds[i]`` only.
    """
    seeds = np.atleast_1d(np.asarray(seeds, dtype=np.uint64))
    horizon = mdp.H if horizon is None else horizon
    n = len(seeds)
    states = np.empty((n, horizon + 1), dtype=np.int64)
    actions = np.empty((n, horizon), dtype=np.int64)
    states[:, 0] = mdp.s_init
    for h in range(horizon):
        s = states[:, h]
        a = categorical(policy.step_probs(h, s, seeds), uniforms(seeds, 3 * h + SLOT_ACTION))
        actions[:, h] = a
        states[:, h + 1] = categorical(mdp.P[h, s, a], uniforms(seeds, 3 * h + SLOT_TRANSITION))
    return states, actions


def sample_episode(mdp: MdpCore, policy: Policy, seed: int) -> list[tuple[int, int, int, int]]:
    """One length-H trajectory as (h, s, a, s_next) tuples."""
    states, actions = sample_batch(mdp, policy, np.array([seed], dtype=np.uint64))
    return [(h, int(states[0, h]), int(actions[0, h]), int(states[0, h + 1])) for h in range(mdp.H)]


def episode_seeds(seed: int, n: int, offset: int = 0) -> np.ndarray:
    """Per-episode derived seeds ``mix64(seed, k)`` for k in [offset, offset + n)."""
    base = np.full(n, seed & ((1 << 64) - 1), dtype=np.uint64)
    return mix64(base, np.arange(offset, offset + n, dtype=np.uint64))
