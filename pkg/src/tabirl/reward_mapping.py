"""Reward parameters (V, A) and the mapping from parameters to feasible rewards."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Literal, Optional, Sequence

import numpy as np

from .mdp import MdpCore, Policy, RewardTable, ValidationError, is_optimal

PARAM_TOL = 1e-12


@dataclass(frozen=True)
class RewardParam:
    """A parameter theta = (V, A): value-like V (H x S), advantage-like A (H x S x A)."""

    V: np.ndarray
    A: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "V", np.asarray(self.V, dtype=np.float64))
        object.__setattr__(self, "A", np.asarray(self.A, dtype=np.float64))

    @property
    def H(self) -> int:
        return self.V.shape[0]

    @classmethod
    def zeros(cls, H: int, S: int, A: int) -> "RewardParam":
        return cls(np.zeros((H, S)), np.zeros((H, S, A)))


def step_budget(H: int) -> np.ndarray:
    """Sup-norm budget H - h for each 0-based step h."""
    return np.arange(H, 0, -1, dtype=np.float64)


def validate_theta(theta: RewardParam, H: int, S: int, A: int) -> None:
    if theta.V.shape != (H, S) or theta.A.shape != (H, S, A):
        raise ValidationError(
            f"theta shapes V{theta.V.shape}, A{theta.A.shape} do not match (H, S, A)={(H, S, A)}"
        )
    budget = step_budget(H)
    over_v = np.abs(theta.V).max(axis=1) > budget + PARAM_TOL
    if over_v.any():
        h = int(np.argmax(over_v))
        raise ValidationError(f"|V[{h}]| exceeds {budget[h]}")
    if np.any(theta.A < 0):
        raise ValidationError("advantage parameter A must be nonnegative")
    over_a = theta.A.reshape(H, -1).max(axis=1) > budget + PARAM_TOL
    if over_a.any():
        h = int(np.argmax(over_a))
        raise ValidationError(f"A[{h}] exceeds {budget[h]}")


def sample_theta(H: int, S: int, A: int, seed: int, scale: float = 1.0) -> RewardParam:
    """Uniform draw from the scaled parameter box; deterministic in ``seed``."""
    if not 0.0 <= scale <= 1.0:
        raise ValueError(f"scale must lie in [0, 1], got {scale}")
    rng = np.random.default_rng(seed)
    budget = scale * step_budget(H)
    V = rng.uniform(-1.0, 1.0, size=(H, S)) * budget[:, None]
    Adv = rng.uniform(0.0, 1.0, size=(H, S, A)) * budget[:, None, None]
    return RewardParam(V, Adv)


def next_value(theta: RewardParam) -> np.ndarray:
    """V_{h+1} for each h, with the terminal row fixed to zero. Shape (H, S)."""
    out = np.zeros_like(theta.V)
    out[:-1] = theta.V[1:]
    return out


def mapped_reward(P: np.ndarray, support: np.ndarray, theta: RewardParam) -> np.ndarray:
    """-A * 1{a not in support} + V_h(s) - [P_h V_{h+1}](s, a) for kernel ``P``."""
    PV = np.einsum("hsat,ht->hsa", P, next_value(theta))
    return -theta.A * (~support) + theta.V[:, :, None] - PV


def ground_truth_reward(mdp: MdpCore, expert: Policy, theta: RewardParam) -> RewardTable:
    validate_theta(theta, *mdp.shape)
    r = mapped_reward(mdp.P, expert.support, theta)
    return RewardTable(r, declared_bound=3.0 * mdp.H)


class RewardMappingHandle:
    """A reward mapping theta -> RewardTable, tagged ground_truth or estimated."""

    def __init__(
        self,
        evaluator: Callable[[RewardParam], RewardTable],
        tag: Literal["ground_truth", "estimated"],
        summary: Optional[dict] = None,
    ):
        self._evaluator = evaluator
        self.tag = tag
        self.summary = summary or {}

    def __call__(self, theta: RewardParam) -> RewardTable:
        return self._evaluator(theta)

    def __repr__(self) -> str:
        return f"RewardMappingHandle(tag={self.tag!r})"


def ground_truth_mapping(mdp: MdpCore, expert: Policy) -> RewardMappingHandle:
    return RewardMappingHandle(lambda theta: ground_truth_reward(mdp, expert, theta), "ground_truth")


@dataclass
class ParamSet:
    """Either a finite list of parameters or the full parameter box."""

    kind: Literal["finite", "fullbox"]
    params: list[RewardParam] = field(default_factory=list)
    S: Optional[int] = None
    H: Optional[int] = None

    def __post_init__(self):
        if self.kind == "finite" and not self.params:
            raise ValidationError("a finite parameter set must be nonempty")
        if self.kind not in ("finite", "fullbox"):
            raise ValidationError(f"unknown parameter set kind {self.kind!r}")

    @classmethod
    def finite(cls, params: Sequence[RewardParam]) -> "ParamSet":
        return cls("finite", list(params))

    @classmethod
    def fullbox(cls, H: int, S: int) -> "ParamSet":
        return cls("fullbox", S=S, H=H)

    def __len__(self) -> int:
        return len(self.params)

    def __iter__(self):
        return iter(self.params)


def log_cover(theta_set: ParamSet, eps: float) -> float:
    """Log covering-number surrogate, clipped below at 1.

    Finite sets use log|Theta|; the full box uses S * log(3H / eps).
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    if theta_set.kind == "finite":
        raw = math.log(len(theta_set.params))
    else:
        raw = theta_set.S * math.log(3.0 * theta_set.H / eps)
    return max(raw, 1.0)


def check_feasible_bounded(
    mdp: MdpCore,
    expert: Policy,
    theta: RewardParam,
    mapping: Optional[Callable[[RewardParam], RewardTable]] = None,
    tol: float = 1e-9,
) -> bool:
    """Whether the mapped reward makes the expert optimal and stays within 3H.

    ``mapping`` defaults to the ground-truth mapping; passing another one lets
    callers audit an arbitrary mapping against the same test.
    """
    reward = (mapping or (lambda t: ground_truth_reward(mdp, expert, t)))(theta)
    bounded = float(np.max(np.abs(reward.r))) <= 3.0 * mdp.H
    return bounded and is_optimal(mdp, reward, expert, tol)
