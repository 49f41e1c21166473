"""Offline datasets with expert feedback, and the count tables built from them.

Feedback options:
  1. ``e`` is an expert action drawn from the expert policy at the visited state.
  2. ``e`` is a bit telling whether the behavior action lies in the expert's support.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Union

import numpy as np

from .mdp import SLOT_EXPERT, MdpCore, Policy, ValidationError, episode_seeds, sample_batch
from .seeding import categorical, uniforms

Option = Literal[1, 2]


class WellPosednessError(ValidationError):
    pass


def well_posedness(policy: Policy) -> float:
    """Smallest nonzero action probability of the policy."""
    p = policy.probs
    return float(p[p > 0].min())


@dataclass
class Transitions:
    """Flat pool of (h, s, a, s_next, e) records; ``s_next = -1`` when unobserved."""

    H: int
    S: int
    A: int
    option: int
    h: np.ndarray
    s: np.ndarray
    a: np.ndarray
    s_next: np.ndarray
    e: np.ndarray

    def __len__(self) -> int:
        return len(self.h)

    def take(self, idx: np.ndarray) -> "Transitions":
        return Transitions(self.H, self.S, self.A, self.option, self.h[idx], self.s[idx], self.a[idx], self.s_next[idx], self.e[idx])


@dataclass
class EpisodeDataset:
    """K length-H episodes. ``states``, ``actions``, ``feedback`` are K x H arrays."""

    option: int
    states: np.ndarray
    actions: np.ndarray
    feedback: np.ndarray
    S: int
    A: int
    provenance: dict = field(default_factory=dict)
    final_states: np.ndarray | None = None  # state after the last step, when known

    def __post_init__(self):
        if self.option not in (1, 2):
            raise ValidationError(f"feedback option must be 1 or 2, got {self.option}")
        for name in ("states", "actions", "feedback"):
            arr = np.asarray(getattr(self, name), dtype=np.int64)
            if arr.ndim != 2:
                raise ValidationError(f"{name} must be a K x H array, got shape {arr.shape}")
            setattr(self, name, arr)

    @property
    def K(self) -> int:
        return self.states.shape[0]

    @property
    def H(self) -> int:
        return self.states.shape[1]

    def validate(self) -> None:
        if not (self.states.shape == self.actions.shape == self.feedback.shape):
            raise ValidationError("states, actions and feedback must share a K x H shape")
        if self.K and (self.states.min() < 0 or self.states.max() >= self.S):
            raise ValidationError("state index out of range")
        if self.K and (self.actions.min() < 0 or self.actions.max() >= self.A):
            raise ValidationError("action index out of range")
        e_hi = self.A if self.option == 1 else 2
        if self.K and (self.feedback.min() < 0 or self.feedback.max() >= e_hi):
            raise ValidationError(f"feedback out of range for option {self.option}")

    def transitions(self) -> Transitions:
        K, H = self.states.shape
        nxt = np.full((K, H), -1, dtype=np.int64)
        nxt[:, :-1] = self.states[:, 1:]
        if self.final_states is not None:
            nxt[:, -1] = self.final_states
        hh = np.broadcast_to(np.arange(H), (K, H))
        return Transitions(
            H, self.S, self.A, self.option,
            hh.ravel().copy(), self.states.ravel(), self.actions.ravel(), nxt.ravel(), self.feedback.ravel(),
        )


def collect_dataset(
    mdp: MdpCore,
    pi_b,
    pi_E: Policy,
    option: Option,
    K: int,
    seed: int,
    delta_check: float | None = None,
    keep_final_state: bool = False,
) -> EpisodeDataset:
    """Roll out ``K`` behavior episodes and attach expert feedback.

    ``pi_b`` may be a Policy or an episode-level mixture. With option 1 and
    ``pi_b`` equal to ``pi_E`` the behavior action doubles as the expert action.
    ``delta_check`` enforces the expert's minimum nonzero action probability
    under option 1.
    """
    if option not in (1, 2):
        raise ValidationError(f"feedback option must be 1 or 2, got {option}")
    if option == 1 and delta_check is not None:
        gap = well_posedness(pi_E)
        if gap < delta_check:
            raise WellPosednessError(f"expert has a nonzero action probability {gap} below {delta_check}")
    seeds = episode_seeds(seed, K)
    states, actions = sample_batch(mdp, pi_b, seeds)
    H = mdp.H
    feedback = np.empty_like(actions)
    reuse = option == 1 and isinstance(pi_b, Policy) and np.array_equal(pi_b.probs, pi_E.probs)
    for h in range(H):
        s, a = states[:, h], actions[:, h]
        if option == 2:
            feedback[:, h] = pi_E.support[h, s, a]
        elif reuse:
            feedback[:, h] = a
        else:
            feedback[:, h] = categorical(pi_E.probs[h, s], uniforms(seeds, 3 * h + SLOT_EXPERT))
    return EpisodeDataset(
        option=option,
        states=states[:, :H],
        actions=actions,
        feedback=feedback,
        S=mdp.S,
        A=mdp.A,
        provenance={"seed": int(seed), "K": int(K)},
        final_states=states[:, H] if keep_final_state else None,
    )


@dataclass
class CountTables:
    N_b_sa: np.ndarray  # (H, S, A) visits
    N_b1_s: np.ndarray  # (H, S) positively flagged visits, option 2 only
    N_e_sa: np.ndarray  # (H, S, A) expert evidence
    N_next: np.ndarray  # (H, S, A, S) observed successor counts
    N_pos_sa: np.ndarray  # (H, S, A) positively flagged visits per action, option 2 only

    @property
    def N_b_s(self) -> np.ndarray:
        return self.N_b_sa.sum(axis=-1)


def counts(data: Union[EpisodeDataset, Transitions]) -> CountTables:
    tr = data.transitions() if isinstance(data, EpisodeDataset) else data
    H, S, A = tr.H, tr.S, tr.A

    def tally(*keys_and_sizes) -> np.ndarray:
        keys = [k for k, _ in keys_and_sizes]
        shape = tuple(n for _, n in keys_and_sizes)
        flat = np.ravel_multi_index(keys, shape) if len(tr) else np.zeros(0, dtype=np.int64)
        return np.bincount(flat, minlength=int(np.prod(shape))).reshape(shape)

    N_b_sa = tally((tr.h, H), (tr.s, S), (tr.a, A))
    seen = tr.s_next >= 0
    sub = tr.take(seen)
    N_next = np.zeros((H, S, A, S), dtype=np.int64)
    if len(sub):
        flat = np.ravel_multi_index((sub.h, sub.s, sub.a, sub.s_next), (H, S, A, S))
        N_next = np.bincount(flat, minlength=H * S * A * S).reshape(H, S, A, S)
    if tr.option == 1:
        N_e_sa = tally((tr.h, H), (tr.s, S), (tr.e, A))
        N_b1_s = np.zeros((H, S), dtype=np.int64)
        N_pos_sa = np.zeros((H, S, A), dtype=np.int64)
    else:
        N_e_sa = N_b_sa.copy()
        pos = tr.e == 1
        N_pos_sa = tally((tr.h[pos], H), (tr.s[pos], S), (tr.a[pos], A))
        N_b1_s = N_pos_sa.sum(axis=-1)
    return CountTables(N_b_sa=N_b_sa, N_b1_s=N_b1_s, N_e_sa=N_e_sa, N_next=N_next, N_pos_sa=N_pos_sa)


def save_dataset(dataset: EpisodeDataset, path: Union[str, Path]) -> None:
    with open(path, "w") as fh:
        for k in range(dataset.K):
            steps = [[h, int(dataset.states[k, h]), int(dataset.actions[k, h]), int(dataset.feedback[k, h])] for h in range(dataset.H)]
            fh.write(json.dumps({"k": k, "steps": steps}) + "\n")


def load_dataset(path: Union[str, Path], option: Option, S: int, A: int) -> EpisodeDataset:
    records = []
    with open(path) as fh:
        for line in fh:
            if line.strip():
                records.append(json.loads(line))
    records.sort(key=lambda rec: rec["k"])
    arr = np.array([rec["steps"] for rec in records], dtype=np.int64)
    if arr.size == 0:
        raise ValidationError(f"no episodes in {path}")
    if np.any(arr[:, :, 0] != np.arange(arr.shape[1])):
        raise ValidationError("step indices must run 0..H-1 in order")
    ds = EpisodeDataset(option=option, states=arr[:, :, 1], actions=arr[:, :, 2], feedback=arr[:, :, 3], S=S, A=A)
    ds.validate()
    return ds
