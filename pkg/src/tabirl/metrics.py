"""Distances between rewards and reward mappings, plus visitation-ratio coefficients.

Division conventions used throughout: 0/0 = 0 and x/0 = +inf for x > 0.

``d_all_bruteforce`` maximizes over deterministic policies only. Whether the
supremum over all policies is attained by a deterministic one is not
established, so its value is certified as a lower bound on d_all, and
``d_all_surrogate`` gives a matching upper bound.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Iterator, Literal, Optional, Sequence

import numpy as np

from .mdp import (
    MdpCore,
    Policy,
    RewardLike,
    ValidationError,
    evaluate_policy,
    occupancy,
    optimal_policy,
    reward_array,
)
from .reward_mapping import RewardMappingHandle, RewardParam

ENUM_CAP = 10**6
BATCH = 4096


class EnumerationCapExceeded(ValueError):
    pass


@dataclass
class MetricReport:
    value: float
    kind: Literal["exact", "bruteforce", "upper_bound", "sampled_lower_bound"]
    witness: Optional[dict] = None

    def to_json(self) -> dict:
        return asdict(self)


def _ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    out = np.zeros(np.broadcast(num, den).shape)
    pos_den = den > 0
    np.divide(num, den, out=out, where=pos_den)
    out[(~pos_den) & (num > 0)] = np.inf
    return out


def _diff(mdp: MdpCore, r1: RewardLike, r2: RewardLike) -> np.ndarray:
    a, b = reward_array(r1), reward_array(r2)
    if a.shape != mdp.shape or b.shape != mdp.shape:
        raise ValidationError(f"reward shapes {a.shape}, {b.shape} do not match MDP {mdp.shape}")
    return a - b


def _per_step_gap(mdp: MdpCore, policy: Policy, dr: np.ndarray) -> np.ndarray:
    V = evaluate_policy(mdp, dr, policy).V[:-1]
    d_s = occupancy(mdp, policy).d_s
    return np.sum(d_s * np.abs(V), axis=1)


def d_pi(mdp: MdpCore, policy: Policy, r1: RewardLike, r2: RewardLike) -> MetricReport:
    """max over h of E_{s_h ~ policy} |V_h(s_h; r1) - V_h(s_h; r2)|."""
    gaps = _per_step_gap(mdp, policy, _diff(mdp, r1, r2))
    h = int(np.argmax(gaps))
    return MetricReport(float(gaps[h]), "exact", {"h": h})


def n_deterministic_policies(H: int, S: int, A: int) -> int:
    return A ** (S * H)


def enumerate_policies(H: int, S: int, A: int, cap: int = ENUM_CAP, batch: int = BATCH) -> Iterator[tuple[int, np.ndarray]]:
    """Yield (start_index, actions) batches covering every deterministic policy.

    Policy ``i`` is the mixed-radix expansion of ``i`` in base ``A`` over the
    (h, s) cells in row-major order.
    """
    total = n_deterministic_policies(H, S, A)
    if total > cap:
        raise EnumerationCapExceeded(f"{total} deterministic policies exceed the cap {cap}")
    powers = A ** np.arange(H * S - 1, -1, -1, dtype=np.int64)
    for start in range(0, total, batch):
        idx = np.arange(start, min(start + batch, total), dtype=np.int64)
        digits = (idx[:, None] // powers[None, :]) % A
        yield start, digits.reshape(-1, H, S)


def _batch_gaps(mdp: MdpCore, dr: np.ndarray, actions: np.ndarray) -> np.ndarray:
    """Per-step gaps (B, H) for a batch of deterministic policies."""
    H, S, _ = mdp.shape
    B = actions.shape[0]
    V = np.zeros((H + 1, B, S))
    for h in range(H - 1, -1, -1):
        Q = dr[h][None] + np.einsum("sat,bt->bsa", mdp.P[h], V[h + 1])
        V[h] = np.take_along_axis(Q, actions[:, h, :, None], axis=-1)[..., 0]
    d_s = _batch_state_occupancy(mdp, actions)
    return np.einsum("bhs,hbs->bh", d_s, np.abs(V[:-1]))


def _batch_state_occupancy(mdp: MdpCore, actions: np.ndarray) -> np.ndarray:
    H, S, _ = mdp.shape
    B = actions.shape[0]
    d_s = np.zeros((B, H, S))
    d = np.zeros((B, S))
    d[:, mdp.s_init] = 1.0
    states = np.arange(S)
    for h in range(H):
        d_s[:, h] = d
        P_sel = mdp.P[h][states[None, :], actions[:, h]]  # (B, S, S)
        d = np.einsum("bs,bst->bt", d, P_sel)
    return d_s


def d_all_bruteforce(mdp: MdpCore, r1: RewardLike, r2: RewardLike, cap: int = ENUM_CAP) -> MetricReport:
    dr = _diff(mdp, r1, r2)
    H, S, A = mdp.shape
    best, best_idx, best_h = -1.0, 0, 0
    for start, actions in enumerate_policies(H, S, A, cap):
        gaps = _batch_gaps(mdp, dr, actions)
        vals = gaps.max(axis=1)
        i = int(np.argmax(vals))
        if vals[i] > best:
            best, best_idx, best_h = float(vals[i]), start + i, int(np.argmax(gaps[i]))
    powers = A ** np.arange(H * S - 1, -1, -1, dtype=np.int64)
    witness_actions = ((best_idx // powers) % A).reshape(H, S)
    return MetricReport(best, "bruteforce", {"policy_index": best_idx, "h": best_h, "actions": witness_actions.tolist()})


def d_all_surrogate(mdp: MdpCore, r1: RewardLike, r2: RewardLike) -> MetricReport:
    """Optimal value of the MDP with reward |r1 - r2|; an upper bound on d_all."""
    policy, values = optimal_policy(mdp, np.abs(_diff(mdp, r1, r2)))
    return MetricReport(float(values.V[0, mdp.s_init]), "upper_bound", {"actions": policy.actions.tolist()})


def _require_thetas(thetas: Sequence[RewardParam]) -> None:
    if len(thetas) == 0:
        raise ValidationError("parameter list must be nonempty")


def D_pi_Theta(
    mdp: MdpCore,
    policy: Policy,
    map1: RewardMappingHandle,
    map2: RewardMappingHandle,
    thetas: Sequence[RewardParam],
) -> MetricReport:
    _require_thetas(thetas)
    reports = [d_pi(mdp, policy, map1(t), map2(t)) for t in thetas]
    i = int(np.argmax([rep.value for rep in reports]))
    return MetricReport(reports[i].value, "exact", {"theta_index": i, "h": reports[i].witness["h"]})


def D_all_Theta(
    mdp: MdpCore,
    map1: RewardMappingHandle,
    map2: RewardMappingHandle,
    thetas: Sequence[RewardParam],
    mode: Literal["bruteforce", "surrogate"] = "surrogate",
    cap: int = ENUM_CAP,
) -> MetricReport:
    _require_thetas(thetas)
    if mode == "bruteforce":
        reports = [d_all_bruteforce(mdp, map1(t), map2(t), cap) for t in thetas]
        kind = "bruteforce"
    elif mode == "surrogate":
        reports = [d_all_surrogate(mdp, map1(t), map2(t)) for t in thetas]
        kind = "upper_bound"
    else:
        raise ValueError(f"unknown mode {mode!r}")
    i = int(np.argmax([rep.value for rep in reports]))
    return MetricReport(reports[i].value, kind, {"theta_index": i, **(reports[i].witness or {})})


def hausdorff(
    mdp: MdpCore,
    policy: Policy,
    set1: Sequence[RewardLike],
    set2: Sequence[RewardLike],
) -> MetricReport:
    """Hausdorff distance between two finite reward sets under d_pi."""
    if len(set1) == 0 or len(set2) == 0:
        raise ValidationError("reward sets must be nonempty")
    dist = np.array([[d_pi(mdp, policy, r, q).value for q in set2] for r in set1])
    forward = dist.min(axis=1).max()
    backward = dist.min(axis=0).max()
    return MetricReport(float(max(forward, backward)), "exact", {"forward": float(forward), "backward": float(backward)})


def concentrability(mdp: MdpCore, pi_eval: Policy, pi_b: Policy, normalized: bool = True) -> float:
    """Average occupancy ratio (1/HS) sum_h sum_{s,a} d_eval / d_b.

    With ``normalized=False`` the raw sum is returned instead.
    """
    ratio = _ratio(occupancy(mdp, pi_eval).d_sa, occupancy(mdp, pi_b).d_sa)
    total = float(ratio.sum())
    return total / (mdp.H * mdp.S) if normalized else total


def _check_same_sizes(m1: MdpCore, m2: MdpCore) -> None:
    if m1.shape != m2.shape:
        raise ValidationError(f"MDP sizes differ: {m1.shape} vs {m2.shape}")


def weak_transferability(mdp_src: MdpCore, mdp_tgt: MdpCore, pi_src: Policy, pi_tgt: Policy) -> float:
    """sup over (h, s, a) of d^{tgt, pi_tgt} / d^{src, pi_src}."""
    _check_same_sizes(mdp_src, mdp_tgt)
    ratio = _ratio(occupancy(mdp_tgt, pi_tgt).d_sa, occupancy(mdp_src, pi_src).d_sa)
    return float(ratio.max())


def transferability_bruteforce(mdp_src: MdpCore, mdp_tgt: MdpCore, pi_tgt: Policy, cap: int = ENUM_CAP) -> float:
    """inf over deterministic source policies of the weak-transferability ratio."""
    _check_same_sizes(mdp_src, mdp_tgt)
    H, S, A = mdp_src.shape
    target = occupancy(mdp_tgt, pi_tgt).d_sa
    best = np.inf
    for _, actions in enumerate_policies(H, S, A, cap):
        d_s = _batch_state_occupancy(mdp_src, actions)
        onehot = np.zeros(d_s.shape + (A,))
        np.put_along_axis(onehot, actions[..., None], 1.0, axis=-1)
        ratio = _ratio(target[None], d_s[..., None] * onehot)
        best = min(best, float(ratio.reshape(len(actions), -1).max(axis=1).min()))
    return best
