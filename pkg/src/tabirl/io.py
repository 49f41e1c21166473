"""JSON encodings for MDPs, policies, rewards and parameters.

Floats are written with ``repr`` precision (json's default), so a save/load
round trip is exact.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Union

import numpy as np

from .mdp import MdpCore, Policy, RewardTable, ValidationError, validate_mdp, validate_policy
from .reward_mapping import ParamSet, RewardParam

PathLike = Union[str, Path]


def _require(obj: dict, keys: tuple[str, ...], what: str) -> None:
    missing = [k for k in keys if k not in obj]
    if missing:
        raise ValidationError(f"{what} JSON is missing {missing}")


def mdp_to_json(mdp: MdpCore) -> dict:
    H, S, A = mdp.shape
    return {"H": H, "S": S, "A": A, "s_init": int(mdp.s_init), "P": mdp.P.tolist()}


def mdp_from_json(obj: dict) -> MdpCore:
    _require(obj, ("H", "S", "A", "P"), "MDP")
    P = np.asarray(obj["P"], dtype=np.float64)
    shape = (obj["H"], obj["S"], obj["A"], obj["S"])
    if P.shape != shape:
        raise ValidationError(f"P has shape {P.shape}, expected {shape}")
    mdp = MdpCore(P, s_init=int(obj.get("s_init", 0)))
    validate_mdp(mdp)
    return mdp


def policy_to_json(policy: Policy) -> dict:
    return {"probs": policy.probs.tolist()}


def policy_from_json(obj: dict, shape: tuple[int, int, int] | None = None) -> Policy:
    _require(obj, ("probs",), "policy")
    policy = Policy(np.asarray(obj["probs"], dtype=np.float64))
    if shape is not None:
        validate_policy(policy, *shape)
    return policy


def reward_to_json(reward: RewardTable) -> dict:
    bound = reward.declared_bound
    return {"B": None if np.isinf(bound) else bound, "r": reward.r.tolist()}


def reward_from_json(obj: dict) -> RewardTable:
    _require(obj, ("r",), "reward")
    bound = obj.get("B")
    return RewardTable(np.asarray(obj["r"], dtype=np.float64), declared_bound=np.inf if bound is None else float(bound))


def param_to_json(theta: RewardParam) -> dict:
    return {"V": theta.V.tolist(), "A": theta.A.tolist()}


def param_from_json(obj: dict) -> RewardParam:
    _require(obj, ("V", "A"), "parameter")
    return RewardParam(np.asarray(obj["V"]), np.asarray(obj["A"]))


def paramset_to_json(thetas: ParamSet) -> Any:
    if thetas.kind == "fullbox":
        return {"kind": "fullbox", "H": thetas.H, "S": thetas.S}
    return [param_to_json(t) for t in thetas.params]


def paramset_from_json(obj: Any) -> ParamSet:
    if isinstance(obj, dict) and obj.get("kind") == "fullbox":
        return ParamSet.fullbox(obj["H"], obj["S"])
    if not isinstance(obj, list):
        raise ValidationError("a parameter set is a list of {V, A} objects or {'kind': 'fullbox'}")
    return ParamSet.finite([param_from_json(o) for o in obj])


def dump(obj: Any, path: PathLike) -> None:
    Path(path).write_text(json.dumps(obj))


def load(path: PathLike) -> Any:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc})") from exc
