"""Offline IRL with pessimism.

The estimated reward for a parameter (V, A) is the empirical version of the
ground-truth mapping minus a Bernstein-style bonus, so that with high
probability it never exceeds the true mapped reward at any (h, s, a).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .data import CountTables, EpisodeDataset, Transitions, counts
from .mdp import RewardTable, ValidationError
from .reward_mapping import (
    ParamSet,
    RewardMappingHandle,
    RewardParam,
    log_cover,
    mapped_reward,
    next_value,
    validate_theta,
)


@dataclass
class RlpConfig:
    delta: float = 0.1
    eps: float = 0.1
    C: float = 1.0
    option: int = 1
    logN: Optional[float] = None  # filled from the parameter set when left None

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise ValidationError(f"delta must lie in (0, 1), got {self.delta}")
        if self.eps <= 0:
            raise ValidationError(f"eps must be positive, got {self.eps}")
        if self.C < 0:
            raise ValidationError(f"C must be nonnegative, got {self.C}")
        if self.option not in (1, 2):
            raise ValidationError(f"option must be 1 or 2, got {self.option}")

    def iota(self, H: int, S: int, A: int) -> float:
        return math.log(H * S * A / self.delta)


def bonus_formula(N, var, log_term: float, H: int, eps: float, C: float) -> np.ndarray:
    """C * min{ sqrt(L var / n) + H L / n + (eps/H)(1 + sqrt(L / n)), H } with n = max(N, 1).

    ``log_term`` is L = logN * iota.
    """
    n = np.maximum(np.asarray(N, dtype=np.float64), 1.0)
    inner = (
        np.sqrt(log_term * np.asarray(var, dtype=np.float64) / n)
        + H * log_term / n
        + (eps / H) * (1.0 + np.sqrt(log_term / n))
    )
    return C * np.minimum(inner, float(H))


@dataclass
class RlpModel:
    P_hat: np.ndarray  # (H, S, A, S); rows of unvisited pairs are zero
    pi_E_hat: np.ndarray  # (H, S, A) empirical expert policy
    counts: CountTables
    config: RlpConfig
    logN: float
    summary: dict = field(default_factory=dict)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.P_hat.shape[:3]

    @property
    def pi_E_hat_support(self) -> np.ndarray:
        return self.pi_E_hat > 0

    @property
    def log_term(self) -> float:
        return self.logN * self.config.iota(*self.shape)

    def empirical_variance(self, theta: RewardParam) -> np.ndarray:
        """Variance of V_{h+1} under the empirical kernel; zero on unvisited rows."""
        Vn = next_value(theta)
        mean = np.einsum("hsat,ht->hsa", self.P_hat, Vn)
        second = np.einsum("hsat,ht->hsa", self.P_hat, Vn**2)
        return np.maximum(second - mean**2, 0.0)

    def bonus(self, theta: RewardParam, eps: Optional[float] = None) -> np.ndarray:
        eps = self.config.eps if eps is None else eps
        H = self.shape[0]
        return bonus_formula(self.counts.N_b_sa, self.empirical_variance(theta), self.log_term, H, eps, self.config.C)

    def estimated_reward(self, theta: RewardParam, eps: Optional[float] = None) -> RewardTable:
        validate_theta(theta, *self.shape)
        r = mapped_reward(self.P_hat, self.pi_E_hat_support, theta) - self.bonus(theta, eps)
        H = self.shape[0]
        return RewardTable(r, declared_bound=3.0 * H + self.config.C * H)

    def to_json(self) -> dict:
        return {
            "config": {k: getattr(self.config, k) for k in ("delta", "eps", "C", "option", "logN")},
            "logN": self.logN,
            "P_hat": self.P_hat.tolist(),
            "pi_E_hat": self.pi_E_hat.tolist(),
            "N_b_sa": self.counts.N_b_sa.tolist(),
        }


def fit_empirical(
    data: Union[EpisodeDataset, Transitions, CountTables],
    config: RlpConfig,
    logN: Optional[float] = None,
) -> RlpModel:
    """Empirical kernel and expert policy from a dataset or precomputed counts."""
    if isinstance(data, (EpisodeDataset, Transitions)):
        if data.option != config.option:
            raise ValidationError(f"dataset option {data.option} does not match config option {config.option}")
        tables = counts(data)
    else:
        tables = data
    N = tables.N_b_sa
    P_hat = tables.N_next / np.maximum(N, 1)[..., None]
    if config.option == 1:
        pi_hat = tables.N_e_sa / np.maximum(tables.N_b_s, 1)[..., None]
    else:
        pi_hat = tables.N_pos_sa / np.maximum(tables.N_b1_s, 1)[..., None]
    logN = logN if logN is not None else (config.logN if config.logN is not None else 1.0)
    return RlpModel(P_hat=P_hat, pi_E_hat=pi_hat, counts=tables, config=config, logN=logN)


def bonus(model: RlpModel, theta: RewardParam, eps: Optional[float] = None) -> np.ndarray:
    return model.bonus(theta, eps)


def estimated_reward(model: RlpModel, theta: RewardParam, eps: Optional[float] = None) -> RewardTable:
    return model.estimated_reward(theta, eps)


def rlp_run(
    data: Union[EpisodeDataset, Transitions, CountTables],
    thetas: ParamSet,
    config: RlpConfig,
) -> RewardMappingHandle:
    """Fit the empirical model and return the estimated reward mapping."""
    H = data.H if not isinstance(data, CountTables) else data.N_b_sa.shape[0]
    logN = config.logN if config.logN is not None else log_cover(thetas, config.eps / H)
    model = fit_empirical(data, config, logN=logN)
    handle = RewardMappingHandle(model.estimated_reward, "estimated", summary={"logN": logN})
    handle.model = model
    return handle


def export_bonus_csv(table: np.ndarray, path: Union[str, Path]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["h", "s", "a", "bonus"])
        for (h, s, a), b in np.ndenumerate(table):
            writer.writerow([h, s, a, repr(float(b))])


def save_model(model: RlpModel, path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps(model.to_json()))
