"""Online IRL: explore, collect with the behavior mixture, trim, then run the offline estimator."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .data import EpisodeDataset, Transitions
from .explore import Environment, OccupancyOracle, PolicyMixture, default_xi, explore_run, occupancy_hat
from .mdp import ValidationError
from .reward_mapping import ParamSet, RewardMappingHandle
from .rlp import RlpConfig, rlp_run
from .seeding import mix64


def default_exploration_budget(H: int, S: int, A: int, K: int, capped: bool = True) -> int:
    """ceil(sqrt(H^9 S^7 A^7 K)), capped at K H unless ``capped`` is False."""
    raw = math.ceil(math.sqrt(float(H) ** 9 * float(S) ** 7 * float(A) ** 7 * K))
    return int(min(raw, K * H)) if capped else int(raw)


@dataclass
class RleConfig:
    K: int
    N: Optional[int] = None  # None: the default schedule tied to K
    delta: float = 0.1
    eps: float = 0.1
    C: float = 1.0
    option: int = 1
    c_xi: float = 1e-6
    paper_faithful: bool = False  # c_xi = 1 and an uncapped exploration budget
    xi: Optional[float] = None  # explicit override of the threshold

    def __post_init__(self):
        if self.K < 1:
            raise ValidationError(f"K must be positive, got {self.K}")
        if self.N is not None and self.N < 1:
            raise ValidationError(f"N must be positive, got {self.N}")
        if not 0.0 < self.delta < 1.0 or self.eps <= 0:
            raise ValidationError("delta must lie in (0, 1) and eps must be positive")

    def budget(self, H: int, S: int, A: int) -> int:
        if self.N is not None:
            N = self.N
        else:
            N = default_exploration_budget(H, S, A, self.K, capped=not self.paper_faithful)
        if N > self.K * H:
            raise ValidationError(f"exploration budget N={N} exceeds K*H={self.K * H}")
        return N

    def threshold(self, H: int, S: int, A: int) -> float:
        if self.xi is not None:
            return self.xi
        return default_xi(H, S, A, self.delta, 1.0 if self.paper_faithful else self.c_xi)


def trim_target(
    oracle: OccupancyOracle,
    mixture: PolicyMixture,
    K: int,
    xi: float,
    N: int,
    delta: float,
) -> np.ndarray:
    """floor(max(0, min(K/4, K m - K xi/(8N) - 3 log(10HSA/delta)))) with m the mixture's estimated occupancy."""
    H, S, A = oracle.shape
    m = occupancy_hat(oracle, mixture)
    raw = np.minimum(K / 4.0, K * m - K * xi / (8.0 * N) - 3.0 * math.log(10 * H * S * A / delta))
    return np.floor(np.maximum(raw, 0.0)).astype(np.int64)


def subsample(data: Union[EpisodeDataset, Transitions], targets: np.ndarray, seed: int) -> Transitions:
    """Keep min(target, available) transitions per (h, s, a), uniformly without replacement."""
    tr = data.transitions() if isinstance(data, EpisodeDataset) else data
    if len(tr) == 0:
        return tr
    H, S, A = tr.H, tr.S, tr.A
    cell = np.ravel_multi_index((tr.h, tr.s, tr.a), (H, S, A))
    keys = mix64(np.uint64(seed & 0xFFFFFFFFFFFFFFFF), np.arange(len(tr), dtype=np.uint64))
    order = np.lexsort((keys, cell))
    sorted_cells = cell[order]
    first = np.searchsorted(sorted_cells, sorted_cells, side="left")
    rank = np.arange(len(order)) - first
    keep = np.zeros(len(tr), dtype=bool)
    keep[order] = rank < targets.ravel()[sorted_cells]
    return tr.take(np.flatnonzero(keep))


def rle_run(env: Environment, thetas: ParamSet, config: RleConfig, seed: int) -> RewardMappingHandle:
    """Full online pipeline; the handle carries ``model``, ``explore`` and a run ``summary``."""
    H, S, A = env.shape
    if env.option != config.option:
        raise ValidationError(f"environment feedback option {env.option} does not match config {config.option}")
    N = config.budget(H, S, A)
    xi = config.threshold(H, S, A)
    start = env.episodes
    explored = explore_run(env, N, config.K, xi, config.delta, mix64(seed, 1))
    after_explore = env.episodes
    data = env.collect(explored.mixture, config.K, mix64(seed, 2))
    targets = trim_target(explored.oracle, explored.mixture, config.K, xi, N, config.delta)
    pool = data.transitions()
    trimmed = subsample(pool, targets, mix64(seed, 3))
    rlp_config = RlpConfig(delta=config.delta / 10, eps=config.eps / 10, C=config.C, option=config.option)
    handle = rlp_run(trimmed, thetas, rlp_config)
    handle.explore = explored
    handle.summary.update(
        {
            "episodes_explore": after_explore - start,
            "episodes_main": env.episodes - after_explore,
            "trim_retention_fraction": len(trimmed) / max(len(pool), 1),
            "metric_estimates": {},
            "N": N,
            "xi": xi,
            "explore": explored.summary,
        }
    )
    return handle
