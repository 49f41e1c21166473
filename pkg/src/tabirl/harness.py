"""Experiment sweeps over (K, seed) cells with deterministic CSV and JSON output."""

from __future__ import annotations

import csv
import hashlib
import io as _io
import json
import math
import subprocess
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from . import __version__
from .data import collect_dataset
from .explore import Environment
from .instances import random_mdp
from .io import load, mdp_from_json, policy_from_json
from .mdp import MdpCore, Policy, ValidationError
from .metrics import D_all_Theta, D_pi_Theta, weak_transferability
from .reward_mapping import ParamSet, RewardMappingHandle, ground_truth_mapping, sample_theta
from .rle import RleConfig, rle_run
from .rlp import RlpConfig, rlp_run
from .seeding import mix64

SCENARIOS = ("offline", "offline_expert_eval", "online", "transfer")
COLUMNS = ("scenario", "K", "seed", "metric", "monotone", "episodes", "wall_ms")
MONOTONE_TOL = 1e-12


@dataclass
class ExperimentConfig:
    scenario: str
    K_schedule: list[int]
    seeds: list[int]
    instance: dict = field(default_factory=lambda: {"kind": "random", "H": 3, "S": 2, "A": 2, "seed": 7})
    n_thetas: int = 10
    theta_seed: int = 0
    delta: float = 0.1
    eps: float = 1e-3
    C: float = 1.0
    option: int = 1
    behavior: str = "uniform"  # offline and transfer: "uniform" or "expert"
    metric: Optional[str] = None  # "d_pi" | "surrogate" | "bruteforce"; scenario default when None
    root_seed: int = 0
    c_xi: float = 1e-6
    paper_faithful: bool = False
    N: Optional[int] = None
    transfer_mix: float = 0.2
    acceptance: dict = field(default_factory=dict)  # optional {"slope": [lo, hi], "nonincreasing": bool, "monotone_fraction": f}
    workers: int = 1
    out: Optional[str] = None

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValidationError(f"scenario must be one of {SCENARIOS}, got {self.scenario!r}")
        if not self.K_schedule or not self.seeds:
            raise ValidationError("K schedule and seed list must be nonempty")
        if any(k < 1 for k in self.K_schedule):
            raise ValidationError("every K must be positive")
        if self.behavior not in ("uniform", "expert"):
            raise ValidationError(f"behavior must be 'uniform' or 'expert', got {self.behavior!r}")
        if self.metric not in (None, "d_pi", "surrogate", "bruteforce"):
            raise ValidationError(f"unknown metric {self.metric!r}")
        if self.scenario in ("offline", "offline_expert_eval", "transfer") and self.metric in ("surrogate", "bruteforce"):
            raise ValidationError(f"scenario {self.scenario} reports the fixed-policy metric d_pi")
        if self.scenario == "online" and self.metric == "d_pi":
            raise ValidationError("the online scenario reports a worst-case metric")
        kind = self.instance.get("kind")
        if kind not in ("random", "file"):
            raise ValidationError(f"instance kind must be 'random' or 'file', got {kind!r}")
        if self.scenario == "transfer" and kind != "random":
            raise ValidationError("the transfer scenario builds its target from a random instance")

    @property
    def metric_name(self) -> str:
        if self.metric is not None:
            return self.metric
        return "surrogate" if self.scenario == "online" else "d_pi"

    @classmethod
    def from_dict(cls, obj: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(obj) - known
        if unknown:
            raise ValidationError(f"unknown experiment config keys {sorted(unknown)}")
        return cls(**obj)

    def to_dict(self) -> dict:
        return asdict(self)

    def hash(self) -> str:
        """Digest of every field that can change results (excludes workers and out)."""
        payload = {k: v for k, v in self.to_dict().items() if k not in ("workers", "out")}
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


PRESETS: dict[str, dict] = {
    "offline_rate": dict(
        scenario="offline",
        K_schedule=[2**k for k in range(10, 18)],
        seeds=list(range(20)),
        acceptance={"slope": [-0.65, -0.35], "nonincreasing": True},
    ),
    "offline_expert_eval_rate": dict(
        scenario="offline_expert_eval",
        K_schedule=[2**k for k in range(10, 18)],
        seeds=list(range(20)),
        acceptance={"slope": [-0.65, -0.35], "nonincreasing": True, "monotone_fraction": 0.9},
    ),
    "online_rate": dict(
        scenario="online",
        instance={"kind": "random", "H": 3, "S": 3, "A": 2, "seed": 11},
        K_schedule=[2**k for k in range(10, 16)],
        seeds=list(range(20)),
        eps=1e-2,
        acceptance={"nonincreasing": True},
    ),
    "transfer": dict(
        scenario="transfer",
        K_schedule=[2**k for k in range(10, 14)],
        seeds=list(range(5)),
    ),
}


def preset(name: str, **overrides: Any) -> ExperimentConfig:
    if name not in PRESETS:
        raise ValidationError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return ExperimentConfig.from_dict({**PRESETS[name], **overrides})


def version_string() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=5,
        )
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def load_instance(spec: dict) -> tuple[MdpCore, Policy]:
    if spec["kind"] == "random":
        return random_mdp(spec["H"], spec["S"], spec["A"], spec["seed"], spec.get("concentration", 1.0))
    obj = load(spec["path"])
    mdp = mdp_from_json(obj["mdp"])
    return mdp, policy_from_json(obj["expert"], mdp.shape)


def theta_set(config: ExperimentConfig, H: int, S: int, A: int) -> ParamSet:
    return ParamSet.finite([sample_theta(H, S, A, mix64(config.theta_seed, i)) for i in range(config.n_thetas)])


def cell_seed(root: int, K: int, seed: int) -> int:
    return mix64(mix64(root, K), seed)


def target_mdp(config: ExperimentConfig, source: MdpCore) -> MdpCore:
    """Source kernel mixed with an independent random kernel of the same size."""
    spec = config.instance
    other, _ = random_mdp(spec["H"], spec["S"], spec["A"], mix64(spec["seed"], 1), spec.get("concentration", 1.0))
    lam = config.transfer_mix
    return MdpCore((1.0 - lam) * source.P + lam * other.P, s_init=source.s_init)


def _monotone(truth: RewardMappingHandle, estimate: RewardMappingHandle, thetas: ParamSet) -> bool:
    return all(bool(np.all(estimate(t).r <= truth(t).r + MONOTONE_TOL)) for t in thetas)


def run_cell(config: ExperimentConfig, K: int, seed: int) -> tuple[dict, dict]:
    """One (K, seed) run; returns the CSV row and a dict of scenario-specific extras."""
    t0 = time.perf_counter()
    mdp, expert = load_instance(config.instance)
    H, S, A = mdp.shape
    thetas = theta_set(config, H, S, A)
    truth = ground_truth_mapping(mdp, expert)
    rng_seed = cell_seed(config.root_seed, K, seed)
    extras: dict = {}
    if config.scenario == "online":
        env = Environment(mdp, expert, config.option)
        rle_cfg = RleConfig(
            K=K, N=config.N, delta=config.delta, eps=config.eps, C=config.C, option=config.option,
            c_xi=config.c_xi, paper_faithful=config.paper_faithful,
        )
        estimate = rle_run(env, thetas, rle_cfg, rng_seed)
        mode = config.metric_name
        value = D_all_Theta(mdp, truth, estimate, thetas.params, mode=mode).value
        episodes = env.episodes
        ex = estimate.summary["explore"]
        extras = {
            "certificate": ex.get("certificate"),
            "final_converged": ex["final_converged"],
            "trim_retention_fraction": estimate.summary["trim_retention_fraction"],
            "episodes_explore": estimate.summary["episodes_explore"],
        }
    else:
        use_expert = config.scenario == "offline_expert_eval" or config.behavior == "expert"
        pi_b = expert if use_expert else Policy.uniform(H, S, A)
        data = collect_dataset(mdp, pi_b, expert, config.option, K, rng_seed)
        estimate = rlp_run(data, thetas, RlpConfig(delta=config.delta, eps=config.eps, C=config.C, option=config.option))
        episodes = K
        eval_mdp = mdp
        if config.scenario == "transfer":
            eval_mdp = target_mdp(config, mdp)
            extras["weak_transferability"] = weak_transferability(mdp, eval_mdp, pi_b, expert)
        value = D_pi_Theta(eval_mdp, expert, truth, estimate, thetas.params).value
    row = {
        "scenario": config.scenario,
        "K": K,
        "seed": seed,
        "metric": value,
        "monotone": _monotone(truth, estimate, thetas),
        "episodes": episodes,
        "wall_ms": int(round(1000 * (time.perf_counter() - t0))),
    }
    return row, extras


def _run_cell_args(args) -> tuple[dict, dict]:
    return run_cell(*args)


@dataclass
class ExperimentResult:
    rows: list[dict]
    extras: list[dict]
    summary: dict

    def medians(self) -> dict[int, float]:
        return medians_by_K(self.rows)

    def to_csv(self) -> str:
        buf = _io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(COLUMNS)
        for row in self.rows:
            writer.writerow([
                row["scenario"], row["K"], row["seed"], repr(float(row["metric"])),
                int(row["monotone"]), row["episodes"], row["wall_ms"],
            ])
        return buf.getvalue()


def medians_by_K(rows: Sequence[dict]) -> dict[int, float]:
    Ks = sorted({r["K"] for r in rows})
    return {K: float(np.median([r["metric"] for r in rows if r["K"] == K])) for K in Ks}


def fit_rate(rows: Sequence[dict]) -> float:
    """Least-squares slope of log(median metric) against log K."""
    med = medians_by_K(rows)
    if len(med) < 4:
        raise ValueError(f"need at least 4 K values to fit a rate, got {len(med)}")
    Ks = np.array(list(med), dtype=np.float64)
    values = np.array(list(med.values()))
    if np.any(values <= 0):
        raise ValueError("median metrics must be positive to fit a log-log rate")
    if np.ptp(values) == 0:
        raise ValueError("median metric is constant in K; the rate is undefined")
    slope, _ = np.polyfit(np.log(Ks), np.log(values), 1)
    return float(slope)


def check_acceptance(result: ExperimentResult, acceptance: dict) -> list[str]:
    """Failed checks, described in words; empty when everything passes."""
    failures = []
    med = list(result.medians().values())
    if acceptance.get("nonincreasing") and any(b > a for a, b in zip(med, med[1:])):
        failures.append(f"median metric increases somewhere along K: {med}")
    if "slope" in acceptance:
        lo, hi = acceptance["slope"]
        slope = result.summary.get("slope")
        if slope is None or not lo <= slope <= hi:
            failures.append(f"slope {slope} outside [{lo}, {hi}]")
    if "monotone_fraction" in acceptance:
        frac = result.summary["monotone_fraction"]
        if frac < acceptance["monotone_fraction"]:
            failures.append(f"monotone fraction {frac} below {acceptance['monotone_fraction']}")
    return failures


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    cells = [(config, K, seed) for K in sorted(config.K_schedule) for seed in sorted(config.seeds)]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            outputs = list(pool.map(_run_cell_args, cells))
    else:
        outputs = [run_cell(*c) for c in cells]
    order = sorted(range(len(cells)), key=lambda i: (cells[i][1], cells[i][2]))
    rows = [outputs[i][0] for i in order]
    extras = [{"K": cells[i][1], "seed": cells[i][2], **outputs[i][1]} for i in order]
    summary: dict[str, Any] = {
        "config": config.to_dict(),
        "config_hash": config.hash(),
        "version": version_string(),
        "medians": {str(K): v for K, v in medians_by_K(rows).items()},
        "monotone_fraction": float(np.mean([r["monotone"] for r in rows])),
        "slope": None,
    }
    try:
        summary["slope"] = fit_rate(rows)
    except ValueError:
        pass
    result = ExperimentResult(rows, extras, summary)
    summary["acceptance_failures"] = check_acceptance(result, config.acceptance)
    if config.out:
        write_result(result, config.out)
    return result


def write_result(result: ExperimentResult, out: str) -> None:
    path = Path(out)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(result.to_csv())
    summary = {**result.summary, "cells": result.extras}
    path.with_suffix(".json").write_text(json.dumps(summary, indent=2, default=_json_default))


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        f = float(obj)
        return None if math.isnan(f) else f
    if isinstance(obj, np.bool_):
        return bool(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")
