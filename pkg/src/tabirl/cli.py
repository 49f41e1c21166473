"""Command-line entry point: ``tabirl <command> [options]``.

Every command accepts ``--config file.json``; its keys become defaults for
that command's options (explicit flags still win). Exit codes: 0 success,
2 invalid input, 3 an experiment's acceptance checks failed.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence


from .data import collect_dataset, load_dataset, save_dataset
from .explore import Environment
from .harness import ExperimentConfig, load_instance, preset, run_experiment, theta_set, write_result
from .instances import HardInstanceSpec, hard_offline, hard_online, packing_set, random_mdp, random_w
from .io import (
    load,
    mdp_to_json,
    paramset_from_json,
    policy_from_json,
    policy_to_json,
    reward_from_json,
)
from .mdp import MdpCore, Policy, ValidationError, reward_array
from .metrics import EnumerationCapExceeded, concentrability, d_all_bruteforce, d_all_surrogate, d_pi
from .rle import RleConfig, rle_run
from .rlp import RlpConfig, export_bonus_csv, rlp_run, save_model

EXIT_OK, EXIT_INVALID, EXIT_ACCEPTANCE = 0, 2, 3


def _emit(obj, out: Optional[str]) -> None:
    text = json.dumps(obj, indent=2)
    if out:
        Path(out).write_text(text)
    else:
        print(text)


def _instance(path: str) -> tuple[MdpCore, Policy]:
    return load_instance({"kind": "file", "path": path})


def _thetas(args, H: int, S: int, A: int):
    if args.thetas:
        return paramset_from_json(load(args.thetas))
    cfg = ExperimentConfig(scenario="offline", K_schedule=[1], seeds=[0], n_thetas=args.n_thetas, theta_seed=args.theta_seed)
    return theta_set(cfg, H, S, A)


def cmd_gen(args) -> int:
    mdp, expert = random_mdp(args.H, args.S, args.A, args.seed, args.concentration)
    _emit({"mdp": mdp_to_json(mdp), "expert": policy_to_json(expert)}, args.out)
    return EXIT_OK


def cmd_collect(args) -> int:
    mdp, expert = _instance(args.instance)
    if args.behavior == "uniform":
        pi_b = Policy.uniform(*mdp.shape)
    elif args.behavior == "expert":
        pi_b = expert
    else:
        pi_b = policy_from_json(load(args.behavior), mdp.shape)
    data = collect_dataset(mdp, pi_b, expert, args.option, args.K, args.seed, delta_check=args.min_expert_prob)
    if not args.out:
        raise ValidationError("collect needs --out for the JSONL dataset")
    save_dataset(data, args.out)
    return EXIT_OK


def cmd_rlp(args) -> int:
    mdp, _ = _instance(args.instance)
    H, S, A = mdp.shape
    data = load_dataset(args.data, args.option, S, A)
    if data.H != H:
        raise ValidationError(f"dataset horizon {data.H} does not match instance horizon {H}")
    thetas = _thetas(args, H, S, A)
    handle = rlp_run(data, thetas, RlpConfig(delta=args.delta, eps=args.eps, C=args.C, option=args.option))
    if args.bonus_csv:
        export_bonus_csv(handle.model.bonus(thetas.params[0]), args.bonus_csv)
    if args.out:
        save_model(handle.model, args.out)
    else:
        print(json.dumps({"logN": handle.model.logN, "visited_pairs": int((handle.model.counts.N_b_sa > 0).sum())}))
    return EXIT_OK


def cmd_rle(args) -> int:
    mdp, expert = _instance(args.instance)
    thetas = _thetas(args, *mdp.shape)
    config = RleConfig(
        K=args.K, N=args.N, delta=args.delta, eps=args.eps, C=args.C, option=args.option,
        c_xi=args.c_xi, paper_faithful=args.paper_faithful,
    )
    handle = rle_run(Environment(mdp, expert, args.option), thetas, config, args.seed)
    _emit(handle.summary, args.out)
    return EXIT_OK


def cmd_metric(args) -> int:
    mdp, expert = _instance(args.instance)
    r1 = reward_array(reward_from_json(load(args.r1)))
    r2 = reward_array(reward_from_json(load(args.r2)))
    if args.kind == "d_pi":
        policy = policy_from_json(load(args.policy), mdp.shape) if args.policy else expert
        report = d_pi(mdp, policy, r1, r2)
    elif args.kind == "bruteforce":
        report = d_all_bruteforce(mdp, r1, r2)
    else:
        report = d_all_surrogate(mdp, r1, r2)
    _emit(report.to_json(), args.out)
    return EXIT_OK


def cmd_experiment(args) -> int:
    if args.preset:
        overrides = {"workers": args.workers}
        if args.paper_faithful:
            overrides["paper_faithful"] = True
        config = preset(args.preset, **overrides)
    elif args.config:
        obj = load(args.config)
        obj.setdefault("workers", args.workers)
        if args.paper_faithful:
            obj["paper_faithful"] = True
        config = ExperimentConfig.from_dict(obj)
    else:
        raise ValidationError("experiment needs --preset or --config")
    result = run_experiment(config)
    if args.out:
        write_result(result, args.out)
    else:
        sys.stdout.write(result.to_csv())
    failures = result.summary["acceptance_failures"]
    for msg in failures:
        print(f"FAIL {msg}", file=sys.stderr)
    return EXIT_ACCEPTANCE if failures else EXIT_OK


def cmd_hard(args) -> int:
    pool = packing_set(args.S, args.pool_size, args.seed) if args.pool_size else None
    w = random_w(args.H, args.S, args.A, args.seed, pool)
    spec = HardInstanceSpec(args.H, args.S, args.A, args.eps_prime, w, C_star=args.C_star, i_star=args.i_star)
    if args.offline:
        mdp, expert, pi_b, pi_eval = hard_offline(spec)
        payload = {
            "mdp": mdp_to_json(mdp),
            "expert": policy_to_json(expert),
            "pi_b": policy_to_json(pi_b),
            "pi_eval": policy_to_json(pi_eval),
            "concentrability_sum": concentrability(mdp, pi_eval, pi_b, normalized=False),
        }
    else:
        mdp, expert = hard_online(spec)
        payload = {"mdp": mdp_to_json(mdp), "expert": policy_to_json(expert)}
    _emit(payload, args.out)
    return EXIT_OK


def _add_theta_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--thetas", help="parameter set JSON; random draws when omitted")
    p.add_argument("--n-thetas", type=int, default=10)
    p.add_argument("--theta-seed", type=int, default=0)


def _add_estimator_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--C", type=float, default=1.0)
    p.add_argument("--option", type=int, choices=(1, 2), default=1)


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--config", help="JSON file of option defaults")
    common.add_argument("--out", help="output path (stdout when omitted)")
    common.add_argument("--paper-faithful", action="store_true", help="literal threshold and exploration-budget constants")

    parser = argparse.ArgumentParser(prog="tabirl", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    subs: dict[str, argparse.ArgumentParser] = {}

    p = subs["gen"] = sub.add_parser("gen", parents=[common], help="random MDP with a deterministic expert")
    p.add_argument("--H", type=int, default=3)
    p.add_argument("--S", type=int, default=3)
    p.add_argument("--A", type=int, default=2)
    p.add_argument("--concentration", type=float, default=1.0)
    p.set_defaults(func=cmd_gen)

    p = subs["collect"] = sub.add_parser("collect", parents=[common], help="offline dataset as JSONL")
    p.add_argument("--instance", required=True)
    p.add_argument("--K", type=int, default=1000)
    p.add_argument("--option", type=int, choices=(1, 2), default=1)
    p.add_argument("--behavior", default="uniform", help="'uniform', 'expert', or a policy JSON file")
    p.add_argument("--min-expert-prob", type=float, default=None)
    p.set_defaults(func=cmd_collect)

    p = subs["rlp"] = sub.add_parser("rlp", parents=[common], help="fit the offline estimator")
    p.add_argument("--instance", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--bonus-csv")
    _add_estimator_args(p)
    _add_theta_args(p)
    p.set_defaults(func=cmd_rlp)

    p = subs["rle"] = sub.add_parser("rle", parents=[common], help="run the online pipeline")
    p.add_argument("--instance", required=True)
    p.add_argument("--K", type=int, default=1024)
    p.add_argument("--N", type=int, default=None)
    p.add_argument("--c-xi", type=float, default=1e-6)
    _add_estimator_args(p)
    _add_theta_args(p)
    p.set_defaults(func=cmd_rle)

    p = subs["metric"] = sub.add_parser("metric", parents=[common], help="distance between two rewards")
    p.add_argument("--instance", required=True)
    p.add_argument("--r1", required=True)
    p.add_argument("--r2", required=True)
    p.add_argument("--kind", choices=("d_pi", "surrogate", "bruteforce"), default="d_pi")
    p.add_argument("--policy", help="policy JSON for d_pi (defaults to the expert)")
    p.set_defaults(func=cmd_metric)

    p = subs["experiment"] = sub.add_parser("experiment", parents=[common], help="sweep K and seeds")
    p.add_argument("--preset", help="named experiment preset")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_experiment)

    p = subs["hard"] = sub.add_parser("hard", parents=[common], help="hard-instance generator")
    p.add_argument("--H", type=int, default=2)
    p.add_argument("--S", type=int, default=8)
    p.add_argument("--A", type=int, default=2)
    p.add_argument("--eps-prime", type=float, default=0.25)
    p.add_argument("--C-star", type=float, default=2.0)
    p.add_argument("--i-star", type=int, default=0)
    p.add_argument("--pool-size", type=int, default=0, help="draw w slices from a packing set of this size")
    p.add_argument("--offline", action="store_true", help="also build the behavior/evaluation pair")
    p.set_defaults(func=cmd_hard)
    return parser, subs


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, subs = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.config and args.command != "experiment":
            defaults = load(args.config)
            if not isinstance(defaults, dict):
                raise ValidationError("--config must hold a JSON object")
            subs[args.command].set_defaults(**{k.replace("-", "_"): v for k, v in defaults.items()})
            args = parser.parse_args(argv)
        return args.func(args)
    except (ValidationError, EnumerationCapExceeded, FileNotFoundError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
