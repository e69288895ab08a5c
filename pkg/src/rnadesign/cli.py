"""Command line entry point: ``rnadesign {run,ablate-reward,ablate-loop,fold}``."""
from __future__ import annotations

import argparse
import json
import sys

from .fitness import BuiltinModel, ExternalModel, ProgramUnavailable, ProtocolError, fitness_of
from .harness import (
    ALGORITHMS,
    LOOP_POLICIES,
    BackendUnavailable,
    ConfigError,
    build_config,
    hyper_keys,
    read_config_file,
    run_ablation_loop,
    run_ablation_reward,
    run_experiment,
)
from .sequence import InvalidBase, parse_sequence

EXIT_CONFIG = 2
EXIT_BACKEND = 3

# flag name -> argparse kwargs; the names double as config-file keys
_FLAGS = {
    "algo": dict(choices=ALGORITHMS),
    "len": dict(metavar="N"),
    "seed": dict(action="append", metavar="N", help="repeatable"),
    "budget": dict(metavar="N", help="fitness evaluations per run"),
    "loop-policy": dict(choices=LOOP_POLICIES),
    "max-iter": dict(metavar="N", help="retries for try-again"),
    "alpha-penalty": dict(metavar="X", help="revisit penalty for reward-penalty"),
    "max-steps": dict(metavar="N", help="episode cap (default 2 * len)"),
    "fitness": dict(choices=("builtin", "external")),
    "external-cmd": dict(metavar="STR", help="folding program, e.g. 'RNAfold --noPS'"),
    "out": dict(metavar="DIR"),
    "workers": dict(metavar="N", help="parallel seed processes"),
}


def _add_experiment_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", metavar="PATH", help="flat key = value file; flags override it")
    for name, kw in _FLAGS.items():
        p.add_argument(f"--{name}", dest=name, default=None, **kw)
    g = p.add_argument_group("algorithm hyperparameters")
    for key in hyper_keys():
        g.add_argument(f"--{key}", dest=key, default=None, metavar="V")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rnadesign", description="RL and greedy RNA sequence design.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (("run", "run one algorithm over the given seeds"),
                        ("ablate-reward", "DQN: plain reward vs revisit penalty"),
                        ("ablate-loop", "PPO: terminate vs try-again")):
        _add_experiment_flags(sub.add_parser(name, help=help_))
    fold = sub.add_parser("fold", help="fold sequences and print structure, energy, fitness")
    fold.add_argument("sequences", nargs="+")
    fold.add_argument("--fitness", choices=("builtin", "external"), default="builtin")
    fold.add_argument("--external-cmd", default="RNAfold --noPS")
    return parser


def _settings(args) -> dict:
    values = read_config_file(args.config) if args.config else {}
    cli = vars(args)
    for key in list(_FLAGS) + list(hyper_keys()):
        if cli.get(key) is not None:
            values[key] = cli[key]
    return values


def _fold(args) -> int:
    model = ExternalModel(args.external_cmd) if args.fitness == "external" else BuiltinModel()
    try:
        for text in args.sequences:
            s = parse_sequence(text)
            r = model.fold(s)
            print(s.text)
            print(f"{r.dot_bracket}  {r.energy + 0.0}  {fitness_of(s, model)}")
    finally:
        if hasattr(model, "close"):
            model.close()
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "fold":
            try:
                return _fold(args)
            except ValueError as exc:  # InvalidBase, empty input
                print(f"rnadesign: error: {exc}", file=sys.stderr)
                return EXIT_CONFIG
        defaults = {"ablate-reward": "dqn", "ablate-loop": "ppo"}
        values = _settings(args)
        if args.command in defaults:
            values.setdefault("algo", defaults[args.command])
        config = build_config(values)
        if args.command == "run":
            runs = run_experiment(config)
            for m in runs:
                print(f"seed {m.seed}: best {m.best_fitness} {m.best_sequence} {m.best_structure} "
                      f"evals {m.total_evals}")
        else:
            runner = run_ablation_reward if args.command == "ablate-reward" else run_ablation_loop
            report = runner(config)
            print(json.dumps({k: {"label": a["label"], "median_final_best": a["median_final_best"]}
                              for k, a in report["arms"].items()}))
        return 0
    except (ConfigError, InvalidBase) as exc:
        print(f"rnadesign: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (BackendUnavailable, ProgramUnavailable, ProtocolError) as exc:
        print(f"rnadesign: backend unavailable: {exc}", file=sys.stderr)
        return EXIT_BACKEND


if __name__ == "__main__":
    sys.exit(main())
