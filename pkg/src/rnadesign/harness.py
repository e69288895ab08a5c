"""Experiment wiring: configs, budgets, seeds, ablations and result files.

Config files are flat ``key = value`` lines; ``#`` starts a comment. Keys are
the long CLI flag names without the leading dashes (``algo``, ``len``,
``seed``, ``loop-policy`` ...). Algorithm hyperparameters use the algorithm
name as prefix and the dataclass field with dashes, e.g. ``dqn-gamma`` or
``greedy-pop-size``.
"""
from __future__ import annotations

import csv
import dataclasses
import json
import math
import shutil
import statistics
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .dqn import DqnConfig, run_dqn
from .environment import EnvConfig, RewardPenalty, Terminate, TryAgain
from .fitness import BuiltinModel, EvalCounter, ExternalModel, ProgramUnavailable, fitness_of
from .greedy import GreedyConfig, run_greedy
from .metrics import METRICS_COLUMNS, RunMetrics
from .ppo import PpoConfig, run_ppo
from .sequence import random_sequence

ALGORITHMS = ("dqn", "ppo", "greedy")
LOOP_POLICIES = ("terminate", "try-again", "reward-penalty")
ALGO_CONFIGS = {"dqn": DqnConfig, "ppo": PpoConfig, "greedy": GreedyConfig}
DEFAULT_LOOP_POLICY = {"dqn": "terminate", "ppo": "try-again", "greedy": "terminate"}


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


class BackendUnavailable(RuntimeError):
    pass


@dataclass
class ExperimentConfig:
    algo: str = "dqn"
    length: int = 20
    seeds: list = field(default_factory=lambda: [0])
    budget: int = 30_000
    fitness: str = "builtin"
    external_cmd: Optional[str] = None
    loop_policy: Optional[str] = None  # None -> per-algorithm default
    max_iter: int = 8
    alpha_penalty: float = 0.1
    max_steps: Optional[int] = None
    out: str = "runs"
    workers: int = 1
    hyper: dict = field(default_factory=dict)  # e.g. {"dqn": {"gamma": 0.5}}

    def __post_init__(self):
        if self.algo not in ALGORITHMS:
            raise ConfigError("algo", f"must be one of {', '.join(ALGORITHMS)}, got {self.algo!r}")
        if self.length < 1:
            raise ConfigError("len", "must be >= 1")
        if not self.seeds:
            raise ConfigError("seed", "at least one seed is required")
        if self.budget <= 0:
            raise ConfigError("budget", "must be > 0")
        if self.fitness not in ("builtin", "external"):
            raise ConfigError("fitness", f"must be builtin or external, got {self.fitness!r}")
        if self.fitness == "external" and not self.external_cmd:
            raise ConfigError("external-cmd", "required when fitness = external")
        if self.loop_policy is not None and self.loop_policy not in LOOP_POLICIES:
            raise ConfigError("loop-policy", f"must be one of {', '.join(LOOP_POLICIES)}")
        if self.max_iter < 1:
            raise ConfigError("max-iter", "must be >= 1")
        if self.alpha_penalty < 0:
            raise ConfigError("alpha-penalty", "must be >= 0")
        if self.max_steps is not None and self.max_steps < 1:
            raise ConfigError("max-steps", "must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers", "must be >= 1")

    @property
    def effective_loop_policy(self) -> str:
        return self.loop_policy or DEFAULT_LOOP_POLICY[self.algo]

    def loop_policy_obj(self):
        name = self.effective_loop_policy
        if name == "terminate":
            return Terminate()
        if name == "try-again":
            return TryAgain(self.max_iter)
        return RewardPenalty(self.alpha_penalty)

    def env_config(self) -> EnvConfig:
        return EnvConfig(self.length, self.max_steps, self.loop_policy_obj())

    def algo_config(self):
        cls = ALGO_CONFIGS[self.algo]
        overrides = dict(self.hyper.get(self.algo, {}))
        if self.algo in ("dqn", "ppo") and "epochs" not in overrides:
            # stretch exploration/annealing schedules over the budgeted run
            steps = overrides.get("collect_steps" if self.algo == "dqn" else "steps_per_batch",
                                  getattr(cls(), "collect_steps" if self.algo == "dqn" else "steps_per_batch"))
            overrides["epochs"] = max(1, min(cls().epochs, math.ceil(self.budget / max(steps, 1))))
        try:
            return cls(**overrides)
        except (TypeError, ValueError) as exc:
            raise ConfigError(self.algo, str(exc)) from exc

    def with_(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def echo(self) -> dict:
        d = dataclasses.asdict(self)
        d["loop_policy"] = self.effective_loop_policy
        algo_cfg = dataclasses.asdict(self.algo_config())
        d["hyper"] = {self.algo: algo_cfg}
        del d["out"], d["workers"], d["seeds"]
        if self.algo == "greedy":  # no environment involved
            for k in ("loop_policy", "max_iter", "alpha_penalty", "max_steps"):
                del d[k]
        return d


# ---------------------------------------------------------------- config text

_TOP_KEYS = {
    "algo": ("algo", str),
    "len": ("length", int),
    "seed": ("seeds", None),
    "budget": ("budget", int),
    "fitness": ("fitness", str),
    "external-cmd": ("external_cmd", str),
    "loop-policy": ("loop_policy", str),
    "max-iter": ("max_iter", int),
    "alpha-penalty": ("alpha_penalty", float),
    "max-steps": ("max_steps", int),
    "out": ("out", str),
    "workers": ("workers", int),
}


def hyper_keys() -> dict:
    """Map of ``<algo>-<field>`` config keys to (algo, field name, type)."""
    keys = {}
    for algo, cls in ALGO_CONFIGS.items():
        for f in dataclasses.fields(cls):
            typ = f.type if isinstance(f.type, type) else {"int": int, "float": float}.get(str(f.type), float)
            keys[f"{algo}-{f.name.replace('_', '-')}"] = (algo, f.name, typ)
    return keys


def read_config_file(path) -> dict:
    values = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc}") from exc
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("config", f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key == "seed":
            values.setdefault("seed", []).extend(v.strip() for v in value.split(",") if v.strip())
        else:
            values[key] = value
    return values


def _convert(key, text, typ):
    try:
        return typ(text)
    except (TypeError, ValueError):
        raise ConfigError(key, f"cannot parse {text!r} as {typ.__name__}") from None


def build_config(values: dict) -> ExperimentConfig:
    """Turn raw ``key -> text`` settings (file merged with CLI) into a config."""
    kwargs = {}
    hyper: dict = {}
    hk = hyper_keys()
    for key, text in values.items():
        if text is None:
            continue
        if key in _TOP_KEYS:
            name, typ = _TOP_KEYS[key]
            if key == "seed":
                items = text if isinstance(text, list) else [text]
                kwargs["seeds"] = [_convert("seed", str(s), int) for s in items]
            else:
                kwargs[name] = _convert(key, text, typ)
        elif key in hk:
            algo, name, typ = hk[key]
            hyper.setdefault(algo, {})[name] = _convert(key, text, typ)
        else:
            raise ConfigError(key, "unknown configuration key")
    return ExperimentConfig(**kwargs, hyper=hyper)


# ---------------------------------------------------------------- running

def make_model(config: ExperimentConfig):
    if config.fitness == "builtin":
        return BuiltinModel()
    model = ExternalModel(config.external_cmd)
    try:
        model.folder.check_available()
    except ProgramUnavailable as exc:
        raise BackendUnavailable(str(exc)) from exc
    return model


def run_single(config: ExperimentConfig, seed: int) -> RunMetrics:
    model = make_model(config)
    counter = EvalCounter(model, config.budget)
    try:
        if config.algo == "dqn":
            m = run_dqn(config.algo_config(), config.env_config(), seed, counter)
        elif config.algo == "ppo":
            m = run_ppo(config.algo_config(), config.env_config(), seed, counter)
        else:
            m = run_greedy(config.algo_config(), config.length, seed, counter)
    except ProgramUnavailable as exc:
        raise BackendUnavailable(str(exc)) from exc
    finally:
        if hasattr(model, "close"):
            model.close()
    return m


def _fmt(x) -> str:
    return repr(float(x)) if isinstance(x, float) else str(x)


def write_run(metrics: RunMetrics, config: ExperimentConfig, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "metrics.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRICS_COLUMNS)
        for r in metrics.rows:
            w.writerow([_fmt(getattr(r, c)) for c in METRICS_COLUMNS])
    if metrics.algorithm == "ppo":
        with open(out / "scatter.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("episode", "best_fitness"))
            for ep, best in metrics.scatter:
                w.writerow((ep, _fmt(float(best))))
    summary = {
        "algorithm": metrics.algorithm,
        "config": config.echo(),
        "seed": metrics.seed,
        "final_best_fitness": metrics.best_fitness,
        "best_sequence": metrics.best_sequence,
        "best_structure": metrics.best_structure,
        "total_evals": metrics.total_evals,
        "epochs_run": len(metrics.rows),
        "episodes": len(metrics.episode_lengths),
        "wall_time_s": round(metrics.wall_time_s, 3),
    }
    if "env_steps" in metrics.extras:
        # third x-axis for the curves: cumulative environment steps per metrics row
        summary["env_steps"] = metrics.extras["env_steps"]
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return out


def _run_and_write(args):
    config, seed, out_dir = args
    m = run_single(config, seed)
    write_run(m, config, out_dir)
    # drop live networks before crossing process boundaries
    m.extras = {k: v for k, v in m.extras.items() if k not in ("agent", "model")}
    return m


def run_seeds(config: ExperimentConfig, out_root, seeds=None, flat_single=True) -> list:
    seeds = list(config.seeds if seeds is None else seeds)
    root = Path(out_root)
    jobs = [(config, s, root if (flat_single and len(seeds) == 1) else root / f"seed_{s}") for s in seeds]
    if config.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            return list(pool.map(_run_and_write, jobs))
    return [_run_and_write(j) for j in jobs]


def run_experiment(config: ExperimentConfig) -> list:
    """Run every configured seed; one output directory per seed when there
    are several, otherwise the files land directly in ``config.out``."""
    if config.fitness == "external":
        make_model(config)  # fail fast with BackendUnavailable
    return run_seeds(config, config.out)


def _arm_report(label, runs):
    finals = [r.best_fitness for r in runs]
    lengths = Counter(l for r in runs for l in r.episode_lengths)
    return {
        "label": label,
        "seeds": [r.seed for r in runs],
        "final_best": finals,
        "median_final_best": statistics.median(finals),
        "total_evals": [r.total_evals for r in runs],
        "best_curves": [r.best_curve() for r in runs],
        "episode_length_counts": {str(k): lengths[k] for k in sorted(lengths)},
    }


def _ablation(config: ExperimentConfig, arms) -> dict:
    root = Path(config.out)
    runs = {}
    for key, label, arm_cfg in arms:
        runs[key] = run_seeds(arm_cfg, root / key, flat_single=False)
    report = {
        "algorithm": config.algo,
        "budget": config.budget,
        "length": config.length,
        "arms": {key: _arm_report(label, runs[key]) for key, label, _ in arms},
        "pairs": [
            {"seed": s, **{key: runs[key][i].best_fitness for key, _, _ in arms}}
            for i, s in enumerate(config.seeds)
        ],
    }
    root.mkdir(parents=True, exist_ok=True)
    with open(root / "report.json", "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(root / "curves.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("arm", "seed", "epoch", "best_so_far", "evals"))
        for key, _, _ in arms:
            for r in runs[key]:
                for row in r.rows:
                    w.writerow((key, r.seed, row.epoch, _fmt(row.best_so_far), row.evals))
    return report


def run_ablation_reward(config: ExperimentConfig) -> dict:
    """DQN with the plain fitness reward against the revisit-penalised reward.

    Both arms share the same dynamics (revisits are allowed); the plain arm is
    the penalty with alpha = 0, so only the reward formula differs."""
    if config.algo != "dqn":
        raise ConfigError("algo", "the reward ablation runs DQN")
    return _ablation(config, [
        ("plain", "DQR PER", config.with_(loop_policy="reward-penalty", alpha_penalty=0.0)),
        ("penalized", "DQR PER reward freq", config.with_(loop_policy="reward-penalty")),
    ])


def run_ablation_loop(config: ExperimentConfig) -> dict:
    """PPO terminating on revisits against PPO retrying the draw."""
    if config.algo != "ppo":
        raise ConfigError("algo", "the loop ablation runs PPO")
    return _ablation(config, [
        ("terminate", "Terminating", config.with_(loop_policy="terminate")),
        ("try_again", f"Try again ({config.max_iter})", config.with_(loop_policy="try-again")),
    ])


def random_fitness_sample(length: int, n: int, seed: int, model=None) -> np.ndarray:
    """Fitness of ``n`` uniformly random sequences; the no-learning reference."""
    rng = np.random.default_rng(seed)
    model = model or BuiltinModel()
    return np.array([fitness_of(random_sequence(rng, length), model) for _ in range(n)])


def clean_dir(path):
    p = Path(path)
    if p.exists():
        shutil.rmtree(p)
